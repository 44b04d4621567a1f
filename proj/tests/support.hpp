#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "agnet/numerics/tensor.hpp"

namespace agnet::testing {

inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data()) v = u(rng);
  return t;
}

inline std::size_t random_extent(std::mt19937_64& rng, std::size_t lo = 1, std::size_t hi = 8) {
  return lo + rng() % (hi - lo + 1);
}

}  // namespace agnet::testing
