#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "agnet/numerics/tensor.hpp"

namespace agnet {

/// Classical (heavy-ball) momentum SGD with a step learning-rate decay.
template <class T>
struct SgdState {
  std::vector<Tensor<T>> velocity;
  double momentum = 0.99;
  double learning_rate = 1e-5;
  double decay_factor = 0.1;
  int decay_period_epochs = 25;

  /// Learning rate in effect during 1-based `epoch`.
  double rate_for_epoch(int epoch) const {
    const int steps = decay_period_epochs > 0 ? (epoch - 1) / decay_period_epochs : 0;
    return learning_rate * std::pow(decay_factor, steps);
  }
};

template <class T>
SgdState<T> make_sgd_state(const std::vector<Tensor<T>*>& params, double learning_rate, double momentum,
                           double decay_factor = 0.1, int decay_period_epochs = 25) {
  if (!(learning_rate >= 0.0)) throw Error("learning rate must be non-negative");
  SgdState<T> s;
  s.momentum = momentum;
  s.learning_rate = learning_rate;
  s.decay_factor = decay_factor;
  s.decay_period_epochs = decay_period_epochs;
  for (const Tensor<T>* p : params) s.velocity.emplace_back(p->shape());
  return s;
}

/// v ← μ·v + g; p ← p − lr·v.
template <class T>
void sgd_step(const std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>>& grads, SgdState<T>& state,
              double learning_rate) {
  if (params.size() != grads.size() || params.size() != state.velocity.size()) {
    throw ShapeError("sgd_step: parameter, gradient and velocity counts differ");
  }
  const T mu = static_cast<T>(state.momentum);
  const T lr = static_cast<T>(learning_rate);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& p = *params[i];
    Tensor<T>& v = state.velocity[i];
    const Tensor<T>& g = grads[i];
    if (p.shape() != g.shape() || p.shape() != v.shape()) {
      throw ShapeError("sgd_step: shape mismatch at parameter " + std::to_string(i) + ": " + to_string(p.shape()) +
                       " vs grad " + to_string(g.shape()));
    }
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = mu * v[j] + g[j];
      p[j] -= lr * v[j];
    }
  }
}

}  // namespace agnet
