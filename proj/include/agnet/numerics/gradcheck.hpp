#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "agnet/numerics/tape.hpp"

namespace agnet {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Scalar function of the tape-registered parameters (in the order given).
template <class T>
using ScalarFunction = std::function<Var<T>(Tape<T>&, std::span<const Var<T>>)>;

/// Compares tape gradients with central differences (f(p+ε) − f(p−ε)) / 2ε,
/// elementwise, using max(|a|, |b|, 1e-8) as the denominator.
template <class T>
GradCheckResult check_gradients(const ScalarFunction<T>& fn, std::vector<Tensor<T>>& params, double epsilon = 1e-5) {
  auto evaluate = [&](bool want_grads, std::vector<Tensor<T>>* grads) {
    Tape<T> tape;
    std::vector<Var<T>> vars;
    vars.reserve(params.size());
    for (const auto& p : params) vars.push_back(tape.parameter(p));
    Var<T> loss = fn(tape, vars);
    const T value = loss.value()[0];
    if (!std::isfinite(value)) throw Error("check_gradients: loss is not finite");
    if (want_grads) {
      tape.backward(loss);
      for (const auto& v : vars) grads->push_back(tape.gradient(v));
    }
    return static_cast<double>(value);
  };

  std::vector<Tensor<T>> analytic;
  evaluate(true, &analytic);

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    for (std::size_t j = 0; j < params[pi].size(); ++j) {
      const T saved = params[pi][j];
      params[pi][j] = static_cast<T>(saved + epsilon);
      const double up = evaluate(false, nullptr);
      params[pi][j] = static_cast<T>(saved - epsilon);
      const double down = evaluate(false, nullptr);
      params[pi][j] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = static_cast<double>(analytic[pi][j]);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > result.max_relative_error) result = {rel, pi, j, a, numeric};
    }
  }
  return result;
}

/// Same comparison, but the central differences are evaluated by `oracle`
/// in a wider scalar type U. The gradients under test still come from the
/// tape in T; only the oracle's rounding floor moves.
template <class T, class U>
GradCheckResult check_gradients_with_oracle(const ScalarFunction<T>& fn, const ScalarFunction<U>& oracle,
                                            const std::vector<Tensor<T>>& params, double epsilon = 1e-5) {
  std::vector<Tensor<T>> analytic;
  {
    Tape<T> tape;
    std::vector<Var<T>> vars;
    for (const auto& p : params) vars.push_back(tape.parameter(p));
    Var<T> loss = fn(tape, vars);
    if (!std::isfinite(static_cast<double>(loss.value()[0]))) throw Error("check_gradients: loss is not finite");
    tape.backward(loss);
    for (const auto& v : vars) analytic.push_back(tape.gradient(v));
  }
  std::vector<Tensor<U>> wide;
  for (const auto& p : params) wide.push_back(p.template cast<U>());
  auto evaluate = [&]() {
    Tape<U> tape;
    std::vector<Var<U>> vars;
    for (const auto& p : wide) vars.push_back(tape.parameter(p));
    const U value = oracle(tape, vars).value()[0];
    if (!std::isfinite(static_cast<double>(value))) throw Error("check_gradients: oracle loss is not finite");
    return value;
  };
  GradCheckResult result;
  const U eps = static_cast<U>(epsilon);
  for (std::size_t pi = 0; pi < wide.size(); ++pi) {
    for (std::size_t j = 0; j < wide[pi].size(); ++j) {
      const U saved = wide[pi][j];
      wide[pi][j] = saved + eps;
      const U up = evaluate();
      wide[pi][j] = saved - eps;
      const U down = evaluate();
      wide[pi][j] = saved;
      const double numeric = static_cast<double>((up - down) / (2 * eps));
      const double a = static_cast<double>(analytic[pi][j]);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > result.max_relative_error) result = {rel, pi, j, a, numeric};
    }
  }
  return result;
}

}  // namespace agnet
