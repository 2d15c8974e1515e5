#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "refrm3d/rng.hpp"
#include "refrm3d/tensor.hpp"

namespace testsupport {

// Central-finite-difference gradient verification. `fn` must rebuild the
// graph from the live input tensors on every call and return a scalar loss;
// analytic gradients from a single backward() pass are compared per element
// against (f(x+eps) - f(x-eps)) / (2 eps) with a relative error normalised
// by max(1, |analytic|, |numeric|).
struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
};

inline GradCheckResult check_gradients(
    const std::function<refrm3d::Tensor()>& fn,
    std::vector<refrm3d::Tensor> inputs, double eps = 1e-4) {
  for (auto& input : inputs) input.zero_grad();
  refrm3d::backward(fn());
  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (auto& input : inputs) analytic.push_back(input.grad());

  GradCheckResult result;
  refrm3d::NoGradGuard no_grad;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto& values = inputs[t].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = fn().item();
      values[i] = saved - eps;
      const double down = fn().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double exact = analytic[t][i];
      const double rel =
          std::abs(exact - numeric) /
          std::max({1.0, std::abs(exact), std::abs(numeric)});
      result.max_rel_err = std::max(result.max_rel_err, rel);
      ++result.checked;
    }
  }
  return result;
}

inline refrm3d::Tensor random_tensor(refrm3d::Rng& rng,
                                     std::vector<std::int64_t> shape,
                                     double lo, double hi,
                                     bool requires_grad) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> values(static_cast<std::size_t>(n));
  for (auto& v : values) v = rng.uniform(lo, hi);
  return refrm3d::Tensor::from_values(std::move(shape), std::move(values),
                                      requires_grad);
}

// Values bounded away from zero, for ops with a kink at the origin.
inline refrm3d::Tensor random_signed_tensor(refrm3d::Rng& rng,
                                            std::vector<std::int64_t> shape,
                                            double margin,
                                            bool requires_grad) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> values(static_cast<std::size_t>(n));
  for (auto& v : values) {
    const double magnitude = rng.uniform(margin, 1.0);
    v = rng.uniform() < 0.5 ? -magnitude : magnitude;
  }
  return refrm3d::Tensor::from_values(std::move(shape), std::move(values),
                                      requires_grad);
}

// A shuffled arithmetic grid: all values distinct with gaps far wider than
// the finite-difference step, so pooling argmaxes cannot flip.
inline refrm3d::Tensor separated_tensor(refrm3d::Rng& rng,
                                        std::vector<std::int64_t> shape,
                                        bool requires_grad) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> values(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    values[static_cast<std::size_t>(i)] =
        0.01 * static_cast<double>(i - n / 2);
  }
  rng.shuffle(values);
  return refrm3d::Tensor::from_values(std::move(shape), std::move(values),
                                      requires_grad);
}

// Fixed random projection turning an op output into a scalar probe loss, so
// every output element influences the gradient.
inline refrm3d::Tensor make_probe(refrm3d::Rng& rng,
                                  const std::vector<std::int64_t>& shape) {
  return random_tensor(rng, shape, -1.0, 1.0, /*requires_grad=*/false);
}

}  // namespace testsupport
