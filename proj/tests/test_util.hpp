#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "spikefuse/neurons.hpp"
#include "spikefuse/ops.hpp"
#include "spikefuse/tensor.hpp"

namespace testutil {

using spikefuse::Rng;
using spikefuse::Shape;
using spikefuse::Tensor;

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool grad = false) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(spikefuse::shape_volume(shape));
  for (auto& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

inline Tensor random_spikes(Shape shape, Rng& rng, double p = 0.3) {
  std::bernoulli_distribution b(p);
  std::vector<double> v(spikefuse::shape_volume(shape));
  for (auto& x : v) x = b(rng) ? 1.0 : 0.0;
  return Tensor::from(std::move(shape), std::move(v));
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_rel_err(std::span<const double> a, std::span<const double> b, double floor = 1e-8) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]) / std::max({std::abs(a[i]), std::abs(b[i]), floor}));
  return m;
}

/// Gradient of sum(w * op(x)) with respect to x: autograd against central differences.
inline double op_grad_error(const std::function<Tensor(const Tensor&)>& op, Tensor x, Rng& rng) {
  Tensor probe = op(x.detach());
  Tensor w = random_tensor(probe.shape(), rng);
  auto f = [&](const Tensor& in) { return spikefuse::sum(spikefuse::mul(op(in), w)); };
  x.set_requires_grad(true);
  x.zero_grad();
  spikefuse::backward(f(x));
  std::vector<double> g(x.grad().begin(), x.grad().end());
  auto fd = spikefuse::finite_diff_grad([&](const Tensor& in) { return f(in).item(); }, x, 1e-6);
  return max_rel_err(g, fd, 1e-6);
}

}  // namespace testutil
