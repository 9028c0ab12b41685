#pragma once

#include <cstddef>
#include <stdexcept>
#include <utility>

#include "grouprope/grid.hpp"

namespace grouprope {

/// Explicit Euler from tau = 1 down to tau = 0 in `n_steps` uniform steps:
///   x <- x - (1/n) * v(x, tau_k),  tau_k = 1 - k/n.
/// `velocity(x, tau)` returns a Tensor4 shaped like x. `observer(step, tau, v)`
/// is called after each velocity evaluation.
template <class VelocityFn, class Observer>
Tensor4 integrate(Tensor4 x, std::size_t n_steps, VelocityFn&& velocity, Observer&& observer) {
  if (n_steps == 0) {
    throw std::invalid_argument("integrate: n_steps must be >= 1");
  }
  const double dt = 1.0 / static_cast<double>(n_steps);
  for (std::size_t k = 0; k < n_steps; ++k) {
    const double tau = 1.0 - static_cast<double>(k) * dt;
    const Tensor4 v = velocity(static_cast<const Tensor4&>(x), tau);
    require_same_shape(x, v, "integrate");
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      x.data[i] -= dt * v.data[i];
    }
    observer(k, tau, v);
  }
  return x;
}

template <class VelocityFn>
Tensor4 integrate(Tensor4 x, std::size_t n_steps, VelocityFn&& velocity) {
  return integrate(std::move(x), n_steps, std::forward<VelocityFn>(velocity),
                   [](std::size_t, double, const Tensor4&) {});
}

}  // namespace grouprope
