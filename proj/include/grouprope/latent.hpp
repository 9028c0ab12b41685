#pragma once

#include <cmath>
#include <cstdint>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "grouprope/grid.hpp"

namespace grouprope {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

/// Fixed invertible latent map: space-to-depth by `reduction`, then zero
/// channel padding up to `channels`. Channel order is (rgb, dy, dx).
struct LatentMap {
  std::size_t reduction = 1;
  std::size_t channels = 3;

  void validate() const {
    if (reduction == 0) {
      throw std::invalid_argument("LatentMap: reduction must be >= 1");
    }
    if (channels < 3 * reduction * reduction) {
      throw std::invalid_argument("LatentMap: channels must be >= 3*r^2 = " +
                                  std::to_string(3 * reduction * reduction));
    }
  }
};

inline Tensor4 encode_latents(const Tensor4& images, const LatentMap& map) {
  map.validate();
  const std::size_t r = map.reduction;
  if (images.c != 3) {
    throw std::invalid_argument("encode_latents: images must have 3 channels");
  }
  if (images.h % r != 0 || images.w % r != 0) {
    throw std::invalid_argument("encode_latents: image size " + std::to_string(images.h) + "x" +
                                std::to_string(images.w) + " not divisible by reduction " +
                                std::to_string(r));
  }
  Tensor4 z(images.t, map.channels, images.h / r, images.w / r);
  for (std::size_t t = 0; t < images.t; ++t)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t dy = 0; dy < r; ++dy)
        for (std::size_t dx = 0; dx < r; ++dx)
          for (std::size_t y = 0; y < z.h; ++y)
            for (std::size_t x = 0; x < z.w; ++x)
              z(t, (c * r + dy) * r + dx, y, x) = images(t, c, y * r + dy, x * r + dx);
  return z;
}

/// Exact left inverse of encode_latents; padded channels are dropped.
inline Tensor4 decode_latents(const Tensor4& z, const LatentMap& map) {
  map.validate();
  const std::size_t r = map.reduction;
  if (z.c != map.channels) {
    throw std::invalid_argument("decode_latents: channel count does not match latent map");
  }
  Tensor4 images(z.t, 3, z.h * r, z.w * r);
  for (std::size_t t = 0; t < z.t; ++t)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t dy = 0; dy < r; ++dy)
        for (std::size_t dx = 0; dx < r; ++dx)
          for (std::size_t y = 0; y < z.h; ++y)
            for (std::size_t x = 0; x < z.w; ++x)
              images(t, c, y * r + dy, x * r + dx) = z(t, (c * r + dy) * r + dx, y, x);
  return images;
}

/// Rectified-flow schedule: alpha(tau) = 1 - tau, sigma(tau) = tau.
/// alpha(0) = 1, sigma(0) = 0 at the clean end; alpha(1) = 0, sigma(1) = 1.
struct NoiseSchedule {
  double alpha(double tau) const { return 1.0 - tau; }
  double sigma(double tau) const { return tau; }
};

inline NoiseSchedule schedule_from_name(const std::string& name) {
  if (name == "linear") return {};
  throw std::invalid_argument("unknown schedule '" + name + "' (supported: linear)");
}

inline Tensor4 add_noise(const Tensor4& z, double tau, const Tensor4& eps,
                         const NoiseSchedule& schedule = {}) {
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw std::invalid_argument("add_noise: tau must lie in [0, 1]");
  }
  require_same_shape(z, eps, "add_noise");
  const double a = schedule.alpha(tau);
  const double s = schedule.sigma(tau);
  Tensor4 x = z;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    x.data[i] = a * z.data[i] + s * eps.data[i];
  }
  return x;
}

inline Tensor4 gaussian_like(const Tensor4& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor4 out(shape.t, shape.c, shape.h, shape.w);
  for (double& v : out.data) v = normal(rng);
  return out;
}

struct PatchSpec {
  std::size_t p_t = 1;
  std::size_t p_h = 1;
  std::size_t p_w = 1;

  std::size_t volume() const { return p_t * p_h * p_w; }
};

/// Token-grid shape implied by a latent shape and patch spec.
struct TokenGrid {
  std::size_t t = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t tokens() const { return t * h * w; }
};

inline TokenGrid token_grid(const Tensor4& x, const PatchSpec& spec) {
  if (spec.p_t == 0 || spec.p_h == 0 || spec.p_w == 0) {
    throw std::invalid_argument("PatchSpec: patch sizes must be >= 1");
  }
  if (x.t % spec.p_t != 0 || x.h % spec.p_h != 0 || x.w % spec.p_w != 0) {
    throw std::invalid_argument("patchify: latent " + std::to_string(x.t) + "x" +
                                std::to_string(x.h) + "x" + std::to_string(x.w) +
                                " not divisible by patch " + std::to_string(spec.p_t) + "x" +
                                std::to_string(spec.p_h) + "x" + std::to_string(spec.p_w));
  }
  return {x.t / spec.p_t, x.h / spec.p_h, x.w / spec.p_w};
}

/// S x (C * p_t * p_h * p_w) token matrix. Tokens are ordered (t, h, w) block
/// row-major; features are ordered (c, dt, dh, dw).
inline Mat patchify(const Tensor4& x, const PatchSpec& spec) {
  const TokenGrid g = token_grid(x, spec);
  Mat tokens(static_cast<Eigen::Index>(g.tokens()),
             static_cast<Eigen::Index>(x.c * spec.volume()));
  for (std::size_t bt = 0; bt < g.t; ++bt)
    for (std::size_t bh = 0; bh < g.h; ++bh)
      for (std::size_t bw = 0; bw < g.w; ++bw) {
        const auto row = static_cast<Eigen::Index>((bt * g.h + bh) * g.w + bw);
        Eigen::Index col = 0;
        for (std::size_t c = 0; c < x.c; ++c)
          for (std::size_t dt = 0; dt < spec.p_t; ++dt)
            for (std::size_t dh = 0; dh < spec.p_h; ++dh)
              for (std::size_t dw = 0; dw < spec.p_w; ++dw)
                tokens(row, col++) =
                    x(bt * spec.p_t + dt, c, bh * spec.p_h + dh, bw * spec.p_w + dw);
      }
  return tokens;
}

inline Tensor4 unpatchify(const Mat& tokens, const PatchSpec& spec, std::size_t T, std::size_t C,
                          std::size_t H, std::size_t W) {
  Tensor4 x(T, C, H, W);
  const TokenGrid g = token_grid(x, spec);
  if (static_cast<std::size_t>(tokens.rows()) != g.tokens() ||
      static_cast<std::size_t>(tokens.cols()) != C * spec.volume()) {
    throw std::invalid_argument("unpatchify: token matrix shape does not match target latent");
  }
  for (std::size_t bt = 0; bt < g.t; ++bt)
    for (std::size_t bh = 0; bh < g.h; ++bh)
      for (std::size_t bw = 0; bw < g.w; ++bw) {
        const auto row = static_cast<Eigen::Index>((bt * g.h + bh) * g.w + bw);
        Eigen::Index col = 0;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t dt = 0; dt < spec.p_t; ++dt)
            for (std::size_t dh = 0; dh < spec.p_h; ++dh)
              for (std::size_t dw = 0; dw < spec.p_w; ++dw)
                x(bt * spec.p_t + dt, c, bh * spec.p_h + dh, bw * spec.p_w + dw) =
                    tokens(row, col++);
      }
  return x;
}

}  // namespace grouprope
