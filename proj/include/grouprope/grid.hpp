#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace grouprope {

/// Dense row-major real matrix, used for masks and displacement components.
struct Grid2 {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Grid2() = default;
  Grid2(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  bool same_shape(const Grid2& other) const { return rows == other.rows && cols == other.cols; }
  bool operator==(const Grid2&) const = default;
};

/// Dense T x C x H x W tensor (images, latents, velocities).
struct Tensor4 {
  std::size_t t = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<double> data;

  Tensor4() = default;
  Tensor4(std::size_t nt, std::size_t nc, std::size_t nh, std::size_t nw, double fill = 0.0)
      : t(nt), c(nc), h(nh), w(nw), data(nt * nc * nh * nw, fill) {}

  std::size_t index(std::size_t it, std::size_t ic, std::size_t ih, std::size_t iw) const {
    return ((it * c + ic) * h + ih) * w + iw;
  }
  double& operator()(std::size_t it, std::size_t ic, std::size_t ih, std::size_t iw) {
    return data[index(it, ic, ih, iw)];
  }
  double operator()(std::size_t it, std::size_t ic, std::size_t ih, std::size_t iw) const {
    return data[index(it, ic, ih, iw)];
  }

  bool same_shape(const Tensor4& o) const { return t == o.t && c == o.c && h == o.h && w == o.w; }
  bool operator==(const Tensor4&) const = default;
};

inline void require_same_shape(const Tensor4& a, const Tensor4& b, const char* what) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(what) + ": tensor shape mismatch");
  }
}

}  // namespace grouprope
