#pragma once

// Geometry-enhanced rotary encoding. A dense displacement field is brought to
// the token grid (bilinear resize, division by the pixels-per-token factor,
// separable Gaussian smoothing), added to the integer grid coordinates,
// clamped, and rounded to index the h / w phase tables. The temporal axis is
// untouched and one field is shared by every frame of the group.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "grouprope/grid.hpp"
#include "grouprope/rope_core.hpp"

namespace grouprope {

/// Per-pixel correspondence offsets (dh, dw). Units depend on the stage:
/// source pixels on load, token cells after scale_by_patch.
struct DisplacementField {
  Grid2 dh;
  Grid2 dw;

  DisplacementField() = default;
  DisplacementField(std::size_t rows, std::size_t cols, double fill_h = 0.0, double fill_w = 0.0)
      : dh(rows, cols, fill_h), dw(rows, cols, fill_w) {}
  DisplacementField(Grid2 h, Grid2 w) : dh(std::move(h)), dw(std::move(w)) {
    if (!dh.same_shape(dw)) {
      throw std::invalid_argument("DisplacementField: dh and dw shapes differ");
    }
  }

  std::size_t rows() const { return dh.rows; }
  std::size_t cols() const { return dh.cols; }

  void validate() const {
    if (!dh.same_shape(dw)) {
      throw std::invalid_argument("DisplacementField: dh and dw shapes differ");
    }
    for (const Grid2* g : {&dh, &dw}) {
      for (double v : g->data) {
        if (!std::isfinite(v)) {
          throw std::invalid_argument("DisplacementField: non-finite entry");
        }
      }
    }
  }

  bool operator==(const DisplacementField&) const = default;
};

/// Field after resize, patch scaling and smoothing; lives on the token grid.
struct SmoothedField {
  Grid2 dh;
  Grid2 dw;
};

/// Continuous warped coordinates, already clamped into the grid.
struct WarpedGrid {
  Grid2 h;
  Grid2 w;
};

/// Bilinear resampling with half-pixel centers (align_corners = false).
inline Grid2 resize_bilinear(const Grid2& src, std::size_t out_rows, std::size_t out_cols) {
  if (out_rows == 0 || out_cols == 0) {
    throw std::invalid_argument("resize_bilinear: target dims must be >= 1");
  }
  if (src.rows == 0 || src.cols == 0) {
    throw std::invalid_argument("resize_bilinear: empty source");
  }
  if (src.rows == out_rows && src.cols == out_cols) {
    return src;
  }
  const double scale_y = static_cast<double>(src.rows) / static_cast<double>(out_rows);
  const double scale_x = static_cast<double>(src.cols) / static_cast<double>(out_cols);
  Grid2 out(out_rows, out_cols);
  for (std::size_t y = 0; y < out_rows; ++y) {
    const double sy = std::max((static_cast<double>(y) + 0.5) * scale_y - 0.5, 0.0);
    const auto y0 = std::min(static_cast<std::size_t>(sy), src.rows - 1);
    const std::size_t y1 = std::min(y0 + 1, src.rows - 1);
    const double ly = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_cols; ++x) {
      const double sx = std::max((static_cast<double>(x) + 0.5) * scale_x - 0.5, 0.0);
      const auto x0 = std::min(static_cast<std::size_t>(sx), src.cols - 1);
      const std::size_t x1 = std::min(x0 + 1, src.cols - 1);
      const double lx = sx - static_cast<double>(x0);
      const double top = (1.0 - lx) * src(y0, x0) + lx * src(y0, x1);
      const double bottom = (1.0 - lx) * src(y1, x0) + lx * src(y1, x1);
      out(y, x) = (1.0 - ly) * top + ly * bottom;
    }
  }
  return out;
}

inline DisplacementField resize_bilinear(const DisplacementField& field, std::size_t out_rows,
                                         std::size_t out_cols) {
  return DisplacementField(resize_bilinear(field.dh, out_rows, out_cols),
                           resize_bilinear(field.dw, out_rows, out_cols));
}

inline DisplacementField scale_by_patch(const DisplacementField& field, std::size_t patch) {
  if (patch == 0) {
    throw std::invalid_argument("scale_by_patch: patch must be >= 1");
  }
  DisplacementField out = field;
  const double p = static_cast<double>(patch);
  for (double& v : out.dh.data) v /= p;
  for (double& v : out.dw.data) v /= p;
  return out;
}

/// Normalized 1D Gaussian taps; the 2D kernel is their outer product.
inline std::vector<double> gaussian_kernel_1d(std::size_t kernel_size, double sigma) {
  if (kernel_size == 0 || kernel_size % 2 == 0) {
    throw std::invalid_argument("gaussian_kernel: kernel_size must be odd, got " +
                                std::to_string(kernel_size));
  }
  if (!(sigma > 0.0)) {
    throw std::invalid_argument("gaussian_kernel: sigma must be > 0");
  }
  const auto radius = static_cast<long>(kernel_size / 2);
  std::vector<double> taps(kernel_size);
  double sum = 0.0;
  for (long i = -radius; i <= radius; ++i) {
    const double v = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    taps[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (double& v : taps) v /= sum;
  return taps;
}

inline std::vector<double> gaussian_kernel_2d(std::size_t kernel_size, double sigma) {
  const std::vector<double> taps = gaussian_kernel_1d(kernel_size, sigma);
  std::vector<double> out(kernel_size * kernel_size);
  for (std::size_t i = 0; i < kernel_size; ++i) {
    for (std::size_t j = 0; j < kernel_size; ++j) {
      out[i * kernel_size + j] = taps[i] * taps[j];
    }
  }
  return out;
}

/// Separable Gaussian blur with edge replication at the borders.
inline Grid2 gaussian_smooth(const Grid2& src, std::size_t kernel_size = 21, double sigma = 11.0) {
  const std::vector<double> taps = gaussian_kernel_1d(kernel_size, sigma);
  const auto radius = static_cast<long>(kernel_size / 2);
  const auto rows = static_cast<long>(src.rows);
  const auto cols = static_cast<long>(src.cols);
  auto clampi = [](long v, long hi) { return std::clamp(v, 0L, hi - 1); };

  Grid2 tmp(src.rows, src.cols);
  for (long r = 0; r < rows; ++r) {
    for (long c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (long k = -radius; k <= radius; ++k) {
        acc += taps[static_cast<std::size_t>(k + radius)] *
               src(static_cast<std::size_t>(r), static_cast<std::size_t>(clampi(c + k, cols)));
      }
      tmp(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = acc;
    }
  }
  Grid2 out(src.rows, src.cols);
  for (long r = 0; r < rows; ++r) {
    for (long c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (long k = -radius; k <= radius; ++k) {
        acc += taps[static_cast<std::size_t>(k + radius)] *
               tmp(static_cast<std::size_t>(clampi(r + k, rows)), static_cast<std::size_t>(c));
      }
      out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = acc;
    }
  }
  return out;
}

inline SmoothedField gaussian_smooth(const DisplacementField& field, std::size_t kernel_size = 21,
                                     double sigma = 11.0) {
  return {gaussian_smooth(field.dh, kernel_size, sigma),
          gaussian_smooth(field.dw, kernel_size, sigma)};
}

struct FieldProcessing {
  std::size_t patch = 16;
  std::size_t kernel_size = 21;
  double sigma = 11.0;
};

/// resize -> divide by patch -> smooth, in that order.
inline SmoothedField process_displacement(const DisplacementField& field, std::size_t rows,
                                          std::size_t cols, const FieldProcessing& cfg = {}) {
  field.validate();
  return gaussian_smooth(scale_by_patch(resize_bilinear(field, rows, cols), cfg.patch),
                         cfg.kernel_size, cfg.sigma);
}

inline WarpedGrid warp_grid(const SmoothedField& field) {
  if (!field.dh.same_shape(field.dw)) {
    throw std::invalid_argument("warp_grid: dh and dw shapes differ");
  }
  const std::size_t rows = field.dh.rows;
  const std::size_t cols = field.dh.cols;
  const double h_max = static_cast<double>(rows) - 1.0;
  const double w_max = static_cast<double>(cols) - 1.0;
  WarpedGrid out{Grid2(rows, cols), Grid2(rows, cols)};
  for (std::size_t h = 0; h < rows; ++h) {
    for (std::size_t w = 0; w < cols; ++w) {
      out.h(h, w) = std::clamp(static_cast<double>(h) + field.dh(h, w), 0.0, h_max);
      out.w(h, w) = std::clamp(static_cast<double>(w) + field.dw(h, w), 0.0, w_max);
    }
  }
  return out;
}

/// Nearest-neighbor frequency-table indices of a warped grid.
struct WarpIndices {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> h;
  std::vector<std::size_t> w;

  std::size_t h_at(std::size_t r, std::size_t c) const { return h[r * cols + c]; }
  std::size_t w_at(std::size_t r, std::size_t c) const { return w[r * cols + c]; }
};

/// Round half up; valid for the nonnegative, clamped coordinates used here.
inline std::size_t round_index(double v, std::size_t limit) {
  const auto idx = static_cast<std::size_t>(std::floor(v + 0.5));
  return std::min(idx, limit - 1);
}

inline WarpIndices nearest_indices(const WarpedGrid& grid) {
  WarpIndices out;
  out.rows = grid.h.rows;
  out.cols = grid.h.cols;
  out.h.resize(out.rows * out.cols);
  out.w.resize(out.rows * out.cols);
  for (std::size_t i = 0; i < out.h.size(); ++i) {
    out.h[i] = round_index(std::max(grid.h.data[i], 0.0), out.rows);
    out.w[i] = round_index(std::max(grid.w.data[i], 0.0), out.cols);
  }
  return out;
}

struct GeEncoding {
  WarpIndices indices;
  PositionalEncoding enc;
};

/// Assembles concat(phi_t[t], phi_h[round h~], phi_w[round w~]) with one warp
/// shared by all T frames of `banks`.
inline GeEncoding build_ge_rope(const WarpedGrid& grid, const RopeBanks& banks) {
  if (grid.h.rows != banks.H || grid.h.cols != banks.W || !grid.h.same_shape(grid.w)) {
    throw std::invalid_argument("build_ge_rope: warped grid " + std::to_string(grid.h.rows) + "x" +
                                std::to_string(grid.h.cols) + " does not match banks " +
                                std::to_string(banks.H) + "x" + std::to_string(banks.W));
  }
  GeEncoding out;
  out.indices = nearest_indices(grid);
  out.enc = PositionalEncoding(banks.tokens(), banks.dims.pairs());
  for (std::size_t t = 0; t < banks.T; ++t) {
    for (std::size_t h = 0; h < banks.H; ++h) {
      for (std::size_t w = 0; w < banks.W; ++w) {
        banks.fill_row(out.enc.row(banks.token_index(t, h, w)), t, out.indices.h_at(h, w),
                       out.indices.w_at(h, w));
      }
    }
  }
  return out;
}

/// Rotates q and k (row-major, one d_total row per token) by the encoding.
inline std::pair<std::vector<double>, std::vector<double>> apply_ge_rope(
    std::span<const double> q, std::span<const double> k, const PositionalEncoding& enc) {
  const std::size_t expected = enc.rows * enc.pairs * 2;
  if (q.size() != expected || k.size() != expected) {
    throw std::invalid_argument("apply_ge_rope: q/k length does not match encoding (" +
                                std::to_string(expected) + " values expected)");
  }
  std::vector<double> q_out(q.begin(), q.end());
  std::vector<double> k_out(k.begin(), k.end());
  apply_encoding_inplace(q_out, enc);
  apply_encoding_inplace(k_out, enc);
  return {std::move(q_out), std::move(k_out)};
}

}  // namespace grouprope
