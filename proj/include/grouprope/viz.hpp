#pragma once

#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "grouprope/ge_rope.hpp"
#include "grouprope/io.hpp"
#include "grouprope/latent.hpp"
#include "grouprope/rope_core.hpp"

namespace grouprope {

struct Rgb {
  double r = 0, g = 0, b = 0;
};

/// Full-saturation, full-value HSV color for hue in [0, 1).
inline Rgb hue_color(double hue) {
  hue -= std::floor(hue);
  const double h6 = hue * 6.0;
  const int sector = static_cast<int>(h6) % 6;
  const double f = h6 - std::floor(h6);
  switch (sector) {
    case 0: return {1, f, 0};
    case 1: return {1 - f, 1, 0};
    case 2: return {0, 1, f};
    case 3: return {0, 1 - f, 1};
    case 4: return {f, 0, 1};
    default: return {1, 0, 1 - f};
  }
}

/// Phase angle in (-pi, pi] mapped to a hue; angle 0 is hue 0.5.
inline Rgb phase_color(const Complex& c) {
  return hue_color((std::arg(c) + M_PI) / (2.0 * M_PI));
}

/// Frames side by side (width T*W), one pixel per token scaled by `scale`,
/// colored by the phase of pair `freq_index` of `axis`.
inline RgbImage viz_phase_map(const PositionalEncoding& enc, const TokenGrid& grid,
                              const RopeDims& dims, Axis axis, std::size_t freq_index,
                              std::size_t scale = 1) {
  if (enc.rows != grid.tokens() || enc.pairs != dims.pairs()) {
    throw std::invalid_argument("viz_phase_map: encoding does not match grid / dims");
  }
  if (freq_index >= dims.axis_dim(axis) / 2) {
    throw std::out_of_range("viz_phase_map: frequency index " + std::to_string(freq_index) +
                            " out of range for axis " + axis_name(axis));
  }
  if (scale == 0) throw std::invalid_argument("viz_phase_map: scale must be >= 1");
  const std::size_t pair = dims.pair_offset(axis) + freq_index;
  RgbImage img{grid.h * scale, grid.t * grid.w * scale,
               std::vector<double>(3 * grid.h * grid.t * grid.w * scale * scale)};
  for (std::size_t t = 0; t < grid.t; ++t)
    for (std::size_t h = 0; h < grid.h; ++h)
      for (std::size_t w = 0; w < grid.w; ++w) {
        const Rgb c = phase_color(enc.row((t * grid.h + h) * grid.w + w)[pair]);
        for (std::size_t dy = 0; dy < scale; ++dy)
          for (std::size_t dx = 0; dx < scale; ++dx) {
            const std::size_t y = h * scale + dy;
            const std::size_t x = (t * grid.w + w) * scale + dx;
            img.at(0, y, x) = c.r;
            img.at(1, y, x) = c.g;
            img.at(2, y, x) = c.b;
          }
      }
  return img;
}

namespace detail {

inline void plot(RgbImage& img, long x, long y, const Rgb& c) {
  if (x < 0 || y < 0 || x >= static_cast<long>(img.width) || y >= static_cast<long>(img.height)) {
    return;
  }
  img.at(0, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = c.r;
  img.at(1, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = c.g;
  img.at(2, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = c.b;
}

inline void draw_line(RgbImage& img, long x0, long y0, long x1, long y1, const Rgb& c) {
  const long dx = std::labs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const long dy = -std::labs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  long err = dx + dy;
  while (true) {
    plot(img, x0, y0, c);
    if (x0 == x1 && y0 == y1) break;
    const long e2 = 2 * err;
    if (e2 >= dy) { err += dy; x0 += sx; }
    if (e2 <= dx) { err += dx; y0 += sy; }
  }
}

}  // namespace detail

/// Quiver plot of a token-grid displacement: one arrow per cell from the cell
/// center towards center + (dh, dw), drawn on a white canvas.
inline RgbImage viz_warp(const SmoothedField& field, std::size_t cell = 8) {
  if (cell < 2) throw std::invalid_argument("viz_warp: cell must be >= 2");
  const std::size_t rows = field.dh.rows;
  const std::size_t cols = field.dh.cols;
  RgbImage img{rows * cell, cols * cell, std::vector<double>(3 * rows * cols * cell * cell, 1.0)};
  const auto half = static_cast<long>(cell / 2);
  for (std::size_t h = 0; h < rows; ++h)
    for (std::size_t w = 0; w < cols; ++w) {
      const long cx = static_cast<long>(w * cell) + half;
      const long cy = static_cast<long>(h * cell) + half;
      const long ex = cx + std::lround(field.dw(h, w) * static_cast<double>(cell));
      const long ey = cy + std::lround(field.dh(h, w) * static_cast<double>(cell));
      detail::draw_line(img, cx, cy, ex, ey, {0.85, 0.1, 0.1});
      detail::plot(img, cx, cy, {0, 0, 0});
    }
  return img;
}

}  // namespace grouprope
