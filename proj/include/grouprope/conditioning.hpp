#pragma once

// Deterministic stand-ins for the external encoders: a synthetic dense
// geometric token grid with known correspondence, and a seeded text
// embedding stub.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

#include "grouprope/ge_rope.hpp"
#include "grouprope/latent.hpp"
#include "grouprope/rope_core.hpp"

namespace grouprope {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Independent stream seed for a named consumer of a master seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) {
  return splitmix64(seed ^ splitmix64(fnv1a64(stream)));
}

/// Maps a frame-f grid cell (h, w) to its source location in frame 0:
/// src = A * (h, w) + b. Identity by default.
struct AffineWarp {
  double a_hh = 1.0, a_hw = 0.0;
  double a_wh = 0.0, a_ww = 1.0;
  double b_h = 0.0, b_w = 0.0;

  static AffineWarp translation(double dh, double dw) {
    AffineWarp t;
    t.b_h = dh;
    t.b_w = dw;
    return t;
  }

  double src_h(double h, double w) const { return a_hh * h + a_hw * w + b_h; }
  double src_w(double h, double w) const { return a_wh * h + a_ww * w + b_w; }
};

/// Displacement induced by `warp` on a rows x cols grid, in grid cells.
inline DisplacementField displacement_of(const AffineWarp& warp, std::size_t rows,
                                         std::size_t cols) {
  DisplacementField field(rows, cols);
  for (std::size_t h = 0; h < rows; ++h) {
    for (std::size_t w = 0; w < cols; ++w) {
      const auto fh = static_cast<double>(h);
      const auto fw = static_cast<double>(w);
      field.dh(h, w) = warp.src_h(fh, fw) - fh;
      field.dw(h, w) = warp.src_w(fh, fw) - fw;
    }
  }
  return field;
}

struct DenseTokenGrid {
  std::size_t frames = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  Mat tokens;                   // (frames*rows*cols) x dim, row-major (f, h, w)
  PositionalEncoding positions; // plain 3D rope over (frames, rows, cols)
  DisplacementField displacement;

  std::size_t count() const { return static_cast<std::size_t>(tokens.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(tokens.cols()); }
};

inline DenseTokenGrid empty_dense_grid(std::size_t dim) {
  DenseTokenGrid g;
  g.tokens = Mat(0, static_cast<Eigen::Index>(dim));
  return g;
}

/// Frame 0 samples a smooth seeded feature field at its own grid positions;
/// every later frame samples the same field at warp(h, w). The returned
/// displacement is exactly the field induced by `warp`.
inline DenseTokenGrid synth_dense_tokens(std::uint64_t seed, const AffineWarp& warp,
                                         std::size_t frames, std::size_t rows, std::size_t cols,
                                         std::size_t dim, const RopeDims& rope) {
  if (frames == 0 || rows == 0 || cols == 0 || dim == 0) {
    throw std::invalid_argument("synth_dense_tokens: all dims must be >= 1");
  }
  std::mt19937_64 rng(derive_seed(seed, "dense_tokens"));
  std::normal_distribution<double> freq(0.0, 0.6);
  std::uniform_real_distribution<double> phase(-M_PI, M_PI);
  std::vector<double> fh(dim), fw(dim), ph(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    fh[d] = freq(rng);
    fw[d] = freq(rng);
    ph[d] = phase(rng);
  }

  DenseTokenGrid g;
  g.frames = frames;
  g.rows = rows;
  g.cols = cols;
  g.tokens = Mat(static_cast<Eigen::Index>(frames * rows * cols), static_cast<Eigen::Index>(dim));
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t h = 0; h < rows; ++h) {
      for (std::size_t w = 0; w < cols; ++w) {
        double y = static_cast<double>(h);
        double x = static_cast<double>(w);
        if (f > 0) {
          const double sy = warp.src_h(y, x);
          x = warp.src_w(y, x);
          y = sy;
        }
        const auto r = static_cast<Eigen::Index>((f * rows + h) * cols + w);
        for (std::size_t d = 0; d < dim; ++d) {
          g.tokens(r, static_cast<Eigen::Index>(d)) = std::sin(fh[d] * y + fw[d] * x + ph[d]);
        }
      }
    }
  }
  g.positions = build_rope_3d(rope, frames, rows, cols);
  g.displacement = displacement_of(warp, rows, cols);
  return g;
}

/// Seeded L x D_c caption embedding; same caption and seed give identical bits.
inline Mat make_text_stub(std::string_view caption, std::uint64_t seed, std::size_t length,
                          std::size_t dim) {
  if (length == 0 || dim == 0) {
    throw std::invalid_argument("make_text_stub: length and dim must be >= 1");
  }
  std::mt19937_64 rng(splitmix64(derive_seed(seed, "text") ^ fnv1a64(caption)));
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat u(static_cast<Eigen::Index>(length), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = normal(rng);
  return u;
}

}  // namespace grouprope
