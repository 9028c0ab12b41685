#pragma once

// Identity-preserving rotary encoding. Inside each image's object bounding
// rectangle, spatial coordinates are re-origined to the rectangle corner, so
// corresponding object regions across a group get the same (h, w) phases no
// matter where the object sits in the frame. The temporal axis keeps the
// absolute image index.
//
// Known collision: a re-origined interior coordinate can coincide with an
// untouched exterior coordinate (interior (0, 0) and the exterior pixel at
// (0, 0) share spatial phases). This is left as is.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "grouprope/grid.hpp"
#include "grouprope/rope_core.hpp"

namespace grouprope {

/// Soft object mask at token-grid resolution, entries in [0, 1].
struct ObjectMask {
  Grid2 values;
  std::size_t image_index = 0;

  ObjectMask() = default;
  explicit ObjectMask(Grid2 v, std::size_t t = 0) : values(std::move(v)), image_index(t) {}

  void validate() const {
    for (double v : values.data) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw std::invalid_argument("ObjectMask: entries must lie in [0, 1]");
      }
    }
  }
};

/// Inclusive corners, x along width and y along height.
struct BoundingRect {
  std::size_t x1 = 0;
  std::size_t y1 = 0;
  std::size_t x2 = 0;
  std::size_t y2 = 0;
  bool present = false;

  bool contains(std::size_t h, std::size_t w) const {
    return present && x1 <= w && w <= x2 && y1 <= h && h <= y2;
  }

  bool operator==(const BoundingRect&) const = default;
};

/// Smallest rectangle around entries strictly above `threshold`.
inline BoundingRect extract_rect(const ObjectMask& mask, double threshold = 0.5) {
  BoundingRect rect;
  std::size_t x1 = std::numeric_limits<std::size_t>::max();
  std::size_t y1 = x1;
  std::size_t x2 = 0;
  std::size_t y2 = 0;
  const Grid2& m = mask.values;
  for (std::size_t h = 0; h < m.rows; ++h) {
    for (std::size_t w = 0; w < m.cols; ++w) {
      if (m(h, w) > threshold) {
        x1 = std::min(x1, w);
        x2 = std::max(x2, w);
        y1 = std::min(y1, h);
        y2 = std::max(y2, h);
        rect.present = true;
      }
    }
  }
  if (rect.present) {
    rect.x1 = x1;
    rect.y1 = y1;
    rect.x2 = x2;
    rect.y2 = y2;
  }
  return rect;
}

struct RemappedCoord {
  std::size_t h = 0;
  std::size_t w = 0;
  bool operator==(const RemappedCoord&) const = default;
};

inline RemappedCoord remap_coords(std::size_t h, std::size_t w, const BoundingRect& rect) {
  if (rect.contains(h, w)) {
    return {h - rect.y1, w - rect.x1};
  }
  return {h, w};
}

struct IdentityEncoding {
  std::vector<BoundingRect> rects;
  PositionalEncoding enc;
};

/// Builds the identity encoding over a T x H x W grid, one mask per image.
inline IdentityEncoding build_identity_rope(std::span<const ObjectMask> masks,
                                            const RopeDims& dims, std::size_t T, std::size_t H,
                                            std::size_t W, double threshold = 0.5) {
  if (T == 0) {
    throw std::invalid_argument("build_identity_rope: T must be >= 1");
  }
  if (masks.size() != T) {
    throw std::invalid_argument("build_identity_rope: expected " + std::to_string(T) +
                                " masks, got " + std::to_string(masks.size()));
  }
  for (const ObjectMask& m : masks) {
    if (m.values.rows != H || m.values.cols != W) {
      throw std::invalid_argument("build_identity_rope: mask is " + std::to_string(m.values.rows) +
                                  "x" + std::to_string(m.values.cols) + ", grid is " +
                                  std::to_string(H) + "x" + std::to_string(W));
    }
  }

  IdentityEncoding out;
  out.rects.reserve(T);
  for (const ObjectMask& m : masks) {
    out.rects.push_back(extract_rect(m, threshold));
  }

  const RopeBanks banks = build_rope_banks(dims, T, H, W);
  out.enc = PositionalEncoding(banks.tokens(), dims.pairs());
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t w = 0; w < W; ++w) {
        const RemappedCoord c = remap_coords(h, w, out.rects[t]);
        banks.fill_row(out.enc.row(banks.token_index(t, h, w)), t, c.h, c.w);
      }
    }
  }
  return out;
}

}  // namespace grouprope
