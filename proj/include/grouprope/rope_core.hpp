#pragma once

// Multi-axis rotary positional embeddings: frequency banks, phase tables and
// rotary application by element-wise complex multiplication.
//
// Pairing convention used everywhere in grouprope: a real vector of length d
// is viewed as d/2 complex numbers, element 2j is the real part and element
// 2j+1 the imaginary part of complex entry j.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace grouprope {

using Complex = std::complex<double>;

enum class Axis { t, h, w };

inline const char* axis_name(Axis axis) {
  switch (axis) {
    case Axis::t: return "t";
    case Axis::h: return "h";
    case Axis::w: return "w";
  }
  return "?";
}

/// Base frequency and per-axis embedding widths of a (t, h, w) rotary encoding.
struct RopeDims {
  double theta = 10000.0;
  std::size_t d_t = 8;
  std::size_t d_h = 12;
  std::size_t d_w = 12;

  std::size_t total() const { return d_t + d_h + d_w; }
  std::size_t pairs() const { return total() / 2; }

  std::size_t axis_dim(Axis axis) const {
    switch (axis) {
      case Axis::t: return d_t;
      case Axis::h: return d_h;
      case Axis::w: return d_w;
    }
    return 0;
  }

  /// First complex pair index of `axis` inside a concatenated (t, h, w) row.
  std::size_t pair_offset(Axis axis) const {
    switch (axis) {
      case Axis::t: return 0;
      case Axis::h: return d_t / 2;
      case Axis::w: return (d_t + d_h) / 2;
    }
    return 0;
  }

  void validate() const {
    for (std::size_t d : {d_t, d_h, d_w}) {
      if (d < 2 || d % 2 != 0) {
        throw std::invalid_argument("RopeDims: axis dims must be even and >= 2, got " +
                                    std::to_string(d));
      }
    }
    if (!(theta > 1.0)) {
      throw std::invalid_argument("RopeDims: theta must be > 1");
    }
  }
};

struct FrequencyVector {
  std::size_t d_axis = 0;
  std::vector<double> freqs;
};

/// freqs[i] = theta^(-2i/d_axis), i in [0, d_axis/2).
inline FrequencyVector build_frequency_vector(double theta, std::size_t d_axis) {
  if (d_axis < 2 || d_axis % 2 != 0) {
    throw std::invalid_argument("build_frequency_vector: d_axis must be even and >= 2");
  }
  if (!(theta > 1.0)) {
    throw std::invalid_argument("build_frequency_vector: theta must be > 1");
  }
  FrequencyVector out;
  out.d_axis = d_axis;
  out.freqs.resize(d_axis / 2);
  for (std::size_t i = 0; i < out.freqs.size(); ++i) {
    out.freqs[i] = std::pow(theta, -2.0 * static_cast<double>(i) / static_cast<double>(d_axis));
  }
  return out;
}

/// Row-major S_axis x (d_axis/2) table of exp(i * p * freqs[j]).
class PhaseTable {
 public:
  PhaseTable() = default;

  PhaseTable(const FrequencyVector& freqs, std::size_t positions)
      : positions_(positions), width_(freqs.freqs.size()), data_(positions * width_) {
    if (positions == 0) {
      throw std::invalid_argument("build_phase_table: s_axis must be >= 1");
    }
    for (std::size_t i = 0; i < width_; ++i) {
      data_[i] = Complex(1.0, 0.0);
    }
    for (std::size_t p = 1; p < positions_; ++p) {
      for (std::size_t i = 0; i < width_; ++i) {
        const double angle = static_cast<double>(p) * freqs.freqs[i];
        data_[p * width_ + i] = Complex(std::cos(angle), std::sin(angle));
      }
    }
  }

  std::size_t positions() const { return positions_; }
  std::size_t width() const { return width_; }

  std::span<const Complex> row(std::size_t p) const {
    if (p >= positions_) {
      throw std::out_of_range("PhaseTable::row: position " + std::to_string(p) +
                              " out of range " + std::to_string(positions_));
    }
    return {data_.data() + p * width_, width_};
  }

  Complex operator()(std::size_t p, std::size_t i) const { return data_[p * width_ + i]; }

 private:
  std::size_t positions_ = 0;
  std::size_t width_ = 0;
  std::vector<Complex> data_;
};

inline PhaseTable build_phase_table(const FrequencyVector& freqs, std::size_t s_axis) {
  return PhaseTable(freqs, s_axis);
}

/// One unit-modulus phase per (token, frequency pair); rows are tokens.
struct PositionalEncoding {
  std::size_t rows = 0;
  std::size_t pairs = 0;
  std::vector<Complex> phases;

  PositionalEncoding() = default;
  PositionalEncoding(std::size_t n_rows, std::size_t n_pairs)
      : rows(n_rows), pairs(n_pairs), phases(n_rows * n_pairs, Complex(1.0, 0.0)) {}

  std::span<Complex> row(std::size_t r) { return {phases.data() + r * pairs, pairs}; }
  std::span<const Complex> row(std::size_t r) const { return {phases.data() + r * pairs, pairs}; }

  bool operator==(const PositionalEncoding&) const = default;
};

inline std::vector<double> to_real_pairs(std::span<const Complex> values) {
  std::vector<double> out(values.size() * 2);
  for (std::size_t j = 0; j < values.size(); ++j) {
    out[2 * j] = values[j].real();
    out[2 * j + 1] = values[j].imag();
  }
  return out;
}

inline std::vector<Complex> to_complex_pairs(std::span<const double> values) {
  if (values.size() % 2 != 0) {
    throw std::invalid_argument("to_complex_pairs: odd-length vector");
  }
  std::vector<Complex> out(values.size() / 2);
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = Complex(values[2 * j], values[2 * j + 1]);
  }
  return out;
}

/// out = Re-interleave(vec^C (.) phases), in place capable (out may alias vec).
inline void apply_rotary_into(std::span<const double> vec, std::span<const Complex> phases,
                              std::span<double> out) {
  if (vec.size() != 2 * phases.size() || out.size() != vec.size()) {
    throw std::invalid_argument("apply_rotary: vector length " + std::to_string(vec.size()) +
                                " does not match " + std::to_string(phases.size()) + " phases");
  }
  for (std::size_t j = 0; j < phases.size(); ++j) {
    const double re = vec[2 * j];
    const double im = vec[2 * j + 1];
    const double c = phases[j].real();
    const double s = phases[j].imag();
    out[2 * j] = re * c - im * s;
    out[2 * j + 1] = re * s + im * c;
  }
}

inline std::vector<double> apply_rotary(std::span<const double> vec,
                                        std::span<const Complex> phases) {
  std::vector<double> out(vec.size());
  apply_rotary_into(vec, phases, out);
  return out;
}

inline std::vector<Complex> concat_axis_phases(std::span<const Complex> phi_t,
                                               std::span<const Complex> phi_h,
                                               std::span<const Complex> phi_w,
                                               const RopeDims& dims) {
  if (phi_t.size() != dims.d_t / 2 || phi_h.size() != dims.d_h / 2 ||
      phi_w.size() != dims.d_w / 2) {
    throw std::invalid_argument("concat_axis_phases: per-axis lengths do not match RopeDims");
  }
  std::vector<Complex> out;
  out.reserve(dims.pairs());
  out.insert(out.end(), phi_t.begin(), phi_t.end());
  out.insert(out.end(), phi_h.begin(), phi_h.end());
  out.insert(out.end(), phi_w.begin(), phi_w.end());
  return out;
}

/// Precomputed phase tables for the three axes of a (T, H, W) token grid.
struct RopeBanks {
  RopeDims dims;
  std::size_t T = 0;
  std::size_t H = 0;
  std::size_t W = 0;
  PhaseTable phi_t;
  PhaseTable phi_h;
  PhaseTable phi_w;

  std::size_t tokens() const { return T * H * W; }
  std::size_t token_index(std::size_t t, std::size_t h, std::size_t w) const {
    return (t * H + h) * W + w;
  }

  /// Writes concat(phi_t[t], phi_h[h], phi_w[w]) into `row`.
  void fill_row(std::span<Complex> row, std::size_t t, std::size_t h, std::size_t w) const {
    const auto rt = phi_t.row(t);
    const auto rh = phi_h.row(h);
    const auto rw = phi_w.row(w);
    std::size_t j = 0;
    for (const Complex& c : rt) row[j++] = c;
    for (const Complex& c : rh) row[j++] = c;
    for (const Complex& c : rw) row[j++] = c;
  }
};

inline RopeBanks build_rope_banks(const RopeDims& dims, std::size_t T, std::size_t H,
                                  std::size_t W) {
  dims.validate();
  RopeBanks banks;
  banks.dims = dims;
  banks.T = T;
  banks.H = H;
  banks.W = W;
  banks.phi_t = build_phase_table(build_frequency_vector(dims.theta, dims.d_t), T);
  banks.phi_h = build_phase_table(build_frequency_vector(dims.theta, dims.d_h), H);
  banks.phi_w = build_phase_table(build_frequency_vector(dims.theta, dims.d_w), W);
  return banks;
}

/// Plain 3D RoPE over the whole grid, rows in row-major (t, h, w) order.
inline PositionalEncoding build_rope_3d(const RopeBanks& banks) {
  PositionalEncoding enc(banks.tokens(), banks.dims.pairs());
  for (std::size_t t = 0; t < banks.T; ++t) {
    for (std::size_t h = 0; h < banks.H; ++h) {
      for (std::size_t w = 0; w < banks.W; ++w) {
        banks.fill_row(enc.row(banks.token_index(t, h, w)), t, h, w);
      }
    }
  }
  return enc;
}

inline PositionalEncoding build_rope_3d(const RopeDims& dims, std::size_t T, std::size_t H,
                                        std::size_t W) {
  return build_rope_3d(build_rope_banks(dims, T, H, W));
}

/// Rotates every row of a row-major (enc.rows x 2*enc.pairs) buffer in place.
inline void apply_encoding_inplace(std::span<double> rows, const PositionalEncoding& enc) {
  const std::size_t width = 2 * enc.pairs;
  if (rows.size() != enc.rows * width) {
    throw std::invalid_argument("apply_encoding: buffer size does not match encoding");
  }
  for (std::size_t r = 0; r < enc.rows; ++r) {
    std::span<double> v = rows.subspan(r * width, width);
    apply_rotary_into(v, enc.row(r), v);
  }
}

/// Largest | |phase| - 1 | over the encoding.
inline double unit_modulus_deviation(const PositionalEncoding& enc) {
  double worst = 0.0;
  for (const Complex& c : enc.phases) {
    worst = std::max(worst, std::abs(std::abs(c) - 1.0));
  }
  return worst;
}

}  // namespace grouprope
