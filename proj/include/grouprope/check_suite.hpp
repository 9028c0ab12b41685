#pragma once

// Named invariant suite. Every property listed for a module has an entry
// here; entries tagged with a criterion number form the acceptance gate run
// by `grouprope check`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "grouprope/backbone.hpp"
#include "grouprope/conditioning.hpp"
#include "grouprope/ge_rope.hpp"
#include "grouprope/identity_rope.hpp"
#include "grouprope/io.hpp"
#include "grouprope/latent.hpp"
#include "grouprope/manifest.hpp"
#include "grouprope/rope_core.hpp"
#include "grouprope/sampler.hpp"

namespace grouprope::checks {

struct Outcome {
  bool passed = false;
  std::string detail;
};

struct Check {
  std::string module;
  std::string name;
  int criterion = 0;          // 0: module invariant outside the numbered gate
  double time_budget_s = 0;   // 0: unbounded
  std::function<Outcome()> run;
};

struct Result {
  std::string module;
  std::string name;
  int criterion = 0;
  bool passed = false;
  std::string detail;
  double seconds = 0;
};

namespace detail {

inline std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << std::scientific << v;
  return s.str();
}

inline Outcome below(double value, double tol, const std::string& what) {
  return {value < tol, what + " = " + fmt(value) + " (tol " + fmt(tol) + ")"};
}

inline std::vector<double> normal_vec(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline ObjectMask rect_mask(std::size_t H, std::size_t W, std::size_t y1, std::size_t x1,
                            std::size_t rh, std::size_t rw, std::size_t t) {
  Grid2 g(H, W);
  for (std::size_t h = y1; h < y1 + rh; ++h)
    for (std::size_t w = x1; w < x1 + rw; ++w) g(h, w) = 1.0;
  return ObjectMask(std::move(g), t);
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Small fully-wired backbone problem used by several pipeline checks.
struct ToyProblem {
  BackboneParams params;
  Conditioning cond;
  Tensor4 x;
};

inline ToyProblem make_toy_problem(std::uint64_t seed, std::size_t dense_frames = 1,
                                   std::size_t dense_side = 2) {
  BackboneConfig cfg;
  cfg.latent_channels = 4;
  cfg.patch = {1, 1, 1};
  cfg.blocks = 2;
  cfg.text_dim = 16;
  cfg.dense_dim = 8;
  ToyProblem p;
  p.params = init_backbone(cfg, seed);
  std::mt19937_64 rng(seed);
  p.x = gaussian_like(Tensor4(2, 4, 4, 4), seed + 1);
  std::vector<ObjectMask> masks{rect_mask(4, 4, 0, 1, 2, 2, 0), rect_mask(4, 4, 1, 0, 2, 3, 1)};
  p.cond.latent_positions = build_identity_rope(masks, cfg.rope, 2, 4, 4).enc;
  p.cond.text = make_text_stub("toy caption", seed, 3, cfg.text_dim);
  p.cond.dense = dense_frames > 0
                     ? synth_dense_tokens(seed, AffineWarp::translation(1, 0), dense_frames,
                                          dense_side, dense_side, cfg.dense_dim, cfg.rope)
                     : empty_dense_grid(cfg.dense_dim);
  return p;
}

inline double weighted_sum(const Tensor4& v, const Tensor4& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < v.data.size(); ++i) s += v.data[i] * w.data[i];
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// rope_core

inline Outcome rope_relative_position() {
  std::mt19937_64 rng(101);
  const RopeDims dims;
  std::uniform_int_distribution<std::size_t> pos(0, 63);
  double worst = 0.0;
  for (Axis axis : {Axis::t, Axis::h, Axis::w}) {
    const std::size_t d = dims.axis_dim(axis);
    const PhaseTable table = build_phase_table(build_frequency_vector(dims.theta, d), 128);
    for (int i = 0; i < 1000; ++i) {
      const auto q = detail::normal_vec(rng, d);
      const auto k = detail::normal_vec(rng, d);
      const std::size_t p1 = pos(rng), p2 = pos(rng), shift = pos(rng);
      const double base = detail::dot(apply_rotary(q, table.row(p1)), apply_rotary(k, table.row(p2)));
      const double moved = detail::dot(apply_rotary(q, table.row(p1 + shift)),
                                       apply_rotary(k, table.row(p2 + shift)));
      worst = std::max(worst, std::abs(base - moved));
    }
  }
  return detail::below(worst, 1e-9, "max |<Rq,Rk>(p1,p2) - <Rq,Rk>(p1+s,p2+s)|");
}

inline Outcome rope_norm_preservation() {
  std::mt19937_64 rng(102);
  std::uniform_real_distribution<double> angle(-M_PI, M_PI);
  double worst = 0.0;
  for (int i = 0; i < 500; ++i) {
    const auto v = detail::normal_vec(rng, 32);
    std::vector<Complex> phases(16);
    for (Complex& c : phases) c = std::polar(1.0, angle(rng));
    worst = std::max(worst, std::abs(detail::norm(apply_rotary(v, phases)) - detail::norm(v)));
  }
  return detail::below(worst, 1e-12, "max | |Rv| - |v| |");
}

inline Outcome rope_unit_modulus() {
  const RopeDims dims;
  const PositionalEncoding enc = build_rope_3d(dims, 4, 16, 16);
  const RopeBanks banks = build_rope_banks(dims, 4, 16, 16);
  bool origin_exact = true;
  for (const PhaseTable* t : {&banks.phi_t, &banks.phi_h, &banks.phi_w}) {
    for (const Complex& c : t->row(0)) origin_exact &= (c == Complex(1.0, 0.0));
  }
  const double dev = unit_modulus_deviation(enc);
  return {dev < 1e-12 && origin_exact,
          "max ||phase|-1| = " + detail::fmt(dev) + ", position-0 rows exact: " +
              (origin_exact ? "yes" : "no")};
}

inline Outcome rope_determinism() {
  const RopeDims dims;
  const bool same = build_rope_3d(dims, 3, 7, 5) == build_rope_3d(dims, 3, 7, 5);
  return {same, same ? "bit-identical" : "tables differ between runs"};
}

inline Outcome rope_pairing_round_trip() {
  std::mt19937_64 rng(103);
  const auto v = detail::normal_vec(rng, 64);
  const bool ok = to_real_pairs(to_complex_pairs(v)) == v;
  return {ok, ok ? "real -> complex -> real exact" : "round trip changed values"};
}

// ---------------------------------------------------------------------------
// identity_rope

inline Outcome identity_signature_sharing() {
  std::mt19937_64 rng(201);
  const RopeDims dims;
  std::uniform_int_distribution<std::size_t> side(6, 12);
  std::size_t mismatches = 0;
  double worst_logit = 0.0;
  double worst_offset = 0.0;
  for (int cfg = 0; cfg < 100; ++cfg) {
    const std::size_t H = side(rng), W = side(rng);
    const std::size_t rh = std::uniform_int_distribution<std::size_t>(1, H / 2)(rng);
    const std::size_t rw = std::uniform_int_distribution<std::size_t>(1, W / 2)(rng);
    std::uniform_int_distribution<std::size_t> oy(0, H - rh), ox(0, W - rw);
    const std::vector<ObjectMask> masks{detail::rect_mask(H, W, oy(rng), ox(rng), rh, rw, 0),
                                        detail::rect_mask(H, W, oy(rng), ox(rng), rh, rw, 1)};
    const IdentityEncoding id = build_identity_rope(masks, dims, 2, H, W);
    const BoundingRect& r0 = id.rects[0];
    const BoundingRect& r1 = id.rects[1];
    const std::size_t off_h = dims.pair_offset(Axis::h);

    const auto q = detail::normal_vec(rng, dims.total());
    const auto k = detail::normal_vec(rng, dims.total());
    // Reference: only the temporal rotation applied.
    std::vector<Complex> t0(dims.pairs(), Complex(1, 0)), t1 = t0;
    for (std::size_t j = 0; j < dims.d_t / 2; ++j) {
      t0[j] = id.enc.row(0)[j];
      t1[j] = id.enc.row(H * W)[j];
    }
    const double temporal_only = detail::dot(apply_rotary(q, t0), apply_rotary(k, t1));
    double first_logit = 0.0;
    bool first = true;
    for (std::size_t a = 0; a < rh; ++a) {
      for (std::size_t b = 0; b < rw; ++b) {
        const auto row0 = id.enc.row((0 * H + r0.y1 + a) * W + r0.x1 + b);
        const auto row1 = id.enc.row((1 * H + r1.y1 + a) * W + r1.x1 + b);
        for (std::size_t j = off_h; j < dims.pairs(); ++j) mismatches += (row0[j] != row1[j]);
        const double logit = detail::dot(apply_rotary(q, row0), apply_rotary(k, row1));
        worst_logit = std::max(worst_logit, std::abs(logit - temporal_only));
        if (first) {
          first_logit = logit;
          first = false;
        }
        worst_offset = std::max(worst_offset, std::abs(logit - first_logit));
      }
    }
  }
  const bool ok = mismatches == 0 && worst_logit < 1e-9 && worst_offset < 1e-9;
  return {ok, "spatial phase mismatches = " + std::to_string(mismatches) +
                  ", logit residual after removing temporal factor = " +
                  detail::fmt(worst_logit) + ", spread across offsets = " +
                  detail::fmt(worst_offset) + " (tol 1e-9)"};
}

inline Outcome identity_translation_invariance() {
  const RopeDims dims;
  const std::size_t H = 10, W = 9;
  const std::size_t off_h = dims.pair_offset(Axis::h);
  std::size_t mismatches = 0;
  const auto base = build_identity_rope(std::vector{detail::rect_mask(H, W, 1, 2, 3, 4, 0)}, dims, 1, H, W);
  for (std::size_t dy = 0; dy + 1 + 3 <= H; ++dy)
    for (std::size_t dx = 0; dx + 2 + 4 <= W; ++dx) {
      const auto moved =
          build_identity_rope(std::vector{detail::rect_mask(H, W, dy, dx, 3, 4, 0)}, dims, 1, H, W);
      for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = 0; b < 4; ++b) {
          const auto r0 = base.enc.row((1 + a) * W + 2 + b);
          const auto r1 = moved.enc.row((dy + a) * W + dx + b);
          for (std::size_t j = off_h; j < dims.pairs(); ++j) mismatches += (r0[j] != r1[j]);
        }
    }
  return {mismatches == 0, "interior spatial phase mismatches = " + std::to_string(mismatches)};
}

inline Outcome identity_fallback_equivalence() {
  const RopeDims dims;
  const std::vector<ObjectMask> empty(3, ObjectMask(Grid2(5, 7), 0));
  const bool ok = build_identity_rope(empty, dims, 3, 5, 7).enc == build_rope_3d(dims, 3, 5, 7);
  return {ok, ok ? "empty masks reproduce plain 3D rope exactly" : "tables differ"};
}

inline Outcome identity_output_shape() {
  const RopeDims dims;
  const std::vector<ObjectMask> masks(4, detail::rect_mask(6, 5, 1, 1, 2, 2, 0));
  const auto id = build_identity_rope(masks, dims, 4, 6, 5);
  const bool ok = id.enc.rows == 4 * 6 * 5 && id.enc.pairs == dims.pairs() &&
                  id.enc.phases.size() == id.enc.rows * id.enc.pairs;
  return {ok, std::to_string(id.enc.rows) + " rows x " + std::to_string(id.enc.pairs) + " pairs"};
}

inline Outcome identity_unit_modulus() {
  const RopeDims dims;
  const std::vector<ObjectMask> masks{detail::rect_mask(8, 8, 2, 3, 4, 4, 0),
                                      detail::rect_mask(8, 8, 0, 0, 3, 5, 1)};
  return detail::below(unit_modulus_deviation(build_identity_rope(masks, dims, 2, 8, 8).enc), 1e-12,
                       "max ||phase|-1|");
}

// ---------------------------------------------------------------------------
// ge_rope

inline Outcome ge_zero_displacement() {
  const RopeDims dims;
  const RopeBanks banks = build_rope_banks(dims, 3, 9, 11);
  const SmoothedField zero{Grid2(9, 11), Grid2(9, 11)};
  const bool ok = build_ge_rope(warp_grid(zero), banks).enc == build_rope_3d(banks);
  const DisplacementField pix(18, 22);
  const bool ok_full =
      build_ge_rope(warp_grid(process_displacement(pix, 9, 11, {2, 21, 11.0})), banks).enc ==
      build_rope_3d(banks);
  return {ok && ok_full, std::string("zero field bitwise equal to baseline: ") +
                             (ok && ok_full ? "yes" : "no")};
}

inline Outcome ge_integer_translation() {
  const RopeDims dims;
  const std::size_t H = 12, W = 12;
  const RopeBanks banks = build_rope_banks(dims, 2, H, W);
  std::size_t bad = 0, checked = 0;
  for (long sh = -2; sh <= 2; ++sh)
    for (long sw = -3; sw <= 3; ++sw) {
      const SmoothedField f{Grid2(H, W, static_cast<double>(sh)), Grid2(H, W, static_cast<double>(sw))};
      const GeEncoding ge = build_ge_rope(warp_grid(f), banks);
      for (std::size_t h = 3; h + 3 < H; ++h)
        for (std::size_t w = 3; w + 3 < W; ++w) {
          ++checked;
          const auto eh = static_cast<std::size_t>(static_cast<long>(h) + sh);
          const auto ew = static_cast<std::size_t>(static_cast<long>(w) + sw);
          bad += ge.indices.h_at(h, w) != eh || ge.indices.w_at(h, w) != ew;
          const auto row = ge.enc.row(banks.token_index(1, h, w));
          const auto ph = banks.phi_h.row(eh);
          const auto pw = banks.phi_w.row(ew);
          bad += !std::equal(ph.begin(), ph.end(), row.begin() + static_cast<long>(dims.pair_offset(Axis::h)));
          bad += !std::equal(pw.begin(), pw.end(), row.begin() + static_cast<long>(dims.pair_offset(Axis::w)));
        }
    }
  return {bad == 0, std::to_string(bad) + " index/phase mismatches over " + std::to_string(checked) +
                        " interior cells"};
}

inline Outcome ge_clamp_bounds() {
  std::mt19937_64 rng(301);
  std::uniform_real_distribution<double> huge(-1e300, 1e300);
  const std::size_t H = 7, W = 5;
  std::size_t bad = 0;
  for (int iter = 0; iter < 20; ++iter) {
    SmoothedField f{Grid2(H, W), Grid2(H, W)};
    for (double& v : f.dh.data) v = huge(rng);
    for (double& v : f.dw.data) v = huge(rng);
    const WarpedGrid g = warp_grid(f);
    const WarpIndices idx = nearest_indices(g);
    for (std::size_t i = 0; i < H * W; ++i) {
      bad += !(g.h.data[i] >= 0 && g.h.data[i] <= H - 1 && g.w.data[i] >= 0 && g.w.data[i] <= W - 1);
      bad += idx.h[i] >= H || idx.w[i] >= W;
    }
  }
  return {bad == 0, std::to_string(bad) + " out-of-range warped entries"};
}

inline Outcome ge_nearest_rounding() {
  // Round half up on clamped coordinates: +0.4 keeps the index, +0.5 and +0.6
  // move it by one, and the last row or column stays clamped.
  std::size_t bad = 0;
  for (double shift : {0.4, 0.5, 0.6}) {
    const SmoothedField f{Grid2(6, 6, shift), Grid2(6, 6, -shift)};
    const WarpIndices idx = nearest_indices(warp_grid(f));
    const std::size_t up = shift < 0.5 ? 0 : 1;
    for (std::size_t h = 0; h < 6; ++h)
      for (std::size_t w = 0; w < 6; ++w) {
        bad += idx.h_at(h, w) != std::min<std::size_t>(h + up, 5);
        // w - shift rounds half up: w - 0.5 -> w, w - 0.6 -> w - 1.
        const std::size_t down = shift > 0.5 ? 1 : 0;
        bad += idx.w_at(h, w) != (w == 0 ? 0 : w - down);
      }
  }
  return {bad == 0, std::to_string(bad) + " rounding mismatches"};
}

inline Outcome ge_kernel_normalization() {
  const auto k = gaussian_kernel_2d(21, 11.0);
  double sum = 0.0;
  for (double v : k) sum += v;
  return detail::below(std::abs(sum - 1.0), 1e-12, "|sum(21x21, sigma 11) - 1|");
}

inline Outcome ge_smoothing_constant() {
  const Grid2 c(13, 17, 3.25);
  const Grid2 s = gaussian_smooth(c, 21, 11.0);
  double worst = 0.0;
  for (double v : s.data) worst = std::max(worst, std::abs(v - 3.25));
  return detail::below(worst, 1e-10, "max |smooth(const) - const|");
}

inline Outcome ge_smoothing_linearity() {
  std::mt19937_64 rng(302);
  Grid2 x(11, 14), y(11, 14);
  x.data = detail::normal_vec(rng, x.data.size());
  y.data = detail::normal_vec(rng, y.data.size());
  const double a = 1.7, b = -0.35;
  Grid2 mix(11, 14);
  for (std::size_t i = 0; i < mix.data.size(); ++i) mix.data[i] = a * x.data[i] + b * y.data[i];
  const Grid2 sm = gaussian_smooth(mix), sx = gaussian_smooth(x), sy = gaussian_smooth(y);
  double worst = 0.0;
  for (std::size_t i = 0; i < sm.data.size(); ++i) {
    worst = std::max(worst, std::abs(sm.data[i] - (a * sx.data[i] + b * sy.data[i])));
  }
  return detail::below(worst, 1e-10, "max |S(aX+bY) - aS(X) - bS(Y)|");
}

inline Outcome ge_unit_modulus_and_norm() {
  std::mt19937_64 rng(303);
  const RopeDims dims;
  DisplacementField f(16, 16);
  f.dh.data = detail::normal_vec(rng, 256);
  f.dw.data = detail::normal_vec(rng, 256);
  for (double& v : f.dh.data) v *= 20;
  for (double& v : f.dw.data) v *= 20;
  const RopeBanks banks = build_rope_banks(dims, 2, 8, 8);
  const GeEncoding ge = build_ge_rope(warp_grid(process_displacement(f, 8, 8, {2, 5, 2.0})), banks);
  const auto q = detail::normal_vec(rng, ge.enc.rows * dims.total());
  const auto k = detail::normal_vec(rng, ge.enc.rows * dims.total());
  const auto [qr, kr] = apply_ge_rope(q, k, ge.enc);
  double worst = 0.0;
  for (std::size_t r = 0; r < ge.enc.rows; ++r) {
    const std::span<const double> a(q.data() + r * dims.total(), dims.total());
    const std::span<const double> b(qr.data() + r * dims.total(), dims.total());
    worst = std::max(worst, std::abs(detail::norm(a) - detail::norm(b)));
  }
  const double mod = unit_modulus_deviation(ge.enc);
  return {mod < 1e-12 && worst < 1e-12,
          "max ||phase|-1| = " + detail::fmt(mod) + ", max norm change = " + detail::fmt(worst)};
}

// ---------------------------------------------------------------------------
// pseudo_video

inline Outcome pv_truncation_contract() {
  std::string detail_str;
  bool ok = true;
  for (std::size_t side : {0u, 1u, 4u}) {
    auto p = detail::make_toy_problem(401, side == 0 ? 0 : 1, side == 0 ? 1 : side);
    const Mat h = patchify(p.x, p.params.cfg.patch) * p.params.w_in;
    const Mat dense = p.cond.dense.count() > 0 ? Mat(p.cond.dense.tokens * p.params.adapter)
                                               : Mat(0, h.cols());
    const FusedSequence seq = fuse_tokens(h, p.cond.latent_positions, dense, p.cond.dense.positions);
    const Mat out = transformer_block(seq, p.cond.text, p.params.blocks[0], p.params.cfg.heads);
    ok &= static_cast<std::size_t>(out.rows()) == seq.latent_count &&
          seq.tokens.rows() == h.rows() + dense.rows();
    detail_str += std::to_string(dense.rows()) + " dense -> " + std::to_string(out.rows()) + " rows; ";
  }
  return {ok, detail_str + "latent_count = 32"};
}

inline Outcome pv_dense_permutation() {
  auto p = detail::make_toy_problem(402, 1, 4);
  const Mat h = patchify(p.x, p.params.cfg.patch) * p.params.w_in;
  const Mat dense = p.cond.dense.tokens * p.params.adapter;
  const std::size_t n = static_cast<std::size_t>(dense.rows());
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(402);
  double worst = 0.0;
  const Mat ref = transformer_block(fuse_tokens(h, p.cond.latent_positions, dense, p.cond.dense.positions),
                                    p.cond.text, p.params.blocks[0], p.params.cfg.heads);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    Mat pd(dense.rows(), dense.cols());
    PositionalEncoding pp(n, p.cond.dense.positions.pairs);
    for (std::size_t i = 0; i < n; ++i) {
      pd.row(static_cast<Eigen::Index>(i)) = dense.row(static_cast<Eigen::Index>(perm[i]));
      const auto src = p.cond.dense.positions.row(perm[i]);
      std::copy(src.begin(), src.end(), pp.row(i).begin());
    }
    const Mat out = transformer_block(fuse_tokens(h, p.cond.latent_positions, pd, pp), p.cond.text,
                                      p.params.blocks[0], p.params.cfg.heads);
    worst = std::max(worst, (out - ref).cwiseAbs().maxCoeff());
  }
  return detail::below(worst, 1e-9, "max latent change under dense permutation");
}

inline Outcome pv_two_token_attention() {
  std::mt19937_64 rng(403);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const std::size_t d = 6;
    Mat q(1, d), k(2, d), v(2, d);
    q.row(0) = Eigen::Map<const RowVec>(detail::normal_vec(rng, d).data(), d);
    for (int r = 0; r < 2; ++r) {
      k.row(r) = Eigen::Map<const RowVec>(detail::normal_vec(rng, d).data(), d);
      v.row(r) = Eigen::Map<const RowVec>(detail::normal_vec(rng, d).data(), d);
    }
    const Mat out = attention(q, k, v);
    const double s0 = q.row(0).dot(k.row(0)) / std::sqrt(6.0);
    const double s1 = q.row(0).dot(k.row(1)) / std::sqrt(6.0);
    const double w0 = 1.0 / (1.0 + std::exp(s1 - s0));
    const RowVec expect = w0 * v.row(0) + (1.0 - w0) * v.row(1);
    worst = std::max(worst, (out.row(0) - expect).cwiseAbs().maxCoeff());
  }
  return detail::below(worst, 1e-12, "max |attn - sigmoid closed form|");
}

inline Outcome pv_gradient_check() {
  const auto p = detail::make_toy_problem(404, 1, 2);
  const Tensor4 w = gaussian_like(p.x, 4040);
  const Tensor4 grad = velocity_vjp(p.x, 0.37, p.cond, p.params, w);
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<std::size_t> coord(0, p.x.data.size() - 1);
  const double h = 1e-4;
  double worst = 0.0;
  for (int i = 0; i < 60; ++i) {
    const std::size_t c = coord(rng);
    Tensor4 xp = p.x, xm = p.x;
    xp.data[c] += h;
    xm.data[c] -= h;
    const double fd = (detail::weighted_sum(predict_velocity(xp, 0.37, p.cond, p.params), w) -
                       detail::weighted_sum(predict_velocity(xm, 0.37, p.cond, p.params), w)) /
                      (2.0 * h);
    const double an = grad.data[c];
    worst = std::max(worst, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8}));
  }
  return detail::below(worst, 1e-5, "max relative error, 60 coordinates");
}

namespace detail {

// Max relative error between an analytic gradient and central differences of
// a scalar loss, over at most 128 evenly strided entries of x.
inline double fd_rel_error(const Mat& x, const Mat& analytic, const std::function<double(const Mat&)>& loss,
                           double h = 1e-4) {
  double worst = 0.0;
  const Eigen::Index stride = std::max<Eigen::Index>(1, x.size() / 128);
  for (Eigen::Index i = 0; i < x.size(); i += stride) {
    Mat xp = x, xm = x;
    xp.data()[i] += h;
    xm.data()[i] -= h;
    const double fd = (loss(xp) - loss(xm)) / (2.0 * h);
    const double an = analytic.data()[i];
    worst = std::max(worst, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8}));
  }
  return worst;
}

inline Mat random_mat(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  Mat m(r, c);
  const auto v = normal_vec(rng, static_cast<std::size_t>(r * c));
  std::copy(v.begin(), v.end(), m.data());
  return m;
}

}  // namespace detail

inline Outcome pv_op_gradients() {
  std::mt19937_64 rng(410);
  std::string rep;
  double worst = 0.0;
  auto note = [&](const char* name, double e) {
    worst = std::max(worst, e);
    rep += std::string(name) + " " + detail::fmt(e) + "; ";
  };

  const Mat x = detail::random_mat(rng, 5, 8);
  const Mat w = detail::random_mat(rng, 5, 8);
  LayerNormCache ln;
  layer_norm(x, &ln);
  note("layer_norm", detail::fd_rel_error(x, layer_norm_backward(w, ln),
                                          [&](const Mat& z) { return (layer_norm(z).array() * w.array()).sum(); }));

  const Mat gx = x.unaryExpr([](double v) { return gelu_grad(v); }).cwiseProduct(w);
  note("gelu", detail::fd_rel_error(x, gx, [&](const Mat& z) {
         return (z.unaryExpr([](double v) { return gelu(v); }).array() * w.array()).sum();
       }));

  const std::size_t heads = 2;
  const Mat q = detail::random_mat(rng, 4, 6), k = detail::random_mat(rng, 7, 6), v = detail::random_mat(rng, 7, 6);
  const Mat wo = detail::random_mat(rng, 4, 6);
  AttentionCache ac;
  multihead_attention(q, k, v, heads, &ac);
  const AttentionGrads ag = multihead_attention_backward(wo, ac, heads);
  auto attn_loss = [&](const Mat& qq, const Mat& kk, const Mat& vv) {
    return (multihead_attention(qq, kk, vv, heads).array() * wo.array()).sum();
  };
  note("attention dq", detail::fd_rel_error(q, ag.dq, [&](const Mat& z) { return attn_loss(z, k, v); }));
  note("attention dk", detail::fd_rel_error(k, ag.dk, [&](const Mat& z) { return attn_loss(q, z, v); }));
  note("attention dv", detail::fd_rel_error(v, ag.dv, [&](const Mat& z) { return attn_loss(q, k, z); }));

  const auto p = detail::make_toy_problem(410, 1, 2);
  const Mat hin = patchify(p.x, p.params.cfg.patch) * p.params.w_in;
  const Mat dense = p.cond.dense.tokens * p.params.adapter;
  const Mat wb = detail::random_mat(rng, hin.rows(), hin.cols());
  auto block = [&](const Mat& z, BlockCache* c) {
    return transformer_block(fuse_tokens(z, p.cond.latent_positions, dense, p.cond.dense.positions), p.cond.text,
                             p.params.blocks[0], p.params.cfg.heads, c);
  };
  BlockCache bc;
  block(hin, &bc);
  const Mat gb = transformer_block_backward(wb, bc, p.params.blocks[0], p.params.cfg.heads);
  note("transformer_block",
       detail::fd_rel_error(hin, gb, [&](const Mat& z) { return (block(z, nullptr).array() * wb.array()).sum(); }));
  return {worst < 1e-5, rep + "tol 1e-5"};
}

inline Outcome pv_euler_order() {
  // Oracle flow v = a + b*tau, independent of x: x(0) = x(1) - (a + b/2).
  const double a = 0.7, b = -1.9;
  auto error_at = [&](std::size_t n) {
    Tensor4 x(1, 1, 1, 1, 0.4);
    const Tensor4 out = integrate(x, n, [&](const Tensor4&, double tau) {
      return Tensor4(1, 1, 1, 1, a + b * tau);
    });
    return std::abs(out.data[0] - (0.4 - (a + 0.5 * b)));
  };
  // x-dependent linear flow v = lambda * x: x(0) = x(1) * exp(-lambda).
  const double lambda = 1.3;
  auto error_lin = [&](std::size_t n) {
    const Tensor4 out = integrate(Tensor4(1, 1, 1, 1, 1.0), n, [&](const Tensor4& x, double) {
      Tensor4 v = x;
      for (double& e : v.data) e *= lambda;
      return v;
    });
    return std::abs(out.data[0] - std::exp(-lambda));
  };
  const double r1 = error_at(100) / error_at(10);
  const double r2 = error_lin(100) / error_lin(10);
  const bool ok = r1 >= 0.05 && r1 <= 0.2 && r2 >= 0.05 && r2 <= 0.2;
  return {ok, "err(100)/err(10) = " + detail::fmt(r1) + " (tau-linear), " + detail::fmt(r2) +
                  " (x-linear); expected 0.1 within factor 2"};
}

inline Outcome pv_euler_constant_exact() {
  std::mt19937_64 rng(405);
  Tensor4 z(2, 3, 4, 4), eps(2, 3, 4, 4);
  z.data = detail::normal_vec(rng, z.data.size());
  eps.data = detail::normal_vec(rng, eps.data.size());
  Tensor4 v = eps;
  for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = eps.data[i] - z.data[i];
  const Tensor4 out = integrate(add_noise(z, 1.0, eps), 1, [&](const Tensor4&, double) { return v; });
  double worst = 0.0;
  for (std::size_t i = 0; i < z.data.size(); ++i) worst = std::max(worst, std::abs(out.data[i] - z.data[i]));
  const Tensor4 still = integrate(z, 1, [&](const Tensor4& x, double) { return Tensor4(x.t, x.c, x.h, x.w); });
  return {worst < 1e-12 && still == z,
          "one-step straight-line error = " + detail::fmt(worst) + ", zero velocity identity: " +
              (still == z ? "yes" : "no")};
}

inline Outcome pv_encode_round_trip() {
  std::mt19937_64 rng(406);
  bool ok = true;
  for (std::size_t r : {1u, 2u, 4u}) {
    Tensor4 img(3, 3, 8, 8);
    img.data = detail::normal_vec(rng, img.data.size());
    const LatentMap map{r, 3 * r * r + 2};
    ok &= decode_latents(encode_latents(img, map), map) == img;
  }
  return {ok, ok ? "decode(encode(x)) == x bitwise for r in {1,2,4}" : "round trip differs"};
}

inline Outcome pv_patchify_round_trip() {
  std::mt19937_64 rng(407);
  Tensor4 x(4, 3, 8, 6);
  x.data = detail::normal_vec(rng, x.data.size());
  bool ok = true;
  for (const PatchSpec& s : {PatchSpec{1, 1, 1}, PatchSpec{1, 2, 2}, PatchSpec{2, 4, 3}, PatchSpec{4, 8, 6}}) {
    ok &= unpatchify(patchify(x, s), s, 4, 3, 8, 6) == x;
  }
  return {ok, ok ? "unpatchify(patchify(x)) == x bitwise" : "round trip differs"};
}

inline Outcome pv_schedule_endpoints() {
  std::mt19937_64 rng(408);
  Tensor4 z(1, 2, 3, 3), eps(1, 2, 3, 3);
  z.data = detail::normal_vec(rng, z.data.size());
  eps.data = detail::normal_vec(rng, eps.data.size());
  const bool ok = add_noise(z, 0.0, eps) == z && add_noise(z, 1.0, eps) == eps;
  return {ok, ok ? "x(0) == z and x(1) == eps exactly" : "endpoint mismatch"};
}

inline Outcome pv_determinism() {
  const auto a = detail::make_toy_problem(409);
  const auto b = detail::make_toy_problem(409);
  const Tensor4 va = integrate(a.x, 3, [&](const Tensor4& x, double tau) {
    return predict_velocity(x, tau, a.cond, a.params);
  });
  const Tensor4 vb = integrate(b.x, 3, [&](const Tensor4& x, double tau) {
    return predict_velocity(x, tau, b.cond, b.params);
  });
  const bool text_same = make_text_stub("cap", 7, 4, 8) == make_text_stub("cap", 7, 4, 8);
  return {va == vb && text_same, va == vb && text_same ? "bit-identical denoising loop" : "runs differ"};
}

// ---------------------------------------------------------------------------
// cli_io

inline Outcome io_field_round_trip() {
  std::mt19937_64 rng(501);
  DisplacementField f(5, 7);
  f.dh.data = detail::normal_vec(rng, 35);
  f.dw.data = detail::normal_vec(rng, 35);
  f.dh.data[3] = -0.0;
  f.dw.data[4] = 1e-310;
  const auto bytes = encode_field(f);
  const bool ok = decode_field(bytes) == f && bytes.size() == 14 + 16 * 35;
  return {ok, "GEDF " + std::to_string(bytes.size()) + " bytes, bitwise round trip " + (ok ? "ok" : "failed")};
}

inline Outcome io_encoding_round_trip() {
  const PositionalEncoding enc = build_rope_3d(RopeDims{}, 2, 3, 4);
  const bool ok = decode_encoding(encode_encoding(enc)) == enc;
  return {ok, ok ? "GEPE bitwise round trip ok" : "GEPE round trip failed"};
}

inline Outcome io_manifest_round_trip() {
  GroupManifest m;
  m.group_id = "rt";
  m.prompt = "turn the bus red";
  m.entries = {{"a.ppm", "a.pgm", "front"}, {"b.ppm", "b.pgm", ""}};
  m.settings.seed = 99;
  m.settings.dense_grid = {1, 4, 4};
  m.settings.dense_warp = AffineWarp{0.9, 0.1, -0.05, 1.1, 0.3, -2.0 / 3.0};
  m.settings.geometry = GeometrySource::synthetic;
  m.settings.smooth_sigma = 0.1 + 0.2;
  const bool ok = parse_manifest(serialize_manifest(m)) == m;
  return {ok, ok ? "serialize -> parse reproduces manifest" : "manifest round trip failed"};
}

inline Outcome io_netpbm_round_trip() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("grouprope_check_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  Grid2 g(3, 5);
  RgbImage img{4, 2, std::vector<double>(24)};
  for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = static_cast<double>((i * 37) % 256) / 255.0;
  for (std::size_t i = 0; i < img.planes.size(); ++i) img.planes[i] = static_cast<double>((i * 53) % 256) / 255.0;
  write_pgm(dir / "m.pgm", g);
  write_ppm(dir / "i.ppm", img);
  const bool ok = read_pgm(dir / "m.pgm") == g && read_ppm(dir / "i.ppm").planes == img.planes;
  fs::remove_all(dir);
  return {ok, ok ? "8-bit PGM/PPM round trip exact" : "netpbm round trip failed"};
}

inline Outcome io_run_determinism() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("grouprope_det_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  Tensor4 images(2, 3, 8, 8);
  std::mt19937_64 rng(502);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : images.data) v = u(rng);
  BackboneConfig cfg;
  cfg.latent_channels = 12;
  cfg.patch = {1, 2, 2};
  cfg.text_dim = 8;
  cfg.dense_dim = 4;
  const BackboneParams params = init_backbone(cfg, 502);
  const LatentMap map{2, 12};
  std::vector<std::vector<unsigned char>> outputs;
  for (int run = 0; run < 2; ++run) {
    const Tensor4 z = encode_latents(images, map);
    Conditioning cond;
    cond.latent_positions = build_rope_3d(cfg.rope, 2, 2, 2);
    cond.text = make_text_stub("determinism", 502, 3, cfg.text_dim);
    cond.dense = synth_dense_tokens(502, AffineWarp::translation(1, 0), 1, 2, 2, cfg.dense_dim, cfg.rope);
    const Tensor4 x1 = add_noise(z, 1.0, gaussian_like(z, derive_seed(502, "noise")));
    const Tensor4 out = decode_latents(
        integrate(x1, 3, [&](const Tensor4& x, double tau) { return predict_velocity(x, tau, cond, params); }), map);
    const fs::path file = dir / ("run" + std::to_string(run) + ".ppm");
    write_ppm(file, frame_image(out, 1));
    outputs.push_back(grouprope::detail::read_file(file));
  }
  fs::remove_all(dir);
  const bool same = outputs[0] == outputs[1];
  return {same, same ? "two seeded runs wrote identical bytes" : "output bytes differ"};
}

// ---------------------------------------------------------------------------

inline std::vector<Check> all_checks() {
  return {
      {"rope_core", "relative_position", 1, 1.0, rope_relative_position},
      {"rope_core", "norm_preservation", 0, 0, rope_norm_preservation},
      {"rope_core", "unit_modulus", 0, 0, rope_unit_modulus},
      {"rope_core", "determinism", 0, 0, rope_determinism},
      {"rope_core", "pairing_round_trip", 0, 0, rope_pairing_round_trip},
      {"identity_rope", "signature_sharing", 2, 1.0, identity_signature_sharing},
      {"identity_rope", "translation_invariance", 0, 0, identity_translation_invariance},
      {"identity_rope", "fallback_equivalence", 0, 0, identity_fallback_equivalence},
      {"identity_rope", "output_shape", 0, 0, identity_output_shape},
      {"identity_rope", "unit_modulus", 0, 0, identity_unit_modulus},
      {"ge_rope", "zero_displacement", 3, 0, ge_zero_displacement},
      {"ge_rope", "integer_translation", 3, 0, ge_integer_translation},
      {"ge_rope", "clamp_bounds", 0, 0, ge_clamp_bounds},
      {"ge_rope", "nearest_rounding", 0, 0, ge_nearest_rounding},
      {"ge_rope", "kernel_normalization", 4, 0, ge_kernel_normalization},
      {"ge_rope", "smoothing_constant", 4, 0, ge_smoothing_constant},
      {"ge_rope", "smoothing_linearity", 4, 0, ge_smoothing_linearity},
      {"ge_rope", "unit_modulus_and_norm", 0, 0, ge_unit_modulus_and_norm},
      {"pseudo_video", "truncation_contract", 5, 0, pv_truncation_contract},
      {"pseudo_video", "dense_permutation_invariance", 5, 0, pv_dense_permutation},
      {"pseudo_video", "two_token_attention", 5, 0, pv_two_token_attention},
      {"pseudo_video", "gradient_check", 6, 30.0, pv_gradient_check},
      {"pseudo_video", "op_gradients", 0, 0, pv_op_gradients},
      {"pseudo_video", "euler_order", 7, 0, pv_euler_order},
      {"pseudo_video", "euler_constant_exact", 7, 0, pv_euler_constant_exact},
      {"pseudo_video", "encode_round_trip", 8, 0, pv_encode_round_trip},
      {"pseudo_video", "patchify_round_trip", 8, 0, pv_patchify_round_trip},
      {"pseudo_video", "schedule_endpoints", 0, 0, pv_schedule_endpoints},
      {"pseudo_video", "determinism", 0, 0, pv_determinism},
      {"cli_io", "field_file_round_trip", 8, 0, io_field_round_trip},
      {"cli_io", "encoding_file_round_trip", 8, 0, io_encoding_round_trip},
      {"cli_io", "manifest_round_trip", 8, 0, io_manifest_round_trip},
      {"cli_io", "netpbm_round_trip", 8, 0, io_netpbm_round_trip},
      {"cli_io", "run_determinism", 0, 0, io_run_determinism},
  };
}

inline Result run_check(const Check& c) {
  Result r{c.module, c.name, c.criterion, false, "", 0.0};
  const auto start = std::chrono::steady_clock::now();
  try {
    Outcome o = c.run();
    r.passed = o.passed;
    r.detail = std::move(o.detail);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("threw: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (c.time_budget_s > 0 && r.seconds > c.time_budget_s) {
    r.passed = false;
    r.detail += "; exceeded time budget " + detail::fmt(c.time_budget_s) + " s";
  }
  return r;
}

}  // namespace grouprope::checks
