// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Oracles are written out here rather than reused from the library's
// own check suite.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "grouprope/grouprope.hpp"

#ifndef GROUPROPE_CLI
#error "GROUPROPE_CLI must name the grouprope executable"
#endif
#ifndef GROUPROPE_DEMO_MANIFEST
#error "GROUPROPE_DEMO_MANIFEST must name the bundled manifest"
#endif

namespace fs = std::filesystem;
namespace gr = grouprope;

namespace {

// Tolerances and budgets.
constexpr double kRelPosTol = 1e-9;
constexpr double kRelPosBudget = 1.0;
constexpr double kSignatureTol = 1e-9;
constexpr double kSignatureBudget = 1.0;
constexpr double kKernelSumTol = 1e-12;
constexpr double kSmoothTol = 1e-10;
constexpr double kPermutationTol = 1e-9;
constexpr double kClosedFormTol = 1e-12;
constexpr double kFdStep = 1e-4;
constexpr double kGradRelTol = 1e-5;
constexpr std::size_t kGradCoords = 64;
constexpr double kGradBudget = 30.0;
constexpr double kOrderRatio = 0.1;
constexpr double kOrderFactor = 2.0;
constexpr double kConstantStepTol = 1e-12;
constexpr double kRoundTripTol = 1e-15;
constexpr double kSmokeBudget = 60.0;

struct Line {
  bool ok;
  std::string detail;
};

std::string sci(double v) {
  std::ostringstream s;
  s.precision(3);
  s << std::scientific << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> randn(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

// Naive rotary: pair j of v rotated by angle[j].
std::vector<double> rotate(const std::vector<double>& v, const std::vector<double>& angle) {
  std::vector<double> out(v.size());
  for (std::size_t j = 0; j < angle.size(); ++j) {
    const double c = std::cos(angle[j]), s = std::sin(angle[j]);
    out[2 * j] = c * v[2 * j] - s * v[2 * j + 1];
    out[2 * j + 1] = s * v[2 * j] + c * v[2 * j + 1];
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

gr::ObjectMask box(std::size_t H, std::size_t W, std::size_t y, std::size_t x, std::size_t rh,
                   std::size_t rw, std::size_t t) {
  gr::Grid2 g(H, W);
  for (std::size_t h = y; h < y + rh; ++h)
    for (std::size_t w = x; w < x + rw; ++w) g(h, w) = 1.0;
  return gr::ObjectMask(std::move(g), t);
}

// ---------------------------------------------------------------------------

Line criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(9001);
  std::uniform_int_distribution<std::size_t> pos(0, 99);
  const gr::RopeDims dims;
  double worst = 0.0, table_dev = 0.0;
  for (gr::Axis axis : {gr::Axis::t, gr::Axis::h, gr::Axis::w}) {
    const std::size_t d = dims.axis_dim(axis);
    const auto table = gr::build_phase_table(gr::build_frequency_vector(dims.theta, d), 200);
    for (int i = 0; i < 1000; ++i) {
      const auto q = randn(rng, d), k = randn(rng, d);
      const std::size_t p1 = pos(rng), p2 = pos(rng), s = pos(rng);
      // Oracle: the logit is a function of p1 - p2 alone, so it must equal
      // the naive rotation of q by (p1 - p2) against an unrotated k.
      std::vector<double> rel(d / 2);
      for (std::size_t j = 0; j < d / 2; ++j) {
        rel[j] = (static_cast<double>(p1) - static_cast<double>(p2)) *
                 std::pow(dims.theta, -2.0 * static_cast<double>(j) / static_cast<double>(d));
        const double a = static_cast<double>(p1) *
                         std::pow(dims.theta, -2.0 * static_cast<double>(j) / static_cast<double>(d));
        table_dev = std::max(table_dev, std::abs(table(p1, j) - std::polar(1.0, a)));
      }
      const double oracle = dot(rotate(q, rel), k);
      const double a = dot(gr::apply_rotary(q, table.row(p1)), gr::apply_rotary(k, table.row(p2)));
      const double b = dot(gr::apply_rotary(q, table.row(p1 + s)), gr::apply_rotary(k, table.row(p2 + s)));
      worst = std::max({worst, std::abs(a - oracle), std::abs(b - oracle)});
    }
  }
  const double secs = seconds_since(t0);
  return {worst < kRelPosTol && table_dev < 1e-12 && secs < kRelPosBudget,
          "3x1000 cases, max logit deviation " + sci(worst) + ", table vs naive " + sci(table_dev) +
              ", " + sci(secs) + " s"};
}

Line criterion_2() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(9002);
  const gr::RopeDims dims;
  std::size_t mismatches = 0;
  double worst = 0.0;
  for (int cfg = 0; cfg < 100; ++cfg) {
    const std::size_t H = std::uniform_int_distribution<std::size_t>(4, 14)(rng);
    const std::size_t W = std::uniform_int_distribution<std::size_t>(4, 14)(rng);
    const std::size_t rh = std::uniform_int_distribution<std::size_t>(1, H - 2)(rng);
    const std::size_t rw = std::uniform_int_distribution<std::size_t>(1, W - 2)(rng);
    std::size_t y[2], x[2];
    do {
      for (int i = 0; i < 2; ++i) {
        y[i] = std::uniform_int_distribution<std::size_t>(0, H - rh)(rng);
        x[i] = std::uniform_int_distribution<std::size_t>(0, W - rw)(rng);
      }
    } while (y[0] == y[1] && x[0] == x[1]);
    const std::size_t t_img[2] = {0, 1};
    const std::vector<gr::ObjectMask> masks{box(H, W, y[0], x[0], rh, rw, 0), box(H, W, y[1], x[1], rh, rw, 1)};
    const auto id = gr::build_identity_rope(masks, dims, 2, H, W);
    const auto q = randn(rng, dims.total()), k = randn(rng, dims.total());
    // Temporal factor on its own: naive rotation of the t block only.
    std::vector<double> ang_q(dims.pairs(), 0.0), ang_k(dims.pairs(), 0.0);
    for (std::size_t j = 0; j < dims.d_t / 2; ++j) {
      const double f = std::pow(dims.theta, -2.0 * static_cast<double>(j) / static_cast<double>(dims.d_t));
      ang_q[j] = static_cast<double>(t_img[0]) * f;
      ang_k[j] = static_cast<double>(t_img[1]) * f;
    }
    const double temporal = dot(rotate(q, ang_q), rotate(k, ang_k));
    for (std::size_t a = 0; a < rh; ++a)
      for (std::size_t b = 0; b < rw; ++b) {
        const auto r0 = id.enc.row((0 * H + y[0] + a) * W + x[0] + b);
        const auto r1 = id.enc.row((1 * H + y[1] + a) * W + x[1] + b);
        for (std::size_t j = dims.d_t / 2; j < dims.pairs(); ++j) mismatches += r0[j] != r1[j];
        const double logit = dot(gr::apply_rotary(q, r0), gr::apply_rotary(k, r1));
        worst = std::max(worst, std::abs(logit - temporal));
      }
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && worst < kSignatureTol && secs < kSignatureBudget,
          "100 configs, spatial mismatches " + std::to_string(mismatches) + ", residual " + sci(worst) +
              ", " + sci(secs) + " s"};
}

Line criterion_3() {
  const gr::RopeDims dims;
  const std::size_t T = 3, H = 10, W = 11;
  const auto banks = gr::build_rope_banks(dims, T, H, W);
  const auto base = gr::build_rope_3d(banks);
  const gr::SmoothedField zero{gr::Grid2(H, W), gr::Grid2(H, W)};
  bool degenerate = gr::build_ge_rope(gr::warp_grid(zero), banks).enc == base;
  // Also through the full resize / scale / smooth path.
  degenerate &= gr::build_ge_rope(gr::warp_grid(gr::process_displacement(gr::DisplacementField(40, 44), H, W, {4, 21, 11.0})),
                                  banks).enc == base;
  std::size_t bad = 0, checked = 0;
  for (int sh = -3; sh <= 3; ++sh)
    for (int sw = -3; sw <= 3; ++sw) {
      const gr::SmoothedField f{gr::Grid2(H, W, sh), gr::Grid2(H, W, sw)};
      const auto ge = gr::build_ge_rope(gr::warp_grid(f), banks);
      for (std::size_t h = 3; h < H - 3; ++h)
        for (std::size_t w = 3; w < W - 3; ++w) {
          ++checked;
          bad += ge.indices.h_at(h, w) != static_cast<std::size_t>(static_cast<int>(h) + sh);
          bad += ge.indices.w_at(h, w) != static_cast<std::size_t>(static_cast<int>(w) + sw);
        }
    }
  return {degenerate && bad == 0, std::string("zero field bitwise baseline: ") + (degenerate ? "yes" : "no") +
                                      ", index mismatches " + std::to_string(bad) + "/" + std::to_string(checked)};
}

Line criterion_4() {
  // Oracle kernel from the closed form, normalized independently.
  std::vector<double> k1(21);
  double s1 = 0.0;
  for (int i = 0; i < 21; ++i) s1 += k1[static_cast<std::size_t>(i)] = std::exp(-(i - 10) * (i - 10) / (2.0 * 121.0));
  const auto k2 = gr::gaussian_kernel_2d(21, 11.0);
  double sum = 0.0, kernel_dev = 0.0;
  for (std::size_t i = 0; i < 21; ++i)
    for (std::size_t j = 0; j < 21; ++j) {
      sum += k2[i * 21 + j];
      kernel_dev = std::max(kernel_dev, std::abs(k2[i * 21 + j] - k1[i] * k1[j] / (s1 * s1)));
    }
  std::mt19937_64 rng(9004);
  double const_dev = 0.0, lin_dev = 0.0;
  for (auto [r, c] : {std::pair{5u, 7u}, std::pair{16u, 16u}, std::pair{30u, 9u}}) {
    for (double v : gr::gaussian_smooth(gr::Grid2(r, c, -7.5), 21, 11.0).data) const_dev = std::max(const_dev, std::abs(v + 7.5));
    gr::Grid2 x(r, c), y(r, c), mix(r, c);
    x.data = randn(rng, r * c);
    y.data = randn(rng, r * c);
    for (std::size_t i = 0; i < mix.data.size(); ++i) mix.data[i] = 2.5 * x.data[i] - 0.75 * y.data[i];
    const auto sm = gr::gaussian_smooth(mix, 21, 11.0), sx = gr::gaussian_smooth(x, 21, 11.0),
               sy = gr::gaussian_smooth(y, 21, 11.0);
    for (std::size_t i = 0; i < sm.data.size(); ++i)
      lin_dev = std::max(lin_dev, std::abs(sm.data[i] - 2.5 * sx.data[i] + 0.75 * sy.data[i]));
  }
  return {std::abs(sum - 1.0) < kKernelSumTol && kernel_dev < kKernelSumTol && const_dev < kSmoothTol &&
              lin_dev < kSmoothTol,
          "|sum-1| " + sci(std::abs(sum - 1.0)) + ", kernel vs closed form " + sci(kernel_dev) + ", constant " +
              sci(const_dev) + ", linearity " + sci(lin_dev)};
}

struct Problem {
  gr::BackboneParams params;
  gr::Conditioning cond;
  gr::Tensor4 x;
};

Problem make_problem(std::uint64_t seed, std::size_t dense_side) {
  gr::BackboneConfig cfg;
  cfg.latent_channels = 4;
  cfg.patch = {1, 1, 1};
  cfg.blocks = 2;
  cfg.text_dim = 16;
  cfg.dense_dim = 8;
  Problem p;
  p.params = gr::init_backbone(cfg, seed);
  p.x = gr::gaussian_like(gr::Tensor4(2, 4, 4, 4), seed ^ 0x5a5a);
  const std::vector<gr::ObjectMask> masks{box(4, 4, 1, 1, 2, 2, 0), box(4, 4, 0, 2, 3, 2, 1)};
  p.cond.latent_positions = gr::build_identity_rope(masks, cfg.rope, 2, 4, 4).enc;
  p.cond.text = gr::make_text_stub("acceptance", seed, 5, cfg.text_dim);
  if (dense_side == 0) {
    p.cond.dense = gr::empty_dense_grid(cfg.dense_dim);
  } else {
    p.cond.dense = gr::synth_dense_tokens(seed, gr::AffineWarp::translation(0.5, 1.0), 1, dense_side, dense_side,
                                          cfg.dense_dim, cfg.rope);
  }
  return p;
}

Line criterion_5() {
  std::string sizes;
  bool lengths_ok = true;
  for (std::size_t side : {0u, 1u, 4u}) {
    const auto p = make_problem(9005 + side, side);
    const gr::Mat h = gr::patchify(p.x, p.params.cfg.patch) * p.params.w_in;
    const gr::Mat dense = side ? gr::Mat(p.cond.dense.tokens * p.params.adapter) : gr::Mat(0, h.cols());
    const auto seq = gr::fuse_tokens(h, p.cond.latent_positions, dense, p.cond.dense.positions);
    const auto out = gr::transformer_block(seq, p.cond.text, p.params.blocks[1], p.params.cfg.heads);
    lengths_ok &= out.rows() == h.rows() && seq.latent_count == static_cast<std::size_t>(h.rows());
    // Full velocity shape as well.
    lengths_ok &= gr::predict_velocity(p.x, 0.5, p.cond, p.params).same_shape(p.x);
    sizes += std::to_string(dense.rows()) + "->" + std::to_string(out.rows()) + " ";
  }

  const auto p = make_problem(9006, 4);
  const gr::Mat h = gr::patchify(p.x, p.params.cfg.patch) * p.params.w_in;
  const gr::Mat dense = p.cond.dense.tokens * p.params.adapter;
  const auto ref = gr::transformer_block(gr::fuse_tokens(h, p.cond.latent_positions, dense, p.cond.dense.positions),
                                         p.cond.text, p.params.blocks[0], p.params.cfg.heads);
  std::vector<std::size_t> perm(16);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::mt19937_64 rng(9006);
  double perm_dev = 0.0;
  for (int trial = 0; trial < 4; ++trial) {
    if (trial) std::shuffle(perm.begin(), perm.end(), rng);
    gr::Mat pd(16, dense.cols());
    gr::PositionalEncoding pp(16, p.cond.dense.positions.pairs);
    for (std::size_t i = 0; i < 16; ++i) {
      pd.row(static_cast<Eigen::Index>(i)) = dense.row(static_cast<Eigen::Index>(perm[i]));
      for (std::size_t j = 0; j < pp.pairs; ++j) pp.row(i)[j] = p.cond.dense.positions.row(perm[i])[j];
    }
    const auto out = gr::transformer_block(gr::fuse_tokens(h, p.cond.latent_positions, pd, pp), p.cond.text,
                                           p.params.blocks[0], p.params.cfg.heads);
    perm_dev = std::max(perm_dev, (out - ref).cwiseAbs().maxCoeff());
  }

  double closed_dev = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t d = 4;
    gr::Mat q(1, d), k(2, d), v(2, 3);
    for (Eigen::Index j = 0; j < q.size(); ++j) q.data()[j] = randn(rng, 1)[0];
    for (Eigen::Index j = 0; j < k.size(); ++j) k.data()[j] = randn(rng, 1)[0];
    for (Eigen::Index j = 0; j < v.size(); ++j) v.data()[j] = randn(rng, 1)[0];
    const double l0 = q.row(0).dot(k.row(0)) / 2.0, l1 = q.row(0).dot(k.row(1)) / 2.0;
    const double m = std::max(l0, l1);
    const double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
    const gr::Mat expect = (e0 * v.row(0) + e1 * v.row(1)) / (e0 + e1);
    closed_dev = std::max(closed_dev, (gr::attention(q, k, v) - expect).cwiseAbs().maxCoeff());
  }
  return {lengths_ok && perm_dev < kPermutationTol && closed_dev < kClosedFormTol,
          "dense->latent rows " + sizes + "(latent_count 32), permutation " + sci(perm_dev) + ", 2-token closed form " +
              sci(closed_dev)};
}

Line criterion_6() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto p = make_problem(9007, 2);
  const double tau = 0.63;
  std::mt19937_64 rng(9007);
  gr::Tensor4 w(2, 4, 4, 4);
  w.data = randn(rng, w.data.size());
  const auto loss = [&](const gr::Tensor4& x) {
    const auto v = gr::predict_velocity(x, tau, p.cond, p.params);
    return dot(v.data, w.data);
  };
  const auto grad = gr::velocity_vjp(p.x, tau, p.cond, p.params, w);
  std::vector<std::size_t> coords(p.x.data.size());
  std::iota(coords.begin(), coords.end(), 0);
  std::shuffle(coords.begin(), coords.end(), rng);
  coords.resize(kGradCoords);
  double worst = 0.0;
  for (std::size_t c : coords) {
    gr::Tensor4 xp = p.x, xm = p.x;
    xp.data[c] += kFdStep;
    xm.data[c] -= kFdStep;
    const double fd = (loss(xp) - loss(xm)) / (2.0 * kFdStep);
    const double denom = std::max({std::abs(fd), std::abs(grad.data[c]), 1e-8});
    worst = std::max(worst, std::abs(fd - grad.data[c]) / denom);
  }
  const double secs = seconds_since(t0);
  return {worst < kGradRelTol && secs < kGradBudget,
          std::to_string(kGradCoords) + " coords, max rel error " + sci(worst) + ", " + sci(secs) + " s"};
}

Line criterion_7() {
  // Oracle flow v(tau) = a + b tau: x(0) = x(1) - a - b/2, and the Euler
  // error is exactly |b| / (2n).
  std::mt19937_64 rng(9008);
  const gr::Tensor4 start = gr::gaussian_like(gr::Tensor4(1, 2, 3, 3), 90081);
  const auto a = randn(rng, start.data.size()), b = randn(rng, start.data.size());
  auto err = [&](std::size_t n) {
    const auto out = gr::integrate(start, n, [&](const gr::Tensor4& x, double tau) {
      gr::Tensor4 v(x.t, x.c, x.h, x.w);
      for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = a[i] + b[i] * tau;
      return v;
    });
    double e = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i)
      e = std::max(e, std::abs(out.data[i] - (start.data[i] - a[i] - 0.5 * b[i])));
    return e;
  };
  const double ratio = err(100) / err(10);
  const bool order_ok = ratio <= kOrderRatio * kOrderFactor && ratio >= kOrderRatio / kOrderFactor;

  const gr::Tensor4 z = gr::gaussian_like(start, 90082), eps = gr::gaussian_like(start, 90083);
  gr::Tensor4 v = eps;
  for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = eps.data[i] - z.data[i];
  const auto one = gr::integrate(gr::add_noise(z, 1.0, eps), 1, [&](const gr::Tensor4&, double) { return v; });
  double exact = 0.0;
  for (std::size_t i = 0; i < z.data.size(); ++i) exact = std::max(exact, std::abs(one.data[i] - z.data[i]));
  return {order_ok && exact < kConstantStepTol,
          "err(100)/err(10) = " + sci(ratio) + ", one-step straight line " + sci(exact)};
}

Line criterion_8() {
  std::mt19937_64 rng(9009);
  double worst = 0.0;
  auto track = [&](const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
      worst = INFINITY;
      return;
    }
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  };
  for (std::size_t r : {1u, 2u, 4u}) {
    gr::Tensor4 img(2, 3, 8, 8);
    img.data = randn(rng, img.data.size());
    const gr::LatentMap map{r, 3 * r * r + 1};
    track(gr::decode_latents(gr::encode_latents(img, map), map).data, img.data);
  }
  gr::Tensor4 x(4, 5, 8, 12);
  x.data = randn(rng, x.data.size());
  for (const gr::PatchSpec& s : {gr::PatchSpec{1, 1, 1}, gr::PatchSpec{2, 2, 3}, gr::PatchSpec{4, 8, 4}})
    track(gr::unpatchify(gr::patchify(x, s), s, 4, 5, 8, 12).data, x.data);

  const fs::path dir = fs::temp_directory_path() / ("grouprope_accept8_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  bool files_ok = true;
  gr::DisplacementField f(7, 9);
  f.dh.data = randn(rng, 63);
  f.dw.data = randn(rng, 63);
  gr::write_field(dir / "f.gedf", f);
  files_ok &= gr::read_field(dir / "f.gedf") == f;
  files_ok &= fs::file_size(dir / "f.gedf") == 14 + 16 * 63;
  const auto enc = gr::build_identity_rope(std::vector{box(5, 6, 1, 1, 2, 3, 0)}, gr::RopeDims{}, 1, 5, 6).enc;
  gr::write_encoding(dir / "e.gepe", enc);
  files_ok &= gr::read_encoding(dir / "e.gepe") == enc;
  gr::Grid2 g(4, 7);
  for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = static_cast<double>((i * 29) % 256) / 255.0;
  gr::write_pgm(dir / "m.pgm", g);
  files_ok &= gr::read_pgm(dir / "m.pgm") == g;
  gr::RgbImage img{3, 4, std::vector<double>(36)};
  for (std::size_t i = 0; i < 36; ++i) img.planes[i] = static_cast<double>((i * 71) % 256) / 255.0;
  gr::write_ppm(dir / "i.ppm", img);
  files_ok &= gr::read_ppm(dir / "i.ppm").planes == img.planes;
  gr::GroupManifest m = gr::load_manifest(GROUPROPE_DEMO_MANIFEST);
  m.settings.smooth_sigma = 1.0 / 3.0;
  m.settings.dense_warp.b_h = -0.1;
  gr::save_manifest(dir / "manifest.txt", m);
  files_ok &= gr::load_manifest(dir / "manifest.txt") == m;
  fs::remove_all(dir);
  return {worst < kRoundTripTol && files_ok,
          "tensor round trips max " + sci(worst) + ", files (GEDF, GEPE, PGM, PPM, manifest) " +
              (files_ok ? "bitwise" : "DIFFER")};
}

int run_command(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Line criterion_9() {
  const fs::path base = fs::temp_directory_path() / ("grouprope_accept9_" + std::to_string(::getpid()));
  fs::remove_all(base);
  double worst_secs = 0.0;
  int status = 0;
  for (const char* run : {"a", "b"}) {
    const auto t0 = std::chrono::steady_clock::now();
    // Single-threaded binary: no OpenMP, Eigen runs on the calling thread.
    status |= run_command("env -u GROUPROPE_SEED " + std::string(GROUPROPE_CLI) + " run " + GROUPROPE_DEMO_MANIFEST +
                          " --out " + (base / run).string() + " > /dev/null");
    worst_secs = std::max(worst_secs, seconds_since(t0));
  }
  bool identical = status == 0;
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(base / "a")) {
    ++files;
    identical &= slurp(e.path()) == slurp(base / "b" / e.path().filename());
  }
  bool finite = false;
  std::size_t frames = 0, steps = 0;
  try {
    const auto report = nlohmann::json::parse(slurp(base / "a" / "report.json"));
    finite = report.at("finite").get<bool>();
    frames = report.at("frames").get<std::size_t>();
    steps = report.at("velocity_rms").size();
    for (const auto& v : report.at("velocity_rms")) finite &= v.is_number() && std::isfinite(v.get<double>());
    const auto img = gr::read_ppm(base / "a" / "frame_00.ppm");
    finite &= img.width == 32 && img.height == 32;
  } catch (const std::exception&) {
    finite = false;
  }
  fs::remove_all(base);
  return {identical && finite && frames == 4 && steps == 8 && files == frames + 1 && worst_secs < kSmokeBudget,
          std::to_string(frames) + " frames, " + std::to_string(steps) + " steps, " + std::to_string(files) +
              " files " + (identical ? "bit-identical" : "DIFFER") + ", finite " + (finite ? "yes" : "no") +
              ", slowest run " + sci(worst_secs) + " s"};
}

Line criterion_10() {
  const fs::path log = fs::temp_directory_path() / ("grouprope_accept10_" + std::to_string(::getpid()) + ".txt");
  const int code = run_command(std::string(GROUPROPE_CLI) + " check > " + log.string() + " 2>&1");
  const std::string out = slurp(log);
  fs::remove(log);
  bool covers = true;
  for (int c = 1; c <= 8; ++c) covers &= out.find("[criterion " + std::to_string(c) + "]") != std::string::npos;
  const bool no_fail = out.find("FAIL ") == std::string::npos;
  return {code == 0 && covers && no_fail, "exit " + std::to_string(code) + ", criteria 1-8 listed: " +
                                              (covers ? "yes" : "no") + ", failures: " + (no_fail ? "none" : "present")};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Line()>> criteria[] = {
      {"1 rope relative-position identity", criterion_1},
      {"2 identity-rope signature sharing", criterion_2},
      {"3 ge-rope degeneracy and translation", criterion_3},
      {"4 smoothing kernel", criterion_4},
      {"5 fusion contract", criterion_5},
      {"6 gradient check", criterion_6},
      {"7 sampler order", criterion_7},
      {"8 round-trips", criterion_8},
      {"9 end-to-end smoke", criterion_9},
      {"10 check subcommand", criterion_10},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Line l;
    try {
      l = fn();
    } catch (const std::exception& e) {
      l = {false, std::string("threw: ") + e.what()};
    }
    failures += !l.ok;
    std::cout << (l.ok ? "PASS" : "FAIL") << " criterion " << name << ": " << l.detail << std::endl;
  }
  std::cout << (10 - failures) << "/10 criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}
