#pragma once

// End-to-end group editing loop at desk scale:
//   encode -> noise at tau = 1 -> Euler integrate the backbone velocity -> decode
// Latent tokens use the geometry encoding when a displacement field is
// available and the identity encoding otherwise.

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "grouprope/backbone.hpp"
#include "grouprope/conditioning.hpp"
#include "grouprope/ge_rope.hpp"
#include "grouprope/identity_rope.hpp"
#include "grouprope/io.hpp"
#include "grouprope/latent.hpp"
#include "grouprope/manifest.hpp"
#include "grouprope/sampler.hpp"

namespace grouprope {

struct PipelineConfig {
  LatentMap map;
  BackboneConfig backbone;
  NoiseSchedule schedule;
  std::size_t steps = 8;
  std::uint64_t seed = 0;
  std::size_t text_len = 8;
  std::array<std::size_t, 3> dense_grid{0, 0, 0};
  AffineWarp dense_warp;
  GeometrySource geometry = GeometrySource::none;
  std::size_t smooth_kernel = 21;
  double smooth_sigma = 11.0;
  double mask_threshold = 0.5;

  /// Pixels per token along h and w.
  std::size_t pixels_per_token() const { return map.reduction * backbone.patch.p_h; }
};

inline PipelineConfig make_config(const PipelineSettings& s) {
  PipelineConfig c;
  c.map = {s.latent_reduction, s.latent_channels};
  c.backbone.model_dim = s.model_dim;
  c.backbone.heads = s.heads;
  c.backbone.blocks = s.blocks;
  c.backbone.text_dim = s.text_dim;
  c.backbone.dense_dim = s.dense_dim;
  c.backbone.latent_channels = s.latent_channels;
  c.backbone.patch = s.patch;
  c.backbone.rope = s.rope;
  c.backbone.zero_velocity = s.backbone == "zero";
  c.schedule = schedule_from_name(s.schedule);
  c.steps = s.steps;
  c.seed = s.seed;
  c.text_len = s.text_len;
  c.dense_grid = s.dense_grid;
  c.dense_warp = s.dense_warp;
  c.geometry = s.geometry;
  c.smooth_kernel = s.smooth_kernel;
  c.smooth_sigma = s.smooth_sigma;
  c.mask_threshold = s.mask_threshold;
  c.map.validate();
  c.backbone.validate();
  if (c.backbone.patch.p_t != 1) {
    throw std::invalid_argument("pipeline: temporal patch size must be 1 (one frame per image)");
  }
  if (c.backbone.patch.p_h != c.backbone.patch.p_w) {
    throw std::invalid_argument("pipeline: spatial patch must be square (p_h == p_w)");
  }
  return c;
}

struct GroupData {
  Tensor4 images;                          // T x 3 x H x W in [0, 1]
  std::vector<ObjectMask> masks;           // token-grid resolution
  std::optional<DisplacementField> field;  // source pixels
  std::string prompt;
};

inline GroupData load_group(const GroupManifest& m, const PipelineConfig& cfg) {
  GroupData g;
  const std::size_t T = m.frames();
  for (std::size_t t = 0; t < T; ++t) {
    const RgbImage img = read_ppm(m.resolve(m.entries[t].image));
    if (t == 0) {
      g.images = Tensor4(T, 3, img.height, img.width);
    } else if (img.height != g.images.h || img.width != g.images.w) {
      throw ManifestError("manifest: image " + std::to_string(t) + " size differs from image 0");
    }
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x) g.images(t, c, y, x) = img.at(c, y, x);

    ObjectMask mask = load_mask(m.resolve(m.entries[t].mask), 1, t);
    if (mask.values.rows != img.height || mask.values.cols != img.width) {
      throw ManifestError("manifest: mask " + std::to_string(t) + " size differs from its image");
    }
    mask.values = downsample_area(mask.values, cfg.pixels_per_token());
    g.masks.push_back(std::move(mask));
  }
  if (!m.field.empty()) g.field = read_field(m.resolve(m.field));
  g.prompt = m.prompt;
  if (g.prompt.empty()) {
    for (const ManifestEntry& e : m.entries) {
      if (e.caption.empty()) continue;
      if (!g.prompt.empty()) g.prompt += " | ";
      g.prompt += e.caption;
    }
  }
  return g;
}

enum class PositionalKind { identity, geometry };

inline const char* positional_kind_name(PositionalKind k) {
  return k == PositionalKind::identity ? "identity" : "geometry";
}

struct LatentPositions {
  PositionalKind kind = PositionalKind::identity;
  PositionalEncoding enc;
  std::vector<BoundingRect> rects;      // identity only
  std::optional<SmoothedField> smoothed;  // geometry only
  std::optional<WarpIndices> indices;     // geometry only
};

inline LatentPositions build_latent_positions(const GroupData& data, const PipelineConfig& cfg,
                                              const TokenGrid& grid) {
  LatentPositions out;
  std::optional<SmoothedField> smoothed;
  if (data.field) {
    smoothed = process_displacement(
        *data.field, grid.h, grid.w,
        {cfg.pixels_per_token(), cfg.smooth_kernel, cfg.smooth_sigma});
  } else if (cfg.geometry == GeometrySource::synthetic) {
    // The synthetic warp is already expressed in token cells.
    smoothed = gaussian_smooth(displacement_of(cfg.dense_warp, grid.h, grid.w), cfg.smooth_kernel,
                               cfg.smooth_sigma);
  }

  if (smoothed) {
    const RopeBanks banks = build_rope_banks(cfg.backbone.rope, grid.t, grid.h, grid.w);
    GeEncoding ge = build_ge_rope(warp_grid(*smoothed), banks);
    out.kind = PositionalKind::geometry;
    out.enc = std::move(ge.enc);
    out.indices = std::move(ge.indices);
    out.smoothed = std::move(smoothed);
  } else {
    IdentityEncoding id = build_identity_rope(data.masks, cfg.backbone.rope, grid.t, grid.h,
                                              grid.w, cfg.mask_threshold);
    out.kind = PositionalKind::identity;
    out.enc = std::move(id.enc);
    out.rects = std::move(id.rects);
  }
  return out;
}

inline DenseTokenGrid build_dense_grid(const PipelineConfig& cfg) {
  const auto& g = cfg.dense_grid;
  if (g[0] == 0 || g[1] == 0 || g[2] == 0) return empty_dense_grid(cfg.backbone.dense_dim);
  return synth_dense_tokens(cfg.seed, cfg.dense_warp, g[0], g[1], g[2], cfg.backbone.dense_dim,
                            cfg.backbone.rope);
}

struct RunResult {
  Tensor4 latents;
  Tensor4 images;
  LatentPositions positions;
  std::size_t latent_tokens = 0;
  std::size_t dense_tokens = 0;
  std::vector<double> velocity_rms;                      // one entry per Euler step
  std::vector<std::pair<std::string, double>> residuals;  // invariant residuals, by name
  bool finite = true;
};

inline double rms(const Tensor4& x) {
  double acc = 0.0;
  for (double v : x.data) acc += v * v;
  return x.data.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(x.data.size()));
}

inline RunResult run_pipeline(const GroupData& data, const PipelineConfig& cfg) {
  RunResult res;
  const Tensor4 z = encode_latents(data.images, cfg.map);
  const TokenGrid grid = token_grid(z, cfg.backbone.patch);

  res.positions = build_latent_positions(data, cfg, grid);
  Conditioning cond;
  cond.latent_positions = res.positions.enc;
  cond.text = make_text_stub(data.prompt, cfg.seed, cfg.text_len, cfg.backbone.text_dim);
  cond.dense = build_dense_grid(cfg);
  res.latent_tokens = grid.tokens();
  res.dense_tokens = cond.dense.count();

  const BackboneParams params = init_backbone(cfg.backbone, cfg.seed);
  const Tensor4 eps = gaussian_like(z, derive_seed(cfg.seed, "noise"));
  const Tensor4 x1 = add_noise(z, 1.0, eps, cfg.schedule);

  res.latents = integrate(
      x1, cfg.steps,
      [&](const Tensor4& x, double tau) { return predict_velocity(x, tau, cond, params); },
      [&](std::size_t, double, const Tensor4& v) { res.velocity_rms.push_back(rms(v)); });
  res.images = decode_latents(res.latents, cfg.map);
  res.finite = std::all_of(res.latents.data.begin(), res.latents.data.end(),
                           [](double v) { return std::isfinite(v); });

  // Invariant residuals on this group's actual tensors.
  const Tensor4 round_trip = decode_latents(z, cfg.map);
  double enc_dec = 0.0;
  for (std::size_t i = 0; i < round_trip.data.size(); ++i) {
    enc_dec = std::max(enc_dec, std::abs(round_trip.data[i] - data.images.data[i]));
  }
  const Tensor4 patch_rt =
      unpatchify(patchify(x1, cfg.backbone.patch), cfg.backbone.patch, x1.t, x1.c, x1.h, x1.w);
  double patch_dev = 0.0;
  for (std::size_t i = 0; i < x1.data.size(); ++i) {
    patch_dev = std::max(patch_dev, std::abs(patch_rt.data[i] - x1.data[i]));
  }
  std::mt19937_64 rng(derive_seed(cfg.seed, "residuals"));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> probe(res.positions.enc.rows * res.positions.enc.pairs * 2);
  for (double& v : probe) v = normal(rng);
  std::vector<double> rotated = probe;
  apply_encoding_inplace(rotated, res.positions.enc);
  double norm_dev = 0.0;
  const std::size_t width = 2 * res.positions.enc.pairs;
  for (std::size_t r = 0; r < res.positions.enc.rows; ++r) {
    double a = 0.0, b = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      a += probe[r * width + j] * probe[r * width + j];
      b += rotated[r * width + j] * rotated[r * width + j];
    }
    norm_dev = std::max(norm_dev, std::abs(std::sqrt(a) - std::sqrt(b)));
  }
  res.residuals = {
      {"encode_decode_max_abs", enc_dec},
      {"patchify_round_trip_max_abs", patch_dev},
      {"positional_unit_modulus_max_dev", unit_modulus_deviation(res.positions.enc)},
      {"rotary_norm_max_dev", norm_dev},
  };
  return res;
}

}  // namespace grouprope
