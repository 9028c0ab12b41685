// grouprope command-line driver.
//
//   grouprope run <manifest> [--out DIR]
//   grouprope check [--filter TEXT]
//   grouprope viz --kind phase|warp <manifest> [--out FILE] ...
//   grouprope rope-id <manifest> [--out FILE]
//   grouprope rope-ge <manifest> [--out FILE]
//
// GROUPROPE_SEED overrides the manifest seed for every subcommand.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "grouprope/check_suite.hpp"
#include "grouprope/grouprope.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace grouprope;

namespace {

struct Loaded {
  GroupManifest manifest;
  PipelineConfig cfg;
  GroupData data;
  TokenGrid grid;
};

std::uint64_t parse_seed_env(const char* text) {
  std::size_t used = 0;
  const std::string s(text);
  const unsigned long long v = std::stoull(s, &used, 10);
  if (used != s.size()) throw std::invalid_argument("GROUPROPE_SEED must be a decimal integer");
  return v;
}

Loaded load(const fs::path& manifest_path) {
  Loaded l;
  l.manifest = load_manifest(manifest_path);
  if (const char* env = std::getenv("GROUPROPE_SEED"); env != nullptr && *env != '\0') {
    l.manifest.settings.seed = parse_seed_env(env);
  }
  l.cfg = make_config(l.manifest.settings);
  l.data = load_group(l.manifest, l.cfg);
  l.grid = token_grid(encode_latents(l.data.images, l.cfg.map), l.cfg.backbone.patch);
  return l;
}

std::string frame_name(std::size_t t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%02zu.ppm", t);
  return buf;
}

json rect_json(const BoundingRect& r) {
  if (!r.present) return json{{"present", false}};
  return json{{"present", true}, {"x1", r.x1}, {"y1", r.y1}, {"x2", r.x2}, {"y2", r.y2}};
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

int cmd_run(const fs::path& manifest_path, fs::path out_dir) {
  const auto start = std::chrono::steady_clock::now();
  const Loaded l = load(manifest_path);
  if (out_dir.empty()) out_dir = manifest_path.parent_path() / (l.manifest.group_id + "_out");
  fs::create_directories(out_dir);

  const RunResult res = run_pipeline(l.data, l.cfg);
  json frames = json::array();
  for (std::size_t t = 0; t < res.images.t; ++t) {
    write_ppm(out_dir / frame_name(t), frame_image(res.images, t));
    frames.push_back(frame_name(t));
  }

  json report;
  report["group"] = l.manifest.group_id;
  report["frames"] = res.images.t;
  report["seed"] = l.cfg.seed;
  report["steps"] = l.cfg.steps;
  report["backbone"] = l.cfg.backbone.zero_velocity ? "zero" : "seeded";
  report["positional"] = positional_kind_name(res.positions.kind);
  report["latent_tokens"] = res.latent_tokens;
  report["dense_tokens"] = res.dense_tokens;
  report["token_grid"] = {l.grid.t, l.grid.h, l.grid.w};
  report["finite"] = res.finite;
  report["velocity_rms"] = res.velocity_rms;
  json residuals = json::object();
  for (const auto& [name, value] : res.residuals) residuals[name] = value;
  report["residuals"] = residuals;
  if (res.positions.kind == PositionalKind::identity) {
    json rects = json::array();
    for (const BoundingRect& r : res.positions.rects) rects.push_back(rect_json(r));
    report["rects"] = rects;
  }
  report["outputs"] = frames;
  write_json(out_dir / "report.json", report);

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << "run " << l.manifest.group_id << ": " << res.images.t << " frames, " << l.cfg.steps
            << " steps, " << positional_kind_name(res.positions.kind) << " positions, "
            << (res.finite ? "finite" : "NON-FINITE") << ", " << secs << " s -> " << out_dir.string()
            << '\n';
  return res.finite ? 0 : 1;
}

int cmd_check(const std::string& filter) {
  std::size_t failed = 0, ran = 0;
  for (const checks::Check& c : checks::all_checks()) {
    const std::string full = c.module + "." + c.name;
    if (!filter.empty() && full.find(filter) == std::string::npos) continue;
    const checks::Result r = checks::run_check(c);
    ++ran;
    failed += !r.passed;
    std::cout << (r.passed ? "PASS " : "FAIL ") << full;
    if (r.criterion > 0) std::cout << " [criterion " << r.criterion << "]";
    std::cout << " (" << r.seconds << " s): " << r.detail << '\n';
  }
  if (ran == 0) {
    std::cerr << "check: no property matches filter '" << filter << "'\n";
    return 2;
  }
  std::cout << ran - failed << "/" << ran << " properties passed\n";
  return failed == 0 ? 0 : 1;
}

PositionalEncoding select_encoding(const Loaded& l, const std::string& which) {
  if (which == "baseline") return build_rope_3d(l.cfg.backbone.rope, l.grid.t, l.grid.h, l.grid.w);
  if (which == "identity") {
    return build_identity_rope(l.data.masks, l.cfg.backbone.rope, l.grid.t, l.grid.h, l.grid.w,
                               l.cfg.mask_threshold)
        .enc;
  }
  LatentPositions pos = build_latent_positions(l.data, l.cfg, l.grid);
  if (which == "geometry" && pos.kind != PositionalKind::geometry) {
    throw std::invalid_argument("manifest provides no displacement field or synthetic geometry");
  }
  return std::move(pos.enc);
}

int cmd_viz(const std::string& kind, const fs::path& manifest_path, const fs::path& out,
            const std::string& axis, std::size_t freq, const std::string& encoding,
            std::size_t scale, std::size_t cell) {
  const Loaded l = load(manifest_path);
  if (kind == "phase") {
    const Axis a = axis == "t" ? Axis::t : axis == "h" ? Axis::h : Axis::w;
    const PositionalEncoding enc = select_encoding(l, encoding);
    write_ppm(out, viz_phase_map(enc, l.grid, l.cfg.backbone.rope, a, freq, scale));
  } else {
    const LatentPositions pos = build_latent_positions(l.data, l.cfg, l.grid);
    if (!pos.smoothed) {
      throw std::invalid_argument("viz warp: manifest provides no displacement field or synthetic geometry");
    }
    write_ppm(out, viz_warp(*pos.smoothed, cell));
  }
  std::cout << "wrote " << out.string() << '\n';
  return 0;
}

int cmd_rope_id(const fs::path& manifest_path, const fs::path& out) {
  const Loaded l = load(manifest_path);
  const IdentityEncoding id = build_identity_rope(l.data.masks, l.cfg.backbone.rope, l.grid.t,
                                                  l.grid.h, l.grid.w, l.cfg.mask_threshold);
  json j;
  j["group"] = l.manifest.group_id;
  j["token_grid"] = {l.grid.t, l.grid.h, l.grid.w};
  json rects = json::array();
  for (const BoundingRect& r : id.rects) rects.push_back(rect_json(r));
  j["rects"] = rects;
  j["rows"] = id.enc.rows;
  j["pairs"] = id.enc.pairs;
  j["unit_modulus_max_dev"] = unit_modulus_deviation(id.enc);
  if (!out.empty()) {
    write_encoding(out, id.enc);
    j["encoding_file"] = out.string();
  }
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_rope_ge(const fs::path& manifest_path, const fs::path& out) {
  const Loaded l = load(manifest_path);
  const LatentPositions pos = build_latent_positions(l.data, l.cfg, l.grid);
  if (pos.kind != PositionalKind::geometry) {
    throw std::invalid_argument("rope-ge: manifest provides no displacement field or synthetic geometry");
  }
  double max_dh = 0.0, max_dw = 0.0;
  for (double v : pos.smoothed->dh.data) max_dh = std::max(max_dh, std::abs(v));
  for (double v : pos.smoothed->dw.data) max_dw = std::max(max_dw, std::abs(v));
  std::size_t moved = 0;
  for (std::size_t h = 0; h < l.grid.h; ++h)
    for (std::size_t w = 0; w < l.grid.w; ++w)
      moved += pos.indices->h_at(h, w) != h || pos.indices->w_at(h, w) != w;
  json j;
  j["group"] = l.manifest.group_id;
  j["token_grid"] = {l.grid.t, l.grid.h, l.grid.w};
  j["source"] = l.data.field ? "field" : "synthetic";
  j["max_abs_dh"] = max_dh;
  j["max_abs_dw"] = max_dw;
  j["cells_reindexed"] = moved;
  j["rows"] = pos.enc.rows;
  j["pairs"] = pos.enc.pairs;
  j["unit_modulus_max_dev"] = unit_modulus_deviation(pos.enc);
  if (!out.empty()) {
    write_encoding(out, pos.enc);
    j["encoding_file"] = out.string();
  }
  std::cout << j.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Group image editing with identity and geometry rotary encodings"};
  app.require_subcommand(1);

  std::string manifest, out, filter, kind = "phase", axis = "w", encoding = "auto";
  std::size_t freq = 0, scale = 4, cell = 8;

  auto* run = app.add_subcommand("run", "encode, noise, integrate and decode a group");
  run->add_option("manifest", manifest, "group manifest")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "output directory (default <manifest dir>/<group>_out)");

  auto* check = app.add_subcommand("check", "run the named invariant suite");
  check->add_option("--filter", filter, "only properties whose name contains TEXT");

  auto* viz = app.add_subcommand("viz", "render phase maps or warp quiver plots");
  viz->add_option("--kind", kind, "phase or warp")->check(CLI::IsMember({"phase", "warp"}));
  viz->add_option("manifest", manifest, "group manifest")->required()->check(CLI::ExistingFile);
  viz->add_option("--out", out, "output PPM")->required();
  viz->add_option("--axis", axis, "t, h or w")->check(CLI::IsMember({"t", "h", "w"}));
  viz->add_option("--freq", freq, "frequency index within the axis");
  viz->add_option("--encoding", encoding, "auto, baseline, identity or geometry")
      ->check(CLI::IsMember({"auto", "baseline", "identity", "geometry"}));
  viz->add_option("--scale", scale, "pixels per token (phase)");
  viz->add_option("--cell", cell, "pixels per token (warp)");

  auto* rope_id = app.add_subcommand("rope-id", "identity encoding and rectangles for a group");
  rope_id->add_option("manifest", manifest, "group manifest")->required()->check(CLI::ExistingFile);
  rope_id->add_option("--out", out, "write the encoding as a GEPE file");

  auto* rope_ge = app.add_subcommand("rope-ge", "geometry encoding for a group");
  rope_ge->add_option("manifest", manifest, "group manifest")->required()->check(CLI::ExistingFile);
  rope_ge->add_option("--out", out, "write the encoding as a GEPE file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(manifest, out);
    if (*check) return cmd_check(filter);
    if (*viz) return cmd_viz(kind, manifest, out, axis, freq, encoding, scale, cell);
    if (*rope_id) return cmd_rope_id(manifest, out);
    if (*rope_ge) return cmd_rope_ge(manifest, out);
  } catch (const std::exception& e) {
    std::cerr << "grouprope: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
