#pragma once

// Group manifest: a line-oriented `key = value` text file. '#' starts a
// comment line. Per-image keys carry an index: image.0, mask.0, caption.0.
// Relative paths resolve against the manifest's directory.

#include <array>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "grouprope/conditioning.hpp"
#include "grouprope/io.hpp"
#include "grouprope/latent.hpp"
#include "grouprope/rope_core.hpp"

namespace grouprope {

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class GeometrySource { none, synthetic };

struct PipelineSettings {
  std::size_t latent_reduction = 2;
  std::size_t latent_channels = 12;
  PatchSpec patch{1, 2, 2};
  RopeDims rope{};
  std::size_t model_dim = 64;
  std::size_t heads = 2;
  std::size_t blocks = 2;
  std::size_t text_len = 8;
  std::size_t text_dim = 32;
  std::string schedule = "linear";
  std::size_t steps = 8;
  std::uint64_t seed = 0;
  std::string backbone = "seeded";  // "seeded" or "zero"
  std::array<std::size_t, 3> dense_grid{0, 0, 0};  // frames, rows, cols; zero disables
  std::size_t dense_dim = 32;
  AffineWarp dense_warp{};
  GeometrySource geometry = GeometrySource::none;
  std::size_t smooth_kernel = 21;
  double smooth_sigma = 11.0;
  double mask_threshold = 0.5;

  bool operator==(const PipelineSettings& o) const;
};

struct ManifestEntry {
  std::string image;
  std::string mask;
  std::string caption;
  bool operator==(const ManifestEntry&) const = default;
};

struct GroupManifest {
  std::string group_id;
  std::vector<ManifestEntry> entries;
  std::string prompt;
  std::string field;  // optional GEDF path
  PipelineSettings settings;
  std::filesystem::path base_dir;  // not serialized

  std::size_t frames() const { return entries.size(); }
  std::filesystem::path resolve(const std::string& rel) const {
    const std::filesystem::path p(rel);
    return p.is_absolute() ? p : base_dir / p;
  }

  bool operator==(const GroupManifest& o) const {
    return group_id == o.group_id && entries == o.entries && prompt == o.prompt &&
           field == o.field && settings == o.settings;
  }
};

inline bool PipelineSettings::operator==(const PipelineSettings& o) const {
  auto warp_eq = [](const AffineWarp& a, const AffineWarp& b) {
    return a.a_hh == b.a_hh && a.a_hw == b.a_hw && a.a_wh == b.a_wh && a.a_ww == b.a_ww &&
           a.b_h == b.b_h && a.b_w == b.b_w;
  };
  return latent_reduction == o.latent_reduction && latent_channels == o.latent_channels &&
         patch.p_t == o.patch.p_t && patch.p_h == o.patch.p_h && patch.p_w == o.patch.p_w &&
         rope.theta == o.rope.theta && rope.d_t == o.rope.d_t && rope.d_h == o.rope.d_h &&
         rope.d_w == o.rope.d_w && model_dim == o.model_dim && heads == o.heads &&
         blocks == o.blocks && text_len == o.text_len && text_dim == o.text_dim &&
         schedule == o.schedule && steps == o.steps && seed == o.seed && backbone == o.backbone &&
         dense_grid == o.dense_grid && dense_dim == o.dense_dim &&
         warp_eq(dense_warp, o.dense_warp) && geometry == o.geometry &&
         smooth_kernel == o.smooth_kernel && smooth_sigma == o.smooth_sigma &&
         mask_threshold == o.mask_threshold;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.push_back(trim(s.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class T>
T parse_number(std::string_view s, std::string_view key) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ManifestError("manifest: bad value '" + std::string(s) + "' for key '" +
                        std::string(key) + "'");
  }
  return v;
}

template <class T, std::size_t N>
std::array<T, N> parse_tuple(std::string_view s, std::string_view key) {
  const auto parts = split_list(s);
  if (parts.size() != N) {
    throw ManifestError("manifest: key '" + std::string(key) + "' expects " + std::to_string(N) +
                        " comma-separated values");
  }
  std::array<T, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = parse_number<T>(parts[i], key);
  return out;
}

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

inline GroupManifest parse_manifest(std::string_view text,
                                    const std::filesystem::path& base_dir = {}) {
  using detail::parse_number;
  using detail::parse_tuple;
  GroupManifest m;
  m.base_dir = base_dir;
  PipelineSettings& s = m.settings;
  std::map<std::size_t, ManifestEntry> entries;
  std::map<std::size_t, std::array<bool, 2>> seen;  // image, mask

  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view l = detail::trim(line);
    if (l.empty() || l.front() == '#') continue;
    const auto eq = l.find('=');
    if (eq == std::string_view::npos) {
      throw ManifestError("manifest line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key(detail::trim(l.substr(0, eq)));
    const std::string_view value = detail::trim(l.substr(eq + 1));

    const auto dot = key.find('.');
    if (dot != std::string::npos) {
      const std::string prefix = key.substr(0, dot);
      const auto idx = parse_number<std::size_t>(std::string_view(key).substr(dot + 1), key);
      ManifestEntry& e = entries[idx];
      if (prefix == "image") {
        e.image = value;
        seen[idx][0] = true;
      } else if (prefix == "mask") {
        e.mask = value;
        seen[idx][1] = true;
      } else if (prefix == "caption") {
        e.caption = value;
      } else {
        throw ManifestError("manifest line " + std::to_string(lineno) + ": unknown key '" + key + "'");
      }
      continue;
    }

    if (key == "group") m.group_id = value;
    else if (key == "prompt") m.prompt = value;
    else if (key == "field") m.field = value;
    else if (key == "latent_reduction") s.latent_reduction = parse_number<std::size_t>(value, key);
    else if (key == "latent_channels") s.latent_channels = parse_number<std::size_t>(value, key);
    else if (key == "patch") {
      const auto p = parse_tuple<std::size_t, 3>(value, key);
      s.patch = {p[0], p[1], p[2]};
    } else if (key == "rope_theta") s.rope.theta = parse_number<double>(value, key);
    else if (key == "rope_dims") {
      const auto d = parse_tuple<std::size_t, 3>(value, key);
      s.rope.d_t = d[0];
      s.rope.d_h = d[1];
      s.rope.d_w = d[2];
    } else if (key == "model_dim") s.model_dim = parse_number<std::size_t>(value, key);
    else if (key == "heads") s.heads = parse_number<std::size_t>(value, key);
    else if (key == "blocks") s.blocks = parse_number<std::size_t>(value, key);
    else if (key == "text_len") s.text_len = parse_number<std::size_t>(value, key);
    else if (key == "text_dim") s.text_dim = parse_number<std::size_t>(value, key);
    else if (key == "schedule") s.schedule = value;
    else if (key == "steps") s.steps = parse_number<std::size_t>(value, key);
    else if (key == "seed") s.seed = parse_number<std::uint64_t>(value, key);
    else if (key == "backbone") {
      if (value != "seeded" && value != "zero") {
        throw ManifestError("manifest: backbone must be 'seeded' or 'zero'");
      }
      s.backbone = value;
    } else if (key == "dense_grid") s.dense_grid = parse_tuple<std::size_t, 3>(value, key);
    else if (key == "dense_dim") s.dense_dim = parse_number<std::size_t>(value, key);
    else if (key == "dense_warp") {
      const auto a = parse_tuple<double, 6>(value, key);
      s.dense_warp = {a[0], a[1], a[2], a[3], a[4], a[5]};
    } else if (key == "geometry") {
      if (value == "none") s.geometry = GeometrySource::none;
      else if (value == "synthetic") s.geometry = GeometrySource::synthetic;
      else throw ManifestError("manifest: geometry must be 'none' or 'synthetic'");
    } else if (key == "smooth_kernel") s.smooth_kernel = parse_number<std::size_t>(value, key);
    else if (key == "smooth_sigma") s.smooth_sigma = parse_number<double>(value, key);
    else if (key == "mask_threshold") s.mask_threshold = parse_number<double>(value, key);
    else {
      throw ManifestError("manifest line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }

  std::size_t expect = 0;
  for (auto& [idx, e] : entries) {
    if (idx != expect++) {
      throw ManifestError("manifest: image indices must be contiguous from 0");
    }
    if (!seen[idx][0] || !seen[idx][1]) {
      throw ManifestError("manifest: entry " + std::to_string(idx) + " needs both image and mask");
    }
    m.entries.push_back(std::move(e));
  }
  if (m.entries.empty()) throw ManifestError("manifest: at least one image entry is required");
  return m;
}

inline std::string serialize_manifest(const GroupManifest& m) {
  using detail::format_double;
  const PipelineSettings& s = m.settings;
  std::ostringstream out;
  out << "group = " << m.group_id << '\n';
  if (!m.prompt.empty()) out << "prompt = " << m.prompt << '\n';
  if (!m.field.empty()) out << "field = " << m.field << '\n';
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    out << "image." << i << " = " << m.entries[i].image << '\n';
    out << "mask." << i << " = " << m.entries[i].mask << '\n';
    if (!m.entries[i].caption.empty()) out << "caption." << i << " = " << m.entries[i].caption << '\n';
  }
  out << "latent_reduction = " << s.latent_reduction << '\n'
      << "latent_channels = " << s.latent_channels << '\n'
      << "patch = " << s.patch.p_t << ',' << s.patch.p_h << ',' << s.patch.p_w << '\n'
      << "rope_theta = " << format_double(s.rope.theta) << '\n'
      << "rope_dims = " << s.rope.d_t << ',' << s.rope.d_h << ',' << s.rope.d_w << '\n'
      << "model_dim = " << s.model_dim << '\n'
      << "heads = " << s.heads << '\n'
      << "blocks = " << s.blocks << '\n'
      << "text_len = " << s.text_len << '\n'
      << "text_dim = " << s.text_dim << '\n'
      << "schedule = " << s.schedule << '\n'
      << "steps = " << s.steps << '\n'
      << "seed = " << s.seed << '\n'
      << "backbone = " << s.backbone << '\n'
      << "dense_grid = " << s.dense_grid[0] << ',' << s.dense_grid[1] << ',' << s.dense_grid[2] << '\n'
      << "dense_dim = " << s.dense_dim << '\n'
      << "dense_warp = " << format_double(s.dense_warp.a_hh) << ',' << format_double(s.dense_warp.a_hw)
      << ',' << format_double(s.dense_warp.a_wh) << ',' << format_double(s.dense_warp.a_ww) << ','
      << format_double(s.dense_warp.b_h) << ',' << format_double(s.dense_warp.b_w) << '\n'
      << "geometry = " << (s.geometry == GeometrySource::synthetic ? "synthetic" : "none") << '\n'
      << "smooth_kernel = " << s.smooth_kernel << '\n'
      << "smooth_sigma = " << format_double(s.smooth_sigma) << '\n'
      << "mask_threshold = " << format_double(s.mask_threshold) << '\n';
  return out.str();
}

inline GroupManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_manifest(buf.str(), path.parent_path());
}

inline void save_manifest(const std::filesystem::path& path, const GroupManifest& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << serialize_manifest(m);
}

}  // namespace grouprope
