#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "grouprope/grouprope.hpp"

namespace fs = std::filesystem;
namespace gr = grouprope;

namespace {

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("grouprope_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  void write_bytes(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    out << bytes;
  }

  fs::path dir_;
};

std::string pgm(std::size_t w, std::size_t h, const std::vector<unsigned char>& px) {
  std::string s = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  s.append(px.begin(), px.end());
  return s;
}

}  // namespace

using Netpbm = TempDir;

TEST_F(Netpbm, AllWhiteMaskIsOnes) {
  write_bytes(dir_ / "m.pgm", pgm(3, 2, std::vector<unsigned char>(6, 255)));
  const auto m = gr::load_mask(dir_ / "m.pgm");
  EXPECT_EQ(m.values.rows, 2u);
  EXPECT_EQ(m.values.cols, 3u);
  for (double v : m.values.data) EXPECT_EQ(v, 1.0);
}

TEST_F(Netpbm, AllBlackMaskIsEmpty) {
  write_bytes(dir_ / "m.pgm", pgm(4, 4, std::vector<unsigned char>(16, 0)));
  EXPECT_FALSE(gr::extract_rect(gr::load_mask(dir_ / "m.pgm")).present);
}

TEST_F(Netpbm, CheckerboardDownsamplesToHalf) {
  std::vector<unsigned char> px(36);
  for (std::size_t y = 0; y < 6; ++y)
    for (std::size_t x = 0; x < 6; ++x) px[y * 6 + x] = (x + y) % 2 ? 255 : 0;
  write_bytes(dir_ / "c.pgm", pgm(6, 6, px));
  const auto m = gr::load_mask(dir_ / "c.pgm", 2);
  EXPECT_EQ(m.values.rows, 3u);
  for (double v : m.values.data) EXPECT_EQ(v, 0.5);
  EXPECT_FALSE(gr::extract_rect(m).present);
}

TEST_F(Netpbm, CommentsAreSkipped) {
  write_bytes(dir_ / "c.pgm", "P5\n# made by hand\n2 1\n# max\n255\n\x80\xff");
  const auto g = gr::read_pgm(dir_ / "c.pgm");
  EXPECT_EQ(g.data, (std::vector<double>{128 / 255.0, 1.0}));
}

TEST_F(Netpbm, MalformedAndTruncated) {
  write_bytes(dir_ / "a.pgm", "P2\n2 2\n255\n0000");
  EXPECT_THROW(gr::read_pgm(dir_ / "a.pgm"), gr::IoError);
  write_bytes(dir_ / "b.pgm", "P5\n2 x\n255\n0000");
  EXPECT_THROW(gr::read_pgm(dir_ / "b.pgm"), gr::IoError);
  write_bytes(dir_ / "c.pgm", "P5\n2 2\n65535\n00000000");
  EXPECT_THROW(gr::read_pgm(dir_ / "c.pgm"), gr::IoError);
  write_bytes(dir_ / "d.pgm", pgm(4, 4, std::vector<unsigned char>(15, 9)));
  EXPECT_THROW(gr::read_pgm(dir_ / "d.pgm"), gr::IoError);
  write_bytes(dir_ / "e.ppm", "P6\n2 2\n255\n012345678");
  EXPECT_THROW(gr::read_ppm(dir_ / "e.ppm"), gr::IoError);
  EXPECT_THROW(gr::read_pgm(dir_ / "missing.pgm"), gr::IoError);
}

TEST_F(Netpbm, RoundTripOnQuantizedValues) {
  gr::RgbImage img{3, 5, std::vector<double>(45)};
  for (std::size_t i = 0; i < 45; ++i) img.planes[i] = static_cast<double>(i * 5) / 255.0;
  gr::write_ppm(dir_ / "i.ppm", img);
  EXPECT_EQ(gr::read_ppm(dir_ / "i.ppm").planes, img.planes);
}

using FieldFile = TempDir;

TEST_F(FieldFile, LayoutIsLittleEndian) {
  gr::DisplacementField f(1, 2);
  f.dh(0, 0) = 1.0;
  f.dh(0, 1) = -2.0;
  f.dw(0, 0) = 0.5;
  f.dw(0, 1) = 3.0;
  const auto b = gr::encode_field(f);
  ASSERT_EQ(b.size(), 14u + 32u);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "GEDF");
  EXPECT_EQ(b[4], 1);
  EXPECT_EQ(b[5], 0);
  EXPECT_EQ((std::vector<unsigned char>(b.begin() + 6, b.begin() + 14)),
            (std::vector<unsigned char>{1, 0, 0, 0, 2, 0, 0, 0}));
  // 1.0 = 0x3FF0000000000000, little endian.
  EXPECT_EQ((std::vector<unsigned char>(b.begin() + 14, b.begin() + 22)),
            (std::vector<unsigned char>{0, 0, 0, 0, 0, 0, 0xF0, 0x3F}));
  double last;
  std::memcpy(&last, b.data() + 38, 8);
  EXPECT_EQ(last, 3.0);
}

TEST_F(FieldFile, RoundTripAndErrors) {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> n(0.0, 10.0);
  gr::DisplacementField f(6, 3);
  for (double& v : f.dh.data) v = n(rng);
  for (double& v : f.dw.data) v = n(rng);
  gr::write_field(dir_ / "f.gedf", f);
  EXPECT_EQ(gr::read_field(dir_ / "f.gedf"), f);

  auto bytes = gr::encode_field(f);
  bytes.pop_back();
  EXPECT_THROW(gr::decode_field(bytes), gr::IoError);
  bytes = gr::encode_field(f);
  bytes[0] = 'X';
  EXPECT_THROW(gr::decode_field(bytes), gr::IoError);
  bytes = gr::encode_field(f);
  bytes[4] = 2;
  EXPECT_THROW(gr::decode_field(bytes), gr::IoError);
  EXPECT_THROW(gr::decode_field(std::vector<unsigned char>{'G', 'E'}), gr::IoError);
}

TEST_F(FieldFile, EncodingRoundTrip) {
  const auto enc = gr::build_rope_3d(gr::RopeDims{}, 2, 2, 3);
  gr::write_encoding(dir_ / "e.gepe", enc);
  EXPECT_EQ(gr::read_encoding(dir_ / "e.gepe"), enc);
  auto bytes = gr::encode_encoding(enc);
  bytes.resize(bytes.size() - 8);
  EXPECT_THROW(gr::decode_encoding(bytes), gr::IoError);
}

TEST(Manifest, ParsesAndRoundTrips) {
  const std::string text =
      "# demo\n"
      "group = g1\n"
      "image.0 = a.ppm\nmask.0 = a.pgm\ncaption.0 = first one\n"
      "image.1 = b.ppm\nmask.1 = b.pgm\n"
      "steps = 3\nseed = 12\npatch = 1,2,2\nrope_dims = 4,6,6\n"
      "dense_warp = 1,0,0,1,0.5,-0.25\ngeometry = synthetic\n";
  const auto m = gr::parse_manifest(text);
  EXPECT_EQ(m.group_id, "g1");
  ASSERT_EQ(m.frames(), 2u);
  EXPECT_EQ(m.entries[0].caption, "first one");
  EXPECT_EQ(m.settings.steps, 3u);
  EXPECT_EQ(m.settings.seed, 12u);
  EXPECT_EQ(m.settings.rope.d_h, 6u);
  EXPECT_EQ(m.settings.dense_warp.b_w, -0.25);
  EXPECT_EQ(m.settings.geometry, gr::GeometrySource::synthetic);
  EXPECT_EQ(gr::parse_manifest(gr::serialize_manifest(m)), m);
}

TEST(Manifest, Errors) {
  EXPECT_THROW(gr::parse_manifest("group = x\n"), gr::ManifestError);
  EXPECT_THROW(gr::parse_manifest("image.0 = a\n"), gr::ManifestError);
  EXPECT_THROW(gr::parse_manifest("image.0 = a\nmask.0 = b\nimage.2 = c\nmask.2 = d\n"), gr::ManifestError);
  EXPECT_THROW(gr::parse_manifest("image.0 = a\nmask.0 = b\ncolour = red\n"), gr::ManifestError);
  EXPECT_THROW(gr::parse_manifest("image.0 = a\nmask.0 = b\nsteps = three\n"), gr::ManifestError);
  EXPECT_THROW(gr::parse_manifest("image.0 = a\nmask.0 = b\npatch = 1,2\n"), gr::ManifestError);
  EXPECT_THROW(gr::parse_manifest("image.0 = a\nmask.0 = b\nbackbone = huge\n"), gr::ManifestError);
  EXPECT_THROW(gr::parse_manifest("image.0 = a\nmask.0 = b\njust a line\n"), gr::ManifestError);
}

TEST(VizPhaseMap, OriginRowIsUniform) {
  const gr::RopeDims dims;
  const auto enc = gr::build_rope_3d(dims, 1, 1, 1);
  const auto img = gr::viz_phase_map(enc, {1, 1, 1}, dims, gr::Axis::w, 0, 3);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 1; i < 9; ++i) EXPECT_EQ(img.planes[c * 9 + i], img.planes[c * 9]);
  const auto zero = gr::phase_color(gr::Complex(1.0, 0.0));
  EXPECT_EQ(img.at(0, 0, 0), zero.r);
  EXPECT_EQ(img.at(1, 0, 0), zero.g);
  EXPECT_EQ(img.at(2, 0, 0), zero.b);
}

TEST(VizPhaseMap, IdentityRectanglesShareColors) {
  const gr::RopeDims dims;
  gr::Grid2 a(6, 6), b(6, 6);
  for (std::size_t h = 0; h < 2; ++h)
    for (std::size_t w = 0; w < 3; ++w) {
      a(1 + h, 0 + w) = 1.0;
      b(3 + h, 2 + w) = 1.0;
    }
  const std::vector<gr::ObjectMask> masks{gr::ObjectMask(a, 0), gr::ObjectMask(b, 1)};
  const auto id = gr::build_identity_rope(masks, dims, 2, 6, 6);
  for (gr::Axis axis : {gr::Axis::h, gr::Axis::w}) {
    const auto img = gr::viz_phase_map(id.enc, {2, 6, 6}, dims, axis, 1);
    for (std::size_t h = 0; h < 2; ++h)
      for (std::size_t w = 0; w < 3; ++w)
        for (std::size_t c = 0; c < 3; ++c)
          EXPECT_EQ(img.at(c, 1 + h, 0 + w), img.at(c, 3 + h, 6 + 2 + w));
  }
}

TEST(VizPhaseMap, ZeroDisplacementMatchesBaselineBitwise) {
  const gr::RopeDims dims;
  const auto banks = gr::build_rope_banks(dims, 2, 4, 5);
  const auto ge = gr::build_ge_rope(gr::warp_grid({gr::Grid2(4, 5), gr::Grid2(4, 5)}), banks);
  const auto a = gr::viz_phase_map(ge.enc, {2, 4, 5}, dims, gr::Axis::h, 2, 2);
  const auto b = gr::viz_phase_map(gr::build_rope_3d(banks), {2, 4, 5}, dims, gr::Axis::h, 2, 2);
  EXPECT_EQ(a.planes, b.planes);
}

TEST(VizPhaseMap, IndexOutOfRange) {
  const gr::RopeDims dims;
  const auto enc = gr::build_rope_3d(dims, 1, 2, 2);
  EXPECT_THROW(gr::viz_phase_map(enc, {1, 2, 2}, dims, gr::Axis::t, 4), std::out_of_range);
  EXPECT_NO_THROW(gr::viz_phase_map(enc, {1, 2, 2}, dims, gr::Axis::t, 3));
}

TEST(VizWarp, DrawsArrowsOnWhite) {
  gr::SmoothedField f{gr::Grid2(2, 2), gr::Grid2(2, 2, 0.375)};
  const auto img = gr::viz_warp(f, 8);
  EXPECT_EQ(img.width, 16u);
  EXPECT_EQ(img.at(0, 4, 4), 0.0);   // cell center marker
  EXPECT_EQ(img.at(0, 4, 7), 0.85);  // arrow tip at +3 px
  EXPECT_EQ(img.at(1, 0, 0), 1.0);   // background
}

using Pipeline = TempDir;

TEST_F(Pipeline, ZeroBackboneSingleStepDecodesNoise) {
  gr::GroupManifest m;
  m.group_id = "zero";
  m.base_dir = dir_;
  m.settings.steps = 1;
  m.settings.backbone = "zero";
  for (std::size_t t = 0; t < 2; ++t) {
    gr::RgbImage img{8, 8, std::vector<double>(192, 0.25)};
    gr::write_ppm(dir_ / ("i" + std::to_string(t) + ".ppm"), img);
    gr::write_pgm(dir_ / ("m" + std::to_string(t) + ".pgm"), gr::Grid2(8, 8));
    m.entries.push_back({"i" + std::to_string(t) + ".ppm", "m" + std::to_string(t) + ".pgm", ""});
  }
  const auto cfg = gr::make_config(m.settings);
  const auto data = gr::load_group(m, cfg);
  const auto res = gr::run_pipeline(data, cfg);
  const auto z = gr::encode_latents(data.images, cfg.map);
  const auto eps = gr::gaussian_like(z, gr::derive_seed(cfg.seed, "noise"));
  EXPECT_EQ(res.images, gr::decode_latents(eps, cfg.map));
  EXPECT_EQ(res.positions.kind, gr::PositionalKind::identity);
  EXPECT_TRUE(res.finite);
}

TEST_F(Pipeline, FieldSelectsGeometryAndMismatchFails) {
  gr::GroupManifest m;
  m.group_id = "ge";
  m.base_dir = dir_;
  m.settings.steps = 2;
  m.field = "f.gedf";
  gr::write_field(dir_ / "f.gedf", gr::DisplacementField(8, 8, 4.0, 0.0));
  gr::write_ppm(dir_ / "i.ppm", gr::RgbImage{8, 8, std::vector<double>(192, 0.5)});
  gr::write_ppm(dir_ / "j.ppm", gr::RgbImage{4, 8, std::vector<double>(96, 0.5)});
  gr::write_pgm(dir_ / "m.pgm", gr::Grid2(8, 8, 1.0));
  m.entries = {{"i.ppm", "m.pgm", "hello"}};
  const auto cfg = gr::make_config(m.settings);
  const auto data = gr::load_group(m, cfg);
  EXPECT_EQ(data.prompt, "hello");
  const auto res = gr::run_pipeline(data, cfg);
  EXPECT_EQ(res.positions.kind, gr::PositionalKind::geometry);
  // 4 px over 4 px tokens is one cell down everywhere, clamped on the last row.
  EXPECT_EQ(res.positions.indices->h_at(0, 0), 1u);
  EXPECT_EQ(res.positions.indices->h_at(1, 1), 1u);

  m.entries.push_back({"j.ppm", "m.pgm", ""});
  EXPECT_THROW(gr::load_group(m, cfg), gr::ManifestError);
}

TEST(PipelineConfig, RejectsTemporalPatches) {
  gr::PipelineSettings s;
  s.patch = {2, 2, 2};
  EXPECT_THROW(gr::make_config(s), std::invalid_argument);
  s.patch = {1, 2, 1};
  EXPECT_THROW(gr::make_config(s), std::invalid_argument);
}
