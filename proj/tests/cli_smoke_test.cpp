#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>
#include <json.hpp>

#include "grouprope/io.hpp"

namespace fs = std::filesystem;

namespace {

int sh(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const std::string cli = GROUPROPE_CLI;
const fs::path manifest = GROUPROPE_DEMO_MANIFEST;
const fs::path manifest_ge = manifest.parent_path() / "manifest_ge.txt";

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("grouprope_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

}  // namespace

TEST_F(Cli, SeedEnvironmentOverridesManifest) {
  ASSERT_EQ(sh("env -u GROUPROPE_SEED " + cli + " run " + manifest.string() + " --out " + (dir_ / "a").string() +
               " > /dev/null"), 0);
  ASSERT_EQ(sh("GROUPROPE_SEED=7 " + cli + " run " + manifest.string() + " --out " + (dir_ / "b").string() +
               " > /dev/null"), 0);
  ASSERT_EQ(sh("GROUPROPE_SEED=8 " + cli + " run " + manifest.string() + " --out " + (dir_ / "c").string() +
               " > /dev/null"), 0);
  // The demo manifest pins seed 7.
  EXPECT_EQ(slurp(dir_ / "a" / "frame_00.ppm"), slurp(dir_ / "b" / "frame_00.ppm"));
  EXPECT_NE(slurp(dir_ / "a" / "frame_00.ppm"), slurp(dir_ / "c" / "frame_00.ppm"));
  const auto report = nlohmann::json::parse(slurp(dir_ / "c" / "report.json"));
  EXPECT_EQ(report["seed"], 8);
  EXPECT_EQ(report["positional"], "identity");
  EXPECT_EQ(sh("GROUPROPE_SEED=abc " + cli + " run " + manifest.string() + " --out " + (dir_ / "d").string() +
               " > /dev/null 2>&1"), 1);
}

TEST_F(Cli, GeometryManifestUsesField) {
  ASSERT_EQ(sh(cli + " run " + manifest_ge.string() + " --out " + dir_.string() + " > /dev/null"), 0);
  const auto report = nlohmann::json::parse(slurp(dir_ / "report.json"));
  EXPECT_EQ(report["positional"], "geometry");
  EXPECT_TRUE(report["finite"].get<bool>());
  EXPECT_EQ(report["residuals"]["encode_decode_max_abs"], 0.0);
}

TEST_F(Cli, RopeSubcommands) {
  const fs::path id = dir_ / "id.gepe", ge = dir_ / "ge.gepe";
  ASSERT_EQ(sh(cli + " rope-id " + manifest.string() + " --out " + id.string() + " > " + (dir_ / "id.json").string()), 0);
  const auto j = nlohmann::json::parse(slurp(dir_ / "id.json"));
  EXPECT_EQ(j["rects"].size(), 4u);
  EXPECT_EQ(j["rects"][0]["x1"], 1);
  EXPECT_EQ(grouprope::read_encoding(id).rows, 256u);

  ASSERT_EQ(sh(cli + " rope-ge " + manifest_ge.string() + " --out " + ge.string() + " > /dev/null"), 0);
  EXPECT_EQ(grouprope::read_encoding(ge).pairs, 16u);
  EXPECT_EQ(sh(cli + " rope-ge " + manifest.string() + " > /dev/null 2>&1"), 1);
}

TEST_F(Cli, VizWritesImages) {
  const fs::path phase = dir_ / "phase.ppm", warp = dir_ / "warp.ppm";
  ASSERT_EQ(sh(cli + " viz --kind phase " + manifest.string() + " --axis h --freq 1 --out " + phase.string() +
               " > /dev/null"), 0);
  const auto img = grouprope::read_ppm(phase);
  EXPECT_EQ(img.width, 4u * 8u * 4u);
  EXPECT_EQ(img.height, 8u * 4u);
  ASSERT_EQ(sh(cli + " viz --kind warp " + manifest_ge.string() + " --out " + warp.string() + " > /dev/null"), 0);
  EXPECT_EQ(grouprope::read_ppm(warp).width, 64u);
  EXPECT_EQ(sh(cli + " viz --kind phase " + manifest.string() + " --axis t --freq 9 --out " + phase.string() +
               " > /dev/null 2>&1"), 1);
  EXPECT_EQ(sh(cli + " viz --kind warp " + manifest.string() + " --out " + warp.string() + " > /dev/null 2>&1"), 1);
}

TEST_F(Cli, CheckFilterAndErrors) {
  EXPECT_EQ(sh(cli + " check --filter ge_rope > " + (dir_ / "out.txt").string()), 0);
  const std::string out = slurp(dir_ / "out.txt");
  EXPECT_NE(out.find("PASS ge_rope.zero_displacement"), std::string::npos);
  EXPECT_EQ(out.find("rope_core."), std::string::npos);
  EXPECT_EQ(sh(cli + " check --filter no_such_property > /dev/null 2>&1"), 2);
  EXPECT_NE(sh(cli + " run " + (dir_ / "missing.txt").string() + " > /dev/null 2>&1"), 0);
  EXPECT_NE(sh(cli + " > /dev/null 2>&1"), 0);
}
