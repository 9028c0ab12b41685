// Writes the bundled synthetic group: four 32x32 frames of a textured square
// drifting over a gradient background, its masks, a displacement field, and
// two manifests (identity positions, and geometry positions from the field).
//
//   make_demo_group <out_dir>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "grouprope/io.hpp"
#include "grouprope/manifest.hpp"

namespace fs = std::filesystem;
using namespace grouprope;

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_demo_group <out_dir>\n";
    return 2;
  }
  const fs::path dir = argv[1];
  fs::create_directories(dir);

  constexpr std::size_t T = 4, S = 32, side = 10;
  const std::size_t y0[T] = {4, 8, 14, 18};
  const std::size_t x0[T] = {3, 10, 6, 18};
  const char* captions[T] = {"red block on the left", "red block near the top", "red block centered",
                             "red block at the right"};

  GroupManifest m;
  m.group_id = "demo_group";
  m.prompt = "turn the red block blue";
  m.settings.steps = 8;
  m.settings.seed = 7;
  m.settings.dense_grid = {1, 4, 4};

  for (std::size_t t = 0; t < T; ++t) {
    RgbImage img{S, S, std::vector<double>(3 * S * S)};
    Grid2 mask(S, S);
    for (std::size_t y = 0; y < S; ++y)
      for (std::size_t x = 0; x < S; ++x) {
        const bool inside = y >= y0[t] && y < y0[t] + side && x >= x0[t] && x < x0[t] + side;
        const double ry = static_cast<double>(y) / (S - 1);
        const double rx = static_cast<double>(x) / (S - 1);
        if (inside) {
          const double stripe = ((y - y0[t]) / 2 + (x - x0[t]) / 2) % 2 == 0 ? 1.0 : 0.75;
          img.at(0, y, x) = 0.9 * stripe;
          img.at(1, y, x) = 0.15;
          img.at(2, y, x) = 0.1;
          mask(y, x) = 1.0;
        } else {
          img.at(0, y, x) = 0.2 + 0.3 * rx;
          img.at(1, y, x) = 0.35 + 0.4 * ry;
          img.at(2, y, x) = 0.5 + 0.2 * std::sin(3.0 * (rx + ry) + static_cast<double>(t));
        }
      }
    char name[32];
    std::snprintf(name, sizeof name, "image_%zu.ppm", t);
    write_ppm(dir / name, img);
    m.entries.push_back({name, "", captions[t]});
    std::snprintf(name, sizeof name, "mask_%zu.pgm", t);
    write_pgm(dir / name, mask);
    m.entries.back().mask = name;
  }
  save_manifest(dir / "manifest.txt", m);

  // Smooth swirl in source pixels, peaking at 12 px near the center.
  DisplacementField field(S, S);
  for (std::size_t y = 0; y < S; ++y)
    for (std::size_t x = 0; x < S; ++x) {
      const double cy = (static_cast<double>(y) - 15.5) / 16.0;
      const double cx = (static_cast<double>(x) - 15.5) / 16.0;
      const double g = 12.0 * std::exp(-(cx * cx + cy * cy));
      field.dh(y, x) = -g * cx;
      field.dw(y, x) = g * cy + 4.0;
    }
  write_field(dir / "field.gedf", field);
  m.group_id = "demo_group_ge";
  m.field = "field.gedf";
  save_manifest(dir / "manifest_ge.txt", m);

  std::cout << "wrote demo group to " << dir.string() << '\n';
  return 0;
}
