#pragma once

// Zero-dependency binary formats: PGM (P5) / PPM (P6) images, the GEDF
// displacement-field file and the GEPE positional-encoding dump. All
// multi-byte values are little-endian; reals are IEEE float64.
//
//   GEDF: "GEDF" | u16 version=1 | u32 H | u32 W | H*W f64 dh | H*W f64 dw
//   GEPE: "GEPE" | u16 version=1 | u32 rows | u32 pairs | rows*pairs (f64 re, f64 im)

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "grouprope/ge_rope.hpp"
#include "grouprope/grid.hpp"
#include "grouprope/identity_rope.hpp"
#include "grouprope/rope_core.hpp"

namespace grouprope {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

class ByteWriter {
 public:
  void raw(const char* s, std::size_t n) { bytes_.insert(bytes_.end(), s, s + n); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  std::vector<unsigned char>& bytes() { return bytes_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
  }
  std::vector<unsigned char> bytes_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<unsigned char>& bytes, std::string what)
      : bytes_(bytes), what_(std::move(what)) {}

  void expect_magic(const char* magic) {
    need(4);
    if (std::memcmp(bytes_.data() + pos_, magic, 4) != 0) {
      throw IoError(what_ + ": bad magic, expected " + magic);
    }
    pos_ += 4;
  }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw IoError(what_ + ": truncated payload");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  const std::vector<unsigned char>& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

struct NetpbmHeader {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t offset = 0;  // first payload byte
};

// Parses "P5"/"P6" headers, skipping '#' comments.
inline NetpbmHeader parse_netpbm(const std::vector<unsigned char>& bytes, const char* magic,
                                 const std::string& what) {
  if (bytes.size() < 2 || bytes[0] != magic[0] || bytes[1] != magic[1]) {
    throw IoError(what + ": not a binary " + magic + " file");
  }
  std::size_t pos = 2;
  auto next_number = [&]() -> std::size_t {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) {
      throw IoError(what + ": malformed header");
    }
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      if (v > (1u << 30)) throw IoError(what + ": header value too large");
      ++pos;
    }
    return v;
  };
  NetpbmHeader h;
  h.width = next_number();
  h.height = next_number();
  const std::size_t maxval = next_number();
  if (h.width == 0 || h.height == 0) throw IoError(what + ": zero image dimension");
  if (maxval != 255) throw IoError(what + ": only maxval 255 is supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw IoError(what + ": malformed header");
  h.offset = pos + 1;
  return h;
}

}  // namespace detail

/// Grayscale P5 image as values in [0, 1].
inline Grid2 read_pgm(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  const auto hdr = detail::parse_netpbm(bytes, "P5", path.string());
  if (bytes.size() - hdr.offset < hdr.width * hdr.height) {
    throw IoError(path.string() + ": truncated payload");
  }
  Grid2 g(hdr.height, hdr.width);
  for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = bytes[hdr.offset + i] / 255.0;
  return g;
}

inline unsigned char quantize(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline void write_pgm(const std::filesystem::path& path, const Grid2& g) {
  const std::string header = "P5\n" + std::to_string(g.cols) + " " + std::to_string(g.rows) + "\n255\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  for (double v : g.data) bytes.push_back(quantize(v));
  detail::write_file(path, bytes);
}

/// RGB P6 image as a 3 x H x W planar buffer (values in [0, 1]).
struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> planes;  // [c][y][x]

  double& at(std::size_t c, std::size_t y, std::size_t x) { return planes[(c * height + y) * width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return planes[(c * height + y) * width + x];
  }
};

inline RgbImage read_ppm(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  const auto hdr = detail::parse_netpbm(bytes, "P6", path.string());
  if (bytes.size() - hdr.offset < 3 * hdr.width * hdr.height) {
    throw IoError(path.string() + ": truncated payload");
  }
  RgbImage img{hdr.height, hdr.width, std::vector<double>(3 * hdr.width * hdr.height)};
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        img.at(c, y, x) = bytes[hdr.offset + (y * img.width + x) * 3 + c] / 255.0;
  return img;
}

inline void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
  const std::string header =
      "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  bytes.reserve(bytes.size() + 3 * img.width * img.height);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) bytes.push_back(quantize(img.at(c, y, x)));
  detail::write_file(path, bytes);
}

/// Frame `t` of a T x 3 x H x W tensor as an image.
inline RgbImage frame_image(const Tensor4& images, std::size_t t) {
  RgbImage img{images.h, images.w, std::vector<double>(3 * images.h * images.w)};
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < images.h; ++y)
      for (std::size_t x = 0; x < images.w; ++x) img.at(c, y, x) = images(t, c, y, x);
  return img;
}

/// Area-average downsampling by an integer factor.
inline Grid2 downsample_area(const Grid2& g, std::size_t factor) {
  if (factor == 0) throw std::invalid_argument("downsample_area: factor must be >= 1");
  if (g.rows % factor != 0 || g.cols % factor != 0) {
    throw std::invalid_argument("downsample_area: " + std::to_string(g.rows) + "x" +
                                std::to_string(g.cols) + " not divisible by " +
                                std::to_string(factor));
  }
  if (factor == 1) return g;
  Grid2 out(g.rows / factor, g.cols / factor);
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t r = 0; r < out.rows; ++r)
    for (std::size_t c = 0; c < out.cols; ++c) {
      double acc = 0.0;
      for (std::size_t dy = 0; dy < factor; ++dy)
        for (std::size_t dx = 0; dx < factor; ++dx) acc += g(r * factor + dy, c * factor + dx);
      out(r, c) = acc * inv;
    }
  return out;
}

/// Loads a P5 mask, optionally area-averaged down to token resolution. Values
/// stay continuous; thresholding happens in extract_rect.
inline ObjectMask load_mask(const std::filesystem::path& path, std::size_t downsample = 1,
                            std::size_t image_index = 0) {
  return ObjectMask(downsample_area(read_pgm(path), downsample), image_index);
}

inline std::vector<unsigned char> encode_field(const DisplacementField& field) {
  if (!field.dh.same_shape(field.dw)) {
    throw std::invalid_argument("encode_field: dh and dw shapes differ");
  }
  detail::ByteWriter w;
  w.raw("GEDF", 4);
  w.u16(1);
  w.u32(static_cast<std::uint32_t>(field.rows()));
  w.u32(static_cast<std::uint32_t>(field.cols()));
  for (double v : field.dh.data) w.f64(v);
  for (double v : field.dw.data) w.f64(v);
  return std::move(w.bytes());
}

inline DisplacementField decode_field(const std::vector<unsigned char>& bytes,
                                      const std::string& what = "GEDF") {
  detail::ByteReader r(bytes, what);
  r.expect_magic("GEDF");
  const std::uint16_t version = r.u16();
  if (version != 1) throw IoError(what + ": unsupported version " + std::to_string(version));
  const std::size_t H = r.u32();
  const std::size_t W = r.u32();
  if (r.remaining() != 16 * H * W) {
    throw IoError(what + ": payload is " + std::to_string(r.remaining()) + " bytes, expected " +
                  std::to_string(16 * H * W));
  }
  DisplacementField f(H, W);
  for (double& v : f.dh.data) v = r.f64();
  for (double& v : f.dw.data) v = r.f64();
  return f;
}

inline void write_field(const std::filesystem::path& path, const DisplacementField& field) {
  detail::write_file(path, encode_field(field));
}

inline DisplacementField read_field(const std::filesystem::path& path) {
  return decode_field(detail::read_file(path), path.string());
}

inline std::vector<unsigned char> encode_encoding(const PositionalEncoding& enc) {
  detail::ByteWriter w;
  w.raw("GEPE", 4);
  w.u16(1);
  w.u32(static_cast<std::uint32_t>(enc.rows));
  w.u32(static_cast<std::uint32_t>(enc.pairs));
  for (const Complex& c : enc.phases) {
    w.f64(c.real());
    w.f64(c.imag());
  }
  return std::move(w.bytes());
}

inline PositionalEncoding decode_encoding(const std::vector<unsigned char>& bytes,
                                          const std::string& what = "GEPE") {
  detail::ByteReader r(bytes, what);
  r.expect_magic("GEPE");
  const std::uint16_t version = r.u16();
  if (version != 1) throw IoError(what + ": unsupported version " + std::to_string(version));
  const std::size_t rows = r.u32();
  const std::size_t pairs = r.u32();
  if (r.remaining() != 16 * rows * pairs) throw IoError(what + ": payload length mismatch");
  PositionalEncoding enc(rows, pairs);
  for (Complex& c : enc.phases) {
    const double re = r.f64();
    c = Complex(re, r.f64());
  }
  return enc;
}

inline void write_encoding(const std::filesystem::path& path, const PositionalEncoding& enc) {
  detail::write_file(path, encode_encoding(enc));
}

inline PositionalEncoding read_encoding(const std::filesystem::path& path) {
  return decode_encoding(detail::read_file(path), path.string());
}

}  // namespace grouprope
