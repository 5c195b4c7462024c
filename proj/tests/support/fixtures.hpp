#pragma once

#include "mbmfn/image.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace mbmfn::testing {

/// Deterministic RGB test image with smooth shading, hard-edged shapes,
/// gratings of several frequencies and mild texture noise.
inline ImagePlane synthetic_photo(int height, int width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImagePlane img(height, width, 3);
  const double ph[3] = {u(rng) * 6.28, u(rng) * 6.28, u(rng) * 6.28};
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double fy = static_cast<double>(y) / height, fx = static_cast<double>(x) / width;
        img.at(c, y, x) = static_cast<float>(0.45 + 0.25 * std::sin(3.0 * fx + 2.0 * fy + ph[c]) *
                                                        std::cos(2.0 * fy - fx + 0.5 * ph[c]));
      }

  struct Shape2D {
    int kind;
    double cy, cx, r, angle;
    double color[3];
  };
  std::vector<Shape2D> shapes;
  for (int i = 0; i < 14; ++i) {
    Shape2D s{static_cast<int>(u(rng) * 3), u(rng) * height, u(rng) * width, (0.05 + 0.15 * u(rng)) * height,
              u(rng) * 3.14159, {u(rng), u(rng), u(rng)}};
    shapes.push_back(s);
  }
  for (const auto& s : shapes)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double dy = y + 0.5 - s.cy, dx = x + 0.5 - s.cx;
        const double ry = std::cos(s.angle) * dy - std::sin(s.angle) * dx;
        const double rx = std::sin(s.angle) * dy + std::cos(s.angle) * dx;
        bool inside = false;
        double shade = 1.0;
        if (s.kind == 0) inside = dy * dy + dx * dx < s.r * s.r;
        if (s.kind == 1) inside = std::abs(ry) < s.r && std::abs(rx) < 0.6 * s.r;
        if (s.kind == 2) {
          inside = std::abs(ry) < s.r && std::abs(rx) < s.r;
          shade = 0.5 + 0.5 * std::sin(rx * (0.6 + 0.8 * s.r / height));
        }
        if (!inside) continue;
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(s.color[c] * (0.4 + 0.6 * shade));
      }

  std::normal_distribution<double> noise(0.0, 0.015);
  for (auto& v : img.data) v = static_cast<float>(std::clamp(v + noise(rng), 0.0, 1.0));
  // Snap to 8-bit so the image round-trips through PNG exactly.
  for (auto& v : img.data) v = static_cast<float>(quantize(v)) / 255.0f;
  return img;
}

namespace detail_png {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<unsigned char>(v >> s));
}

inline void put_chunk(std::vector<unsigned char>& out, const char* type, const std::vector<unsigned char>& body) {
  put_u32(out, static_cast<std::uint32_t>(body.size()));
  std::vector<unsigned char> typed(type, type + 4);
  typed.insert(typed.end(), body.begin(), body.end());
  out.insert(out.end(), typed.begin(), typed.end());
  put_u32(out, static_cast<std::uint32_t>(crc32(0, typed.data(), static_cast<uInt>(typed.size()))));
}

}  // namespace detail_png

/// Writes a PNG from raw scanline bytes (no filtering) without libpng.
/// color_type 2 = RGB, 0 = gray.
inline void write_raw_png(const std::filesystem::path& path, int width, int height, int bit_depth, int color_type,
                          const std::vector<unsigned char>& pixels) {
  const int channels = color_type == 2 ? 3 : 1;
  const std::size_t row = static_cast<std::size_t>(width) * channels * (bit_depth / 8);
  std::vector<unsigned char> raw;
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);
    raw.insert(raw.end(), pixels.begin() + static_cast<std::ptrdiff_t>(y * row),
               pixels.begin() + static_cast<std::ptrdiff_t>((y + 1) * row));
  }
  uLongf packed_size = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> packed(packed_size);
  compress(packed.data(), &packed_size, raw.data(), static_cast<uLong>(raw.size()));
  packed.resize(packed_size);

  std::vector<unsigned char> file = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<unsigned char> ihdr;
  detail_png::put_u32(ihdr, static_cast<std::uint32_t>(width));
  detail_png::put_u32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.insert(ihdr.end(), {static_cast<unsigned char>(bit_depth), static_cast<unsigned char>(color_type), 0, 0, 0});
  detail_png::put_chunk(file, "IHDR", ihdr);
  detail_png::put_chunk(file, "IDAT", packed);
  detail_png::put_chunk(file, "IEND", {});
  std::ofstream(path, std::ios::binary).write(reinterpret_cast<const char*>(file.data()),
                                              static_cast<std::streamsize>(file.size()));
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("mbmfn_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace mbmfn::testing
