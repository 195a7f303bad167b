#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace cxrbench {

// Interleaved 8-bit raster, 1 (gray) or 3 (RGB) channels.
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(int x, int y, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool empty() const { return pixels.empty(); }
};

// Decodes PNG to 8-bit gray or RGB (alpha dropped, palettes expanded).
// Failure raises DataError.
Raster read_png(const std::filesystem::path& path);
Raster decode_png(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_png(const Raster& raster);
void write_png(const std::filesystem::path& path, const Raster& raster);

// Channel-planar float image (C, H, W).
struct Planar {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  float& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

// Bilinear resample with half-pixel centers, no aspect preservation.
// Identity when the size already matches.
Planar resize_bilinear(const Planar& src, int out_height, int out_width);

}  // namespace cxrbench
