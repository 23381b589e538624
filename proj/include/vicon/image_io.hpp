#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace vicon {

// Interleaved image with values nominally in [0, 1]. Row 0 is the top row.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 3;
  std::vector<double> data;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::size_t c, double fill = 0.0)
      : width(w), height(h), channels(c), data(w * h * c, fill) {}

  double& at(std::size_t x, std::size_t y, std::size_t c) { return data[(y * width + x) * channels + c]; }
  double at(std::size_t x, std::size_t y, std::size_t c) const { return data[(y * width + x) * channels + c]; }
  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

// Single- or three-channel 32-bit float map (PFM). Row 0 is the top row in
// memory; files store rows bottom-up as the format requires.
struct FloatMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<float> data;
};

/// PNG (8-bit gray/RGB/RGBA) or binary PPM/PGM with maxval <= 255; values mapped by v/255.
Image read_image(const std::filesystem::path& path);
/// Format chosen from the extension (.png, .ppm, .pgm). Values are clamped to [0,1] and rounded.
void write_image(const Image& image, const std::filesystem::path& path);

std::uint8_t to_byte(double v) noexcept;

FloatMap read_pfm(const std::filesystem::path& path);
void write_pfm(const FloatMap& map, const std::filesystem::path& path, bool little_endian = true);

}  // namespace vicon
