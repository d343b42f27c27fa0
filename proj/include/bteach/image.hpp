#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace bteach {

// 8-bit interleaved RGB, row-major. This is the display-side representation:
// images are loaded from and rendered to 8-bit PNG.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // width * height * 3

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), rgb(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3, fill) {}

  std::size_t pixels() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
  std::uint8_t& at(int x, int y, int c) {
    return rgb[(static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3 +
               static_cast<std::size_t>(c)];
  }
  std::uint8_t at(int x, int y, int c) const {
    return rgb[(static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3 +
               static_cast<std::size_t>(c)];
  }
  bool operator==(const Image&) const = default;
};

// Classifier-side representation: interleaved RGB float32 in [0, 1].
struct FloatImage {
  int width = 0;
  int height = 0;
  std::vector<float> rgb;

  std::size_t pixels() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
};

FloatImage to_float(const Image& img);

// Decodes any 8/16-bit gray/RGB(A) PNG to 8-bit RGB (alpha dropped).
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img);

// Single-channel 16-bit grayscale PNG; values are row-major.
void write_png_gray16(const std::filesystem::path& path, int width, int height,
                      std::span<const std::uint16_t> values);
std::vector<std::uint16_t> read_png_gray16(const std::filesystem::path& path, int& width, int& height);

// Bilinear resampling with pixel-centre alignment.
Image resize_bilinear(const Image& img, int width, int height);

}  // namespace bteach
