#include "bteach/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "bteach/error.hpp"

namespace bteach {

namespace fs = std::filesystem;

FloatImage to_float(const Image& img) {
  FloatImage out{img.width, img.height, std::vector<float>(img.rgb.size())};
  for (std::size_t i = 0; i < img.rgb.size(); ++i) out.rgb[i] = static_cast<float>(img.rgb[i]) / 255.0f;
  return out;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

// Writes rows with libpng. bit_depth 8 with 3 channels or 16 with 1 channel.
void write_rows(const fs::path& path, int width, int height, int color_type, int bit_depth,
                const std::vector<png_byte>& data, std::size_t row_bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) fail(ErrorCode::Io, "cannot write " + path.string());
  std::string message;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::Io, "libpng initialisation failed");
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y)
    rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(data.data() + static_cast<std::size_t>(y) * row_bytes);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::Io, "PNG encode failed for " + path.string() + ": " + message);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Image read_png(const fs::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) fail(ErrorCode::Io, "cannot open image " + path.string());
  std::string message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::Io, "libpng initialisation failed");
  }
  Image img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::Format, "PNG decode failed for " + path.string() + ": " + message);
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  if (png_get_rowbytes(png, info) != static_cast<std::size_t>(img.width) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::Format, "unsupported PNG layout in " + path.string());
  }
  img.rgb.resize(img.pixels() * 3);
  rows.resize(static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y)
    rows[static_cast<std::size_t>(y)] = img.rgb.data() + static_cast<std::size_t>(y) * static_cast<std::size_t>(img.width) * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const fs::path& path, const Image& img) {
  if (img.rgb.size() != img.pixels() * 3) fail(ErrorCode::InvalidArgument, "image buffer size mismatch");
  std::vector<png_byte> data(img.rgb.begin(), img.rgb.end());
  write_rows(path, img.width, img.height, PNG_COLOR_TYPE_RGB, 8, data, static_cast<std::size_t>(img.width) * 3);
}

void write_png_gray16(const fs::path& path, int width, int height, std::span<const std::uint16_t> values) {
  const auto n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (values.size() != n) fail(ErrorCode::InvalidArgument, "gray16 buffer size mismatch");
  std::vector<png_byte> data(n * 2);
  for (std::size_t i = 0; i < n; ++i) {  // PNG stores 16-bit samples big-endian
    data[2 * i] = static_cast<png_byte>(values[i] >> 8);
    data[2 * i + 1] = static_cast<png_byte>(values[i] & 0xFF);
  }
  write_rows(path, width, height, PNG_COLOR_TYPE_GRAY, 16, data, static_cast<std::size_t>(width) * 2);
}

std::vector<std::uint16_t> read_png_gray16(const fs::path& path, int& width, int& height) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) fail(ErrorCode::Io, "cannot open image " + path.string());
  std::string message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::Io, "libpng initialisation failed");
  }
  std::vector<png_byte> data;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::Format, "PNG decode failed for " + path.string() + ": " + message);
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  if (png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY || png_get_bit_depth(png, info) != 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::Format, path.string() + " is not a 16-bit grayscale PNG");
  }
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  const std::size_t row_bytes = static_cast<std::size_t>(width) * 2;
  data.resize(row_bytes * static_cast<std::size_t>(height));
  rows.resize(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) rows[static_cast<std::size_t>(y)] = data.data() + static_cast<std::size_t>(y) * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::vector<std::uint16_t> out(data.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<std::uint16_t>((data[2 * i] << 8) | data[2 * i + 1]);
  return out;
}

Image resize_bilinear(const Image& img, int width, int height) {
  if (width <= 0 || height <= 0 || img.width <= 0 || img.height <= 0) {
    fail(ErrorCode::InvalidArgument, "resize needs positive dimensions");
  }
  if (img.width == width && img.height == height) return img;
  Image out(width, height);
  const double sx = static_cast<double>(img.width) / width;
  const double sy = static_cast<double>(img.height) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double ty = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double tx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = img.at(x0, y0, c) * (1 - tx) + img.at(x1, y0, c) * tx;
        const double bottom = img.at(x0, y1, c) * (1 - tx) + img.at(x1, y1, c) * tx;
        out.at(x, y, c) = static_cast<std::uint8_t>(std::lround(top * (1 - ty) + bottom * ty));
      }
    }
  }
  return out;
}

}  // namespace bteach
