#include "bteach/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "bteach/error.hpp"

namespace bteach {

int blur_window_width(double z) {
  return static_cast<int>(std::ceil(30.0 / (1.0 + std::exp(20.0 * z - 10.0))));
}

namespace {

void check_dims(const Image& image, const SaliencyMap& map) {
  if (image.width != map.width || image.height != map.height) {
    fail(ErrorCode::InvalidArgument, "image " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                                         " does not match saliency map " + std::to_string(map.width) + "x" +
                                         std::to_string(map.height));
  }
}

struct Anchor {
  double x;
  double v;
};

double piecewise(const std::vector<Anchor>& pts, double z) {
  if (z <= pts.front().x) return pts.front().v;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (z <= pts[i].x) {
      const double t = (z - pts[i - 1].x) / (pts[i].x - pts[i - 1].x);
      return pts[i - 1].v + t * (pts[i].v - pts[i - 1].v);
    }
  }
  return pts.back().v;
}

}  // namespace

Image render_blur(const Image& image, const SaliencyMap& map) {
  check_dims(image, map);
  const int w = image.width;
  const int h = image.height;
  // Integral image per channel, (w + 1) x (h + 1). Integer sums keep the
  // result identical to direct window summation.
  const std::size_t stride = static_cast<std::size_t>(w) + 1;
  std::vector<std::uint64_t> sat(stride * (static_cast<std::size_t>(h) + 1) * 3, 0);
  auto idx = [&](int x, int y, int c) {
    return (static_cast<std::size_t>(y) * stride + static_cast<std::size_t>(x)) * 3 + static_cast<std::size_t>(c);
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        sat[idx(x + 1, y + 1, c)] =
            image.at(x, y, c) + sat[idx(x, y + 1, c)] + sat[idx(x + 1, y, c)] - sat[idx(x, y, c)];

  Image out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int win = blur_window_width(map.at(x, y));
      if (win <= 1) {
        for (int c = 0; c < 3; ++c) out.at(x, y, c) = image.at(x, y, c);
        continue;
      }
      const int x0 = std::max(0, x - win / 2);
      const int x1 = std::min(w - 1, x + (win - 1) / 2);
      const int y0 = std::max(0, y - win / 2);
      const int y1 = std::min(h - 1, y + (win - 1) / 2);
      const auto count = static_cast<std::uint64_t>(x1 - x0 + 1) * static_cast<std::uint64_t>(y1 - y0 + 1);
      for (int c = 0; c < 3; ++c) {
        const std::uint64_t sum =
            sat[idx(x1 + 1, y1 + 1, c)] + sat[idx(x0, y0, c)] - sat[idx(x0, y1 + 1, c)] - sat[idx(x1 + 1, y0, c)];
        // Round half up in integer arithmetic.
        out.at(x, y, c) = static_cast<std::uint8_t>((2 * sum + count) / (2 * count));
      }
    }
  }
  return out;
}

std::array<double, 3> jet(double z) {
  static const std::vector<Anchor> red{{0.0, 0.0}, {0.35, 0.0}, {0.66, 1.0}, {0.89, 1.0}, {1.0, 0.5}};
  static const std::vector<Anchor> green{{0.0, 0.0}, {0.125, 0.0}, {0.375, 1.0}, {0.64, 1.0}, {0.91, 0.0}, {1.0, 0.0}};
  static const std::vector<Anchor> blue{{0.0, 0.5}, {0.11, 1.0}, {0.34, 1.0}, {0.65, 0.0}, {1.0, 0.0}};
  z = std::clamp(z, 0.0, 1.0);
  return {piecewise(red, z), piecewise(green, z), piecewise(blue, z)};
}

Image render_jet(const Image& image, const SaliencyMap& map, double alpha) {
  check_dims(image, map);
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail(ErrorCode::InvalidArgument, "alpha must be in [0, 1]");
  Image out(image.width, image.height);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const auto color = jet(map.at(x, y));
      for (int c = 0; c < 3; ++c) {
        const double v = (1.0 - alpha) * image.at(x, y, c) + alpha * 255.0 * color[static_cast<std::size_t>(c)];
        out.at(x, y, c) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
      }
    }
  }
  return out;
}

}  // namespace bteach
