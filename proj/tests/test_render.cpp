#include <doctest.h>

#include <cmath>
#include <random>

#include "bteach/error.hpp"
#include "bteach/render.hpp"
#include "oracles.hpp"

using namespace bteach;

namespace {

Image noise_image(int w, int h, std::uint64_t seed) {
  Image img(w, h);
  std::mt19937_64 rng(seed);
  for (auto& v : img.rgb) v = static_cast<std::uint8_t>(rng() % 256);
  return img;
}

SaliencyMap constant_map(int w, int h, float v) {
  return {w, h, std::vector<float>(static_cast<std::size_t>(w * h), v), "x"};
}

}  // namespace

TEST_CASE("blur window widths") {
  CHECK(blur_window_width(0.5) == 15);
  CHECK(blur_window_width(1.0) == 1);
  CHECK(blur_window_width(0.0) == 30);
  int prev = 31;
  for (int i = 0; i <= 100; ++i) {
    const int w = blur_window_width(i / 100.0);
    CHECK(w <= prev);
    CHECK(w >= 1);
    prev = w;
  }
}

TEST_CASE("blur matches the naive reference on 32x32 fixtures") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<float> u(0, 1);
  for (int trial = 0; trial < 5; ++trial) {
    const auto img = noise_image(32, 32, static_cast<std::uint64_t>(trial));
    SaliencyMap map{32, 32, std::vector<float>(1024), "x"};
    for (auto& v : map.values) v = u(rng);
    if (trial == 1) map = constant_map(32, 32, 0.0f);   // widest window everywhere
    if (trial == 2) map = constant_map(32, 32, 0.52f);  // even width 14
    CHECK(render_blur(img, map) == test::naive_blur(img, map));
  }
}

TEST_CASE("identity transforms") {
  const auto img = noise_image(17, 11, 3);
  CHECK(render_blur(img, constant_map(17, 11, 1.0f)) == img);
  SaliencyMap any{17, 11, std::vector<float>(187), "x"};
  std::mt19937_64 rng(1);
  for (auto& v : any.values) v = static_cast<float>(rng() % 1000) / 1000.0f;
  CHECK(render_jet(img, any, 0.0) == img);
}

TEST_CASE("blur of a constant image is constant") {
  Image flat(20, 20, 93);
  CHECK(render_blur(flat, constant_map(20, 20, 0.1f)) == flat);
}

TEST_CASE("jet colormap anchors") {
  auto near = [](std::array<double, 3> a, std::array<double, 3> b) {
    for (int i = 0; i < 3; ++i)
      if (std::abs(a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(i)]) > 1e-3) return false;
    return true;
  };
  CHECK(near(jet(0.0), {0, 0, 0.5}));
  CHECK(near(jet(1.0), {0.5, 0, 0}));
  CHECK(near(jet(0.5), {0.4839, 1, 0.4839}));
  CHECK(near(jet(0.25), {0, 0.5, 1}));
  CHECK(near(jet(-3), jet(0)));
  CHECK(near(jet(7), jet(1)));
}

TEST_CASE("jet overlay arithmetic") {
  Image black(1, 1, 0);
  const auto out = render_jet(black, constant_map(1, 1, 1.0f), 0.4);
  CHECK(out.at(0, 0, 0) == static_cast<std::uint8_t>(std::lround(0.4 * 0.5 * 255)));
  CHECK(out.at(0, 0, 1) == 0);
  CHECK(out.at(0, 0, 2) == 0);
  Image white(1, 1, 255);
  const auto full = render_jet(white, constant_map(1, 1, 0.0f), 1.0);
  CHECK(full.at(0, 0, 0) == 0);
  CHECK(full.at(0, 0, 2) == 128);
}

TEST_CASE("dimension mismatch") {
  CHECK_THROWS_AS(render_blur(Image(3, 3), constant_map(3, 4, 0)), Error);
  CHECK_THROWS_AS(render_jet(Image(3, 3), constant_map(4, 3, 0)), Error);
}
