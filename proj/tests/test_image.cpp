#include <doctest.h>

#include <fstream>
#include <random>

#include "bteach/error.hpp"
#include "bteach/image.hpp"
#include "support.hpp"

using namespace bteach;

TEST_CASE("RGB PNG round trip is lossless") {
  const auto dir = test::fresh_dir("image_rt");
  Image img(7, 5);
  std::mt19937 rng(2);
  for (auto& v : img.rgb) v = static_cast<std::uint8_t>(rng());
  write_png(dir / "a.png", img);
  CHECK(read_png(dir / "a.png") == img);
}

TEST_CASE("16-bit gray round trip") {
  const auto dir = test::fresh_dir("image_gray");
  std::vector<std::uint16_t> v{0, 1, 65535, 300, 40000, 7};
  write_png_gray16(dir / "g.png", 3, 2, v);
  int w = 0, h = 0;
  CHECK(read_png_gray16(dir / "g.png", w, h) == v);
  CHECK(w == 3);
  CHECK(h == 2);
  // Gray input decodes to equal RGB channels.
  const auto rgb = read_png(dir / "g.png");
  CHECK(rgb.at(2, 0, 0) == 255);
  CHECK(rgb.at(2, 0, 0) == rgb.at(2, 0, 2));
}

TEST_CASE("corrupt and missing files raise errors") {
  const auto dir = test::fresh_dir("image_bad");
  CHECK_THROWS_AS(read_png(dir / "missing.png"), Error);
  std::ofstream(dir / "bad.png") << "definitely not a png";
  CHECK_THROWS_AS(read_png(dir / "bad.png"), Error);
}

TEST_CASE("bilinear resize") {
  Image flat(4, 4, 77);
  const auto up = resize_bilinear(flat, 9, 3);
  CHECK(up.width == 9);
  CHECK(up.height == 3);
  for (auto v : up.rgb) CHECK(v == 77);
  Image ramp(2, 1);
  ramp.at(0, 0, 0) = 0;
  ramp.at(1, 0, 0) = 200;
  const auto r = resize_bilinear(ramp, 4, 1);
  CHECK(r.at(0, 0, 0) == 0);
  CHECK(r.at(1, 0, 0) == 50);
  CHECK(r.at(2, 0, 0) == 150);
  CHECK(r.at(3, 0, 0) == 200);
  CHECK(resize_bilinear(ramp, 2, 1) == ramp);
}

TEST_CASE("float conversion") {
  Image img(1, 1);
  img.rgb = {0, 255, 51};
  const auto f = to_float(img);
  CHECK(f.rgb[0] == 0.0f);
  CHECK(f.rgb[1] == 1.0f);
  CHECK(f.rgb[2] == doctest::Approx(0.2));
}
