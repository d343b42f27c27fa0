#include <doctest.h>

#include <cmath>
#include <fstream>
#include <functional>
#include <limits>

#include "bteach/error.hpp"
#include "bteach/featstore.hpp"
#include "support.hpp"

using namespace bteach;
namespace fs = std::filesystem;

namespace {

FeatureItem item(std::string id, std::string cat, std::vector<float> v, Split split = Split::Train) {
  FeatureItem it;
  it.id = std::move(id);
  it.category = std::move(cat);
  it.vector = std::move(v);
  it.split = split;
  return it;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode{};
}

}  // namespace

TEST_CASE("store indexes categories in first-appearance order") {
  FeatureStore s(2, {item("b1", "bird", {1, 2}), item("c1", "cat", {3, 4}), item("b2", "bird", {5, 6}, Split::Test)});
  CHECK(s.size() == 3);
  CHECK(s.categories() == std::vector<std::string>{"bird", "cat"});
  CHECK(s.category_indices("bird") == std::vector<std::size_t>{0, 2});
  CHECK(s.index_of("c1") == 1);
  CHECK_FALSE(s.find("nope").has_value());
  CHECK(category_view(s, "bird").size() == 2);
  CHECK_THROWS_AS(category_view(s, "dog"), Error);
}

TEST_CASE("store rejects invalid items and names the offender") {
  auto message = [](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message([] { FeatureStore(2, {item("a", "x", {1, 2}), item("a", "x", {1, 2})}); }).find("'a'") !=
        std::string::npos);
  CHECK(message([] { FeatureStore(2, {item("a", "x", {1, 2}), item("bad", "x", {1})}); }).find("'bad'") !=
        std::string::npos);
  CHECK(code_of([] { FeatureStore(1, {item("nan", "x", {std::numeric_limits<float>::quiet_NaN()})}); }) ==
        ErrorCode::Numeric);
  CHECK(code_of([] { FeatureStore(1, {item("inf", "x", {std::numeric_limits<float>::infinity()})}); }) ==
        ErrorCode::Numeric);
}

TEST_CASE("binary store round trip is exact") {
  const auto dir = test::fresh_dir("featstore_rt");
  std::vector<FeatureItem> items{item("a", "x", {0.1f, -2.5f, 1e-20f}), item("b", "y", {3, 4, 5}, Split::Test)};
  items[0].image_path = "imgs/a.png";
  FeatureStore s(3, items);
  write_feature_store(s, dir / "store");
  const auto back = load_feature_store(dir / "store");
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back.item(i).id == s.item(i).id);
    CHECK(back.item(i).category == s.item(i).category);
    CHECK(back.item(i).vector == s.item(i).vector);
    CHECK(back.item(i).split == s.item(i).split);
    CHECK(back.item(i).image_path == s.item(i).image_path);
  }
}

TEST_CASE("truncated payload and missing index are reported") {
  const auto dir = test::fresh_dir("featstore_bad");
  FeatureStore s(2, {item("a", "x", {1, 2}), item("b", "x", {3, 4})});
  write_feature_store(s, dir / "store");
  fs::resize_file(dir / "store" / "features.f32", 12);
  try {
    load_feature_store(dir / "store");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("payload/index mismatch") != std::string::npos);
  }
  fs::remove(dir / "store" / "index.json");
  try {
    load_feature_store(dir / "store");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("missing index") != std::string::npos);
  }
  CHECK(code_of([&] { open_feature_store(dir / "nowhere"); }) == ErrorCode::Io);
}

TEST_CASE("CSV import") {
  const auto dir = test::fresh_dir("featstore_csv");
  {
    std::ofstream out(dir / "f.csv");
    out << "id,category,split,image_path,f0,f1\n"
        << "a,cat,train,a.png,1.5,2\n"
        << "b,dog,test,b.png,-1,0.25\n";
  }
  const auto s = open_feature_store(dir / "f.csv");
  REQUIRE(s.size() == 2);
  CHECK(s.dim() == 2);
  CHECK(s.item(1).split == Split::Test);
  CHECK(s.item(1).vector[1] == doctest::Approx(0.25));
  CHECK(*s.item(0).image_path == "a.png");

  {
    std::ofstream out(dir / "g.csv");
    out << "id,category,split,f0\n"
        << "a,cat,train,abc\n";
  }
  CHECK(code_of([&] { open_feature_store(dir / "g.csv"); }) == ErrorCode::Format);
}
