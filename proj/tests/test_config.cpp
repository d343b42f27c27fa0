#include <doctest.h>

#include <fstream>

#include "bteach/config.hpp"
#include "bteach/error.hpp"
#include "bteach/seed.hpp"
#include "support.hpp"

using namespace bteach;
using nlohmann::json;
namespace fs = std::filesystem;

TEST_CASE("defaults and relative path resolution") {
  const auto dir = test::fresh_dir("config_paths");
  fs::create_directories(dir / "store");
  std::ofstream(dir / "config.json") << R"({"seed": 9, "paths": {"feature_store": "store"}})";
  const auto c = load_config(dir / "config.json");
  CHECK(c.seed == 9);
  CHECK(c.paths.feature_store == dir / "store");
  CHECK(c.paths.output_dir == dir / "out");
  CHECK(c.paths.model == dir / "out" / "model.json");
  CHECK(c.serve.data_dir == dir / "out" / "serve");
  CHECK(c.teach.k == 1000);
  CHECK(c.teach.helpful_threshold == 0.8);
  CHECK(c.teach.unhelpful_threshold == 0.2);
  CHECK(c.saliency.gp.n_masks == 1000);
  CHECK(c.saliency.gp.mean == -100.0);
  CHECK(c.trialgen.n_correct == 50);
  CHECK(c.trialgen.n_incorrect == 100);
  CHECK_NOTHROW(c.validate());
  CHECK(c.seed_for("plda") == derive_seed(9, "plda"));
  CHECK(c.seed_for("plda") != c.seed_for("teach"));
}

TEST_CASE("validation") {
  const auto dir = test::fresh_dir("config_validate");
  fs::create_directories(dir / "store");
  auto base = json{{"paths", {{"feature_store", "store"}}}};
  auto parse = [&](json patch) {
    auto j = base;
    j.merge_patch(patch);
    return parse_config(j, dir);
  };
  CHECK_THROWS_AS(parse({{"teach", {{"helpful_threshold", 1.0}}}}).validate(), Error);
  CHECK_THROWS_AS(parse({{"teach", {{"unhelpful_threshold", 0.0}}}}).validate(), Error);
  CHECK_THROWS_AS(parse({{"paths", {{"feature_store", "missing"}}}}).validate(), Error);
  CHECK_THROWS_AS(parse({{"paths", {{"predictions", "missing.csv"}}}}).validate(), Error);
  CHECK_THROWS_AS(parse({{"serve", {{"conditions", {{"generic-none-blur", 1}}}}}}).validate(), Error);
  CHECK_THROWS_AS(parse({{"saliency", {{"length_scale", -1}}}}).validate(), Error);
  CHECK_THROWS_AS(parse({{"trialgen", {{"examples", "sometimes"}}}}), Error);
  CHECK_THROWS_AS(parse({{"metrics", {{"method", "bca"}}}}), Error);
  CHECK_THROWS_AS(parse({{"teach", {{"k", "many"}}}}), Error);
  CHECK_NOTHROW(parse({{"serve", {{"conditions", {{"generic-helpful-jet", 2}, {"specific-none-none", 1}}}}}}).validate());
  try {
    parse({{"paths", {{"feature_store", "missing"}}}}).validate();
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("missing") != std::string::npos);
  }
}

TEST_CASE("to_json reparses to the same config") {
  const auto dir = test::fresh_dir("config_json");
  auto c = parse_config(json{{"seed", 4}, {"paths", {{"feature_store", "s"}}}, {"trialgen", {{"map", "jet"}}}}, dir);
  const auto again = parse_config(to_json(c), dir);
  CHECK(to_json(again) == to_json(c));
  CHECK(again.trialgen.map == MapMode::Jet);
}

TEST_CASE("unreadable config files") {
  const auto dir = test::fresh_dir("config_bad");
  CHECK_THROWS_AS(load_config(dir / "none.json"), Error);
  std::ofstream(dir / "bad.json") << "{";
  CHECK_THROWS_AS(load_config(dir / "bad.json"), Error);
}
