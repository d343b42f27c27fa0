#include <doctest.h>

#include <fstream>
#include <sstream>

#include "bteach/error.hpp"
#include "bteach/pipeline.hpp"
#include "bteach/synth.hpp"
#include "support.hpp"

using namespace bteach;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small but complete project: 100 categories, 16 px images, 30 masks.
RunConfig small_project(const std::string& name) {
  const auto dir = test::fresh_dir(name);
  SynthOptions o;
  o.image_size = 16;
  write_synthetic_fixture(make_synthetic_fixture(o), dir, 5);
  std::ifstream in(dir / "config.json");
  auto j = json::parse(in);
  j.merge_patch(json{{"teach", {{"k", 100}}},
                     {"trialgen", {{"n_correct", 10}, {"n_incorrect", 20}}},
                     {"saliency", {{"width", 16}, {"height", 16}, {"length_scale", 1.6}, {"n_masks", 30}}}});
  return parse_config(j, dir);
}

}  // namespace

TEST_CASE("fit writes a deterministic model") {
  auto c = small_project("pipe_fit");
  const auto s = run_fit(c);
  CHECK(fs::exists(c.paths.model));
  CHECK(s["n_classes"] == 100);
  CHECK(s["psi"].size() == s["q"].get<std::size_t>());
  const auto first = slurp(c.paths.model);
  run_fit(c);
  CHECK(slurp(c.paths.model) == first);

  c.paths.feature_store = c.base_dir / "nowhere";
  try {
    run_fit(c);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("nowhere") != std::string::npos);
  }
}

TEST_CASE("gen-trials renders the asset sets") {
  auto c = small_project("pipe_gen");
  CHECK_THROWS_AS(run_gen_trials(c), Error);  // no model yet
  run_fit(c);

  c.trialgen.examples = ExamplesMode::Helpful;
  c.trialgen.map = MapMode::Blur;
  const auto s = run_gen_trials(c);
  CHECK(s["n_trials"] == 30);
  CHECK(s["violations"].empty());
  CHECK(s["assets_per_trial"] == 10);
  const auto tset = load_trialset(trialset_path(c, ExamplesMode::Helpful, MapMode::Blur));
  for (const auto& t : tset.trials) {
    CHECK(*t.f_L > 0.8);
    REQUIRE(t.assets.count() == 10);
    CHECK(fs::exists(c.paths.output_dir / t.assets.target));
    CHECK(fs::exists(c.paths.output_dir / *t.assets.target_map));
    for (const auto& a : t.assets.example_maps) CHECK(fs::exists(c.paths.output_dir / a));
    const auto img = read_png(c.paths.output_dir / t.assets.examples[3]);
    CHECK(img.width == 16);
  }
  // Raw maps are stored for the target under y* and for examples under their own category.
  const auto& t0 = tset.trials[0];
  CHECK(fs::exists(c.paths.output_dir / "maps" / (t0.target + "__" + t0.y_star + ".f32")));
  CHECK(fs::exists(c.paths.output_dir / "maps" / (t0.examples->pair_alt.item_a + "__" + t0.y_alt + ".f32")));

  c.trialgen.examples = ExamplesMode::None;
  c.trialgen.map = MapMode::None;
  CHECK(run_gen_trials(c)["assets_per_trial"] == 1);

  c.trialgen.examples = ExamplesMode::Random;
  c.trialgen.map = MapMode::Jet;
  const auto r = run_gen_trials(c);
  CHECK(r["f_L_histogram"] == json::array({6, 6, 6, 6, 6}));
  CHECK(r["violations"].empty());
}

TEST_CASE("saliency and select commands") {
  auto c = small_project("pipe_one_off");
  run_fit(c);
  const auto img = c.base_dir / "images" / "c003_i00.png";
  const auto s = run_saliency(c, img, "c003", c.paths.output_dir / "one" / "map");
  CHECK(fs::exists(c.paths.output_dir / "one" / "map.png"));
  CHECK(fs::exists(c.paths.output_dir / "one" / "map_blur.png"));
  CHECK(fs::exists(c.paths.output_dir / "one" / "map_jet.png"));
  CHECK(s["min"].get<double>() >= 0.0);
  CHECK(s["max"].get<double>() <= 1.0);

  SelectRequest req{"c003_i00", "c003", "c096", "helpful", 0, c.paths.output_dir / "scores.json"};
  const auto sel = run_select(c, req);
  CHECK(sel["f_L"].get<double>() > 0.8);
  CHECK(sel["posterior"].get<double>() > 0.0);
  std::ifstream in(c.paths.output_dir / "scores.json");
  const auto scores = json::parse(in);
  CHECK(scores["f_L"].size() == 100);
  req.policy = "sideways";
  CHECK_THROWS_AS(run_select(c, req), Error);
}

TEST_CASE("metrics command applies the exclusion filter") {
  auto c = small_project("pipe_metrics");
  run_fit(c);
  run_gen_trials(c);
  const auto path = trialset_path(c, c.trialgen.examples, c.trialgen.map);
  const auto tset = load_trialset(path);
  {
    std::ofstream out(c.paths.output_dir / "responses.csv");
    out << kResponsesHeader << '\n';
    for (std::size_t i = 0; i < tset.trials.size(); ++i) {
      append_response_csv(out, {"careful", i, tset.trials[i].y_star, 2500});
      append_response_csv(out, {"rushed", i, tset.trials[i].y_alt, 200});
    }
  }
  const auto m = run_metrics(c, path, c.paths.output_dir / "responses.csv");
  CHECK(m["excluded"] == json::array({"rushed"}));
  CHECK(m["report"]["fidelity"] == 1.0);
  CHECK(m["profiles"]["belief_projector"]["sensitivity"] == 1.0);
}
