#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "bteach/error.hpp"
#include "bteach/metrics.hpp"
#include "support.hpp"

using namespace bteach;

namespace {

// 50 model-correct and 100 model-error trials over labels y0..y9.
TrialSet fifty_hundred() {
  TrialSet tset;
  for (int i = 0; i < 150; ++i) {
    Trial t;
    t.target = "t" + std::to_string(i);
    const bool correct = i < 50;
    t.y_star = "y" + std::to_string(i % 10);
    t.y_alt = "y" + std::to_string((i + 1) % 10);
    t.ground_truth = correct ? t.y_star : t.y_alt;
    t.model_correct = correct;
    tset.trials.push_back(t);
  }
  return tset;
}

}  // namespace

TEST_CASE("belief-projecting agent") {
  const auto tset = fifty_hundred();
  std::vector<Response> rs;
  for (std::size_t i = 0; i < 150; ++i) rs.push_back({"p", i, tset.trials[i].ground_truth, 2000});
  const auto r = fidelity_report(tset, rs);
  CHECK(r.sensitivity == 1.0);
  CHECK(r.specificity == 0.0);
  CHECK(r.fidelity == 50.0 / 150.0);
  CHECK(std::abs(r.fidelity - 0.3333) < 5e-5);
  const auto prof = idealized_profiles(tset);
  CHECK(prof.belief_projector.fidelity == r.fidelity);
  CHECK(prof.belief_projector.sensitivity == 1.0);
  CHECK(prof.belief_projector.specificity == 0.0);
  CHECK(prof.perfect_agent.fidelity == 1.0);
  CHECK(prof.random_agent.specificity == 0.5);
}

TEST_CASE("random agent over 15,000 responses") {
  const auto tset = fifty_hundred();
  std::mt19937_64 rng(21);
  std::vector<Response> rs;
  for (int p = 0; p < 100; ++p)
    for (std::size_t i = 0; i < 150; ++i)
      rs.push_back({"p" + std::to_string(p), i, (rng() & 1) ? tset.trials[i].y_star : tset.trials[i].y_alt, 1500});
  REQUIRE(rs.size() == 15000);
  const auto r = fidelity_report(tset, rs);
  CHECK(std::abs(r.fidelity - 0.5) <= 0.02);
  CHECK(std::abs(r.sensitivity - 0.5) <= 0.02);
  CHECK(std::abs(r.specificity - 0.5) <= 0.02);
}

TEST_CASE("invalid responses") {
  const auto tset = fifty_hundred();
  CHECK_THROWS_AS(fidelity_report(tset, std::vector<Response>{{"p", 150, "y0", 1}}), Error);
  CHECK_THROWS_AS(fidelity_report(tset, std::vector<Response>{{"p", 0, "nope", 1}}), Error);
  CHECK_THROWS_AS(fidelity_report(tset, std::vector<Response>{{"p", 0, "y0", 1}, {"p", 0, "y1", 1}}), Error);
  // Same trial from two participants is fine.
  CHECK_NOTHROW(fidelity_report(tset, std::vector<Response>{{"p", 0, "y0", 1}, {"q", 0, "y1", 1}}));
  const auto empty = fidelity_report(tset, {});
  CHECK(empty.fidelity == 0.0);
}

TEST_CASE("exclusion filter removes exactly the sub-second sessions") {
  std::vector<SessionTiming> s{{"fast", 149999, 150}, {"edge", 150000, 150}, {"slow", 900000, 150}, {"one", 999, 1}};
  CHECK(exclusion_filter(s) == std::vector<std::string>{"edge", "slow"});
  std::vector<SessionTiming> bad{{"x", 10, 0}};
  CHECK_THROWS_AS(exclusion_filter(bad), Error);

  std::vector<Response> rs{{"a", 0, "y0", 400}, {"a", 1, "y1", 500}, {"b", 0, "y0", 3000}};
  const auto t = session_timings(rs);
  REQUIRE(t.size() == 2);
  CHECK(t[0].total_ms == 900);
  CHECK(t[0].n_trials == 2);
  CHECK(exclusion_filter(t) == std::vector<std::string>{"b"});
}

TEST_CASE("participant bootstrap") {
  std::vector<std::vector<int>> groups;
  std::mt19937_64 rng(1);
  for (int p = 0; p < 40; ++p) {
    std::vector<int> g;
    const double bias = p < 20 ? 0.3 : 0.7;
    for (int k = 0; k < 30; ++k) g.push_back(std::uniform_real_distribution<double>(0, 1)(rng) < bias);
    groups.push_back(g);
  }
  const auto a = bootstrap_ci(groups, 2000, 5);
  const auto b = bootstrap_ci(groups, 2000, 5);
  CHECK(a.low == b.low);
  CHECK(a.high == b.high);
  CHECK(a.low < 0.5);
  CHECK(a.high > 0.5);
  CHECK(a.high - a.low < 0.2);
  const auto basic = bootstrap_ci(groups, 2000, 5, BootstrapMethod::Basic);
  CHECK(basic.high - basic.low == doctest::Approx(a.high - a.low));
  // Identical participants: no between-participant spread.
  const auto flat = bootstrap_ci({{1, 0}, {1, 0}, {0, 1}, {1, 0}}, 500, 1);
  CHECK(flat.low == 0.5);
  CHECK(flat.high == 0.5);
  CHECK_THROWS_AS(bootstrap_ci({}, 10, 1), Error);
}

TEST_CASE("report with intervals") {
  const auto tset = fifty_hundred();
  std::vector<Response> rs;
  for (int p = 0; p < 5; ++p)
    for (std::size_t i = 0; i < 150; ++i) rs.push_back({"p" + std::to_string(p), i, tset.trials[i].y_star, 1500});
  const auto r = fidelity_report_with_ci(tset, rs, 200, 3);
  REQUIRE(r.fidelity_ci.has_value());
  CHECK(r.fidelity_ci->low == 1.0);
  const auto j = to_json(r);
  CHECK(j["fidelity"] == 1.0);
  CHECK(j["ci"]["specificity"].size() == 2);
}

TEST_CASE("responses CSV") {
  const auto dir = test::fresh_dir("responses");
  {
    std::ofstream out(dir / "r.csv");
    out << kResponsesHeader << '\n';
    append_response_csv(out, {"s1", 4, "y2", 1234});
    append_response_csv(out, {"s2", 0, "y0", 5});
  }
  const auto rs = load_responses_csv(dir / "r.csv");
  REQUIRE(rs.size() == 2);
  CHECK(rs[0].participant == "s1");
  CHECK(rs[0].trial_index == 4);
  CHECK(rs[0].rt_ms == 1234);
  std::ofstream(dir / "bad.csv") << kResponsesHeader << "\ns1,x,y2,5\n";
  CHECK_THROWS_AS(load_responses_csv(dir / "bad.csv"), Error);
  std::ofstream(dir / "neg.csv") << kResponsesHeader << "\ns1,1,y2,-5\n";
  CHECK_THROWS_AS(load_responses_csv(dir / "neg.csv"), Error);
}
