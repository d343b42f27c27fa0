#include "bteach/teach.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <unordered_map>
#include <unordered_set>

#include "bteach/error.hpp"
#include "bteach/parallel.hpp"
#include "bteach/seed.hpp"

namespace bteach {

using nlohmann::json;

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<ExamplePair> enumerate_pairs(const FeatureStore& store, const std::string& category, std::size_t k,
                                         std::uint64_t seed, const std::string& exclude_id) {
  std::vector<std::size_t> eligible;
  for (std::size_t i : store.category_indices(category)) {
    const auto& it = store.item(i);
    if (it.split == Split::Train && it.id != exclude_id) eligible.push_back(i);
  }
  const std::size_t n = eligible.size();
  if (n < 2) {
    fail(ErrorCode::InvalidArgument, "category '" + category + "' has " + std::to_string(n) +
                                         " eligible training items; pairing needs at least 2");
  }
  auto make = [&](std::size_t a, std::size_t b) {
    return ExamplePair{store.item(eligible[a]).id, store.item(eligible[b]).id, category, 0.0};
  };

  const std::size_t total = n * (n - 1) / 2;
  std::vector<ExamplePair> pairs;
  if (total <= k) {
    pairs.reserve(total);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b) pairs.push_back(make(a, b));
    return pairs;
  }

  std::mt19937_64 rng(seed);
  pairs.reserve(k);
  if (total <= 4 * k) {
    // Dense case: partial Fisher-Yates over all pair slots.
    std::vector<std::pair<std::size_t, std::size_t>> all;
    all.reserve(total);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b) all.emplace_back(a, b);
    for (std::size_t s = 0; s < k; ++s) {
      std::uniform_int_distribution<std::size_t> pick(s, total - 1);
      std::swap(all[s], all[pick(rng)]);
      pairs.push_back(make(all[s].first, all[s].second));
    }
    return pairs;
  }
  std::unordered_set<std::size_t> seen;
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  while (pairs.size() < k) {
    std::size_t a = pick(rng);
    std::size_t b = pick(rng);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    if (seen.insert(a * n + b).second) pairs.push_back(make(a, b));
  }
  return pairs;
}

double simulated_explainee_fidelity(const ExamplePair& pair_target, const ExamplePair& pair_alt) {
  // f_t / (f_t + f_a) == logistic(log f_t - log f_a)
  return logistic(pair_target.log_density - pair_alt.log_density);
}

void score_pair(const PldaModel& model, const FeatureStore& store, const LatentVector& u_star, ExamplePair& pair) {
  const auto u1 = to_latent(model, store.item(store.index_of(pair.item_a)).vector);
  const auto u2 = to_latent(model, store.item(store.index_of(pair.item_b)).vector);
  pair.log_density = pair_logdensity(model, u_star, u1, u2);
}

double simulated_explainee_fidelity(const PldaModel& model, const FeatureStore& store, const LatentVector& u_star,
                                    ExamplePair& pair_target, ExamplePair& pair_alt) {
  score_pair(model, store, u_star, pair_target);
  score_pair(model, store, u_star, pair_alt);
  return simulated_explainee_fidelity(pair_target, pair_alt);
}

CandidateScores score_candidate_space(const PldaModel& model, const FeatureStore& store, const std::string& target,
                                      const std::string& y_star, const std::string& y_alt,
                                      const ScoringOptions& options) {
  if (y_star == y_alt) fail(ErrorCode::InvalidArgument, "y* and the alternative label must differ");
  const auto target_index = store.index_of(target);
  const auto u_star = to_latent(model, store.item(target_index).vector);

  CandidateScores scores;
  scores.target = target;
  scores.target_label = y_star;
  scores.alt_label = y_alt;
  scores.pairs_target = enumerate_pairs(store, y_star, options.k, derive_seed(options.seed, "pairs:target"), target);
  scores.pairs_alt = enumerate_pairs(store, y_alt, options.k, derive_seed(options.seed, "pairs:alt"), target);

  // Latents for every item of the two categories, computed once.
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<std::size_t> rows;
  for (const auto* cat : {&y_star, &y_alt}) {
    for (std::size_t i : store.category_indices(*cat)) {
      if (slot.emplace(store.item(i).id, rows.size()).second) rows.push_back(i);
    }
  }
  std::vector<LatentVector> latents(rows.size());
  parallel_for(rows.size(), [&](std::size_t r) { latents[r] = to_latent(model, store.item(rows[r]).vector); });

  // One density per pair: 2K evaluations, not K^2.
  const std::size_t n_t = scores.pairs_target.size();
  const std::size_t n_a = scores.pairs_alt.size();
  parallel_for(n_t + n_a, [&](std::size_t p) {
    ExamplePair& pair = p < n_t ? scores.pairs_target[p] : scores.pairs_alt[p - n_t];
    pair.log_density =
        pair_logdensity(model, u_star, latents[slot.at(pair.item_a)], latents[slot.at(pair.item_b)]);
    if (options.density_calls) options.density_calls->fetch_add(1, std::memory_order_relaxed);
  });

  scores.fidelity.resize(n_t * n_a);
  parallel_for(n_t, [&](std::size_t i) {
    for (std::size_t j = 0; j < n_a; ++j)
      scores.fidelity[i * n_a + j] = simulated_explainee_fidelity(scores.pairs_target[i], scores.pairs_alt[j]);
  });
  return scores;
}

std::vector<double> teaching_posterior(const CandidateScores& scores) {
  // Neumaier summation keeps the normalisation error far below 1e-9 at 10^6 cells.
  double sum = 0, comp = 0;
  for (double f : scores.fidelity) {
    const double t = sum + f;
    comp += std::abs(sum) >= std::abs(f) ? (sum - t) + f : (f - t) + sum;
    sum = t;
  }
  sum += comp;
  if (!(sum > 0)) fail(ErrorCode::Numeric, "fidelity matrix sums to zero; cannot normalise");
  std::vector<double> post(scores.fidelity.size());
  for (std::size_t i = 0; i < post.size(); ++i) post[i] = scores.fidelity[i] / sum;
  return post;
}

int fidelity_bin(double f) {
  for (int b = 4; b > 0; --b)
    if (f >= b / 5.0) return b;
  return 0;
}

bool SelectionPolicy::accepts(double f) const {
  switch (kind) {
    case PolicyKind::Helpful:
      return f > helpful_threshold;
    case PolicyKind::Unhelpful:
      return f < unhelpful_threshold;
    case PolicyKind::RandomBin: {
      if (bin < 0 || bin > 4) fail(ErrorCode::InvalidArgument, "bin index must be in 0..4");
      const double lo = (bin - 5 * widen) / 5.0;
      const double hi = (bin + 1 + 5 * widen) / 5.0;
      // Bins 0..3 are half-open on the right; the last bin is closed at 1.
      if (bin == 4 || widen > 0) return f >= lo && f <= hi;
      return f >= lo && f < hi;
    }
  }
  return false;
}

double SelectionPolicy::distance(double f) const {
  if (accepts(f)) return 0.0;
  switch (kind) {
    case PolicyKind::Helpful:
      return helpful_threshold - f;
    case PolicyKind::Unhelpful:
      return f - unhelpful_threshold;
    case PolicyKind::RandomBin: {
      const double lo = (bin - 5 * widen) / 5.0;
      const double hi = (bin + 1 + 5 * widen) / 5.0;
      return f < lo ? lo - f : f - hi;
    }
  }
  return 0.0;
}

TeachingCandidate select_examples(const CandidateScores& scores, const SelectionPolicy& policy, std::uint64_t seed) {
  if (scores.fidelity.empty()) fail(ErrorCode::InvalidArgument, "empty candidate space");
  std::vector<std::size_t> qualifying;
  double nearest = scores.fidelity.front();
  double nearest_dist = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < scores.fidelity.size(); ++c) {
    const double f = scores.fidelity[c];
    if (policy.accepts(f)) {
      qualifying.push_back(c);
      continue;
    }
    const double d = policy.distance(f);
    if (d < nearest_dist) {
      nearest_dist = d;
      nearest = f;
    }
  }
  if (qualifying.empty()) {
    throw NoQualifyingCandidate("no candidate for target '" + scores.target + "' satisfies the selection policy; "
                                "nearest f_L = " + std::to_string(nearest),
                                nearest);
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, qualifying.size() - 1);
  const std::size_t c = qualifying[pick(rng)];
  const auto posterior = teaching_posterior(scores);

  TeachingCandidate cand;
  cand.row = c / scores.cols();
  cand.col = c % scores.cols();
  cand.pair_target = scores.pairs_target[cand.row];
  cand.pair_alt = scores.pairs_alt[cand.col];
  cand.f_L = scores.fidelity[c];
  cand.posterior = posterior[c];
  return cand;
}

json to_json(const ExamplePair& pair) {
  return json{{"items", {pair.item_a, pair.item_b}}, {"category", pair.category}, {"log_density", pair.log_density}};
}

ExamplePair example_pair_from_json(const json& j) {
  ExamplePair p;
  p.item_a = j.at("items").at(0).get<std::string>();
  p.item_b = j.at("items").at(1).get<std::string>();
  p.category = j.at("category").get<std::string>();
  p.log_density = j.value("log_density", 0.0);
  return p;
}

json to_json(const CandidateScores& scores) {
  json j;
  j["target"] = scores.target;
  j["y_star"] = scores.target_label;
  j["y_alt"] = scores.alt_label;
  j["pairs"] = {{"target", json::array()}, {"alt", json::array()}};
  for (const auto& p : scores.pairs_target) j["pairs"]["target"].push_back(to_json(p));
  for (const auto& p : scores.pairs_alt) j["pairs"]["alt"].push_back(to_json(p));
  json matrix = json::array();
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    json row = json::array();
    for (std::size_t c = 0; c < scores.cols(); ++c) row.push_back(scores.at(i, c));
    matrix.push_back(std::move(row));
  }
  j["f_L"] = std::move(matrix);
  return j;
}

json to_json(const TeachingCandidate& cand) {
  return json{{"target_pair", to_json(cand.pair_target)},
              {"alt_pair", to_json(cand.pair_alt)},
              {"f_L", cand.f_L},
              {"posterior", cand.posterior},
              {"row", cand.row},
              {"col", cand.col}};
}

TeachingCandidate teaching_candidate_from_json(const json& j) {
  TeachingCandidate c;
  c.pair_target = example_pair_from_json(j.at("target_pair"));
  c.pair_alt = example_pair_from_json(j.at("alt_pair"));
  c.f_L = j.at("f_L").get<double>();
  c.posterior = j.at("posterior").get<double>();
  c.row = j.value("row", std::size_t{0});
  c.col = j.value("col", std::size_t{0});
  return c;
}

}  // namespace bteach
