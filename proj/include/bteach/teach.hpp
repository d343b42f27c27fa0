#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bteach/featstore.hpp"
#include "bteach/plda.hpp"

namespace bteach {

struct ExamplePair {
  std::string item_a;
  std::string item_b;
  std::string category;
  double log_density = 0;  // log f(d* | pair) for the current target
};

// Fidelity values for the Cartesian product of target-side and alt-side pairs.
// fidelity is row-major: fidelity[i * pairs_alt.size() + j].
struct CandidateScores {
  std::string target;
  std::string target_label;  // y*
  std::string alt_label;     // y
  std::vector<ExamplePair> pairs_target;
  std::vector<ExamplePair> pairs_alt;
  std::vector<double> fidelity;

  std::size_t rows() const { return pairs_target.size(); }
  std::size_t cols() const { return pairs_alt.size(); }
  double at(std::size_t i, std::size_t j) const { return fidelity[i * cols() + j]; }
};

struct TeachingCandidate {
  ExamplePair pair_target;
  ExamplePair pair_alt;
  double f_L = 0;
  double posterior = 0;
  std::size_t row = 0;
  std::size_t col = 0;
};

// Logistic function, evaluated so that logistic(x) + logistic(-x) == 1 to
// rounding and logistic(0) == 0.5 exactly.
double logistic(double x);

// k distinct unordered pairs of training items of `category`, excluding
// `exclude_id`. Returns every pair (lexicographic) when fewer than k exist.
std::vector<ExamplePair> enumerate_pairs(const FeatureStore& store, const std::string& category, std::size_t k,
                                         std::uint64_t seed, const std::string& exclude_id = {});

// f_L(y* | t^{y*}, t^{y}, d*) from cached log densities.
double simulated_explainee_fidelity(const ExamplePair& pair_target, const ExamplePair& pair_alt);

// Same, computing the densities from the model.
double simulated_explainee_fidelity(const PldaModel& model, const FeatureStore& store, const LatentVector& u_star,
                                    ExamplePair& pair_target, ExamplePair& pair_alt);

// Fills pair.log_density = log f(u* | pair) under the model.
void score_pair(const PldaModel& model, const FeatureStore& store, const LatentVector& u_star, ExamplePair& pair);

struct ScoringOptions {
  std::size_t k = 1000;
  std::uint64_t seed = 0;
  // Incremented once per predictive density evaluation, when set.
  std::atomic<std::size_t>* density_calls = nullptr;
};

CandidateScores score_candidate_space(const PldaModel& model, const FeatureStore& store, const std::string& target,
                                      const std::string& y_star, const std::string& y_alt,
                                      const ScoringOptions& options);

// Row-major posterior P_T, same shape as scores.fidelity.
std::vector<double> teaching_posterior(const CandidateScores& scores);

enum class PolicyKind { Helpful, RandomBin, Unhelpful };

struct SelectionPolicy {
  PolicyKind kind = PolicyKind::Helpful;
  int bin = 0;                     // RandomBin only, 0..4
  double helpful_threshold = 0.8;  // f_L > threshold
  double unhelpful_threshold = 0.2;  // f_L < threshold
  double widen = 0;                // RandomBin: extends both edges by this much

  static SelectionPolicy helpful() { return {}; }
  static SelectionPolicy unhelpful() { return {PolicyKind::Unhelpful}; }
  static SelectionPolicy random_bin(int b) { return {PolicyKind::RandomBin, b}; }

  bool accepts(double f) const;
  // Distance from f to the accepted region (0 inside).
  double distance(double f) const;
};

// Bin index of f in the five-way partition [0,.2) [.2,.4) [.4,.6) [.6,.8) [.8,1].
int fidelity_bin(double f);

// Uniformly random candidate among those the policy accepts. Throws
// NoQualifyingCandidate carrying the nearest achievable f_L.
TeachingCandidate select_examples(const CandidateScores& scores, const SelectionPolicy& policy, std::uint64_t seed);

nlohmann::json to_json(const ExamplePair& pair);
nlohmann::json to_json(const CandidateScores& scores);
nlohmann::json to_json(const TeachingCandidate& cand);
ExamplePair example_pair_from_json(const nlohmann::json& j);
TeachingCandidate teaching_candidate_from_json(const nlohmann::json& j);

}  // namespace bteach
