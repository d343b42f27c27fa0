#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bteach/featstore.hpp"
#include "bteach/plda.hpp"
#include "bteach/teach.hpp"

namespace bteach {

struct Prediction {
  std::string id;
  std::string ground_truth;
  std::string predicted;
};

// CSV with header id,ground_truth,predicted.
std::vector<Prediction> load_predictions_csv(const std::filesystem::path& path);
void write_predictions_csv(const std::filesystem::path& path, std::span<const Prediction> predictions);

struct ConfusionMatrix {
  std::vector<std::string> categories;
  std::vector<std::vector<std::uint64_t>> counts;  // rows: ground truth, cols: predicted
  std::vector<double> per_category_accuracy;       // 0 for categories with no items

  std::size_t index_of(const std::string& category) const;
  std::uint64_t row_sum(std::size_t i) const;
  // counts[a][b] + counts[b][a]
  std::uint64_t confusion(std::size_t a, std::size_t b) const;
};

// categories fixes the row/column order; every label must appear in it.
ConfusionMatrix confusion_matrix(std::span<const Prediction> predictions, const std::vector<std::string>& categories);

// Up to `count` categories ranked by confusion with `category` (descending,
// ties by category id), excluding the category itself. When `within` is set
// only its members are ranked. When `require_positive` is set, categories
// never confused with `category` are dropped.
std::vector<std::string> most_confusable(const ConfusionMatrix& cm, const std::string& category, std::size_t count,
                                         const std::vector<std::string>* within = nullptr,
                                         bool require_positive = false);

// Subset size for the easy/hard pools: 100 at 1000+ categories, otherwise
// ceil(C / 10).
std::size_t category_subset_size(std::size_t n_categories);

// Random pool_size draws from each of: most accurate, their most confusable,
// least accurate, their most confusable. Union, duplicates collapsed.
std::vector<std::string> select_categories(const ConfusionMatrix& cm, std::size_t pool_size, std::uint64_t seed);

enum class LabelMode { Specific, Generic };
enum class ExamplesMode { None, Helpful, Random };
enum class MapMode { None, Blur, Jet };

struct ConditionFlags {
  LabelMode labels = LabelMode::Specific;
  ExamplesMode examples = ExamplesMode::None;
  MapMode map = MapMode::None;

  // Generic labels without examples is not a tested condition.
  bool valid() const { return !(labels == LabelMode::Generic && examples == ExamplesMode::None); }
  std::string key() const;  // e.g. "specific-helpful-blur"
  bool operator==(const ConditionFlags&) const = default;
};

const char* to_string(LabelMode m);
const char* to_string(ExamplesMode m);
const char* to_string(MapMode m);
LabelMode label_mode_from_string(const std::string& s);
ExamplesMode examples_mode_from_string(const std::string& s);
MapMode map_mode_from_string(const std::string& s);
ConditionFlags condition_from_key(const std::string& key);
// The 15 valid cells.
std::vector<ConditionFlags> all_conditions();

struct TrialAssets {
  std::string target;                      // original target image
  std::optional<std::string> target_map;   // rendered saliency map of the target
  std::vector<std::string> examples;       // y* pair then y pair
  std::vector<std::string> example_maps;   // same order as examples

  std::size_t count() const {
    return (target.empty() ? 0 : 1) + (target_map ? 1 : 0) + examples.size() + example_maps.size();
  }
};

struct Trial {
  std::string target;        // d*
  std::string y_star;        // model prediction
  std::string y_alt;         // the 2AFC alternative
  std::string ground_truth;
  bool model_correct = false;
  double category_accuracy = 0;  // model accuracy on y*
  std::optional<TeachingCandidate> examples;
  std::optional<double> f_L;
  std::optional<double> familiarity;
  std::optional<int> assigned_bin;  // Random policy only
  ConditionFlags condition;
  TrialAssets assets;
};

struct TrialSet {
  std::vector<Trial> trials;
  std::uint64_t seed = 0;
  ExamplesMode policy = ExamplesMode::None;
  std::vector<std::string> categories;  // the selected category pool
};

struct AssemblyOptions {
  std::size_t n_correct = 50;
  std::size_t n_incorrect = 100;
  std::size_t k = 1000;
  double helpful_threshold = 0.8;
  std::size_t max_redraws = 20;
  double widen = 0.1;
};

// Builds the trial set. predictions supplies ground truth and model
// predictions for candidate targets; cats is the category pool.
TrialSet assemble_trialset(const FeatureStore& store, const PldaModel& model, const ConfusionMatrix& cm,
                           std::span<const Prediction> predictions, const std::vector<std::string>& cats,
                           ExamplesMode policy, const AssemblyOptions& options, std::uint64_t seed);

// One row per ordered (y_star, y_alt) pair, seven 0/1 judgements.
using FamiliarityRatings = std::map<std::pair<std::string, std::string>, std::array<int, 7>>;
FamiliarityRatings load_familiarity_csv(const std::filesystem::path& path);

struct FamiliarityReport {
  std::vector<std::size_t> missing;  // trial indices without a rating row
};

TrialSet attach_familiarity(const TrialSet& tset, const FamiliarityRatings& ratings,
                            FamiliarityReport* report = nullptr);

struct ValidationContext {
  const ConfusionMatrix* cm = nullptr;
  std::optional<std::size_t> n_correct;
  std::optional<std::size_t> n_incorrect;
  double helpful_threshold = 0.8;
};

// Human-readable violations; empty when the set is consistent.
std::vector<std::string> validate_trialset(const TrialSet& tset, const ValidationContext& ctx = {});

nlohmann::json to_json(const Trial& trial);
nlohmann::json to_json(const TrialSet& tset);
Trial trial_from_json(const nlohmann::json& j);
TrialSet trialset_from_json(const nlohmann::json& j);
void save_trialset(const TrialSet& tset, const std::filesystem::path& path);
TrialSet load_trialset(const std::filesystem::path& path);

}  // namespace bteach
