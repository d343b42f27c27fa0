#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include <json.hpp>

#include "bteach/metrics.hpp"
#include "bteach/saliency.hpp"
#include "bteach/trialgen.hpp"

namespace bteach {

// Single JSON document driving every command. Relative paths resolve against
// the directory holding the config file.
struct RunConfig {
  struct Paths {
    std::filesystem::path feature_store;  // store directory or .csv
    std::filesystem::path image_root;     // FeatureItem::image_path is relative to this
    std::filesystem::path output_dir;
    std::filesystem::path predictions;    // id,ground_truth,predicted
    std::filesystem::path model;          // default <output_dir>/model.json
    std::filesystem::path familiarity;    // optional ratings CSV
  } paths;

  struct Plda {
    std::size_t q = 0;  // 0: min(dim, #categories - 1)
  } plda;

  struct Teach {
    std::size_t k = 1000;
    double helpful_threshold = 0.8;
    double unhelpful_threshold = 0.2;
  } teach;

  struct Saliency {
    GpMaskConfig gp;
    double alpha = 0.4;
    nlohmann::json classifier = nlohmann::json::object();
  } saliency;

  struct TrialGen {
    std::size_t n_correct = 50;
    std::size_t n_incorrect = 100;
    std::size_t pool_size = 25;
    ExamplesMode examples = ExamplesMode::Helpful;
    MapMode map = MapMode::None;
    std::size_t max_redraws = 20;
    double widen = 0.1;
  } trialgen;

  struct Serve {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::map<std::string, double> conditions;  // condition key -> assignment weight
    std::filesystem::path data_dir;            // default <output_dir>/serve
    std::filesystem::path static_dir;          // optional UI bundle
  } serve;

  struct Metrics {
    std::size_t n_resamples = 10000;
    BootstrapMethod method = BootstrapMethod::Percentile;
  } metrics;

  std::uint64_t seed = 0;
  std::filesystem::path base_dir;

  // Per-module seed: derive_seed(seed, name).
  std::uint64_t seed_for(const char* module) const;

  // Thresholds in (0, 1), valid conditions, existing input paths.
  void validate() const;
};

RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);

}  // namespace bteach
