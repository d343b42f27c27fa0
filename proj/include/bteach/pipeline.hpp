#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "bteach/config.hpp"

namespace bteach {

// Each command returns a JSON summary that the CLI prints.

// Fits PLDA on the Train split and writes paths.model.
nlohmann::json run_fit(const RunConfig& config);

// <output_dir>/trials_<examples>_<map>.json
std::filesystem::path trialset_path(const RunConfig& config, ExamplesMode examples, MapMode map);

// Assembles the trial set for trialgen.examples / trialgen.map and renders
// its assets under <output_dir>/assets/<examples>_<map>/.
nlohmann::json run_gen_trials(const RunConfig& config);

// One-off saliency map for an image and label. Writes <prefix>.png/.f32 and
// the rendered <prefix>_blur.png and <prefix>_jet.png.
nlohmann::json run_saliency(const RunConfig& config, const std::filesystem::path& image, const std::string& label,
                            const std::filesystem::path& prefix);

struct SelectRequest {
  std::string target;
  std::string y_star;
  std::string y_alt;
  std::string policy = "helpful";  // helpful | random | unhelpful
  int bin = 0;
  std::filesystem::path export_scores;  // optional CandidateScores JSON
};

nlohmann::json run_select(const RunConfig& config, const SelectRequest& request);

// Exclusion filter, fidelity report with bootstrap intervals, and the
// idealised agent profiles for a trial set.
nlohmann::json run_metrics(const RunConfig& config, const std::filesystem::path& trialset,
                           const std::filesystem::path& responses);

}  // namespace bteach
