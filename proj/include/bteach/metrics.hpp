#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bteach/trialgen.hpp"

namespace bteach {

struct Response {
  std::string participant;
  std::size_t trial_index = 0;
  std::string choice;
  std::uint64_t rt_ms = 0;
};

// CSV with header participant,trial_index,choice,rt_ms.
std::vector<Response> load_responses_csv(const std::filesystem::path& path);
void append_response_csv(std::ostream& out, const Response& r);
inline constexpr const char* kResponsesHeader = "participant,trial_index,choice,rt_ms";

struct Interval {
  double low = 0;
  double high = 0;
};

struct FidelityReport {
  double fidelity = 0;
  double sensitivity = 0;  // over model-correct trials
  double specificity = 0;  // over model-error trials
  std::size_t n_correct_trials = 0;
  std::size_t n_error_trials = 0;
  std::optional<Interval> fidelity_ci;
  std::optional<Interval> sensitivity_ci;
  std::optional<Interval> specificity_ci;
};

// Errors on dangling trial indices, choices outside {y*, y}, and repeated
// (participant, trial) responses. A statistic with no trials behind it is 0.
FidelityReport fidelity_report(const TrialSet& tset, std::span<const Response> responses);

struct IdealizedProfiles {
  FidelityReport random_agent;
  FidelityReport perfect_agent;
  FidelityReport belief_projector;  // always picks the ground truth
};

IdealizedProfiles idealized_profiles(const TrialSet& tset);

struct SessionTiming {
  std::string participant;
  std::uint64_t total_ms = 0;
  std::size_t n_trials = 0;
};

// Keeps sessions with at least one second per trial on average.
std::vector<std::string> exclusion_filter(std::span<const SessionTiming> sessions);

// Per-participant timing derived from summed response times.
std::vector<SessionTiming> session_timings(std::span<const Response> responses);

enum class BootstrapMethod { Percentile, Basic };

// Participant-level bootstrap of the pooled success rate. groups[p] holds the
// 0/1 outcomes of participant p. Returns the central 95% interval.
Interval bootstrap_ci(const std::vector<std::vector<int>>& groups, std::size_t n_resamples = 10000,
                      std::uint64_t seed = 0, BootstrapMethod method = BootstrapMethod::Percentile);

// fidelity_report plus participant-bootstrap intervals for all three statistics.
FidelityReport fidelity_report_with_ci(const TrialSet& tset, std::span<const Response> responses,
                                       std::size_t n_resamples, std::uint64_t seed,
                                       BootstrapMethod method = BootstrapMethod::Percentile);

nlohmann::json to_json(const FidelityReport& report);

}  // namespace bteach
