#include "bteach/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "bteach/error.hpp"
#include "bteach/parallel.hpp"
#include "bteach/seed.hpp"
#include "csv.hpp"

namespace bteach {

using nlohmann::json;

std::vector<Response> load_responses_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open responses " + path.string());
  std::string line;
  if (!std::getline(in, line) ||
      detail::split_csv_line(line) != std::vector<std::string>{"participant", "trial_index", "choice", "rt_ms"}) {
    fail(ErrorCode::Format, path.string() + ": header must be " + kResponsesHeader);
  }
  std::vector<Response> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_csv_line(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (f.size() != 4) fail(ErrorCode::Format, where + ": expected 4 fields");
    Response r;
    r.participant = f[0];
    r.choice = f[2];
    try {
      std::size_t used = 0;
      r.trial_index = std::stoull(f[1], &used);
      if (used != f[1].size()) throw std::invalid_argument("trailing");
      r.rt_ms = std::stoull(f[3], &used);
      if (used != f[3].size() || f[3].front() == '-') throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      fail(ErrorCode::Format, where + ": trial_index and rt_ms must be non-negative integers");
    }
    out.push_back(std::move(r));
  }
  return out;
}

void append_response_csv(std::ostream& out, const Response& r) {
  out << r.participant << ',' << r.trial_index << ',' << r.choice << ',' << r.rt_ms << '\n';
}

namespace {

struct Counts {
  std::size_t agree_correct = 0, n_correct = 0, agree_error = 0, n_error = 0;
};

FidelityReport from_counts(const Counts& c) {
  FidelityReport r;
  r.n_correct_trials = c.n_correct;
  r.n_error_trials = c.n_error;
  const std::size_t n = c.n_correct + c.n_error;
  r.fidelity = n ? static_cast<double>(c.agree_correct + c.agree_error) / static_cast<double>(n) : 0.0;
  r.sensitivity = c.n_correct ? static_cast<double>(c.agree_correct) / static_cast<double>(c.n_correct) : 0.0;
  r.specificity = c.n_error ? static_cast<double>(c.agree_error) / static_cast<double>(c.n_error) : 0.0;
  return r;
}

// Per-participant outcome lists (agreement with the model), split by trial type.
struct Outcomes {
  std::vector<std::vector<int>> all, correct, error;
};

Outcomes collect(const TrialSet& tset, std::span<const Response> responses, Counts* counts) {
  std::set<std::pair<std::string, std::size_t>> seen;
  std::map<std::string, std::size_t> slot;
  Outcomes o;
  Counts c;
  for (const auto& r : responses) {
    if (r.trial_index >= tset.trials.size()) {
      fail(ErrorCode::InvalidArgument, "response from '" + r.participant + "' references missing trial " +
                                           std::to_string(r.trial_index));
    }
    if (!seen.emplace(r.participant, r.trial_index).second) {
      fail(ErrorCode::InvalidArgument, "duplicate response from '" + r.participant + "' for trial " +
                                           std::to_string(r.trial_index));
    }
    const auto& t = tset.trials[r.trial_index];
    if (r.choice != t.y_star && r.choice != t.y_alt) {
      fail(ErrorCode::InvalidArgument, "choice '" + r.choice + "' is not an option of trial " + std::to_string(r.trial_index));
    }
    const int agree = r.choice == t.y_star ? 1 : 0;
    auto [it, inserted] = slot.try_emplace(r.participant, o.all.size());
    if (inserted) {
      o.all.emplace_back();
      o.correct.emplace_back();
      o.error.emplace_back();
    }
    o.all[it->second].push_back(agree);
    if (t.model_correct) {
      ++c.n_correct;
      c.agree_correct += static_cast<std::size_t>(agree);
      o.correct[it->second].push_back(agree);
    } else {
      ++c.n_error;
      c.agree_error += static_cast<std::size_t>(agree);
      o.error[it->second].push_back(agree);
    }
  }
  if (counts) *counts = c;
  return o;
}

}  // namespace

FidelityReport fidelity_report(const TrialSet& tset, std::span<const Response> responses) {
  Counts c;
  collect(tset, responses, &c);
  return from_counts(c);
}

IdealizedProfiles idealized_profiles(const TrialSet& tset) {
  std::size_t n_correct = 0;
  for (const auto& t : tset.trials) n_correct += t.model_correct ? 1 : 0;
  const std::size_t n_error = tset.trials.size() - n_correct;
  IdealizedProfiles p;
  p.random_agent = FidelityReport{0.5, 0.5, 0.5, n_correct, n_error, {}, {}, {}};
  p.perfect_agent = FidelityReport{1.0, 1.0, 1.0, n_correct, n_error, {}, {}, {}};
  // Picking the ground truth agrees with the model exactly on its correct trials.
  p.belief_projector = from_counts(Counts{n_correct, n_correct, 0, n_error});
  return p;
}

std::vector<std::string> exclusion_filter(std::span<const SessionTiming> sessions) {
  std::vector<std::string> included;
  for (const auto& s : sessions) {
    if (s.n_trials == 0) fail(ErrorCode::InvalidArgument, "session '" + s.participant + "' has no trials");
    // total / n < 1000 ms  <=>  total < 1000 n
    if (s.total_ms >= 1000ULL * s.n_trials) included.push_back(s.participant);
  }
  return included;
}

std::vector<SessionTiming> session_timings(std::span<const Response> responses) {
  std::vector<SessionTiming> out;
  std::map<std::string, std::size_t> slot;
  for (const auto& r : responses) {
    auto [it, inserted] = slot.try_emplace(r.participant, out.size());
    if (inserted) out.push_back({r.participant, 0, 0});
    out[it->second].total_ms += r.rt_ms;
    out[it->second].n_trials += 1;
  }
  return out;
}

namespace {

double quantile(std::vector<double>& sorted, double q) {
  // Linear interpolation between order statistics (type 7).
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

Interval bootstrap_ci(const std::vector<std::vector<int>>& groups, std::size_t n_resamples, std::uint64_t seed,
                      BootstrapMethod method) {
  std::vector<double> sums, sizes;
  for (const auto& g : groups) {
    if (g.empty()) continue;
    double s = 0;
    for (int v : g) s += v;
    sums.push_back(s);
    sizes.push_back(static_cast<double>(g.size()));
  }
  if (sums.empty()) fail(ErrorCode::InvalidArgument, "bootstrap needs at least one non-empty group");
  if (n_resamples == 0) fail(ErrorCode::InvalidArgument, "bootstrap needs at least one resample");
  double total_s = 0, total_n = 0;
  for (std::size_t p = 0; p < sums.size(); ++p) {
    total_s += sums[p];
    total_n += sizes[p];
  }
  const double point = total_s / total_n;

  std::vector<double> stats(n_resamples);
  const std::size_t n = sums.size();
  parallel_for(n_resamples, [&](std::size_t r) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    double s = 0, c = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const auto p = pick(rng);
      s += sums[p];
      c += sizes[p];
    }
    stats[r] = s / c;
  });
  std::sort(stats.begin(), stats.end());
  const double lo = quantile(stats, 0.025);
  const double hi = quantile(stats, 0.975);
  if (method == BootstrapMethod::Basic) {
    return Interval{std::clamp(2 * point - hi, 0.0, 1.0), std::clamp(2 * point - lo, 0.0, 1.0)};
  }
  return Interval{lo, hi};
}

FidelityReport fidelity_report_with_ci(const TrialSet& tset, std::span<const Response> responses,
                                       std::size_t n_resamples, std::uint64_t seed, BootstrapMethod method) {
  Counts c;
  const auto o = collect(tset, responses, &c);
  auto report = from_counts(c);
  auto has_data = [](const std::vector<std::vector<int>>& g) {
    return std::any_of(g.begin(), g.end(), [](const auto& v) { return !v.empty(); });
  };
  if (has_data(o.all)) report.fidelity_ci = bootstrap_ci(o.all, n_resamples, derive_seed(seed, "fidelity"), method);
  if (has_data(o.correct))
    report.sensitivity_ci = bootstrap_ci(o.correct, n_resamples, derive_seed(seed, "sensitivity"), method);
  if (has_data(o.error))
    report.specificity_ci = bootstrap_ci(o.error, n_resamples, derive_seed(seed, "specificity"), method);
  return report;
}

json to_json(const FidelityReport& r) {
  json j{{"fidelity", r.fidelity},
         {"sensitivity", r.sensitivity},
         {"specificity", r.specificity},
         {"n_correct_trials", r.n_correct_trials},
         {"n_error_trials", r.n_error_trials}};
  auto ci = [](const std::optional<Interval>& i) { return i ? json::array({i->low, i->high}) : json(nullptr); };
  j["ci"] = {{"fidelity", ci(r.fidelity_ci)}, {"sensitivity", ci(r.sensitivity_ci)}, {"specificity", ci(r.specificity_ci)}};
  return j;
}

}  // namespace bteach
