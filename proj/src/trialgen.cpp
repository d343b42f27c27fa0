#include "bteach/trialgen.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <random>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "bteach/error.hpp"
#include "bteach/seed.hpp"
#include "csv.hpp"

namespace bteach {

using nlohmann::json;

std::vector<Prediction> load_predictions_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open predictions file " + path.string());
  std::string line;
  if (!std::getline(in, line) || detail::split_csv_line(line) != std::vector<std::string>{"id", "ground_truth", "predicted"}) {
    fail(ErrorCode::Format, path.string() + ": header must be id,ground_truth,predicted");
  }
  std::vector<Prediction> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto f = detail::split_csv_line(line);
    if (f.size() != 3) fail(ErrorCode::Format, path.string() + ":" + std::to_string(line_no) + ": expected 3 fields");
    out.push_back({f[0], f[1], f[2]});
  }
  return out;
}

void write_predictions_csv(const std::filesystem::path& path, std::span<const Prediction> predictions) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << "id,ground_truth,predicted\n";
  for (const auto& p : predictions) out << p.id << ',' << p.ground_truth << ',' << p.predicted << '\n';
}

std::size_t ConfusionMatrix::index_of(const std::string& category) const {
  auto it = std::find(categories.begin(), categories.end(), category);
  if (it == categories.end()) fail(ErrorCode::InvalidArgument, "unknown category '" + category + "'");
  return static_cast<std::size_t>(it - categories.begin());
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t i) const {
  std::uint64_t s = 0;
  for (auto c : counts[i]) s += c;
  return s;
}

std::uint64_t ConfusionMatrix::confusion(std::size_t a, std::size_t b) const { return counts[a][b] + counts[b][a]; }

ConfusionMatrix confusion_matrix(std::span<const Prediction> predictions, const std::vector<std::string>& categories) {
  if (predictions.empty()) fail(ErrorCode::InvalidArgument, "confusion matrix needs at least one prediction");
  ConfusionMatrix cm;
  cm.categories = categories;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < categories.size(); ++i) {
    if (!index.emplace(categories[i], i).second) fail(ErrorCode::InvalidArgument, "duplicate category '" + categories[i] + "'");
  }
  const std::size_t c = categories.size();
  cm.counts.assign(c, std::vector<std::uint64_t>(c, 0));
  for (const auto& p : predictions) {
    auto gt = index.find(p.ground_truth);
    auto pred = index.find(p.predicted);
    if (gt == index.end()) fail(ErrorCode::InvalidArgument, "unknown label '" + p.ground_truth + "' for item '" + p.id + "'");
    if (pred == index.end()) fail(ErrorCode::InvalidArgument, "unknown label '" + p.predicted + "' for item '" + p.id + "'");
    ++cm.counts[gt->second][pred->second];
  }
  cm.per_category_accuracy.resize(c);
  for (std::size_t i = 0; i < c; ++i) {
    const auto total = cm.row_sum(i);
    cm.per_category_accuracy[i] = total == 0 ? 0.0 : static_cast<double>(cm.counts[i][i]) / static_cast<double>(total);
  }
  return cm;
}

std::vector<std::string> most_confusable(const ConfusionMatrix& cm, const std::string& category, std::size_t count,
                                         const std::vector<std::string>* within, bool require_positive) {
  const std::size_t a = cm.index_of(category);
  std::vector<std::size_t> candidates;
  if (within) {
    for (const auto& c : *within) candidates.push_back(cm.index_of(c));
  } else {
    for (std::size_t i = 0; i < cm.categories.size(); ++i) candidates.push_back(i);
  }
  std::erase(candidates, a);
  if (require_positive) std::erase_if(candidates, [&](std::size_t b) { return cm.confusion(a, b) == 0; });
  std::sort(candidates.begin(), candidates.end(), [&](std::size_t x, std::size_t y) {
    const auto cx = cm.confusion(a, x);
    const auto cy = cm.confusion(a, y);
    if (cx != cy) return cx > cy;
    return cm.categories[x] < cm.categories[y];
  });
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  if (candidates.size() > count) candidates.resize(count);
  std::vector<std::string> out;
  for (auto i : candidates) out.push_back(cm.categories[i]);
  return out;
}

std::size_t category_subset_size(std::size_t n_categories) {
  if (n_categories >= 1000) return 100;
  return (n_categories + 9) / 10;
}

std::vector<std::string> select_categories(const ConfusionMatrix& cm, std::size_t pool_size, std::uint64_t seed) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < cm.categories.size(); ++i)
    if (cm.row_sum(i) > 0) eligible.push_back(i);
  if (eligible.size() < 2) fail(ErrorCode::InvalidArgument, "too few categories with predictions to form subsets");
  const std::size_t s = category_subset_size(eligible.size());

  auto by_accuracy = [&](bool descending) {
    auto order = eligible;
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      const double ax = cm.per_category_accuracy[x];
      const double ay = cm.per_category_accuracy[y];
      if (ax != ay) return descending ? ax > ay : ax < ay;
      return cm.categories[x] < cm.categories[y];
    });
    std::vector<std::string> out;
    for (std::size_t k = 0; k < s; ++k) out.push_back(cm.categories[order[k]]);
    return out;
  };
  auto confusables = [&](const std::vector<std::string>& base) {
    std::vector<std::string> out;
    for (const auto& c : base) {
      auto best = most_confusable(cm, c, 1, nullptr, true);
      if (!best.empty() && std::find(out.begin(), out.end(), best[0]) == out.end()) out.push_back(best[0]);
    }
    return out;
  };

  const auto easy = by_accuracy(true);
  const auto hard = by_accuracy(false);
  const std::vector<std::vector<std::string>> subsets{easy, confusables(easy), hard, confusables(hard)};

  std::mt19937_64 rng(seed);
  std::vector<std::string> pool;
  for (auto subset : subsets) {
    std::shuffle(subset.begin(), subset.end(), rng);
    const std::size_t take = std::min(pool_size, subset.size());
    for (std::size_t k = 0; k < take; ++k)
      if (std::find(pool.begin(), pool.end(), subset[k]) == pool.end()) pool.push_back(subset[k]);
  }
  return pool;
}

const char* to_string(LabelMode m) { return m == LabelMode::Specific ? "specific" : "generic"; }

const char* to_string(ExamplesMode m) {
  switch (m) {
    case ExamplesMode::None: return "none";
    case ExamplesMode::Helpful: return "helpful";
    case ExamplesMode::Random: return "random";
  }
  return "none";
}

const char* to_string(MapMode m) {
  switch (m) {
    case MapMode::None: return "none";
    case MapMode::Blur: return "blur";
    case MapMode::Jet: return "jet";
  }
  return "none";
}

LabelMode label_mode_from_string(const std::string& s) {
  if (s == "specific") return LabelMode::Specific;
  if (s == "generic") return LabelMode::Generic;
  fail(ErrorCode::InvalidArgument, "unknown label mode '" + s + "'");
}

ExamplesMode examples_mode_from_string(const std::string& s) {
  if (s == "none") return ExamplesMode::None;
  if (s == "helpful") return ExamplesMode::Helpful;
  if (s == "random") return ExamplesMode::Random;
  fail(ErrorCode::InvalidArgument, "unknown examples mode '" + s + "'");
}

MapMode map_mode_from_string(const std::string& s) {
  if (s == "none") return MapMode::None;
  if (s == "blur") return MapMode::Blur;
  if (s == "jet") return MapMode::Jet;
  fail(ErrorCode::InvalidArgument, "unknown map mode '" + s + "'");
}

std::string ConditionFlags::key() const {
  return std::string(to_string(labels)) + "-" + to_string(examples) + "-" + to_string(map);
}

ConditionFlags condition_from_key(const std::string& key) {
  const auto a = key.find('-');
  const auto b = key.find('-', a == std::string::npos ? a : a + 1);
  if (a == std::string::npos || b == std::string::npos) fail(ErrorCode::InvalidArgument, "malformed condition '" + key + "'");
  ConditionFlags c{label_mode_from_string(key.substr(0, a)), examples_mode_from_string(key.substr(a + 1, b - a - 1)),
                   map_mode_from_string(key.substr(b + 1))};
  if (!c.valid()) fail(ErrorCode::InvalidArgument, "condition '" + key + "' (generic labels without examples) is not tested");
  return c;
}

std::vector<ConditionFlags> all_conditions() {
  std::vector<ConditionFlags> out;
  for (auto l : {LabelMode::Specific, LabelMode::Generic})
    for (auto e : {ExamplesMode::None, ExamplesMode::Helpful, ExamplesMode::Random})
      for (auto m : {MapMode::None, MapMode::Blur, MapMode::Jet}) {
        ConditionFlags c{l, e, m};
        if (c.valid()) out.push_back(c);
      }
  return out;
}

TrialSet assemble_trialset(const FeatureStore& store, const PldaModel& model, const ConfusionMatrix& cm,
                           std::span<const Prediction> predictions, const std::vector<std::string>& cats,
                           ExamplesMode policy, const AssemblyOptions& options, std::uint64_t seed) {
  if (cats.size() < 3) fail(ErrorCode::InvalidArgument, "category pool needs at least 3 categories");
  const std::unordered_set<std::string> in_pool(cats.begin(), cats.end());

  std::vector<std::size_t> correct, incorrect;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    if (!in_pool.count(p.ground_truth) || !in_pool.count(p.predicted) || !store.find(p.id)) continue;
    (p.ground_truth == p.predicted ? correct : incorrect).push_back(i);
  }
  if (correct.size() < options.n_correct || incorrect.size() < options.n_incorrect) {
    fail(ErrorCode::InvalidArgument, "insufficient eligible pool: " + std::to_string(correct.size()) + " correct (need " +
                                         std::to_string(options.n_correct) + "), " + std::to_string(incorrect.size()) +
                                         " incorrect (need " + std::to_string(options.n_incorrect) + ")");
  }
  std::mt19937_64 target_rng(derive_seed(seed, "targets"));
  std::shuffle(correct.begin(), correct.end(), target_rng);
  std::shuffle(incorrect.begin(), incorrect.end(), target_rng);
  std::deque<std::size_t> reserve_correct(correct.begin() + static_cast<std::ptrdiff_t>(options.n_correct), correct.end());
  std::deque<std::size_t> reserve_incorrect(incorrect.begin() + static_cast<std::ptrdiff_t>(options.n_incorrect),
                                            incorrect.end());

  const std::size_t n_total = options.n_correct + options.n_incorrect;
  std::vector<int> bins;
  if (policy == ExamplesMode::Random) {
    for (std::size_t t = 0; t < n_total; ++t) bins.push_back(static_cast<int>(t % 5));
    std::mt19937_64 bin_rng(derive_seed(seed, "bins"));
    std::shuffle(bins.begin(), bins.end(), bin_rng);
  }

  TrialSet tset;
  tset.seed = seed;
  tset.policy = policy;
  tset.categories = cats;
  tset.trials.reserve(n_total);

  for (std::size_t t = 0; t < n_total; ++t) {
    const bool want_correct = t < options.n_correct;
    auto& reserve = want_correct ? reserve_correct : reserve_incorrect;
    std::size_t pred_index = want_correct ? correct[t] : incorrect[t - options.n_correct];
    std::mt19937_64 trial_rng(derive_seed(seed, static_cast<std::uint64_t>(t)));

    SelectionPolicy select_policy = SelectionPolicy::helpful();
    select_policy.helpful_threshold = options.helpful_threshold;
    if (policy == ExamplesMode::Random) select_policy = SelectionPolicy::random_bin(bins[t]);

    auto make_trial = [&](std::size_t index) {
      const auto& p = predictions[index];
      Trial trial;
      trial.target = p.id;
      trial.y_star = p.predicted;
      trial.ground_truth = p.ground_truth;
      trial.model_correct = p.predicted == p.ground_truth;
      trial.category_accuracy = cm.per_category_accuracy[cm.index_of(p.predicted)];
      trial.condition.examples = policy;
      if (trial.model_correct) {
        // One of the two most confusable categories within the pool.
        const auto top2 = most_confusable(cm, trial.y_star, 2, &cats, false);
        std::uniform_int_distribution<std::size_t> pick(0, top2.size() - 1);
        trial.y_alt = top2[pick(trial_rng)];
      } else {
        trial.y_alt = p.ground_truth;
      }
      if (policy == ExamplesMode::Random) trial.assigned_bin = bins[t];
      return trial;
    };

    Trial trial = make_trial(pred_index);
    if (policy == ExamplesMode::None) {
      tset.trials.push_back(std::move(trial));
      continue;
    }

    std::size_t redraws = 0;
    bool widened = false;
    ScoringOptions so;
    so.k = options.k;
    so.seed = derive_seed(derive_seed(seed, static_cast<std::uint64_t>(t)), "scores:" + trial.target);
    CandidateScores scores = score_candidate_space(model, store, trial.target, trial.y_star, trial.y_alt, so);
    while (true) {
      try {
        auto cand = select_examples(scores, select_policy, derive_seed(trial_rng(), "select"));
        trial.f_L = cand.f_L;
        trial.examples = std::move(cand);
        tset.trials.push_back(std::move(trial));
        break;
      } catch (const NoQualifyingCandidate& e) {
        if (redraws < options.max_redraws && !reserve.empty()) {
          pred_index = reserve.front();
          reserve.pop_front();
          ++redraws;
          trial = make_trial(pred_index);
          so.seed = derive_seed(derive_seed(seed, static_cast<std::uint64_t>(t)), "scores:" + trial.target);
          scores = score_candidate_space(model, store, trial.target, trial.y_star, trial.y_alt, so);
          continue;
        }
        if (policy == ExamplesMode::Random && !widened && options.widen > 0) {
          select_policy.widen = options.widen;
          widened = true;
          continue;
        }
        fail(ErrorCode::NoQualifyingCandidate, "trial " + std::to_string(t) + ": no qualifying examples after " +
                                                   std::to_string(redraws) + " redraws (" + e.what() + ")");
      }
    }
  }
  return tset;
}

FamiliarityRatings load_familiarity_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open familiarity ratings " + path.string());
  std::string line;
  const std::vector<std::string> header{"y_star", "y_alt", "r1", "r2", "r3", "r4", "r5", "r6", "r7"};
  if (!std::getline(in, line) || detail::split_csv_line(line) != header) {
    fail(ErrorCode::Format, path.string() + ": header must be y_star,y_alt,r1..r7");
  }
  FamiliarityRatings ratings;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_csv_line(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (f.size() != 9) fail(ErrorCode::Format, where + ": malformed rating row (need 7 binary ratings)");
    std::array<int, 7> r{};
    for (std::size_t k = 0; k < 7; ++k) {
      if (f[2 + k] != "0" && f[2 + k] != "1") fail(ErrorCode::Format, where + ": rating '" + f[2 + k] + "' is not 0 or 1");
      r[k] = f[2 + k] == "1" ? 1 : 0;
    }
    ratings[{f[0], f[1]}] = r;
  }
  return ratings;
}

TrialSet attach_familiarity(const TrialSet& tset, const FamiliarityRatings& ratings, FamiliarityReport* report) {
  TrialSet out = tset;
  if (report) report->missing.clear();
  for (std::size_t i = 0; i < out.trials.size(); ++i) {
    auto& trial = out.trials[i];
    auto it = ratings.find({trial.y_star, trial.y_alt});
    if (it == ratings.end()) {
      trial.familiarity.reset();
      if (report) report->missing.push_back(i);
      continue;
    }
    int sum = 0;
    for (int r : it->second) {
      if (r != 0 && r != 1) fail(ErrorCode::Format, "familiarity ratings must be 0 or 1");
      sum += r;
    }
    trial.familiarity = sum / 7.0;
  }
  return out;
}

std::vector<std::string> validate_trialset(const TrialSet& tset, const ValidationContext& ctx) {
  std::vector<std::string> v;
  std::size_t n_correct = 0, n_incorrect = 0;
  std::array<int, 5> hist{};
  for (std::size_t i = 0; i < tset.trials.size(); ++i) {
    const auto& t = tset.trials[i];
    const std::string at = "trial " + std::to_string(i) + ": ";
    (t.model_correct ? n_correct : n_incorrect)++;
    if (t.model_correct != (t.y_star == t.ground_truth)) v.push_back(at + "model_correct disagrees with y_star/ground_truth");
    if (t.y_star == t.y_alt) v.push_back(at + "y_star equals y_alt");
    if (!t.model_correct && t.y_alt != t.ground_truth) v.push_back(at + "model-error trial must offer the ground truth");
    if (t.model_correct && ctx.cm) {
      const auto top2 = most_confusable(*ctx.cm, t.y_star, 2, &tset.categories, false);
      if (std::find(top2.begin(), top2.end(), t.y_alt) == top2.end())
        v.push_back(at + "y_alt is not among the two most confusable categories of y_star");
    }
    if (!t.condition.valid()) v.push_back(at + "generic labels without examples");
    if (t.condition.examples != tset.policy) v.push_back(at + "condition examples flag differs from set policy");
    if (t.examples) {
      if (t.examples->pair_target.category != t.y_star) v.push_back(at + "target-side examples not from y_star");
      if (t.examples->pair_alt.category != t.y_alt) v.push_back(at + "alt-side examples not from y_alt");
      for (const auto* id : {&t.examples->pair_target.item_a, &t.examples->pair_target.item_b,
                             &t.examples->pair_alt.item_a, &t.examples->pair_alt.item_b}) {
        if (*id == t.target) v.push_back(at + "target image used as an example");
      }
      if (!t.f_L || *t.f_L != t.examples->f_L) v.push_back(at + "f_L missing or inconsistent with examples");
    } else if (tset.policy != ExamplesMode::None) {
      v.push_back(at + "missing examples");
    }
    if (t.f_L) {
      if (!(*t.f_L >= 0.0 && *t.f_L <= 1.0)) v.push_back(at + "f_L outside [0,1]");
      hist[static_cast<std::size_t>(fidelity_bin(*t.f_L))]++;
      if (tset.policy == ExamplesMode::Helpful && !(*t.f_L > ctx.helpful_threshold)) v.push_back(at + "helpful f_L not above threshold");
    }
    if (t.familiarity) {
      const double k = *t.familiarity * 7.0;
      if (std::abs(k - std::round(k)) > 1e-9 || k < -1e-9 || k > 7 + 1e-9) v.push_back(at + "familiarity not a multiple of 1/7");
    }
  }
  if (ctx.n_correct && n_correct != *ctx.n_correct) v.push_back("set has " + std::to_string(n_correct) + " model-correct trials");
  if (ctx.n_incorrect && n_incorrect != *ctx.n_incorrect) v.push_back("set has " + std::to_string(n_incorrect) + " model-error trials");
  if (tset.policy == ExamplesMode::Random && tset.trials.size() % 5 == 0) {
    const int per_bin = static_cast<int>(tset.trials.size() / 5);
    for (std::size_t b = 0; b < 5; ++b) {
      if (hist[b] != per_bin) v.push_back("f_L bin " + std::to_string(b) + " holds " + std::to_string(hist[b]) + " trials");
    }
  }
  return v;
}

json to_json(const Trial& t) {
  json j;
  j["target"] = t.target;
  j["y_star"] = t.y_star;
  j["y_alt"] = t.y_alt;
  j["ground_truth"] = t.ground_truth;
  j["model_correct"] = t.model_correct;
  j["category_accuracy"] = t.category_accuracy;
  j["examples"] = t.examples ? to_json(*t.examples) : json(nullptr);
  j["f_L"] = t.f_L ? json(*t.f_L) : json(nullptr);
  j["familiarity"] = t.familiarity ? json(*t.familiarity) : json(nullptr);
  j["assigned_bin"] = t.assigned_bin ? json(*t.assigned_bin) : json(nullptr);
  j["condition"] = {{"labels", to_string(t.condition.labels)},
                    {"examples", to_string(t.condition.examples)},
                    {"map", to_string(t.condition.map)}};
  json assets;
  assets["target"] = t.assets.target;
  assets["target_map"] = t.assets.target_map ? json(*t.assets.target_map) : json(nullptr);
  assets["examples"] = t.assets.examples;
  assets["example_maps"] = t.assets.example_maps;
  j["assets"] = std::move(assets);
  return j;
}

Trial trial_from_json(const json& j) {
  Trial t;
  t.target = j.at("target").get<std::string>();
  t.y_star = j.at("y_star").get<std::string>();
  t.y_alt = j.at("y_alt").get<std::string>();
  t.ground_truth = j.at("ground_truth").get<std::string>();
  t.model_correct = j.at("model_correct").get<bool>();
  t.category_accuracy = j.value("category_accuracy", 0.0);
  if (j.contains("examples") && !j["examples"].is_null()) t.examples = teaching_candidate_from_json(j["examples"]);
  if (j.contains("f_L") && !j["f_L"].is_null()) t.f_L = j["f_L"].get<double>();
  if (j.contains("familiarity") && !j["familiarity"].is_null()) t.familiarity = j["familiarity"].get<double>();
  if (j.contains("assigned_bin") && !j["assigned_bin"].is_null()) t.assigned_bin = j["assigned_bin"].get<int>();
  const auto& c = j.at("condition");
  t.condition = {label_mode_from_string(c.at("labels").get<std::string>()),
                 examples_mode_from_string(c.at("examples").get<std::string>()),
                 map_mode_from_string(c.at("map").get<std::string>())};
  if (j.contains("assets")) {
    const auto& a = j["assets"];
    t.assets.target = a.value("target", std::string());
    if (a.contains("target_map") && !a["target_map"].is_null()) t.assets.target_map = a["target_map"].get<std::string>();
    t.assets.examples = a.value("examples", std::vector<std::string>{});
    t.assets.example_maps = a.value("example_maps", std::vector<std::string>{});
  }
  return t;
}

json to_json(const TrialSet& tset) {
  json j;
  j["seed"] = tset.seed;
  j["policy"] = to_string(tset.policy);
  j["categories"] = tset.categories;
  j["trials"] = json::array();
  for (const auto& t : tset.trials) j["trials"].push_back(to_json(t));
  return j;
}

TrialSet trialset_from_json(const json& j) {
  TrialSet tset;
  try {
    tset.seed = j.at("seed").get<std::uint64_t>();
    tset.policy = examples_mode_from_string(j.at("policy").get<std::string>());
    tset.categories = j.value("categories", std::vector<std::string>{});
    for (const auto& t : j.at("trials")) tset.trials.push_back(trial_from_json(t));
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, std::string("malformed trial set: ") + e.what());
  }
  return tset;
}

void save_trialset(const TrialSet& tset, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << to_json(tset).dump(1) << '\n';
}

TrialSet load_trialset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open trial set " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, "corrupt trial set " + path.string() + ": " + e.what());
  }
  return trialset_from_json(j);
}

}  // namespace bteach
