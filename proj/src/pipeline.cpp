#include "bteach/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>

#include "bteach/classifier.hpp"
#include "bteach/error.hpp"
#include "bteach/featstore.hpp"
#include "bteach/image.hpp"
#include "bteach/plda.hpp"
#include "bteach/render.hpp"
#include "bteach/saliency.hpp"
#include "bteach/teach.hpp"

namespace bteach {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

PldaModel load_model(const RunConfig& c) {
  if (!fs::exists(c.paths.model)) fail(ErrorCode::Io, "model not found: " + c.paths.model.string() + " (run fit first)");
  return load_plda(c.paths.model);
}

fs::path image_path(const RunConfig& c, const FeatureStore& store, const std::string& id) {
  const auto& item = store.item(store.index_of(id));
  if (!item.image_path) fail(ErrorCode::InvalidArgument, "item '" + id + "' has no image");
  return c.paths.image_root.empty() ? fs::path(*item.image_path) : c.paths.image_root / *item.image_path;
}

Image load_resized(const fs::path& path, const GpMaskConfig& gp) {
  auto img = read_png(path);
  if (img.width != gp.width || img.height != gp.height) img = resize_bilinear(img, gp.width, gp.height);
  return img;
}

Image render(MapMode mode, const Image& img, const SaliencyMap& map, double alpha) {
  return mode == MapMode::Jet ? render_jet(img, map, alpha) : render_blur(img, map);
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::string trial_dir_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "t%03zu", i);
  return buf;
}

}  // namespace

json run_fit(const RunConfig& c) {
  c.validate();
  const auto store = open_feature_store(c.paths.feature_store);
  PldaFitInfo info;
  const auto model = fit_plda(store, c.plda.q, &info);
  ensure_parent(c.paths.model);
  save_plda(model, c.paths.model);
  std::vector<double> psi(model.psi.data(), model.psi.data() + model.psi.size());
  return {{"model", c.paths.model.string()},
          {"q", model.q},
          {"dim", model.m.size()},
          {"n_classes", info.n_classes},
          {"n_train", info.n_train},
          {"regularized", info.regularized},
          {"psi", psi},
          {"psi_max", psi.empty() ? 0.0 : *std::max_element(psi.begin(), psi.end())}};
}

fs::path trialset_path(const RunConfig& c, ExamplesMode examples, MapMode map) {
  return c.paths.output_dir / (std::string("trials_") + to_string(examples) + "_" + to_string(map) + ".json");
}

json run_gen_trials(const RunConfig& c) {
  c.validate();
  if (c.paths.predictions.empty()) fail(ErrorCode::InvalidArgument, "paths.predictions is required for gen-trials");
  const auto store = open_feature_store(c.paths.feature_store);
  const auto model = load_model(c);
  const auto predictions = load_predictions_csv(c.paths.predictions);
  const auto cm = confusion_matrix(predictions, store.categories());
  const auto cats = select_categories(cm, c.trialgen.pool_size, c.seed_for("categories"));

  AssemblyOptions opt;
  opt.n_correct = c.trialgen.n_correct;
  opt.n_incorrect = c.trialgen.n_incorrect;
  opt.k = c.teach.k;
  opt.helpful_threshold = c.teach.helpful_threshold;
  opt.max_redraws = c.trialgen.max_redraws;
  opt.widen = c.trialgen.widen;
  const auto examples = c.trialgen.examples;
  const auto map_mode = c.trialgen.map;
  auto tset = assemble_trialset(store, model, cm, predictions, cats, examples, opt, c.seed_for("trialgen"));

  json summary;
  if (!c.paths.familiarity.empty()) {
    FamiliarityReport rep;
    tset = attach_familiarity(tset, load_familiarity_csv(c.paths.familiarity), &rep);
    summary["familiarity_missing"] = rep.missing;
  }

  // Assets. Paths in the trial set are relative to output_dir.
  const std::string group = std::string(to_string(examples)) + "_" + to_string(map_mode);
  const fs::path asset_root = fs::path("assets") / group;
  std::unique_ptr<MaskedClassifier> classifier;
  std::optional<MaskBatch> masks;
  if (map_mode != MapMode::None) {
    classifier = make_classifier(c.saliency.classifier, c.base_dir);
    masks = sample_masks(c.saliency.gp, c.seed_for("saliency"));
  }
  std::map<std::pair<std::string, std::string>, SaliencyMap> map_cache;
  auto saliency_for = [&](const std::string& id, const Image& img, const std::string& label) -> const SaliencyMap& {
    auto key = std::make_pair(id, label);
    auto it = map_cache.find(key);
    if (it != map_cache.end()) return it->second;
    auto map = expected_saliency(*classifier, img, label, *masks);
    const auto raw = c.paths.output_dir / "maps" / (id + "__" + label);
    ensure_parent(raw);
    write_saliency_map(map, raw);
    return map_cache.emplace(key, std::move(map)).first->second;
  };

  for (std::size_t i = 0; i < tset.trials.size(); ++i) {
    auto& t = tset.trials[i];
    t.condition.examples = examples;
    t.condition.map = map_mode;
    t.assets = {};
    const fs::path dir = asset_root / trial_dir_name(i);
    fs::create_directories(c.paths.output_dir / dir);
    auto emit = [&](const std::string& id, const std::string& label, const std::string& name,
                    std::string& slot, std::string* map_slot) {
      const auto img = load_resized(image_path(c, store, id), c.saliency.gp);
      write_png(c.paths.output_dir / dir / (name + ".png"), img);
      slot = (dir / (name + ".png")).generic_string();
      if (map_slot) {
        const auto& map = saliency_for(id, img, label);
        write_png(c.paths.output_dir / dir / (name + "_map.png"), render(map_mode, img, map, c.saliency.alpha));
        *map_slot = (dir / (name + "_map.png")).generic_string();
      }
    };
    std::string map_rel;
    emit(t.target, t.y_star, "target", t.assets.target, map_mode != MapMode::None ? &map_rel : nullptr);
    if (map_mode != MapMode::None) t.assets.target_map = map_rel;
    if (t.examples) {
      const auto& ex = *t.examples;
      const std::array<std::pair<std::string, std::string>, 4> items = {
          std::make_pair(ex.pair_target.item_a, ex.pair_target.category),
          std::make_pair(ex.pair_target.item_b, ex.pair_target.category),
          std::make_pair(ex.pair_alt.item_a, ex.pair_alt.category),
          std::make_pair(ex.pair_alt.item_b, ex.pair_alt.category)};
      for (std::size_t e = 0; e < items.size(); ++e) {
        std::string slot, mslot;
        emit(items[e].first, items[e].second, "ex" + std::to_string(e), slot,
             map_mode != MapMode::None ? &mslot : nullptr);
        t.assets.examples.push_back(slot);
        if (map_mode != MapMode::None) t.assets.example_maps.push_back(mslot);
      }
    }
  }

  ValidationContext ctx;
  ctx.cm = &cm;
  ctx.n_correct = opt.n_correct;
  ctx.n_incorrect = opt.n_incorrect;
  ctx.helpful_threshold = opt.helpful_threshold;
  const auto violations = validate_trialset(tset, ctx);

  const auto out = trialset_path(c, examples, map_mode);
  ensure_parent(out);
  save_trialset(tset, out);

  std::size_t n_correct = 0;
  std::array<int, 5> hist{};
  for (const auto& t : tset.trials) {
    n_correct += t.model_correct ? 1 : 0;
    if (t.f_L) ++hist[static_cast<std::size_t>(fidelity_bin(*t.f_L))];
  }
  summary["trialset"] = out.string();
  summary["n_trials"] = tset.trials.size();
  summary["n_correct"] = n_correct;
  summary["n_incorrect"] = tset.trials.size() - n_correct;
  summary["categories"] = tset.categories;
  summary["assets_per_trial"] = tset.trials.empty() ? 0 : tset.trials.front().assets.count();
  summary["f_L_histogram"] = hist;
  summary["violations"] = violations;
  return summary;
}

json run_saliency(const RunConfig& c, const fs::path& image, const std::string& label, const fs::path& prefix) {
  c.saliency.gp.validate();
  const auto img = load_resized(image, c.saliency.gp);
  const auto classifier = make_classifier(c.saliency.classifier, c.base_dir);
  const GpMaskSampler sampler(c.saliency.gp);
  const auto map = expected_saliency(*classifier, img, label, sampler, c.seed_for("saliency"));
  ensure_parent(prefix);
  write_saliency_map(map, prefix);
  write_png(prefix.string() + "_blur.png", render_blur(img, map));
  write_png(prefix.string() + "_jet.png", render_jet(img, map, c.saliency.alpha));
  const auto [lo, hi] = std::minmax_element(map.values.begin(), map.values.end());
  double mean = 0;
  for (float v : map.values) mean += v;
  mean /= static_cast<double>(map.values.size());
  return {{"map", prefix.string() + ".png"}, {"label", label}, {"min", *lo}, {"max", *hi}, {"mean", mean}};
}

json run_select(const RunConfig& c, const SelectRequest& r) {
  c.validate();
  const auto store = open_feature_store(c.paths.feature_store);
  const auto model = load_model(c);
  ScoringOptions so;
  so.k = c.teach.k;
  so.seed = c.seed_for("select");
  const auto scores = score_candidate_space(model, store, r.target, r.y_star, r.y_alt, so);
  if (!r.export_scores.empty()) {
    ensure_parent(r.export_scores);
    std::ofstream out(r.export_scores);
    if (!out) fail(ErrorCode::Io, "cannot write " + r.export_scores.string());
    out << to_json(scores).dump() << '\n';
  }
  SelectionPolicy policy;
  if (r.policy == "helpful") policy = SelectionPolicy::helpful();
  else if (r.policy == "unhelpful") policy = SelectionPolicy::unhelpful();
  else if (r.policy == "random") policy = SelectionPolicy::random_bin(r.bin);
  else fail(ErrorCode::InvalidArgument, "unknown policy '" + r.policy + "' (helpful, random, unhelpful)");
  policy.helpful_threshold = c.teach.helpful_threshold;
  policy.unhelpful_threshold = c.teach.unhelpful_threshold;
  const auto cand = select_examples(scores, policy, c.seed_for("select-pick"));
  json j = to_json(cand);
  j["n_candidates"] = scores.rows() * scores.cols();
  return j;
}

json run_metrics(const RunConfig& c, const fs::path& trialset, const fs::path& responses_path) {
  const auto tset = load_trialset(trialset);
  const auto responses = load_responses_csv(responses_path);
  const auto timings = session_timings(responses);
  const auto kept = exclusion_filter(timings);
  std::vector<std::string> excluded;
  for (const auto& s : timings) {
    if (std::find(kept.begin(), kept.end(), s.participant) == kept.end()) excluded.push_back(s.participant);
  }
  std::vector<Response> filtered;
  for (const auto& r : responses) {
    if (std::find(kept.begin(), kept.end(), r.participant) != kept.end()) filtered.push_back(r);
  }
  const auto report = fidelity_report_with_ci(tset, filtered, c.metrics.n_resamples, c.seed_for("metrics"),
                                              c.metrics.method);
  const auto prof = idealized_profiles(tset);
  return {{"report", to_json(report)},
          {"participants", kept.size()},
          {"excluded", excluded},
          {"n_responses", filtered.size()},
          {"profiles",
           {{"random", to_json(prof.random_agent)},
            {"perfect", to_json(prof.perfect_agent)},
            {"belief_projector", to_json(prof.belief_projector)}}}};
}

}  // namespace bteach
