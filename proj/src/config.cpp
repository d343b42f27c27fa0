#include "bteach/config.hpp"

#include <fstream>

#include "bteach/error.hpp"
#include "bteach/seed.hpp"

namespace bteach {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t RunConfig::seed_for(const char* module) const { return derive_seed(seed, module); }

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  fs::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key) && !obj[key].is_null()) out = obj[key].get<T>();
}

void read_path(const json& obj, const char* key, const fs::path& base, fs::path& out) {
  if (obj.contains(key) && !obj[key].is_null()) out = resolve(base, obj[key].get<std::string>());
}

}  // namespace

RunConfig parse_config(const json& j, const fs::path& base_dir) {
  RunConfig c;
  c.base_dir = base_dir;
  try {
    read(j, "seed", c.seed);
    if (j.contains("paths")) {
      const auto& p = j["paths"];
      read_path(p, "feature_store", base_dir, c.paths.feature_store);
      read_path(p, "image_root", base_dir, c.paths.image_root);
      read_path(p, "output_dir", base_dir, c.paths.output_dir);
      read_path(p, "predictions", base_dir, c.paths.predictions);
      read_path(p, "model", base_dir, c.paths.model);
      read_path(p, "familiarity", base_dir, c.paths.familiarity);
    }
    if (c.paths.output_dir.empty()) c.paths.output_dir = resolve(base_dir, "out");
    if (c.paths.model.empty()) c.paths.model = c.paths.output_dir / "model.json";
    if (j.contains("plda")) read(j["plda"], "q", c.plda.q);
    if (j.contains("teach")) {
      const auto& t = j["teach"];
      read(t, "k", c.teach.k);
      read(t, "helpful_threshold", c.teach.helpful_threshold);
      read(t, "unhelpful_threshold", c.teach.unhelpful_threshold);
    }
    if (j.contains("saliency")) {
      const auto& s = j["saliency"];
      read(s, "width", c.saliency.gp.width);
      read(s, "height", c.saliency.gp.height);
      read(s, "mean", c.saliency.gp.mean);
      read(s, "marginal_std", c.saliency.gp.marginal_std);
      read(s, "length_scale", c.saliency.gp.length_scale);
      read(s, "n_masks", c.saliency.gp.n_masks);
      read(s, "jitter", c.saliency.gp.jitter);
      read(s, "alpha", c.saliency.alpha);
      if (s.contains("classifier")) c.saliency.classifier = s["classifier"];
    }
    if (j.contains("trialgen")) {
      const auto& t = j["trialgen"];
      read(t, "n_correct", c.trialgen.n_correct);
      read(t, "n_incorrect", c.trialgen.n_incorrect);
      read(t, "pool_size", c.trialgen.pool_size);
      read(t, "max_redraws", c.trialgen.max_redraws);
      read(t, "widen", c.trialgen.widen);
      if (t.contains("examples")) c.trialgen.examples = examples_mode_from_string(t["examples"].get<std::string>());
      if (t.contains("map")) c.trialgen.map = map_mode_from_string(t["map"].get<std::string>());
    }
    if (j.contains("serve")) {
      const auto& s = j["serve"];
      read(s, "host", c.serve.host);
      read(s, "port", c.serve.port);
      read(s, "conditions", c.serve.conditions);
      read_path(s, "data_dir", base_dir, c.serve.data_dir);
      read_path(s, "static_dir", base_dir, c.serve.static_dir);
    }
    if (c.serve.data_dir.empty()) c.serve.data_dir = c.paths.output_dir / "serve";
    if (j.contains("metrics")) {
      const auto& m = j["metrics"];
      read(m, "n_resamples", c.metrics.n_resamples);
      if (m.contains("method")) {
        const auto method = m["method"].get<std::string>();
        if (method == "percentile") c.metrics.method = BootstrapMethod::Percentile;
        else if (method == "basic") c.metrics.method = BootstrapMethod::Basic;
        else fail(ErrorCode::InvalidArgument, "unknown bootstrap method '" + method + "'");
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, std::string("malformed config: ") + e.what());
  }
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, "cannot parse config " + path.string() + ": " + e.what());
  }
  return parse_config(j, fs::absolute(path).parent_path());
}

void RunConfig::validate() const {
  auto in_unit = [](double v) { return v > 0.0 && v < 1.0; };
  if (!in_unit(teach.helpful_threshold) || !in_unit(teach.unhelpful_threshold)) {
    fail(ErrorCode::InvalidArgument, "selection thresholds must lie in (0, 1)");
  }
  if (teach.k == 0) fail(ErrorCode::InvalidArgument, "teach.k must be positive");
  if (!(saliency.alpha >= 0.0 && saliency.alpha <= 1.0)) fail(ErrorCode::InvalidArgument, "saliency.alpha must be in [0, 1]");
  saliency.gp.validate();
  if (paths.feature_store.empty()) fail(ErrorCode::InvalidArgument, "paths.feature_store is required");
  if (!fs::exists(paths.feature_store)) fail(ErrorCode::Io, "feature store not found: " + paths.feature_store.string());
  if (!paths.image_root.empty() && !fs::is_directory(paths.image_root)) {
    fail(ErrorCode::Io, "image root not found: " + paths.image_root.string());
  }
  if (!paths.predictions.empty() && !fs::exists(paths.predictions)) {
    fail(ErrorCode::Io, "predictions file not found: " + paths.predictions.string());
  }
  if (!paths.familiarity.empty() && !fs::exists(paths.familiarity)) {
    fail(ErrorCode::Io, "familiarity ratings not found: " + paths.familiarity.string());
  }
  for (const auto& [key, weight] : serve.conditions) {
    condition_from_key(key);
    if (!(weight >= 0.0)) fail(ErrorCode::InvalidArgument, "condition weight for '" + key + "' must be >= 0");
  }
}

json to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["paths"] = {{"feature_store", c.paths.feature_store.string()}, {"image_root", c.paths.image_root.string()},
                {"output_dir", c.paths.output_dir.string()},       {"predictions", c.paths.predictions.string()},
                {"model", c.paths.model.string()},                 {"familiarity", c.paths.familiarity.string()}};
  j["plda"] = {{"q", c.plda.q}};
  j["teach"] = {{"k", c.teach.k}, {"helpful_threshold", c.teach.helpful_threshold},
                {"unhelpful_threshold", c.teach.unhelpful_threshold}};
  j["saliency"] = {{"width", c.saliency.gp.width},   {"height", c.saliency.gp.height},
                   {"mean", c.saliency.gp.mean},     {"marginal_std", c.saliency.gp.marginal_std},
                   {"length_scale", c.saliency.gp.length_scale}, {"n_masks", c.saliency.gp.n_masks},
                   {"jitter", c.saliency.gp.jitter}, {"alpha", c.saliency.alpha},
                   {"classifier", c.saliency.classifier}};
  j["trialgen"] = {{"n_correct", c.trialgen.n_correct}, {"n_incorrect", c.trialgen.n_incorrect},
                   {"pool_size", c.trialgen.pool_size}, {"examples", to_string(c.trialgen.examples)},
                   {"map", to_string(c.trialgen.map)},  {"max_redraws", c.trialgen.max_redraws},
                   {"widen", c.trialgen.widen}};
  j["serve"] = {{"host", c.serve.host}, {"port", c.serve.port}, {"conditions", c.serve.conditions},
                {"data_dir", c.serve.data_dir.string()}, {"static_dir", c.serve.static_dir.string()}};
  j["metrics"] = {{"n_resamples", c.metrics.n_resamples},
                  {"method", c.metrics.method == BootstrapMethod::Basic ? "basic" : "percentile"}};
  return j;
}

}  // namespace bteach
