#include "bteach.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>

#include <json.hpp>

#include "bteach/config.hpp"
#include "bteach/error.hpp"
#include "bteach/featstore.hpp"
#include "bteach/pipeline.hpp"
#include "bteach/plda.hpp"
#include "bteach/server.hpp"
#include "bteach/synth.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

struct bt_config {
  json raw;
  fs::path base_dir;
  bteach::RunConfig parsed;
};
struct bt_store {
  bteach::FeatureStore store;
};
struct bt_model {
  bteach::PldaModel model;
};
struct bt_server {
  std::unique_ptr<bteach::ExperimentServer> server;
};

namespace {

thread_local std::string last_error;

template <typename F>
bt_status guard(F&& f) {
  try {
    f();
    last_error.clear();
    return BT_OK;
  } catch (const bteach::Error& e) {
    last_error = e.what();
    return static_cast<bt_status>(e.code());
  } catch (const json::exception& e) {
    last_error = e.what();
    return BT_FORMAT;
  } catch (const fs::filesystem_error& e) {
    last_error = e.what();
    return BT_IO;
  } catch (const std::exception& e) {
    last_error = e.what();
    return BT_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return BT_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) bteach::fail(bteach::ErrorCode::InvalidArgument, std::string(what) + " must not be NULL");
}

char* dup(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void emit(char** out, const json& j) {
  if (out) *out = dup(j.dump());
}

}  // namespace

extern "C" {

const char* bt_version(void) { return "0.1.0"; }
const char* bt_last_error(void) { return last_error.c_str(); }
void bt_string_free(char* s) { std::free(s); }

const char* bt_status_name(bt_status s) {
  switch (s) {
    case BT_OK: return "ok";
    case BT_INVALID_ARGUMENT: return "invalid argument";
    case BT_IO: return "i/o error";
    case BT_FORMAT: return "format error";
    case BT_NUMERIC: return "numeric error";
    case BT_NO_QUALIFYING_CANDIDATE: return "no qualifying candidate";
    case BT_ALL_MASKS_REJECTED: return "all masks rejected";
    case BT_STATE: return "invalid state";
    case BT_CLASSIFIER: return "classifier error";
    case BT_INTERNAL: return "internal error";
  }
  return "unknown status";
}

bt_status bt_config_parse(const char* text, const char* base_dir, bt_config** out) {
  return guard([&] {
    require(text, "json");
    require(out, "out");
    auto c = std::make_unique<bt_config>();
    c->raw = json::parse(text);
    if (!c->raw.is_object()) bteach::fail(bteach::ErrorCode::Format, "config must be a JSON object");
    c->base_dir = base_dir ? fs::path(base_dir) : fs::path();
    c->parsed = bteach::parse_config(c->raw, c->base_dir);
    *out = c.release();
  });
}

bt_status bt_config_load(const char* path, bt_config** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    bteach::load_config(path);  // error messages name the file
    std::ifstream in(path);
    auto c = std::make_unique<bt_config>();
    c->raw = json::parse(in);
    c->base_dir = fs::absolute(path).parent_path();
    c->parsed = bteach::parse_config(c->raw, c->base_dir);
    *out = c.release();
  });
}

bt_status bt_config_patch(bt_config* config, const char* patch) {
  return guard([&] {
    require(config, "config");
    require(patch, "patch");
    auto raw = config->raw;
    raw.merge_patch(json::parse(patch));
    config->parsed = bteach::parse_config(raw, config->base_dir);
    config->raw = std::move(raw);
  });
}

bt_status bt_config_validate(const bt_config* config) {
  return guard([&] {
    require(config, "config");
    config->parsed.validate();
  });
}

bt_status bt_config_to_json(const bt_config* config, char** out) {
  return guard([&] {
    require(config, "config");
    emit(out, bteach::to_json(config->parsed));
  });
}

void bt_config_free(bt_config* config) { delete config; }

bt_status bt_cmd_fit(const bt_config* config, char** summary) {
  return guard([&] {
    require(config, "config");
    emit(summary, bteach::run_fit(config->parsed));
  });
}

bt_status bt_cmd_gen_trials(const bt_config* config, char** summary) {
  return guard([&] {
    require(config, "config");
    emit(summary, bteach::run_gen_trials(config->parsed));
  });
}

bt_status bt_cmd_saliency(const bt_config* config, const char* image, const char* label, const char* prefix,
                          char** summary) {
  return guard([&] {
    require(config, "config");
    require(image, "image");
    require(label, "label");
    require(prefix, "prefix");
    emit(summary, bteach::run_saliency(config->parsed, image, label, prefix));
  });
}

bt_status bt_cmd_select(const bt_config* config, const char* request, char** summary) {
  return guard([&] {
    require(config, "config");
    require(request, "request");
    const auto j = json::parse(request);
    bteach::SelectRequest r;
    r.target = j.at("target").get<std::string>();
    r.y_star = j.at("y_star").get<std::string>();
    r.y_alt = j.at("y_alt").get<std::string>();
    r.policy = j.value("policy", r.policy);
    r.bin = j.value("bin", 0);
    r.export_scores = j.value("export_scores", std::string());
    emit(summary, bteach::run_select(config->parsed, r));
  });
}

bt_status bt_cmd_metrics(const bt_config* config, const char* trialset, const char* responses, char** summary) {
  return guard([&] {
    require(config, "config");
    require(trialset, "trialset");
    require(responses, "responses");
    emit(summary, bteach::run_metrics(config->parsed, trialset, responses));
  });
}

bt_status bt_synth_write(const char* dir, const char* options, uint64_t seed) {
  return guard([&] {
    require(dir, "dir");
    bteach::SynthOptions o;
    o.seed = seed;
    if (options) {
      const auto j = json::parse(options);
      o.n_categories = j.value("n_categories", o.n_categories);
      o.items_per_category = j.value("items_per_category", o.items_per_category);
      o.dim = j.value("dim", o.dim);
      o.psi = j.value("psi", o.psi);
      o.noise = j.value("noise", o.noise);
      o.confusion_shift = j.value("confusion_shift", o.confusion_shift);
      o.max_error_rate = j.value("max_error_rate", o.max_error_rate);
      o.image_size = j.value("image_size", o.image_size);
    }
    bteach::write_synthetic_fixture(bteach::make_synthetic_fixture(o), dir, seed);
  });
}

bt_status bt_server_create(const bt_config* config, bt_server** out) {
  return guard([&] {
    require(config, "config");
    require(out, "out");
    auto s = std::make_unique<bt_server>();
    s->server = std::make_unique<bteach::ExperimentServer>(config->parsed);
    *out = s.release();
  });
}

bt_status bt_server_start(bt_server* server, int* port) {
  return guard([&] {
    require(server, "server");
    const int p = server->server->start();
    if (port) *port = p;
  });
}

bt_status bt_server_run(bt_server* server) {
  return guard([&] {
    require(server, "server");
    server->server->run();
  });
}

void bt_server_stop(bt_server* server) {
  if (server) server->server->stop();
}

void bt_server_free(bt_server* server) { delete server; }

bt_status bt_store_open(const char* path, bt_store** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new bt_store{bteach::open_feature_store(path)};
  });
}

size_t bt_store_size(const bt_store* store) { return store ? store->store.size() : 0; }
size_t bt_store_dim(const bt_store* store) { return store ? store->store.dim() : 0; }
void bt_store_free(bt_store* store) { delete store; }

bt_status bt_model_fit(const bt_store* store, size_t q, bt_model** out) {
  return guard([&] {
    require(store, "store");
    require(out, "out");
    *out = new bt_model{bteach::fit_plda(store->store, q)};
  });
}

bt_status bt_model_load(const char* path, bt_model** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new bt_model{bteach::load_plda(path)};
  });
}

bt_status bt_model_save(const bt_model* model, const char* path) {
  return guard([&] {
    require(model, "model");
    require(path, "path");
    bteach::save_plda(model->model, path);
  });
}

size_t bt_model_q(const bt_model* model) { return model ? model->model.q : 0; }

bt_status bt_model_psi(const bt_model* model, double* out, size_t n) {
  return guard([&] {
    require(model, "model");
    require(out, "out");
    const auto m = std::min<size_t>(n, static_cast<size_t>(model->model.psi.size()));
    for (size_t i = 0; i < m; ++i) out[i] = model->model.psi[static_cast<Eigen::Index>(i)];
  });
}

bt_status bt_pair_logdensity(const bt_model* model, const bt_store* store, const char* target, const char* a,
                             const char* b, double* out) {
  return guard([&] {
    require(model, "model");
    require(store, "store");
    require(target, "target");
    require(a, "a");
    require(b, "b");
    require(out, "out");
    const auto& s = store->store;
    auto latent = [&](const char* id) { return bteach::to_latent(model->model, s.item(s.index_of(id)).vector); };
    *out = bteach::pair_logdensity(model->model, latent(target), latent(a), latent(b));
  });
}

void bt_model_free(bt_model* model) { delete model; }

}  // extern "C"
