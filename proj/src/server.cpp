#include "bteach/server.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include <httplib.h>

#include "bteach/error.hpp"
#include "bteach/metrics.hpp"
#include "bteach/pipeline.hpp"
#include "bteach/seed.hpp"

namespace bteach {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct Session {
  std::string id;
  ConditionFlags condition;
  std::vector<std::size_t> order;     // canonical trial indices in display order
  std::vector<bool> swap;             // per canonical index: show y_alt first
  std::map<std::size_t, Response> responses;
};

}  // namespace

struct ExperimentServer::Impl {
  RunConfig config;
  std::uint64_t seed = 0;
  std::vector<std::pair<ConditionFlags, double>> conditions;
  std::map<std::pair<ExamplesMode, MapMode>, TrialSet> trialsets;
  std::map<std::string, Session> sessions;
  std::size_t n_sessions_created = 0;
  std::size_t n_responses = 0;
  mutable std::mutex mutex;  // guards sessions and all writes
  httplib::Server http;
  std::thread thread;

  explicit Impl(const RunConfig& c) : config(c), seed(c.seed_for("serve")) {
    if (c.serve.conditions.empty()) {
      for (const auto& cond : all_conditions()) {
        if (fs::exists(trialset_path(c, cond.examples, cond.map))) conditions.emplace_back(cond, 1.0);
      }
    } else {
      for (const auto& [key, w] : c.serve.conditions) {
        if (w > 0) conditions.emplace_back(condition_from_key(key), w);
      }
    }
    if (conditions.empty()) fail(ErrorCode::State, "no servable condition: generate trial sets first");
    for (const auto& [cond, w] : conditions) {
      const auto key = std::make_pair(cond.examples, cond.map);
      if (trialsets.count(key)) continue;
      const auto path = trialset_path(c, cond.examples, cond.map);
      if (!fs::exists(path)) fail(ErrorCode::Io, "trial set for condition '" + cond.key() + "' not found: " + path.string());
      try {
        trialsets.emplace(key, load_trialset(path));
      } catch (const Error& e) {
        fail(ErrorCode::Format, "corrupt trial set " + path.string() + ": " + e.what());
      }
    }
    fs::create_directories(c.serve.data_dir);
    restore();
    routes();
  }

  const TrialSet& trials_of(const Session& s) const { return trialsets.at({s.condition.examples, s.condition.map}); }

  fs::path sessions_file() const { return config.serve.data_dir / "sessions.jsonl"; }
  fs::path responses_file(const ConditionFlags& c) const {
    return config.serve.data_dir / ("responses_" + c.key() + ".csv");
  }

  Session make_session(const std::string& id, const ConditionFlags& cond) const {
    Session s{id, cond, {}, {}, {}};
    const auto n = trialsets.at({cond.examples, cond.map}).trials.size();
    s.order.resize(n);
    std::iota(s.order.begin(), s.order.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(seed, "order:" + id));
    std::shuffle(s.order.begin(), s.order.end(), rng);
    s.swap.resize(n);
    for (std::size_t i = 0; i < n; ++i) s.swap[i] = (rng() & 1) != 0;
    return s;
  }

  void restore() {
    if (fs::exists(sessions_file())) {
      std::ifstream in(sessions_file());
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("session_id") || !j.contains("condition")) {
          fail(ErrorCode::Format, "corrupt session log " + sessions_file().string());
        }
        const auto id = j["session_id"].get<std::string>();
        const auto cond = condition_from_key(j["condition"].get<std::string>());
        if (!trialsets.count({cond.examples, cond.map})) {
          fail(ErrorCode::State, "session " + id + " uses condition '" + cond.key() + "' which is no longer served");
        }
        sessions.emplace(id, make_session(id, cond));
        ++n_sessions_created;
      }
    }
    std::vector<ConditionFlags> seen;
    for (const auto& [id, s] : sessions) {
      if (std::find(seen.begin(), seen.end(), s.condition) != seen.end()) continue;
      seen.push_back(s.condition);
      const auto path = responses_file(s.condition);
      if (!fs::exists(path)) continue;
      for (auto& r : load_responses_csv(path)) {
        auto it = sessions.find(r.participant);
        if (it == sessions.end()) continue;
        if (it->second.responses.emplace(r.trial_index, r).second) ++n_responses;
      }
    }
  }

  ConditionFlags pick_condition(const std::string& id) const {
    double total = 0;
    for (const auto& [c, w] : conditions) total += w;
    std::mt19937_64 rng(derive_seed(seed, "condition:" + id));
    double u = std::uniform_real_distribution<double>(0.0, total)(rng);
    for (const auto& [c, w] : conditions) {
      if (u < w) return c;
      u -= w;
    }
    return conditions.back().first;
  }

  json new_session() {
    std::lock_guard lock(mutex);
    std::string id;
    do {
      id = hex16(derive_seed(seed, static_cast<std::uint64_t>(n_sessions_created++)));
    } while (sessions.count(id));
    const auto cond = pick_condition(id);
    std::ofstream out(sessions_file(), std::ios::app);
    if (!out) fail(ErrorCode::Io, "cannot append to " + sessions_file().string());
    out << json{{"session_id", id}, {"condition", cond.key()}}.dump() << '\n';
    out.flush();
    sessions.emplace(id, make_session(id, cond));
    return condition_json(id, cond);
  }

  static json condition_json(const std::string& id, const ConditionFlags& c) {
    return {{"session_id", id},
            {"condition",
             {{"key", c.key()}, {"labels", to_string(c.labels)}, {"examples", to_string(c.examples)}, {"map", to_string(c.map)}}}};
  }

  // Only what the participant sees: no ground truth, no model prediction role.
  json blinded_trials(const Session& s) const {
    const auto& tset = trials_of(s);
    auto url = [](const std::string& rel) { return rel.rfind("assets/", 0) == 0 ? "/" + rel : "/assets/" + rel; };
    json out = json::array();
    for (std::size_t pos = 0; pos < s.order.size(); ++pos) {
      const auto idx = s.order[pos];
      const auto& t = tset.trials[idx];
      json j;
      j["position"] = pos;
      j["trial_index"] = idx;
      j["options"] = s.swap[idx] ? json{t.y_alt, t.y_star} : json{t.y_star, t.y_alt};
      json assets;
      if (!t.assets.target.empty()) assets["target"] = url(t.assets.target);
      if (t.assets.target_map) assets["target_map"] = url(*t.assets.target_map);
      // Example columns are shown in the same left/right order as the options.
      if (!t.assets.examples.empty()) {
        auto ex = t.assets.examples;
        auto exm = t.assets.example_maps;
        if (s.swap[idx] && ex.size() == 4) {
          std::swap_ranges(ex.begin(), ex.begin() + 2, ex.begin() + 2);
          if (exm.size() == 4) std::swap_ranges(exm.begin(), exm.begin() + 2, exm.begin() + 2);
        }
        json e = json::array(), em = json::array();
        for (const auto& a : ex) e.push_back(url(a));
        for (const auto& a : exm) em.push_back(url(a));
        assets["examples"] = e;
        if (!em.empty()) assets["example_maps"] = em;
      }
      j["assets"] = assets;
      out.push_back(std::move(j));
    }
    return {{"session_id", s.id}, {"condition", condition_json(s.id, s.condition)["condition"]}, {"trials", out}};
  }

  // Returns (status, body).
  std::pair<int, json> post_response(const std::string& body) {
    const auto j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return {400, {{"error", "body must be a JSON object"}}};
    Response r;
    try {
      r.participant = j.at("session").get<std::string>();
      const auto& ti = j.at("trial_index");
      if (!ti.is_number_integer() || ti.get<long long>() < 0) return {422, {{"error", "trial_index must be a non-negative integer"}}};
      r.trial_index = ti.get<std::size_t>();
      r.choice = j.at("choice").get<std::string>();
      const auto& rt = j.at("rt_ms");
      if (!rt.is_number() || rt.get<double>() < 0) return {422, {{"error", "rt_ms must be non-negative"}}};
      r.rt_ms = static_cast<std::uint64_t>(rt.get<double>());
    } catch (const json::exception&) {
      return {400, {{"error", "expected {session, trial_index, choice, rt_ms}"}}};
    }
    std::lock_guard lock(mutex);
    auto it = sessions.find(r.participant);
    if (it == sessions.end()) return {404, {{"error", "unknown session"}}};
    auto& s = it->second;
    const auto& tset = trials_of(s);
    if (r.trial_index >= tset.trials.size()) return {422, {{"error", "dangling trial index"}}};
    const auto& t = tset.trials[r.trial_index];
    if (r.choice != t.y_star && r.choice != t.y_alt) return {422, {{"error", "choice is not one of the trial options"}}};
    if (s.responses.count(r.trial_index)) return {200, {{"status", "duplicate"}}};
    const auto path = responses_file(s.condition);
    const bool fresh = !fs::exists(path);
    std::ofstream out(path, std::ios::app);
    if (!out) return {500, {{"error", "cannot persist response"}}};
    if (fresh) out << kResponsesHeader << '\n';
    append_response_csv(out, r);
    out.flush();
    s.responses.emplace(r.trial_index, r);
    ++n_responses;
    return {200, {{"status", "recorded"}, {"recorded", s.responses.size()}, {"total", tset.trials.size()}}};
  }

  std::pair<int, json> report(const std::string& id) const {
    std::lock_guard lock(mutex);
    auto it = sessions.find(id);
    if (it == sessions.end()) return {404, {{"error", "unknown session"}}};
    std::vector<Response> rs;
    for (const auto& [i, r] : it->second.responses) rs.push_back(r);
    auto j = to_json(fidelity_report(trials_of(it->second), rs));
    j["n_responses"] = rs.size();
    return {200, j};
  }

  static void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  void routes() {
    http.Get("/api/session", [this](const httplib::Request&, httplib::Response& res) { reply(res, 200, new_session()); });
    http.Get(R"(/api/trials/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mutex);
      auto it = sessions.find(req.matches[1].str());
      if (it == sessions.end()) return reply(res, 404, {{"error", "unknown session"}});
      reply(res, 200, blinded_trials(it->second));
    });
    http.Post("/api/responses", [this](const httplib::Request& req, httplib::Response& res) {
      const auto [status, body] = post_response(req.body);
      reply(res, status, body);
    });
    http.Get(R"(/api/report/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const auto [status, body] = report(req.matches[1].str());
      reply(res, status, body);
    });
    const auto assets = config.paths.output_dir / "assets";
    fs::create_directories(assets);
    http.set_mount_point("/assets", assets.string());
    if (!config.serve.static_dir.empty()) http.set_mount_point("/", config.serve.static_dir.string());
    http.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string msg = "internal error";
      try {
        if (ep) std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        msg = e.what();
      }
      reply(res, 500, {{"error", msg}});
    });
  }

  int bind() {
    const auto& s = config.serve;
    int port = s.port;
    // No SO_REUSEPORT: a second server on a busy port must fail, not share it.
    http.set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof(yes));
    });
    if (port == 0) {
      port = http.bind_to_any_port(s.host);
      if (port < 0) fail(ErrorCode::Io, "cannot bind " + s.host);
    } else if (!http.bind_to_port(s.host, port)) {
      fail(ErrorCode::Io, "cannot bind " + s.host + ":" + std::to_string(port) + " (port busy?)");
    }
    return port;
  }
};

ExperimentServer::ExperimentServer(const RunConfig& config) : impl_(std::make_unique<Impl>(config)) {}

ExperimentServer::~ExperimentServer() { stop(); }

int ExperimentServer::start() {
  const int port = impl_->bind();
  impl_->thread = std::thread([this] { impl_->http.listen_after_bind(); });
  impl_->http.wait_until_ready();
  return port;
}

void ExperimentServer::run() {
  impl_->bind();
  impl_->http.listen_after_bind();
}

void ExperimentServer::stop() {
  if (!impl_) return;
  impl_->http.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::size_t ExperimentServer::session_count() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->sessions.size();
}

std::size_t ExperimentServer::response_count() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->n_responses;
}

}  // namespace bteach
