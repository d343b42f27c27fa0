// bteach command-line tool. Talks to the library only through bteach.h.
#include <csignal>
#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "bteach.h"

namespace {

using nlohmann::json;

struct Failure {
  int code;
};

void check(bt_status s) {
  if (s != BT_OK) {
    std::cerr << "error (" << bt_status_name(s) << "): " << bt_last_error() << '\n';
    throw Failure{static_cast<int>(s)};
  }
}

void print(char* summary) {
  if (!summary) return;
  std::cout << json::parse(summary).dump(2) << '\n';
  bt_string_free(summary);
}

struct ConfigHandle {
  bt_config* ptr = nullptr;
  ~ConfigHandle() { bt_config_free(ptr); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian teaching toolkit: example selection, saliency maps, 2AFC trials and fidelity metrics"};
  app.fallthrough();  // global options may follow the subcommand
  app.require_subcommand(1);
  std::string config_path = "config.json";
  std::optional<std::uint64_t> seed;
  app.add_option("-c,--config", config_path, "configuration file");
  app.add_option("--seed", seed, "override the master seed");

  auto* fit = app.add_subcommand("fit", "fit the PLDA explainee model");

  auto* gen = app.add_subcommand("gen-trials", "assemble a trial set and render its assets");
  std::string examples, map;
  gen->add_option("--examples", examples, "none | helpful | random")->check(CLI::IsMember({"none", "helpful", "random"}));
  gen->add_option("--map", map, "none | blur | jet")->check(CLI::IsMember({"none", "blur", "jet"}));

  auto* sal = app.add_subcommand("saliency", "saliency map for one image and label");
  std::string image, label, prefix;
  sal->add_option("image", image, "PNG image")->required();
  sal->add_option("label", label, "class label")->required();
  sal->add_option("-o,--out", prefix, "output prefix")->required();

  auto* sel = app.add_subcommand("select", "select explanatory examples for one target");
  json request = json::object();
  std::string target, y_star, y_alt, policy = "helpful", export_scores;
  int bin = 0;
  sel->add_option("target", target, "target item id")->required();
  sel->add_option("y_star", y_star, "model prediction")->required();
  sel->add_option("y_alt", y_alt, "alternative category")->required();
  sel->add_option("--policy", policy, "helpful | random | unhelpful")
      ->check(CLI::IsMember({"helpful", "random", "unhelpful"}));
  sel->add_option("--bin", bin, "fidelity bin for the random policy")->check(CLI::Range(0, 4));
  sel->add_option("--export-scores", export_scores, "write the full candidate score matrix as JSON");

  auto* serve = app.add_subcommand("serve", "run the experiment server");
  int port = -1;
  serve->add_option("--port", port, "override serve.port (0 picks a free port)");

  auto* met = app.add_subcommand("metrics", "fidelity report for collected responses");
  std::string trialset, responses;
  met->add_option("trialset", trialset, "trial set JSON")->required();
  met->add_option("responses", responses, "responses CSV")->required();

  auto* synth = app.add_subcommand("synth", "write a synthetic demo fixture");
  std::string synth_dir;
  std::string synth_options;
  synth->add_option("dir", synth_dir, "output directory")->required();
  synth->add_option("--options", synth_options, "JSON object of fixture options");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      check(bt_synth_write(synth_dir.c_str(), synth_options.empty() ? nullptr : synth_options.c_str(), seed.value_or(1)));
      std::cout << "wrote " << synth_dir << "/config.json\n";
      return 0;
    }

    ConfigHandle cfg;
    check(bt_config_load(config_path.c_str(), &cfg.ptr));
    json patch = json::object();
    if (seed) patch["seed"] = *seed;
    if (!examples.empty()) patch["trialgen"]["examples"] = examples;
    if (!map.empty()) patch["trialgen"]["map"] = map;
    if (port >= 0) patch["serve"]["port"] = port;
    if (!patch.empty()) check(bt_config_patch(cfg.ptr, patch.dump().c_str()));

    char* summary = nullptr;
    if (*fit) {
      check(bt_cmd_fit(cfg.ptr, &summary));
    } else if (*gen) {
      check(bt_cmd_gen_trials(cfg.ptr, &summary));
    } else if (*sal) {
      check(bt_cmd_saliency(cfg.ptr, image.c_str(), label.c_str(), prefix.c_str(), &summary));
    } else if (*sel) {
      request = {{"target", target}, {"y_star", y_star}, {"y_alt", y_alt}, {"policy", policy}, {"bin", bin}};
      if (!export_scores.empty()) request["export_scores"] = export_scores;
      check(bt_cmd_select(cfg.ptr, request.dump().c_str(), &summary));
    } else if (*met) {
      check(bt_cmd_metrics(cfg.ptr, trialset.c_str(), responses.c_str(), &summary));
    } else if (*serve) {
      // Block the stop signals before any thread exists so they arrive here.
      sigset_t set;
      sigemptyset(&set);
      sigaddset(&set, SIGINT);
      sigaddset(&set, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &set, nullptr);
      bt_server* server = nullptr;
      check(bt_server_create(cfg.ptr, &server));
      int bound = 0;
      const auto s = bt_server_start(server, &bound);
      if (s != BT_OK) {
        bt_server_free(server);
        check(s);
      }
      std::cout << "serving on port " << bound << std::endl;
      int sig = 0;
      sigwait(&set, &sig);
      bt_server_stop(server);
      bt_server_free(server);
      return 0;
    }
    print(summary);
  } catch (const Failure& f) {
    return f.code;
  }
  return 0;
}
