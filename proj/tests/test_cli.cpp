#include <doctest.h>

#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>

#include <httplib.h>
#include <json.hpp>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const fs::path& workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("bteach_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Result run(const std::string& args) {
  const auto out = workdir() / "stdout.txt";
  const auto err = workdir() / "stderr.txt";
  const std::string cmd = std::string(BTEACH_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::string cfg(const std::string& name) { return "--config " + (workdir() / name / "config.json").string(); }

void make_fixture(const std::string& name) {
  const auto r = run("synth " + (workdir() / name).string() +
                     R"( --options '{"n_categories": 30, "items_per_category": 12, "image_size": 8}' --seed 2)");
  REQUIRE(r.code == 0);
  // Small trial counts and mask grid for speed.
  std::ifstream in(workdir() / name / "config.json");
  auto j = json::parse(in);
  j.merge_patch(json{{"teach", {{"k", 60}}},
                     {"trialgen", {{"n_correct", 5}, {"n_incorrect", 10}}},
                     {"saliency", {{"width", 8}, {"height", 8}, {"length_scale", 1.0}, {"n_masks", 10}}},
                     {"serve", {{"conditions", {{"specific-none-none", 1}, {"specific-helpful-blur", nullptr}, {"generic-helpful-blur", nullptr}}}}}});
  std::ofstream(workdir() / name / "config.json") << j.dump(2);
}

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(run("--help").code == 0);
  CHECK(run("").code != 0);
  CHECK(run("frobnicate").code != 0);
  CHECK(run("gen-trials --examples sometimes").code != 0);
}

TEST_CASE("fit: success, determinism, missing store") {
  make_fixture("fit");
  const auto a = run(cfg("fit") + " fit");
  REQUIRE(a.code == 0);
  const auto summary = json::parse(a.out);
  CHECK(summary.contains("psi"));
  const auto model = workdir() / "fit" / "out" / "model.json";
  REQUIRE(fs::exists(model));
  const auto first = slurp(model);
  CHECK(run(cfg("fit") + " fit").code == 0);
  CHECK(slurp(model) == first);

  std::ofstream(workdir() / "fit" / "broken.json") << R"({"paths": {"feature_store": "gone/store"}})";
  const auto bad = run("--config " + (workdir() / "fit" / "broken.json").string() + " fit");
  CHECK(bad.code != 0);
  CHECK(bad.err.find("gone/store") != std::string::npos);
}

TEST_CASE("gen-trials, select, saliency and metrics") {
  make_fixture("flow");
  REQUIRE(run(cfg("flow") + " fit").code == 0);
  const auto gen = run(cfg("flow") + " gen-trials --examples helpful --map jet");
  REQUIRE(gen.code == 0);
  const auto g = json::parse(gen.out);
  CHECK(g["n_trials"] == 15);
  CHECK(g["assets_per_trial"] == 10);
  const auto none = json::parse(run(cfg("flow") + " gen-trials --examples none --map none").out);
  CHECK(none["assets_per_trial"] == 1);

  const auto sel = run(cfg("flow") + " select c002_i00 c002 c027 --policy helpful");
  REQUIRE(sel.code == 0);
  const auto s = json::parse(sel.out);
  CHECK(s["f_L"].get<double>() > 0.8);
  CHECK(s.contains("posterior"));

  const auto prefix = workdir() / "flow" / "one";
  CHECK(run(cfg("flow") + " saliency " + (workdir() / "flow" / "images" / "c002_i00.png").string() + " c002 -o " +
            prefix.string())
            .code == 0);
  CHECK(fs::exists(prefix.string() + "_blur.png"));

  const auto tset_path = g["trialset"].get<std::string>();
  std::ifstream in(tset_path);
  const auto tset = json::parse(in);
  {
    std::ofstream out(workdir() / "flow" / "responses.csv");
    out << "participant,trial_index,choice,rt_ms\n";
    for (std::size_t i = 0; i < tset["trials"].size(); ++i)
      out << "p1," << i << "," << tset["trials"][i]["ground_truth"].get<std::string>() << ",1500\n";
  }
  const auto met = run(cfg("flow") + " metrics " + tset_path + " " + (workdir() / "flow" / "responses.csv").string());
  REQUIRE(met.code == 0);
  const auto m = json::parse(met.out);
  CHECK(m["report"]["sensitivity"] == 1.0);
  CHECK(m["report"]["specificity"] == 0.0);
}

TEST_CASE("serve answers requests and exits cleanly on SIGTERM") {
  make_fixture("serve");
  REQUIRE(run(cfg("serve") + " fit").code == 0);
  REQUIRE(run(cfg("serve") + " gen-trials --examples none --map none").code == 0);
  const auto log = workdir() / "serve" / "serve.log";
  const pid_t pid = ::fork();
  REQUIRE(pid >= 0);
  if (pid == 0) {
    const std::string redirect = std::string("exec ") + BTEACH_CLI + " " + cfg("serve") + " serve --port 0 >" + log.string();
    ::execl("/bin/sh", "sh", "-c", redirect.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  int port = 0;
  for (int i = 0; i < 200 && port == 0; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    const auto text = slurp(log);
    if (auto at = text.find("serving on port "); at != std::string::npos && text.find('\n', at) != std::string::npos)
      port = std::stoi(text.substr(at + 16));
  }
  REQUIRE(port > 0);
  httplib::Client client("127.0.0.1", port);
  auto res = client.Get("/api/session");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["condition"]["key"] == "specific-none-none");
  ::kill(pid, SIGTERM);
  int status = 0;
  ::waitpid(pid, &status, 0);
  CHECK(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 0);
}
