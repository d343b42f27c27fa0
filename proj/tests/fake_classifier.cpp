// Out-of-process classifier speaking the newline-delimited JSON protocol.
// Probability of label i is the mean brightness of the image for i == 0 and
// 1 - brightness otherwise. Flags: --fail-after N (exit after N replies),
// --garbage (reply with a non-JSON line), --wrong-id.
#include <cstring>
#include <iostream>
#include <string>

#include <json.hpp>

#include "bteach/classifier.hpp"

int main(int argc, char** argv) {
  long fail_after = -1;
  bool garbage = false, wrong_id = false;
  for (int i = 1; i < argc; ++i) {
    if (!std::strcmp(argv[i], "--fail-after") && i + 1 < argc) fail_after = std::stol(argv[++i]);
    else if (!std::strcmp(argv[i], "--garbage")) garbage = true;
    else if (!std::strcmp(argv[i], "--wrong-id")) wrong_id = true;
  }
  std::string line;
  long served = 0;
  while (std::getline(std::cin, line)) {
    if (fail_after >= 0 && served >= fail_after) return 3;
    if (garbage) {
      std::cout << "not json" << std::endl;
      continue;
    }
    const auto req = nlohmann::json::parse(line);
    const auto img = bteach::protocol::decode_image(req);
    double mean = 0;
    for (float v : img.rgb) mean += v;
    mean /= static_cast<double>(img.rgb.empty() ? 1 : img.rgb.size());
    nlohmann::json probs = nlohmann::json::array();
    const auto& labels = req["labels"];
    for (std::size_t i = 0; i < labels.size(); ++i) probs.push_back(i == 0 ? mean : 1.0 - mean);
    std::string id = req["id"].get<std::string>();
    if (wrong_id) id += "-x";
    std::cout << nlohmann::json{{"id", id}, {"probs", probs}}.dump() << std::endl;
    ++served;
  }
  return 0;
}
