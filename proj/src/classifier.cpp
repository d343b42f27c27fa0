#include "bteach/classifier.hpp"

#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <regex>

#include <httplib.h>

#include "bteach/error.hpp"

namespace bteach {

using nlohmann::json;

ToyLinearClassifier::ToyLinearClassifier(std::vector<std::string> labels, int grid,
                                         std::vector<std::vector<double>> weights, std::vector<double> bias)
    : labels_(std::move(labels)), grid_(grid), weights_(std::move(weights)), bias_(std::move(bias)) {
  if (grid_ <= 0) fail(ErrorCode::InvalidArgument, "toy classifier grid must be positive");
  if (labels_.empty() || weights_.size() != labels_.size() || bias_.size() != labels_.size()) {
    fail(ErrorCode::Format, "toy classifier needs one weight row and bias per label");
  }
  const auto n_features = static_cast<std::size_t>(grid_ * grid_ * 3);
  for (const auto& w : weights_) {
    if (w.size() != n_features) fail(ErrorCode::Format, "toy classifier weight row has the wrong length");
  }
}

std::vector<double> ToyLinearClassifier::features(const FloatImage& image) const {
  std::vector<double> sums(static_cast<std::size_t>(grid_ * grid_ * 3), 0.0);
  std::vector<double> counts(static_cast<std::size_t>(grid_ * grid_), 0.0);
  for (int y = 0; y < image.height; ++y) {
    const int gy = std::min(grid_ - 1, y * grid_ / image.height);
    for (int x = 0; x < image.width; ++x) {
      const int gx = std::min(grid_ - 1, x * grid_ / image.width);
      const auto cell = static_cast<std::size_t>(gy * grid_ + gx);
      const std::size_t p = static_cast<std::size_t>(y) * static_cast<std::size_t>(image.width) + static_cast<std::size_t>(x);
      for (std::size_t c = 0; c < 3; ++c) sums[cell * 3 + c] += image.rgb[3 * p + c];
      counts[cell] += 1.0;
    }
  }
  for (std::size_t cell = 0; cell < counts.size(); ++cell)
    for (std::size_t c = 0; c < 3; ++c)
      if (counts[cell] > 0) sums[cell * 3 + c] /= counts[cell];
  return sums;
}

std::vector<double> ToyLinearClassifier::classify(const FloatImage& image, std::span<const std::string> labels) const {
  const auto feats = features(image);
  std::vector<double> logits(labels_.size());
  for (std::size_t k = 0; k < labels_.size(); ++k) {
    double z = bias_[k];
    for (std::size_t f = 0; f < feats.size(); ++f) z += weights_[k][f] * feats[f];
    logits[k] = z;
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  double norm = 0;
  for (double z : logits) norm += std::exp(z - top);
  std::vector<double> out;
  out.reserve(labels.size());
  for (const auto& label : labels) {
    auto it = std::find(labels_.begin(), labels_.end(), label);
    if (it == labels_.end()) fail(ErrorCode::Classifier, "toy classifier does not know label '" + label + "'");
    out.push_back(std::exp(logits[static_cast<std::size_t>(it - labels_.begin())] - top) / norm);
  }
  return out;
}

json ToyLinearClassifier::to_json() const {
  return json{{"kind", "toy-linear"}, {"labels", labels_}, {"grid", grid_}, {"weights", weights_}, {"bias", bias_}};
}

ToyLinearClassifier ToyLinearClassifier::from_json(const json& j) {
  try {
    return ToyLinearClassifier(j.at("labels").get<std::vector<std::string>>(), j.at("grid").get<int>(),
                               j.at("weights").get<std::vector<std::vector<double>>>(),
                               j.at("bias").get<std::vector<double>>());
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, std::string("malformed toy classifier: ") + e.what());
  }
}

ToyLinearClassifier ToyLinearClassifier::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open classifier file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, "cannot parse " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

void ToyLinearClassifier::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << to_json().dump() << '\n';
}

namespace protocol {

namespace {
constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i < bytes.size()) {
    std::uint32_t v = bytes[i] << 16;
    if (i + 1 < bytes.size()) v |= bytes[i + 1] << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += i + 1 < bytes.size() ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  std::int8_t lookup[256];
  std::fill(std::begin(lookup), std::end(lookup), std::int8_t{-1});
  for (int k = 0; k < 64; ++k) lookup[static_cast<unsigned char>(kAlphabet[k])] = static_cast<std::int8_t>(k);
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  std::uint32_t acc = 0;
  int bits = 0;
  for (char ch : text) {
    if (ch == '=') break;
    const auto v = lookup[static_cast<unsigned char>(ch)];
    if (v < 0) fail(ErrorCode::Format, "invalid base64 character");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xFF));
    }
  }
  return out;
}

json make_request(const std::string& id, const FloatImage& image, std::span<const std::string> labels) {
  std::vector<std::uint8_t> raw(image.rgb.size() * 4);
  for (std::size_t i = 0; i < image.rgb.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(image.rgb[i]);
    raw[4 * i] = static_cast<std::uint8_t>(bits & 0xFF);
    raw[4 * i + 1] = static_cast<std::uint8_t>((bits >> 8) & 0xFF);
    raw[4 * i + 2] = static_cast<std::uint8_t>((bits >> 16) & 0xFF);
    raw[4 * i + 3] = static_cast<std::uint8_t>(bits >> 24);
  }
  return json{{"id", id},
              {"labels", std::vector<std::string>(labels.begin(), labels.end())},
              {"image", {{"w", image.width}, {"h", image.height}, {"data_b64", base64_encode(raw)}}}};
}

FloatImage decode_image(const json& request) {
  const auto& img = request.at("image");
  FloatImage out;
  out.width = img.at("w").get<int>();
  out.height = img.at("h").get<int>();
  const auto raw = base64_decode(img.at("data_b64").get<std::string>());
  if (out.width <= 0 || out.height <= 0 || raw.size() != out.pixels() * 3 * 4) {
    fail(ErrorCode::Format, "image payload does not match its declared size");
  }
  out.rgb.resize(out.pixels() * 3);
  for (std::size_t i = 0; i < out.rgb.size(); ++i) {
    const std::uint32_t bits = raw[4 * i] | (raw[4 * i + 1] << 8) | (raw[4 * i + 2] << 16) |
                               (static_cast<std::uint32_t>(raw[4 * i + 3]) << 24);
    out.rgb[i] = std::bit_cast<float>(bits);
  }
  return out;
}

std::vector<double> parse_response(const json& response, const std::string& id, std::size_t n_labels) {
  if (!response.is_object() || !response.contains("id") || response["id"] != id) {
    fail(ErrorCode::Classifier, "classifier response id does not match request '" + id + "'");
  }
  if (response.contains("error")) {
    fail(ErrorCode::Classifier, "classifier error for '" + id + "': " + response["error"].dump());
  }
  if (!response.contains("probs") || !response["probs"].is_array() || response["probs"].size() != n_labels) {
    fail(ErrorCode::Classifier, "classifier response '" + id + "' needs " + std::to_string(n_labels) + " probs");
  }
  std::vector<double> probs;
  for (const auto& p : response["probs"]) {
    if (!p.is_number()) fail(ErrorCode::Classifier, "non-numeric probability in response '" + id + "'");
    probs.push_back(p.get<double>());
  }
  return probs;
}

}  // namespace protocol

StdioClassifier::StdioClassifier(const std::string& command) {
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) {
    fail(ErrorCode::Io, std::string("socketpair failed: ") + std::strerror(errno));
  }
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(fds[0]);
    ::close(fds[1]);
    fail(ErrorCode::Io, std::string("fork failed: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::close(fds[0]);
    ::dup2(fds[1], STDIN_FILENO);
    ::dup2(fds[1], STDOUT_FILENO);
    ::close(fds[1]);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(fds[1]);
  pid_ = pid;
  to_child_ = fds[0];
  from_child_ = fds[0];
}

StdioClassifier::~StdioClassifier() {
  if (to_child_ >= 0) {
    ::shutdown(to_child_, SHUT_WR);
    ::close(to_child_);
  }
  if (pid_ > 0) {
    int status = 0;
    ::waitpid(pid_, &status, 0);
  }
}

std::vector<double> StdioClassifier::classify(const FloatImage& image, std::span<const std::string> labels) const {
  std::lock_guard<std::mutex> lock(mutex_);
  const std::string id = "req-" + std::to_string(next_id_++);
  const std::string line = protocol::make_request(id, image, labels).dump() + "\n";
  std::size_t sent = 0;
  while (sent < line.size()) {
    const auto n = ::send(to_child_, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail(ErrorCode::Classifier, std::string("classifier process closed its input: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
  std::size_t newline;
  while ((newline = buffer_.find('\n')) == std::string::npos) {
    char chunk[4096];
    const auto n = ::recv(from_child_, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) fail(ErrorCode::Classifier, "classifier process exited before answering '" + id + "'");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
  const std::string reply = buffer_.substr(0, newline);
  buffer_.erase(0, newline + 1);
  json response;
  try {
    response = json::parse(reply);
  } catch (const json::exception& e) {
    fail(ErrorCode::Classifier, std::string("classifier sent invalid JSON: ") + e.what());
  }
  return protocol::parse_response(response, id, labels.size());
}

HttpClassifier::HttpClassifier(const std::string& url) {
  static const std::regex pattern(R"(^http://([^/:]+)(?::(\d+))?(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, pattern)) fail(ErrorCode::InvalidArgument, "unsupported classifier URL '" + url + "'");
  host_ = m[1].str();
  port_ = m[2].matched ? std::stoi(m[2].str()) : 80;
  path_ = m[3].matched ? m[3].str() : "/";
}

std::vector<double> HttpClassifier::classify(const FloatImage& image, std::span<const std::string> labels) const {
  std::string id;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    id = "req-" + std::to_string(next_id_++);
  }
  httplib::Client client(host_, port_);
  client.set_read_timeout(120, 0);
  const auto body = protocol::make_request(id, image, labels).dump();
  auto res = client.Post(path_, body, "application/json");
  if (!res) fail(ErrorCode::Classifier, "classifier HTTP request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) fail(ErrorCode::Classifier, "classifier HTTP status " + std::to_string(res->status));
  json response;
  try {
    response = json::parse(res->body);
  } catch (const json::exception& e) {
    fail(ErrorCode::Classifier, std::string("classifier sent invalid JSON: ") + e.what());
  }
  return protocol::parse_response(response, id, labels.size());
}

std::unique_ptr<MaskedClassifier> make_classifier(const json& spec, const std::filesystem::path& base_dir) {
  const auto kind = spec.value("kind", std::string("toy"));
  if (kind == "toy") {
    if (!spec.contains("path")) fail(ErrorCode::InvalidArgument, "toy classifier spec needs a 'path'");
    std::filesystem::path path = spec.at("path").get<std::string>();
    if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
    return std::make_unique<ToyLinearClassifier>(ToyLinearClassifier::load(path));
  }
  if (kind == "stdio" && !spec.contains("command")) fail(ErrorCode::InvalidArgument, "stdio classifier spec needs a 'command'");
  if (kind == "http" && !spec.contains("url")) fail(ErrorCode::InvalidArgument, "http classifier spec needs a 'url'");
  if (kind == "stdio") return std::make_unique<StdioClassifier>(spec.at("command").get<std::string>());
  if (kind == "http") return std::make_unique<HttpClassifier>(spec.at("url").get<std::string>());
  fail(ErrorCode::InvalidArgument, "unknown classifier kind '" + kind + "'");
}

}  // namespace bteach
