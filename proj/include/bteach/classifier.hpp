#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bteach/saliency.hpp"

namespace bteach {

// Built-in linear classifier over an average-pooled grid of the image.
// logits_k = bias_k + <weights_k, pool(image)>; probabilities are the softmax
// over all known labels, reported for the requested subset.
class ToyLinearClassifier : public MaskedClassifier {
 public:
  ToyLinearClassifier(std::vector<std::string> labels, int grid, std::vector<std::vector<double>> weights,
                      std::vector<double> bias);

  std::vector<double> classify(const FloatImage& image, std::span<const std::string> labels) const override;

  // grid * grid * 3 pooled features, cell-major then channel.
  std::vector<double> features(const FloatImage& image) const;

  const std::vector<std::string>& labels() const { return labels_; }
  int grid() const { return grid_; }

  nlohmann::json to_json() const;
  static ToyLinearClassifier from_json(const nlohmann::json& j);
  static ToyLinearClassifier load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> labels_;
  int grid_;
  std::vector<std::vector<double>> weights_;
  std::vector<double> bias_;
};

// Wire format shared with out-of-process classifiers (one JSON object per line
// on stdio, or the body of an HTTP POST):
//   request  {"id", "labels": [...], "image": {"w", "h", "data_b64"}}
//   response {"id", "probs": [...]}   or   {"id", "error": "..."}
// data_b64 is base64 of raw interleaved RGB little-endian float32.
namespace protocol {

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

nlohmann::json make_request(const std::string& id, const FloatImage& image, std::span<const std::string> labels);
FloatImage decode_image(const nlohmann::json& request);
// Validates a response against the request id and label count.
std::vector<double> parse_response(const nlohmann::json& response, const std::string& id, std::size_t n_labels);

}  // namespace protocol

// Talks to a child process over newline-delimited JSON on its stdin/stdout.
class StdioClassifier : public MaskedClassifier {
 public:
  explicit StdioClassifier(const std::string& command);
  ~StdioClassifier() override;
  StdioClassifier(const StdioClassifier&) = delete;
  StdioClassifier& operator=(const StdioClassifier&) = delete;

  std::vector<double> classify(const FloatImage& image, std::span<const std::string> labels) const override;

 private:
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  mutable std::mutex mutex_;
  mutable std::string buffer_;
  mutable std::uint64_t next_id_ = 0;
};

// POSTs protocol requests to http://host:port/path.
class HttpClassifier : public MaskedClassifier {
 public:
  explicit HttpClassifier(const std::string& url);
  std::vector<double> classify(const FloatImage& image, std::span<const std::string> labels) const override;

 private:
  std::string host_;
  int port_ = 80;
  std::string path_;
  mutable std::mutex mutex_;
  mutable std::uint64_t next_id_ = 0;
};

// {"kind": "toy", "path": ...} | {"kind": "stdio", "command": ...} | {"kind": "http", "url": ...}
std::unique_ptr<MaskedClassifier> make_classifier(const nlohmann::json& spec,
                                                  const std::filesystem::path& base_dir = {});

}  // namespace bteach
