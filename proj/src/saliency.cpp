#include "bteach/saliency.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "bteach/error.hpp"
#include "bteach/parallel.hpp"
#include "bteach/seed.hpp"

namespace bteach {

void GpMaskConfig::validate() const {
  if (width <= 0 || height <= 0) fail(ErrorCode::InvalidArgument, "mask width and height must be positive");
  if (!(length_scale > 0)) fail(ErrorCode::InvalidArgument, "GP length scale must be positive");
  if (!(marginal_std > 0)) fail(ErrorCode::InvalidArgument, "GP marginal std must be positive");
  if (n_masks < 1) fail(ErrorCode::InvalidArgument, "need at least one mask");
  if (!(jitter >= 0) || !std::isfinite(mean)) fail(ErrorCode::InvalidArgument, "invalid GP mean or jitter");
}

Eigen::MatrixXd rbf_kernel_1d(int n, double length_scale) {
  Eigen::MatrixXd k(n, n);
  const double denom = 2.0 * length_scale * length_scale;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double d = static_cast<double>(i - j);
      k(i, j) = std::exp(-d * d / denom);
    }
  return k;
}

namespace {

Eigen::MatrixXf cholesky_factor(int n, const GpMaskConfig& config, const char* axis) {
  Eigen::MatrixXd k = rbf_kernel_1d(n, config.length_scale);
  k.diagonal().array() += config.jitter;
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) {
    fail(ErrorCode::Numeric, std::string("RBF kernel along the ") + axis +
                                 " axis is not positive definite with jitter " + std::to_string(config.jitter));
  }
  Eigen::MatrixXd l = llt.matrixL();
  return l.cast<float>();
}

float sigmoid(float x) {
  if (x >= 0) return 1.0f / (1.0f + std::exp(-x));
  const float e = std::exp(x);
  return e / (1.0f + e);
}

}  // namespace

GpMaskSampler::GpMaskSampler(const GpMaskConfig& config) : config_(config) {
  config_.validate();
  chol_rows_ = cholesky_factor(config_.height, config_, "row (height)");
  chol_cols_ = cholesky_factor(config_.width, config_, "column (width)");
}

void GpMaskSampler::sample_field(std::uint64_t seed, std::size_t index, std::span<float> out) const {
  const int h = config_.height;
  const int w = config_.width;
  if (out.size() != static_cast<std::size_t>(w) * static_cast<std::size_t>(h)) {
    fail(ErrorCode::InvalidArgument, "mask buffer size mismatch");
  }
  std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(index)));
  std::normal_distribution<float> normal(0.0f, 1.0f);
  Eigen::MatrixXf z(h, w);
  for (int x = 0; x < w; ++x)
    for (int y = 0; y < h; ++y) z(y, x) = normal(rng);
  const Eigen::MatrixXf field = chol_rows_ * z * chol_cols_.transpose();
  const auto mean = static_cast<float>(config_.mean);
  const auto scale = static_cast<float>(config_.marginal_std);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)] =
          mean + scale * field(y, x);
}

void GpMaskSampler::sample_mask(std::uint64_t seed, std::size_t index, std::span<float> out) const {
  sample_field(seed, index, out);
  for (float& v : out) v = sigmoid(v);
}

MaskBatch sample_masks(const GpMaskConfig& config, std::uint64_t seed) {
  GpMaskSampler sampler(config);
  MaskBatch batch;
  batch.width = config.width;
  batch.height = config.height;
  batch.seed = seed;
  batch.masks.resize(config.n_masks);
  const std::size_t pixels = static_cast<std::size_t>(config.width) * static_cast<std::size_t>(config.height);
  parallel_for(config.n_masks, [&](std::size_t i) {
    batch.masks[i].resize(pixels);
    sampler.sample_mask(seed, i, batch.masks[i]);
  });
  return batch;
}

namespace {

// Shared reduction for both expected_saliency entry points. fill(i, out)
// writes mask i into out.
template <typename FillMask>
SaliencyMap weighted_mask_average(const MaskedClassifier& classifier, const Image& image, const std::string& label,
                                  int width, int height, std::size_t n_masks, FillMask&& fill) {
  if (image.width != width || image.height != height) {
    fail(ErrorCode::InvalidArgument, "image is " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                                         " but masks are " + std::to_string(width) + "x" + std::to_string(height));
  }
  if (n_masks == 0) fail(ErrorCode::InvalidArgument, "empty mask batch");
  const FloatImage base = to_float(image);
  const std::size_t pixels = base.pixels();
  const std::vector<std::string> labels{label};

  std::vector<double> acc(pixels, 0.0);
  std::vector<float> lo(pixels, std::numeric_limits<float>::infinity());
  std::vector<float> hi(pixels, -std::numeric_limits<float>::infinity());
  double total = 0.0;
  double max_log = -std::numeric_limits<double>::infinity();

  constexpr std::size_t block = 32;
  std::vector<std::vector<float>> masks(block, std::vector<float>(pixels));
  std::vector<double> probs(block);
  for (std::size_t start = 0; start < n_masks; start += block) {
    const std::size_t count = std::min(block, n_masks - start);
    parallel_for(count, [&](std::size_t b) {
      const std::size_t index = start + b;
      fill(index, std::span<float>(masks[b]));
      FloatImage masked{base.width, base.height, base.rgb};
      for (std::size_t p = 0; p < pixels; ++p) {
        const float m = masks[b][p];
        masked.rgb[3 * p] *= m;
        masked.rgb[3 * p + 1] *= m;
        masked.rgb[3 * p + 2] *= m;
      }
      std::vector<double> out;
      try {
        out = classifier.classify(masked, labels);
      } catch (const std::exception& e) {
        fail(ErrorCode::Classifier, "classifier failed on mask " + std::to_string(index) + ": " + e.what());
      }
      if (out.size() != 1 || !std::isfinite(out[0]) || out[0] < 0.0 || out[0] > 1.0) {
        fail(ErrorCode::Classifier, "classifier returned an invalid probability for mask " + std::to_string(index));
      }
      probs[b] = out[0];
    });

    // Ordered reduction, rescaled whenever the running max log-weight moves.
    for (std::size_t b = 0; b < count; ++b) {
      const auto& mask = masks[b];
      for (std::size_t p = 0; p < pixels; ++p) {
        lo[p] = std::min(lo[p], mask[p]);
        hi[p] = std::max(hi[p], mask[p]);
      }
      if (probs[b] <= 0.0) continue;
      const double lw = std::log(probs[b]);
      if (lw > max_log) {
        const double rescale = std::exp(max_log - lw);
        for (double& a : acc) a *= rescale;
        total *= rescale;
        max_log = lw;
      }
      const double weight = std::exp(lw - max_log);
      for (std::size_t p = 0; p < pixels; ++p) acc[p] += weight * mask[p];
      total += weight;
    }
  }
  if (!(total > 0.0)) {
    fail(ErrorCode::AllMasksRejected, "all " + std::to_string(n_masks) + " masks received zero probability for label '" +
                                          label + "'");
  }

  SaliencyMap map;
  map.width = width;
  map.height = height;
  map.target_label = label;
  map.values.resize(pixels);
  for (std::size_t p = 0; p < pixels; ++p) {
    map.values[p] = std::clamp(static_cast<float>(acc[p] / total), lo[p], hi[p]);
  }
  return map;
}

}  // namespace

SaliencyMap expected_saliency(const MaskedClassifier& classifier, const Image& image, const std::string& label,
                              const MaskBatch& batch) {
  for (const auto& m : batch.masks) {
    if (m.size() != static_cast<std::size_t>(batch.width) * static_cast<std::size_t>(batch.height)) {
      fail(ErrorCode::InvalidArgument, "mask batch has inconsistent mask sizes");
    }
  }
  return weighted_mask_average(classifier, image, label, batch.width, batch.height, batch.size(),
                               [&](std::size_t i, std::span<float> out) {
                                 std::copy(batch.masks[i].begin(), batch.masks[i].end(), out.begin());
                               });
}

SaliencyMap expected_saliency(const MaskedClassifier& classifier, const Image& image, const std::string& label,
                              const GpMaskSampler& sampler, std::uint64_t seed) {
  const auto& cfg = sampler.config();
  return weighted_mask_average(classifier, image, label, cfg.width, cfg.height, cfg.n_masks,
                               [&](std::size_t i, std::span<float> out) { sampler.sample_mask(seed, i, out); });
}

void write_saliency_map(const SaliencyMap& map, const std::filesystem::path& prefix) {
  std::vector<std::uint16_t> gray(map.values.size());
  for (std::size_t i = 0; i < gray.size(); ++i) {
    gray[i] = static_cast<std::uint16_t>(std::lround(std::clamp(map.values[i], 0.0f, 1.0f) * 65535.0f));
  }
  auto png_path = prefix;
  png_path += ".png";
  write_png_gray16(png_path, map.width, map.height, gray);

  auto raw_path = prefix;
  raw_path += ".f32";
  std::ofstream out(raw_path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + raw_path.string());
  for (float v : map.values) {
    auto bits = std::bit_cast<std::uint32_t>(v);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
}

SaliencyMap read_saliency_sidecar(const std::filesystem::path& f32_path, int width, int height) {
  std::ifstream in(f32_path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + f32_path.string());
  SaliencyMap map;
  map.width = width;
  map.height = height;
  map.values.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
  for (float& v : map.values) {
    std::uint32_t bits = 0;
    in.read(reinterpret_cast<char*>(&bits), sizeof bits);
    if (!in) fail(ErrorCode::Format, "short saliency sidecar " + f32_path.string());
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    v = std::bit_cast<float>(bits);
  }
  return map;
}

}  // namespace bteach
