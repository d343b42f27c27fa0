#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bteach/image.hpp"

namespace bteach {

struct GpMaskConfig {
  int width = 224;
  int height = 224;
  double mean = -100.0;
  // Marginal standard deviation of the GP draws. 100 reproduces the reported
  // value range of roughly [-500, 300] around the mean of -100.
  double marginal_std = 100.0;
  double length_scale = 22.4;  // pixels, both axes
  std::size_t n_masks = 1000;
  double jitter = 1e-6;

  void validate() const;
};

// N masks of width*height values in [0, 1], row-major (index y * width + x).
struct MaskBatch {
  int width = 0;
  int height = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<float>> masks;

  std::size_t size() const { return masks.size(); }
};

struct SaliencyMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;  // row-major, in [0, 1]
  std::string target_label;

  float at(int x, int y) const {
    return values[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)];
  }
};

// g_L(y | d, m): probability that the black-box classifier assigns each label
// to a (masked) image. Implementations must be deterministic per input.
class MaskedClassifier {
 public:
  virtual ~MaskedClassifier() = default;
  virtual std::vector<double> classify(const FloatImage& image, std::span<const std::string> labels) const = 0;
};

// Draws sigmoid(f) for f ~ GP(mean, s^2 k_row (x) k_col) on the grid. The
// separable RBF kernel factorises, so a draw is mean + s * L_h Z L_w^T with
// L_h, L_w the Cholesky factors of the 1-D kernels and Z iid standard normal.
class GpMaskSampler {
 public:
  explicit GpMaskSampler(const GpMaskConfig& config);

  const GpMaskConfig& config() const { return config_; }

  // Raw GP draw (before the sigmoid) for mask `index` of the batch `seed`.
  void sample_field(std::uint64_t seed, std::size_t index, std::span<float> out) const;
  // sigmoid of sample_field.
  void sample_mask(std::uint64_t seed, std::size_t index, std::span<float> out) const;

 private:
  GpMaskConfig config_;
  Eigen::MatrixXf chol_rows_;  // height x height
  Eigen::MatrixXf chol_cols_;  // width x width
};

// 1-D RBF kernel matrix exp(-(i-j)^2 / (2 l^2)) on n grid points.
Eigen::MatrixXd rbf_kernel_1d(int n, double length_scale);

MaskBatch sample_masks(const GpMaskConfig& config, std::uint64_t seed);

// E[M | y, d] ~= sum_i m_i g(y | d, m_i) / sum_i g(y | d, m_i). Weights are
// combined in log space relative to their running maximum; the sum is taken in
// mask order.
SaliencyMap expected_saliency(const MaskedClassifier& classifier, const Image& image, const std::string& label,
                              const MaskBatch& batch);

// Streaming variant: masks are drawn on the fly from the sampler and never
// held in memory all at once. Produces the same map as sampling the batch first.
SaliencyMap expected_saliency(const MaskedClassifier& classifier, const Image& image, const std::string& label,
                              const GpMaskSampler& sampler, std::uint64_t seed);

// Writes <prefix>.png (16-bit gray, round(v * 65535)) and <prefix>.f32
// (little-endian float32 sidecar, row-major).
void write_saliency_map(const SaliencyMap& map, const std::filesystem::path& prefix);
SaliencyMap read_saliency_sidecar(const std::filesystem::path& f32_path, int width, int height);

}  // namespace bteach
