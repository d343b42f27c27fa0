#pragma once

// Independent reference implementations used as test oracles. They favour
// directness over speed and share no code with the library.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "bteach/image.hpp"
#include "bteach/saliency.hpp"

namespace bteach::test {

inline double normal_pdf(double x, double mean, double var) {
  return std::exp(-0.5 * (x - mean) * (x - mean) / var) / std::sqrt(2 * M_PI * var);
}

// p(u* | u1, u2) by quadrature over the class centre v of the generative
// model: v ~ N(0, psi), u ~ N(v, 1) independently. Ratio of two integrals on
// a uniform grid (trapezoid rule, which is spectrally accurate here).
inline double grid_density(const std::vector<double>& psi, const std::vector<double>& us, const std::vector<double>& u1,
                    const std::vector<double>& u2) {
  const int n = 401;
  const std::size_t q = psi.size();
  std::vector<std::vector<double>> grid(q);
  std::vector<double> step(q);
  for (std::size_t j = 0; j < q; ++j) {
    const double half = 12.0 * std::sqrt(psi[j]) + 8.0 + std::abs(u1[j]) + std::abs(u2[j]);
    step[j] = 2 * half / (n - 1);
    for (int i = 0; i < n; ++i) grid[j].push_back(-half + i * step[j]);
  }
  double num = 0, den = 0;
  std::vector<int> idx(q, 0);
  // Full q-dimensional grid; no factorisation across axes.
  while (true) {
    double prior = 1, like = 1, pred = 1, w = 1;
    for (std::size_t j = 0; j < q; ++j) {
      const double v = grid[j][static_cast<std::size_t>(idx[j])];
      prior *= normal_pdf(v, 0, psi[j]);
      like *= normal_pdf(u1[j], v, 1) * normal_pdf(u2[j], v, 1);
      pred *= normal_pdf(us[j], v, 1);
      w *= (idx[j] == 0 || idx[j] == n - 1) ? 0.5 : 1.0;
    }
    den += w * prior * like;
    num += w * prior * like * pred;
    std::size_t j = 0;
    while (j < q && ++idx[j] == n) idx[j++] = 0;
    if (j == q) break;
  }
  return num / den;
}

// Direct window loop, written independently of the summed-area version.
inline Image naive_blur(const Image& img, const SaliencyMap& map) {
  Image out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const int w = static_cast<int>(std::ceil(30.0 / (1.0 + std::exp(20.0 * map.at(x, y) - 10.0))));
      for (int c = 0; c < 3; ++c) {
        double sum = 0;
        int count = 0;
        for (int dy = -(w / 2); dy <= (w - 1) / 2; ++dy) {
          for (int dx = -(w / 2); dx <= (w - 1) / 2; ++dx) {
            const int xx = x + dx, yy = y + dy;
            if (xx < 0 || yy < 0 || xx >= img.width || yy >= img.height) continue;
            sum += img.at(xx, yy, c);
            ++count;
          }
        }
        out.at(x, y, c) = static_cast<std::uint8_t>(std::floor(sum / count + 0.5));
      }
    }
  }
  return out;
}

// sum_i m_i g_i / sum_i g_i with each masked image formed pixel by pixel.
inline std::vector<double> brute_saliency(const MaskedClassifier& clf, const Image& img, const std::string& label,
                                          const MaskBatch& batch) {
  const std::size_t pixels = img.pixels();
  std::vector<double> num(pixels, 0.0);
  double den = 0;
  const std::vector<std::string> labels{label};
  for (const auto& m : batch.masks) {
    FloatImage masked{img.width, img.height, std::vector<float>(pixels * 3)};
    for (std::size_t p = 0; p < pixels; ++p)
      for (std::size_t ch = 0; ch < 3; ++ch) masked.rgb[3 * p + ch] = (img.rgb[3 * p + ch] / 255.0f) * m[p];
    const double g = clf.classify(masked, labels)[0];
    for (std::size_t p = 0; p < pixels; ++p) num[p] += g * m[p];
    den += g;
  }
  for (auto& v : num) v /= den;
  return num;
}

}  // namespace bteach::test
