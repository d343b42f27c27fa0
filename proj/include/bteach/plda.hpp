#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bteach/featstore.hpp"

namespace bteach {

// Latent coordinates u of a feature vector x, with x = m + A u.
struct LatentVector {
  Eigen::VectorXd u;
};

// Two-covariance PLDA with identity within-class noise in latent space and a
// diagonal prior Psi on class centres.
struct PldaModel {
  Eigen::VectorXd m;       // global shift, length dim
  Eigen::MatrixXd A;       // dim x q
  Eigen::MatrixXd A_inv;   // q x dim, left inverse of A
  Eigen::VectorXd psi;     // length q, non-negative, descending
  std::size_t q = 0;
  double n_per_class = 0;  // harmonic mean of training class sizes

  std::size_t dim() const { return static_cast<std::size_t>(m.size()); }
};

struct PldaFitInfo {
  bool regularized = false;  // a ridge was added to a singular within-class scatter
  std::size_t n_classes = 0;
  std::size_t n_train = 0;
};

// Fits on the training split. q == 0 selects min(dim, #categories - 1).
PldaModel fit_plda(const FeatureStore& store, std::size_t q = 0, PldaFitInfo* info = nullptr);

LatentVector to_latent(const PldaModel& model, std::span<const float> x);
LatentVector to_latent(const PldaModel& model, const Eigen::VectorXd& x);

// log N(u* | psi/(2psi+1) (u1+u2), psi/(2psi+1) + 1), diagonal, summed over
// the q coordinates.
double pair_logdensity(const PldaModel& model, const LatentVector& u_star, const LatentVector& u1,
                       const LatentVector& u2);

// Throws if an invariant is broken (non-finite or negative psi, A_inv A != I).
void validate(const PldaModel& model);

void save_plda(const PldaModel& model, const std::filesystem::path& path);
PldaModel load_plda(const std::filesystem::path& path);

}  // namespace bteach
