#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include <Eigen/Dense>

#include "bteach/featstore.hpp"

namespace bteach::test {

// Fresh empty directory under the system temp dir, unique per process.
inline std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("bteach_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Draws from the generative PLDA model x = m + A (v_c + e), v_c ~ N(0, diag(psi)),
// e ~ N(0, I). Items are named <cat>_<k>, categories k0, k1, ...
struct GaussianStoreSpec {
  std::size_t n_categories = 10;
  std::size_t items_per_category = 10;
  Eigen::VectorXd psi = Eigen::VectorXd::Constant(2, 1.0);
  Eigen::MatrixXd A;  // dim x q; identity when empty
  Eigen::VectorXd m;  // zero when empty
  std::uint64_t seed = 7;
};

inline FeatureStore gaussian_store(const GaussianStoreSpec& s) {
  const auto q = s.psi.size();
  const Eigen::MatrixXd A = s.A.size() ? s.A : Eigen::MatrixXd::Identity(q, q);
  const Eigen::VectorXd m = s.m.size() ? s.m : Eigen::VectorXd::Zero(A.rows());
  std::mt19937_64 rng(s.seed);
  std::normal_distribution<double> normal;
  std::vector<FeatureItem> items;
  for (std::size_t c = 0; c < s.n_categories; ++c) {
    Eigen::VectorXd v(q);
    for (Eigen::Index j = 0; j < q; ++j) v[j] = std::sqrt(s.psi[j]) * normal(rng);
    for (std::size_t k = 0; k < s.items_per_category; ++k) {
      Eigen::VectorXd u = v;
      for (Eigen::Index j = 0; j < q; ++j) u[j] += normal(rng);
      const Eigen::VectorXd x = m + A * u;
      FeatureItem it;
      it.category = "k" + std::to_string(c);
      it.id = it.category + "_" + std::to_string(k);
      it.vector.assign(x.data(), x.data() + x.size());
      items.push_back(std::move(it));
    }
  }
  return FeatureStore(static_cast<std::size_t>(A.rows()), std::move(items));
}

}  // namespace bteach::test
