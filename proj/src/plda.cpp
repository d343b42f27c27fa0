#include "bteach/plda.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "bteach/error.hpp"

namespace bteach {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

PldaModel fit_plda(const FeatureStore& store, std::size_t q, PldaFitInfo* info) {
  const std::size_t dim = store.dim();

  // Training rows per category, in store order.
  std::vector<std::vector<std::size_t>> classes;
  for (const auto& cat : store.categories()) {
    std::vector<std::size_t> rows;
    for (std::size_t i : store.category_indices(cat)) {
      if (store.item(i).split == Split::Train) rows.push_back(i);
    }
    if (rows.size() < 2) {
      fail(ErrorCode::InvalidArgument, "category '" + cat + "' has " + std::to_string(rows.size()) +
                                           " training items; PLDA needs at least 2");
    }
    classes.push_back(std::move(rows));
  }
  const std::size_t n_classes = classes.size();
  if (n_classes < 2) fail(ErrorCode::InvalidArgument, "PLDA needs at least 2 categories");
  const std::size_t q_max = std::min(dim, n_classes - 1);
  if (q == 0) q = q_max;
  if (q > q_max) {
    fail(ErrorCode::InvalidArgument, "q=" + std::to_string(q) + " out of range; must be <= min(dim, #categories-1) = " +
                                         std::to_string(q_max));
  }

  auto row = [&](std::size_t i) {
    const auto& v = store.item(i).vector;
    VectorXd x(static_cast<Eigen::Index>(dim));
    for (std::size_t k = 0; k < dim; ++k) x[static_cast<Eigen::Index>(k)] = v[k];
    return x;
  };

  std::size_t n_total = 0;
  VectorXd grand = VectorXd::Zero(static_cast<Eigen::Index>(dim));
  std::vector<VectorXd> class_means;
  double inv_size_sum = 0;
  for (const auto& rows : classes) {
    VectorXd mu = VectorXd::Zero(static_cast<Eigen::Index>(dim));
    for (std::size_t i : rows) mu += row(i);
    grand += mu;
    mu /= static_cast<double>(rows.size());
    class_means.push_back(std::move(mu));
    n_total += rows.size();
    inv_size_sum += 1.0 / static_cast<double>(rows.size());
  }
  grand /= static_cast<double>(n_total);
  // Ioffe's estimator assumes n examples per class; with unbalanced classes the
  // harmonic mean of the class sizes stands in for n.
  const double n = static_cast<double>(n_classes) / inv_size_sum;

  MatrixXd s_between = MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  MatrixXd s_within = s_between;
  for (std::size_t c = 0; c < n_classes; ++c) {
    const VectorXd d = class_means[c] - grand;
    s_between.noalias() += static_cast<double>(classes[c].size()) * d * d.transpose();
    for (std::size_t i : classes[c]) {
      const VectorXd r = row(i) - class_means[c];
      s_within.noalias() += r * r.transpose();
    }
  }
  s_between /= static_cast<double>(n_total);
  s_within /= static_cast<double>(n_total);

  bool regularized = false;
  {
    Eigen::SelfAdjointEigenSolver<MatrixXd> sw_eig(s_within, Eigen::EigenvaluesOnly);
    const double max_ev = sw_eig.eigenvalues().maxCoeff();
    const double min_ev = sw_eig.eigenvalues().minCoeff();
    const double trace = s_within.trace();
    if (!(trace > 0) || !std::isfinite(trace)) {
      fail(ErrorCode::Numeric, "singular within-class scatter: all training items equal their class mean");
    }
    if (min_ev <= 1e-10 * max_ev) {
      s_within += (1e-6 * trace / static_cast<double>(dim)) * MatrixXd::Identity(s_within.rows(), s_within.cols());
      regularized = true;
    }
  }

  // S_b w = lambda S_w w, normalised so that W^T S_w W = I.
  Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> ges(s_between, s_within);
  if (ges.info() != Eigen::Success) fail(ErrorCode::Numeric, "generalized eigendecomposition failed");
  const VectorXd& lambda = ges.eigenvalues();
  const MatrixXd& w_all = ges.eigenvectors();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(lambda.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return lambda[a] > lambda[b]; });

  const auto qi = static_cast<Eigen::Index>(q);
  MatrixXd w(static_cast<Eigen::Index>(dim), qi);
  VectorXd psi(qi);
  for (Eigen::Index j = 0; j < qi; ++j) {
    VectorXd col = w_all.col(order[static_cast<std::size_t>(j)]);
    Eigen::Index arg = 0;
    col.cwiseAbs().maxCoeff(&arg);
    if (col[arg] < 0) col = -col;
    w.col(j) = col;
    psi[j] = std::max(0.0, (n - 1.0) / n * lambda[order[static_cast<std::size_t>(j)]] - 1.0 / n);
  }

  // Lambda_w = I after the normalisation above, so the whitening scale is the
  // scalar sqrt(n / (n - 1)).
  const double scale = std::sqrt(n / (n - 1.0));
  PldaModel model;
  model.m = grand;
  model.A = (s_within * w) * scale;
  model.A_inv = w.transpose() / scale;
  model.psi = psi;
  model.q = q;
  model.n_per_class = n;

  if (info) {
    info->regularized = regularized;
    info->n_classes = n_classes;
    info->n_train = n_total;
  }
  validate(model);
  return model;
}

LatentVector to_latent(const PldaModel& model, const VectorXd& x) {
  if (static_cast<std::size_t>(x.size()) != model.dim()) {
    fail(ErrorCode::InvalidArgument, "feature length " + std::to_string(x.size()) + " != model dim " +
                                         std::to_string(model.dim()));
  }
  return LatentVector{model.A_inv * (x - model.m)};
}

LatentVector to_latent(const PldaModel& model, std::span<const float> x) {
  VectorXd v(static_cast<Eigen::Index>(x.size()));
  for (std::size_t k = 0; k < x.size(); ++k) v[static_cast<Eigen::Index>(k)] = x[k];
  return to_latent(model, v);
}

double pair_logdensity(const PldaModel& model, const LatentVector& u_star, const LatentVector& u1,
                       const LatentVector& u2) {
  const auto q = static_cast<Eigen::Index>(model.q);
  if (u_star.u.size() != q || u1.u.size() != q || u2.u.size() != q) {
    fail(ErrorCode::InvalidArgument, "latent vector length mismatch (model q=" + std::to_string(model.q) + ")");
  }
  constexpr double log_2pi = 1.8378770664093454836;  // log(2*pi)
  double total = 0;
  for (Eigen::Index j = 0; j < q; ++j) {
    const double p = model.psi[j];
    const double shrink = p / (2.0 * p + 1.0);
    const double mean = shrink * (u1.u[j] + u2.u[j]);
    const double var = shrink + 1.0;
    const double d = u_star.u[j] - mean;
    total += -0.5 * (log_2pi + std::log(var)) - 0.5 * d * d / var;
  }
  return total;
}

void validate(const PldaModel& model) {
  const auto q = static_cast<Eigen::Index>(model.q);
  const auto dim = model.m.size();
  if (q <= 0) fail(ErrorCode::Format, "PLDA model has q = 0");
  if (model.A.rows() != dim || model.A.cols() != q || model.A_inv.rows() != q || model.A_inv.cols() != dim ||
      model.psi.size() != q) {
    fail(ErrorCode::Format, "PLDA model matrices have inconsistent shapes");
  }
  for (Eigen::Index j = 0; j < q; ++j) {
    if (!std::isfinite(model.psi[j]) || model.psi[j] < 0) fail(ErrorCode::Numeric, "psi entries must be finite and >= 0");
  }
  const MatrixXd eye = model.A_inv * model.A;
  const double err = (eye - MatrixXd::Identity(q, q)).norm();
  if (!(err <= 1e-8 * std::max(1.0, std::sqrt(static_cast<double>(q))))) {
    fail(ErrorCode::Numeric, "A_inv * A deviates from identity by " + std::to_string(err));
  }
}

namespace {

json flatten(const MatrixXd& mat) {
  json out = json::array();
  for (Eigen::Index r = 0; r < mat.rows(); ++r)
    for (Eigen::Index c = 0; c < mat.cols(); ++c) out.push_back(mat(r, c));
  return out;
}

MatrixXd unflatten(const json& arr, Eigen::Index rows, Eigen::Index cols, const char* name) {
  if (!arr.is_array() || arr.size() != static_cast<std::size_t>(rows * cols)) {
    fail(ErrorCode::Format, std::string("PLDA model field '") + name + "' has the wrong size");
  }
  MatrixXd mat(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) mat(r, c) = arr[static_cast<std::size_t>(r * cols + c)].get<double>();
  return mat;
}

}  // namespace

void save_plda(const PldaModel& model, const std::filesystem::path& path) {
  json j;
  j["dim"] = model.dim();
  j["q"] = model.q;
  j["n_per_class"] = model.n_per_class;
  j["m"] = flatten(model.m);
  j["A"] = flatten(model.A);
  j["A_inv"] = flatten(model.A_inv);
  j["psi"] = flatten(model.psi);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << j.dump() << '\n';
}

PldaModel load_plda(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open model file " + path.string());
  PldaModel model;
  try {
    const json j = json::parse(in);
    const auto dim = j.at("dim").get<Eigen::Index>();
    const auto q = j.at("q").get<Eigen::Index>();
    if (dim <= 0 || q <= 0) fail(ErrorCode::Format, "model dim and q must be positive");
    model.q = static_cast<std::size_t>(q);
    model.n_per_class = j.at("n_per_class").get<double>();
    model.m = unflatten(j.at("m"), dim, 1, "m");
    model.A = unflatten(j.at("A"), dim, q, "A");
    model.A_inv = unflatten(j.at("A_inv"), q, dim, "A_inv");
    model.psi = unflatten(j.at("psi"), q, 1, "psi");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, "malformed model file " + path.string() + ": " + e.what());
  }
  validate(model);
  return model;
}

}  // namespace bteach
