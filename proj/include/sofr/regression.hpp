#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sofr/errors.hpp"
#include "sofr/fnspace.hpp"
#include "sofr/linalg.hpp"
#include "sofr/processes.hpp"
#include "sofr/subspace.hpp"

namespace sofr {

inline constexpr double kMaxCondition = 1e12;

/// X_E(i, j) = <x_i, phi_j^E>; p is the curve-sampling count of the generator.
struct DesignMatrix {
  Eigen::MatrixXd X;
  Eigen::Index p = std::numeric_limits<Eigen::Index>::max();

  Eigen::Index n() const noexcept { return X.rows(); }
  Eigen::Index d() const noexcept { return X.cols(); }
};

struct FitResult {
  Eigen::VectorXd beta_E_coeffs;
  Eigen::VectorXd beta_D_coeffs;
  Eigen::MatrixXd cov_E;
  Eigen::MatrixXd cov_D;
  double sigma2_hat = std::numeric_limits<double>::quiet_NaN();
  std::optional<Eigen::VectorXd> gamma_n_coeffs;
  double condition_number = 0.0;
  Eigen::VectorXd residuals;
};

// ---------------------------------------------------------------------------
// Centering and design
// ---------------------------------------------------------------------------

struct Centered {
  std::vector<FunctionExpr> xs;
  Eigen::VectorXd y;
};

inline Centered center(std::span<const FunctionExpr> xs, const Eigen::VectorXd& y) {
  if (xs.size() < 2 || static_cast<Eigen::Index>(xs.size()) != y.size())
    throw Error(ErrorKind::BadDimension, "center needs n >= 2 curves and one response per curve");
  const double inv_n = 1.0 / static_cast<double>(xs.size());
  FunctionExpr mean;
  for (const auto& x : xs) mean += x;
  mean *= inv_n;
  Centered out;
  out.xs.reserve(xs.size());
  for (const auto& x : xs) out.xs.push_back(x - mean);
  out.y = y.array() - y.mean();
  return out;
}

/// Column-centered copy; the coefficient form of center() for batches.
inline Eigen::MatrixXd center_columns(const Eigen::MatrixXd& M) { return M.rowwise() - M.colwise().mean(); }

inline DesignMatrix design_matrix(std::span<const FunctionExpr> xs, const EStructure& E) {
  return {gram(xs, E.e_basis().span())};
}

/// Same matrix from dictionary coefficients: X_E = coeffs * G(dictionary, E).
inline DesignMatrix design_matrix(const SampleBatch& batch, const EStructure& E) {
  return {batch.coeffs * gram(batch.dictionary, E.e_basis().span())};
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

namespace detail {

/// Condition number of X^T X, i.e. (sigma_max / sigma_min)^2.
inline double gram_condition(const Eigen::MatrixXd& X) {
  const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(X).singularValues();
  if (sv.size() == 0 || sv[sv.size() - 1] == 0.0) return std::numeric_limits<double>::infinity();
  const double r = sv[0] / sv[sv.size() - 1];
  return r * r;
}

inline void check_rank(const DesignMatrix& X, double cond) {
  if (X.d() > std::min(X.n(), X.p))
    throw Error(ErrorKind::RankDeficient, "d = " + std::to_string(X.d()) + " exceeds min(n, p)");
  if (!(cond < kMaxCondition))
    throw Error(ErrorKind::RankDeficient, "condition number of X^T X = " + std::to_string(cond));
}

}  // namespace detail

/// Least squares in E by Householder QR; the normal equations are never formed.
class LeastSquares {
 public:
  explicit LeastSquares(const DesignMatrix& X) : qr_(X.X), n_(X.n()), d_(X.d()) {
    condition_ = detail::gram_condition(X.X);
    detail::check_rank(X, condition_);
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& v) const { return qr_.solve(v); }

  /// (X^T X)^{-1} = R^{-1} R^{-T}.
  Eigen::MatrixXd inverse_gram() const {
    const Eigen::MatrixXd R = qr_.matrixQR().topRows(d_).triangularView<Eigen::Upper>();
    const Eigen::MatrixXd Rinv = R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(d_, d_));
    return Rinv * Rinv.transpose();
  }

  double condition_number() const noexcept { return condition_; }
  Eigen::Index n() const noexcept { return n_; }
  Eigen::Index d() const noexcept { return d_; }

 private:
  Eigen::HouseholderQR<Eigen::MatrixXd> qr_;
  Eigen::Index n_, d_;
  double condition_ = 0.0;
};

inline Eigen::VectorXd fit_E(const DesignMatrix& X, const Eigen::VectorXd& y) { return LeastSquares(X).solve(y); }

inline Eigen::VectorXd fit_D(const Eigen::VectorXd& beta_E, const EStructure& E) { return E.P_inverse() * beta_E; }

struct Covariances {
  Eigen::MatrixXd cov_E;
  Eigen::MatrixXd cov_D;
};

inline Covariances covariance(const LeastSquares& ls, double sigma2, const EStructure& E) {
  Eigen::MatrixXd ce = sigma2 * ls.inverse_gram();
  ce = 0.5 * (ce + ce.transpose());
  Eigen::MatrixXd cd = E.P_inverse() * ce * E.P_inverse().transpose();
  return {ce, 0.5 * (cd + cd.transpose())};
}

inline Covariances covariance(const DesignMatrix& X, double sigma2, const EStructure& E) {
  return covariance(LeastSquares(X), sigma2, E);
}

/// ((X^E)^T X^E)^{-1} (X^E)^T v with v_i = <x_i, beta_F>.
inline Eigen::VectorXd gamma_n(const LeastSquares& ls, const Eigen::VectorXd& v) { return ls.solve(v); }

inline Eigen::VectorXd gamma_n(const DesignMatrix& X, std::span<const FunctionExpr> xs, const FunctionExpr& beta_F) {
  const FunctionExpr bf[1] = {beta_F};
  return LeastSquares(X).solve(gram(xs, bf).col(0));
}

/// Full fit. sigma2 is used for the covariances when given, else RSS / (n - d).
inline FitResult fit(const DesignMatrix& X, const Eigen::VectorXd& y, const EStructure& E,
                     std::optional<double> sigma2 = std::nullopt,
                     const std::optional<Eigen::VectorXd>& beta_F_scores = std::nullopt) {
  const LeastSquares ls(X);
  FitResult r;
  r.condition_number = ls.condition_number();
  r.beta_E_coeffs = ls.solve(y);
  r.beta_D_coeffs = fit_D(r.beta_E_coeffs, E);
  r.residuals = y - X.X * r.beta_E_coeffs;
  if (X.n() > X.d()) r.sigma2_hat = r.residuals.squaredNorm() / static_cast<double>(X.n() - X.d());
  const double s2 = sigma2.value_or(r.sigma2_hat);
  const Covariances c = covariance(ls, s2, E);
  r.cov_E = c.cov_E;
  r.cov_D = c.cov_D;
  if (beta_F_scores) r.gamma_n_coeffs = gamma_n(ls, *beta_F_scores);
  return r;
}

// ---------------------------------------------------------------------------
// Population bias
// ---------------------------------------------------------------------------

/// (Sigma^E)^{-1} Cov(X^E, <X, beta_F>) from the analytic process moments.
inline Eigen::VectorXd gamma_asymptotic(const ProcessSpec& process, const EStructure& E, const FunctionExpr& beta_F) {
  return moment_gamma(process_model(process), E.e_basis().span(), beta_F);
}

/// delta_k = Var[Z_k]^{-1} Cov[Z_k, <X, beta_F>] along the population PCs of X^E.
inline Eigen::VectorXd delta_along_pcs(const ProcessSpec& process, const EStructure& E, const FunctionExpr& beta_F) {
  const ProcessModel m = process_model(process);
  const Eigen::VectorXd gamma = moment_gamma(m, E.e_basis().span(), beta_F);
  const SymmetricEigen eig = sorted_symmetric_eigen(covariance_on(m, E.e_basis().span()));
  return eig.vectors.transpose() * gamma;
}

// ---------------------------------------------------------------------------
// Reporting
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline std::vector<double> sorted_eigenvalues(const Eigen::MatrixXd& M) {
  return to_std(sorted_symmetric_eigen(M).values);
}

inline nlohmann::json number_or_null(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(); }

}  // namespace detail

inline nlohmann::json to_json(const FitResult& r) {
  nlohmann::json j = {{"beta_E_coeffs", detail::to_std(r.beta_E_coeffs)},
                      {"beta_D_coeffs", detail::to_std(r.beta_D_coeffs)},
                      {"cov_E_eigenvalues", detail::sorted_eigenvalues(r.cov_E)},
                      {"cov_D_eigenvalues", detail::sorted_eigenvalues(r.cov_D)},
                      {"condition_number", detail::number_or_null(r.condition_number)},
                      {"sigma2_hat", detail::number_or_null(r.sigma2_hat)}};
  if (r.gamma_n_coeffs) j["gamma_n_coeffs"] = detail::to_std(*r.gamma_n_coeffs);
  return j;
}

}  // namespace sofr
