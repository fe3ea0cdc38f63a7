#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "sofr/errors.hpp"
#include "sofr/fnspace.hpp"
#include "sofr/linalg.hpp"
#include "sofr/processes.hpp"
#include "sofr/regression.hpp"
#include "sofr/subspace.hpp"

namespace sofr {

// ---------------------------------------------------------------------------
// Covariances and K-L bases
// ---------------------------------------------------------------------------

inline Eigen::MatrixXd population_covariance(const ProcessSpec& process, const Subspace& basis) {
  return covariance_on(process_model(process), basis.span());
}

enum class Normalization { N, NMinusOne };

/// Centered cross-product of the score rows, divided by n (default) or n - 1.
inline Eigen::MatrixXd empirical_covariance(const Eigen::MatrixXd& scores, Normalization norm = Normalization::N) {
  const Eigen::Index n = scores.rows();
  if (n < 2) throw Error(ErrorKind::BadDimension, "empirical covariance needs n >= 2");
  const Eigen::MatrixXd c = scores.rowwise() - scores.colwise().mean();
  const double denom = norm == Normalization::N ? static_cast<double>(n) : static_cast<double>(n - 1);
  Eigen::MatrixXd S = c.transpose() * c / denom;
  return 0.5 * (S + S.transpose());
}

struct KLBasis {
  std::vector<FunctionExpr> psi;
  Eigen::VectorXd lambda;  // non-increasing
  Eigen::MatrixXd coeffs;  // column k: coordinates of psi_k on the source basis
  Eigen::Index source_dim = 0;

  Eigen::Index size() const noexcept { return lambda.size(); }
};

inline KLBasis kl_decompose(const Eigen::MatrixXd& Sigma, const Subspace& basis) {
  if (Sigma.rows() != basis.dim() || Sigma.cols() != basis.dim())
    throw Error(ErrorKind::BadDimension, "Sigma does not match the basis dimension");
  const SymmetricEigen eig = sorted_symmetric_eigen(Sigma);
  KLBasis kl;
  kl.lambda = eig.values;
  kl.coeffs = eig.vectors;
  kl.source_dim = basis.dim();
  for (Eigen::Index k = 0; k < eig.vectors.cols(); ++k) {
    const Eigen::VectorXd c = eig.vectors.col(k);
    kl.psi.push_back(linear_combination(as_span(c), basis.basis()));
  }
  return kl;
}

inline FunctionExpr truncate_to_pcs(const FunctionExpr& beta_hat, const KLBasis& kl, Eigen::Index k) {
  if (k < 1 || k > kl.size())
    throw Error(ErrorKind::BadTruncation, "k = " + std::to_string(k) + " outside [1, " + std::to_string(kl.size()) + "]");
  FunctionExpr out;
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto& psi = kl.psi[static_cast<std::size_t>(i)];
    out += inner_product(beta_hat, psi) * psi;
  }
  return out;
}

/// Coefficients of the truncation of sum_j b_j phi_j on the source basis, no quadrature.
inline Eigen::VectorXd truncate_coeffs(const Eigen::VectorXd& b, const KLBasis& kl, Eigen::Index k) {
  if (k < 1 || k > kl.size()) throw Error(ErrorKind::BadTruncation, "k outside [1, d]");
  const Eigen::MatrixXd V = kl.coeffs.leftCols(k);
  return V * (V.transpose() * b);
}

// ---------------------------------------------------------------------------
// Truncated bias
// ---------------------------------------------------------------------------

inline constexpr double kAssumptionTol = 1e-8;

struct GammaDK {
  Eigen::VectorXd coeffs;  // delta_1..delta_k along the leading eigenfunctions
  double norm = 0.0;
  double beta_F_norm = 0.0;
  bool beta_F_zero = false;
  bool d_in_s = false;
};

/// Projection of the asymptotic bias on the first k population eigenfunctions of X^E.
inline GammaDK gamma_dk(const ProcessSpec& process, const EStructure& E, const FunctionExpr& beta, Eigen::Index k) {
  if (k < 0 || k > E.dim()) throw Error(ErrorKind::BadTruncation, "k outside [0, d]");
  const auto parts = E.orthogonal_decompose(beta);
  GammaDK out;
  out.beta_F_norm = norm(parts.beta_F);
  out.beta_F_zero = out.beta_F_norm < kAssumptionTol;
  out.d_in_s = (E.D_D().array() - 1.0).abs().maxCoeff() < kAssumptionTol;
  if (k == 0) {
    out.coeffs = Eigen::VectorXd(0);
    return out;
  }
  // beta minus beta^E differs from beta^F only by a part orthogonal to every curve
  const FunctionExpr bf = beta - parts.beta_E;
  const ProcessModel m = process_model(process);
  const Eigen::VectorXd gamma = moment_gamma(m, E.e_basis().span(), bf);
  const SymmetricEigen eig = sorted_symmetric_eigen(covariance_on(m, E.e_basis().span()));
  out.coeffs = eig.vectors.leftCols(k).transpose() * gamma;
  out.norm = out.coeffs.norm();
  return out;
}

inline constexpr double kDegenerateEigenvalueTol = 1e-14;

/// C_k ||beta^{F_d}||^2 with C_k = k lambda_max / lambda_k^k; lambda_kk[k-1] = lambda_k^k.
inline double bias_bound(int k, std::span<const double> lambda_kk, double lambda_max, double beta_Fd_norm) {
  if (k < 1 || static_cast<std::size_t>(k) > lambda_kk.size())
    throw Error(ErrorKind::BadTruncation, "no lambda_k^k entry for k = " + std::to_string(k));
  const double lkk = lambda_kk[static_cast<std::size_t>(k - 1)];
  if (!(lkk > kDegenerateEigenvalueTol))
    throw Error(ErrorKind::DegenerateEigenvalue, "lambda_" + std::to_string(k) + "^" + std::to_string(k) + " = " +
                                                     std::to_string(lkk));
  return k * lambda_max / lkk * beta_Fd_norm * beta_Fd_norm;
}

/// Smallest eigenvalue of each leading k x k block of Sigma, k = 1..dim.
inline std::vector<double> nested_min_eigenvalues(const Eigen::MatrixXd& Sigma) {
  std::vector<double> out;
  for (Eigen::Index k = 1; k <= Sigma.rows(); ++k)
    out.push_back(sorted_symmetric_eigen(Sigma.topLeftCorner(k, k)).values[k - 1]);
  return out;
}

// ---------------------------------------------------------------------------
// k_d schedule
// ---------------------------------------------------------------------------

struct KdSchedule {
  std::vector<int> d;
  std::vector<int> k;
  std::vector<double> product;  // C_{k_d} ||beta^{F_d}||^2
  std::vector<double> target;
};

/// Greedy rule: k_d is the largest k <= min(d, k_prev + (d - d_prev)) whose
/// product C_k ||beta^{F_d}||^2 is within tau_d = tau0 / d; when none is, k_prev
/// is kept (at least 1). A zero ||beta^{F_d}|| gives k_d = d.
inline KdSchedule choose_kd(std::span<const int> d_schedule, const std::function<double(int)>& C,
                            std::span<const double> beta_Fd_norm2, double tau0 = 1.0) {
  if (beta_Fd_norm2.size() != d_schedule.size())
    throw Error(ErrorKind::BadDimension, "one ||beta^{F_d}||^2 per schedule entry");
  KdSchedule out;
  int k_prev = 0, d_prev = 0;
  for (std::size_t i = 0; i < d_schedule.size(); ++i) {
    const int d = d_schedule[i];
    if (d <= d_prev) throw Error(ErrorKind::BadDimension, "d schedule must be strictly increasing");
    const double nf = beta_Fd_norm2[i];
    const double tau = tau0 / d;
    int best = nf == 0.0 ? d : std::max(k_prev, 1);
    for (int k = std::min(d, k_prev + (d - d_prev)); k > best; --k)
      if (C(k) * nf <= tau) {
        best = k;
        break;
      }
    out.d.push_back(d);
    out.k.push_back(best);
    out.product.push_back(nf == 0.0 ? 0.0 : C(best) * nf);
    out.target.push_back(tau);
    k_prev = best;
    d_prev = d;
  }
  return out;
}

/// Nested chain D_1 subset D_2 ... inside S: first d atoms of `chain` for each d in the schedule.
struct TruncationInputs {
  ProcessSpec process;
  Subspace S;
  std::vector<FunctionExpr> chain;  // orthonormal, chain[0..d) spans D_d
  FunctionExpr beta;
};

/// Schedule from the population moments: lambda_k^k from the nested blocks of
/// Sigma on the largest D_d, lambda_max from Sigma on S, ||beta^{F_d}|| from each E_d.
inline KdSchedule choose_kd(std::span<const int> d_schedule, const TruncationInputs& in, double tau0 = 1.0) {
  if (d_schedule.empty()) return {};
  const int d_max = d_schedule.back();
  if (static_cast<std::size_t>(d_max) > in.chain.size()) throw Error(ErrorKind::BadDimension, "chain shorter than d");
  std::vector<double> nf2;
  for (int d : d_schedule) {
    const Subspace D(std::vector<FunctionExpr>(in.chain.begin(), in.chain.begin() + d), SpaceLabel::D);
    const EStructure E = build_E(D, in.S);
    const auto g = gamma_dk(in.process, E, in.beta, 0);
    if (!g.d_in_s) throw Error(ErrorKind::AssumptionViolated, "D_" + std::to_string(d) + " is not inside S");
    nf2.push_back(g.beta_F_zero ? 0.0 : g.beta_F_norm * g.beta_F_norm);
  }
  // beta^F = 0 in the limit: the last E_d must already capture all of beta's S part
  if (std::sqrt(nf2.back()) > kAssumptionTol && nf2.size() > 1 && nf2.back() >= nf2.front())
    throw Error(ErrorKind::AssumptionViolated, "||beta^{F_d}|| does not decay along the chain");
  const Subspace Dmax(std::vector<FunctionExpr>(in.chain.begin(), in.chain.begin() + d_max), SpaceLabel::D);
  const Eigen::MatrixXd Sigma = population_covariance(in.process, Dmax);
  const std::vector<double> lkk = nested_min_eigenvalues(Sigma);
  const double lmax = sorted_symmetric_eigen(population_covariance(in.process, in.S)).values[0];
  auto C = [&](int k) { return bias_bound(k, lkk, lmax, 1.0); };
  return choose_kd(d_schedule, C, nf2, tau0);
}

// ---------------------------------------------------------------------------
// Interlacing
// ---------------------------------------------------------------------------

struct InterlacingReport {
  std::size_t checks = 0;
  std::size_t violations = 0;
  double worst_margin = std::numeric_limits<double>::infinity();  // min over checks of rhs - lhs
  std::vector<Eigen::VectorXd> eigenvalues;                      // per matrix, non-increasing
};

/// Cauchy interlacing between consecutive members, the monotone chain
/// lambda_i^k <= lambda_i^d (k <= d), and lambda_k^k <= lambda_i^i (i <= k)
/// over the members present, all with `slack`.
inline InterlacingReport interlacing_verify(std::span<const Eigen::MatrixXd> nested, double slack = 1e-10) {
  InterlacingReport r;
  for (std::size_t m = 0; m + 1 < nested.size(); ++m) {
    const auto& a = nested[m];
    const auto& b = nested[m + 1];
    if (a.rows() >= b.rows() || a.rows() != a.cols() || b.rows() != b.cols() ||
        b.topLeftCorner(a.rows(), a.cols()) != a)
      throw Error(ErrorKind::NotNested, "member " + std::to_string(m) + " is not a leading block of the next");
  }
  for (const auto& M : nested) r.eigenvalues.push_back(sorted_symmetric_eigen(M).values);
  auto check = [&](double lhs, double rhs) {
    ++r.checks;
    r.worst_margin = std::min(r.worst_margin, rhs - lhs);
    if (lhs > rhs + slack) ++r.violations;
  };
  for (std::size_t m = 0; m + 1 < nested.size(); ++m) {
    const Eigen::VectorXd& lo = r.eigenvalues[m];
    const Eigen::VectorXd& hi = r.eigenvalues[m + 1];
    const Eigen::Index gap = hi.size() - lo.size();
    for (Eigen::Index i = 0; i < lo.size(); ++i) {
      check(lo[i], hi[i]);        // lambda_i^n <= lambda_i^N
      check(hi[i + gap], lo[i]);  // lambda_{i+N-n}^N <= lambda_i^n
    }
  }
  for (std::size_t a = 0; a < nested.size(); ++a)
    for (std::size_t b = a + 1; b < nested.size(); ++b) {
      const Eigen::VectorXd& lk = r.eigenvalues[a];
      const Eigen::VectorXd& ld = r.eigenvalues[b];
      for (Eigen::Index i = 0; i < lk.size(); ++i) check(lk[i], ld[i]);
      check(ld[ld.size() - 1], lk[lk.size() - 1]);
    }
  return r;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct TruncationReport {
  int k = 0;
  int d = 0;
  Eigen::VectorXd beta_dk_coeffs;
  Eigen::VectorXd gamma_dk_coeffs;
  double bound = 0.0;
  std::vector<int> k_d_schedule;
};

inline nlohmann::json to_json(const TruncationReport& r) {
  return {{"k", r.k},
          {"d", r.d},
          {"beta_dk_coeffs", detail::to_std(r.beta_dk_coeffs)},
          {"gamma_dk_coeffs", detail::to_std(r.gamma_dk_coeffs)},
          {"gamma_dk_norm", r.gamma_dk_coeffs.norm()},
          {"bound", r.bound},
          {"k_d_schedule", r.k_d_schedule}};
}

inline nlohmann::json to_json(const InterlacingReport& r) {
  nlohmann::json sizes = nlohmann::json::array();
  for (const auto& e : r.eigenvalues) sizes.push_back(e.size());
  return {{"checks", r.checks},
          {"violations", r.violations},
          {"worst_margin", std::isfinite(r.worst_margin) ? nlohmann::json(r.worst_margin) : nlohmann::json()},
          {"sizes", sizes}};
}

/// One row per matrix: size then its eigenvalues in non-increasing order.
inline void write_eigenvalue_csv(std::ostream& os, std::span<const Eigen::VectorXd> eigenvalues) {
  os << "size,index,eigenvalue\n";
  for (const auto& ev : eigenvalues)
    for (Eigen::Index i = 0; i < ev.size(); ++i)
      os << ev.size() << "," << i + 1 << "," << detail::format_double(ev[i]) << "\n";
}

}  // namespace sofr
