#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "sofr/errors.hpp"
#include "sofr/fnspace.hpp"
#include "sofr/fpca.hpp"
#include "sofr/harness/config.hpp"
#include "sofr/harness/pool.hpp"
#include "sofr/processes.hpp"
#include "sofr/regression.hpp"
#include "sofr/subspace.hpp"

namespace sofr::harness {

// ---------------------------------------------------------------------------
// Spaces
// ---------------------------------------------------------------------------

/// Even space of dimension k_s for the cosine-series processes, the process
/// dictionary itself for the Gaussian ones.
inline Subspace data_space(const ProcessSpec& process, int k_s) {
  if (std::holds_alternative<AppendixCProcess>(process.variant) || std::holds_alternative<ExampleProcess>(process.variant))
    return even_data_space(k_s);
  return Subspace(process_model(process).dictionary, SpaceLabel::S);
}

inline Subspace build_D(const SubspaceSpec& spec, const ProcessSpec& process, const Subspace& S) {
  switch (spec.kind) {
    case SubspaceKind::Theta: return d_theta(spec.theta);
    case SubspaceKind::Pcs: {
      if (spec.k > S.dim()) throw Error(ErrorKind::BadTruncation, "more PCs requested than dim S");
      const KLBasis kl = kl_decompose(population_covariance(process, S), S);
      return Subspace(std::vector<FunctionExpr>(kl.psi.begin(), kl.psi.begin() + spec.k), SpaceLabel::D);
    }
    case SubspaceKind::Atoms: return Subspace::from_span(spec.atoms, SpaceLabel::D);
  }
  throw Error(ErrorKind::ConfigError, "unknown subspace kind");
}

// ---------------------------------------------------------------------------
// Error decomposition
// ---------------------------------------------------------------------------

/// ||beta^F||^2, ||gamma||^2 and ||pi^{-1}(beta^E + gamma) - (beta^E + gamma) - beta^{S-perp}||^2.
struct ErrorTerms {
  double beta_F_norm2 = 0.0;
  double gamma_norm2 = 0.0;
  double sperp_norm2 = 0.0;
  double limit_distance2 = 0.0;  // ||pi^{-1}(beta^E + gamma) - beta||^2, computed directly

  double sum() const { return beta_F_norm2 + gamma_norm2 + sperp_norm2; }
};

/// Coordinates of beta on the D, E and S bases plus ||beta||^2.
struct BetaCoordinates {
  Eigen::VectorXd on_D, on_E, on_S;
  double norm2 = 0.0;
};

inline BetaCoordinates beta_coordinates(const EStructure& E, const FunctionExpr& beta) {
  const FunctionExpr b[1] = {beta};
  return {gram(E.D().span(), b).col(0), gram(E.e_basis().span(), b).col(0), gram(E.S().span(), b).col(0),
          inner_product(beta, beta)};
}

inline ErrorTerms error_decomposition(const EStructure& E, const BetaCoordinates& bc, const Eigen::VectorXd& gamma) {
  if (gamma.size() != E.dim()) throw Error(ErrorKind::BadDimension, "gamma has the wrong length");
  const Eigen::VectorXd g = bc.on_E + gamma;
  const Eigen::VectorXd c = E.P_inverse() * g;
  const double sperp_beta2 = std::max(0.0, bc.norm2 - bc.on_S.squaredNorm());
  // u = pi^{-1}(h) - h lies in S-perp, so <u, beta> = <u, beta^{S-perp}>
  const double u2 = std::max(0.0, c.squaredNorm() - g.squaredNorm());
  const double u_beta = c.dot(bc.on_D) - g.dot(bc.on_E);
  ErrorTerms t;
  t.beta_F_norm2 = std::max(0.0, bc.on_S.squaredNorm() - bc.on_E.squaredNorm());
  t.gamma_norm2 = gamma.squaredNorm();
  t.sperp_norm2 = std::max(0.0, u2 - 2.0 * u_beta + sperp_beta2);
  t.limit_distance2 = std::max(0.0, c.squaredNorm() - 2.0 * c.dot(bc.on_D) + bc.norm2);
  return t;
}

inline ErrorTerms error_decomposition(const EStructure& E, const FunctionExpr& beta, const Eigen::VectorXd& gamma) {
  return error_decomposition(E, beta_coordinates(E, beta), gamma);
}

/// The three functions whose squared norms error_decomposition reports.
struct ErrorComponents {
  FunctionExpr beta_F, gamma, sperp;
};

inline ErrorComponents error_components(const EStructure& E, const FunctionExpr& beta, const Eigen::VectorXd& gamma) {
  const auto parts = E.orthogonal_decompose(beta);
  const Eigen::VectorXd g = beta_coordinates(E, beta).on_E + gamma;
  const Eigen::VectorXd c = E.P_inverse() * g;
  return {parts.beta_F, E.e_basis().expand(gamma), E.D().expand(c) - E.e_basis().expand(g) - parts.beta_Sperp};
}

/// Population bias on E, or nothing when Sigma^E is singular.
inline std::optional<Eigen::VectorXd> analytic_gamma(const ProcessSpec& process, const EStructure& E,
                                                     const FunctionExpr& beta) {
  const FunctionExpr bf = beta - E.e_basis().expand(beta_coordinates(E, beta).on_E);
  try {
    return gamma_asymptotic(process, E, bf);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::SingularCovariance) return std::nullopt;
    throw;
  }
}

// ---------------------------------------------------------------------------
// Monte Carlo scenario
// ---------------------------------------------------------------------------

struct BiasSummary {
  Eigen::VectorXd e_bias;     // mean(beta_hat^E) - beta^E
  Eigen::VectorXd e_bias_se;  // per component
  double e_bias_norm = 0.0;
  double e_bias_norm_se = 0.0;  // sqrt(tr Cov / M)
  double s_part_norm = 0.0;     // S-part of the mean bias curve
  double s_part_se = 0.0;
  double odd_part_norm = 0.0;   // S-perp part of the mean bias curve
  double odd_gap = 0.0;         // distance of that part from its analytic limit
  double odd_gap_se = 0.0;
};

struct ScenarioResult {
  std::string case_label;
  std::uint64_t seed = 0;
  std::string variant;
  std::string subspace;
  int n = 0, replicates = 0, k_s = 0, p = 0, d = 0;
  double sigma = 0.0;
  bool d_in_s = false;

  Eigen::VectorXd identifiability_eigenvalues;
  double min_eigenvalue = 0.0;

  std::vector<double> grid;
  Eigen::MatrixXd beta_D;  // replicate x d
  Eigen::MatrixXd beta_E;  // replicate x d
  Eigen::VectorXd true_curve, projection_curve, mean_curve, variance_curve, limit_curve;
  Eigen::MatrixXd replicate_curves;  // p x replicate

  Eigen::VectorXd beta_E_true;      // E coordinates of beta^E
  Eigen::VectorXd projection_coeffs;  // D coordinates of the projection of beta on D
  Eigen::VectorXd mean_coeffs;        // D coordinates
  std::optional<Eigen::VectorXd> gamma;
  Eigen::VectorXd limit_coeffs;  // P^{-1}(beta^E + gamma), D coordinates
  std::optional<ErrorTerms> decomposition;

  double l2_error_mean = 0.0;
  double l2_error_projection = 0.0;
  double mc_distance2 = 0.0;  // mean over replicates of ||beta_hat^D - beta||^2
  double mean_coeff_variance = 0.0;
  BiasSummary bias;

  double condition_min = 0.0, condition_max = 0.0;
  double cov_order_margin = std::numeric_limits<double>::infinity();  // min_k nu_k^D - nu_k^E
  double cov_equal_gap = 0.0;                                         // max_k |nu_k^D - nu_k^E|
};

/// Deterministic pieces shared by all replicates.
struct ScenarioSetup {
  Subspace S;
  EStructure E;
  BetaCoordinates beta;
  Eigen::MatrixXd dict_to_E;  // Gram of the process dictionary against the E basis
};

inline ScenarioSetup prepare(const ScenarioConfig& c) {
  Subspace S = data_space(c.process, c.k_s);
  Subspace D = build_D(c.subspace, c.process, S);
  EStructure E = build_E(D, S);
  BetaCoordinates bc = beta_coordinates(E, c.beta);
  Eigen::MatrixXd G = gram(process_model(c.process).dictionary, E.e_basis().span());
  return {std::move(S), std::move(E), std::move(bc), std::move(G)};
}

namespace detail {

inline double sqnorm_dist(const Eigen::VectorXd& c, const BetaCoordinates& bc) {
  return std::max(0.0, c.squaredNorm() - 2.0 * c.dot(bc.on_D) + bc.norm2);
}

inline Eigen::MatrixXd sample_cov(const Eigen::MatrixXd& rows) {
  const Eigen::Index m = rows.rows();
  if (m < 2) return Eigen::MatrixXd::Zero(rows.cols(), rows.cols());
  const Eigen::MatrixXd c = rows.rowwise() - rows.colwise().mean();
  return c.transpose() * c / static_cast<double>(m - 1);
}

}  // namespace detail

inline ScenarioResult run_scenario(const ScenarioConfig& c, int jobs = 1) {
  const ScenarioSetup setup = prepare(c);
  const EStructure& E = setup.E;
  const BetaCoordinates& bc = setup.beta;
  const Eigen::Index d = E.dim();
  const auto M = static_cast<std::size_t>(c.replicates);

  ScenarioResult r;
  r.case_label = c.case_label;
  r.seed = c.seed;
  r.variant = variant_name(c.process);
  r.subspace = c.subspace.describe();
  r.n = c.n;
  r.replicates = c.replicates;
  r.k_s = static_cast<int>(setup.S.dim());
  r.p = c.p;
  r.d = static_cast<int>(d);
  r.sigma = c.sigma;
  r.identifiability_eigenvalues = E.D_D();
  r.min_eigenvalue = E.min_eigenvalue();
  r.d_in_s = (E.D_D().array() - 1.0).abs().maxCoeff() < kAssumptionTol;

  r.beta_D = Eigen::MatrixXd(static_cast<Eigen::Index>(M), d);
  r.beta_E = Eigen::MatrixXd(static_cast<Eigen::Index>(M), d);
  std::vector<double> cond(M), margin(M), gap(M);
  const ProcessSpec spec{c.process.variant, c.seed};
  parallel_for(M, jobs, [&](std::size_t m) {
    SampleBatch batch = sample_process(spec, c.n, m);
    generate_responses(batch, c.beta, c.sigma);
    const DesignMatrix X{batch.coeffs * setup.dict_to_E, c.p};
    const FitResult fr = fit(X, batch.y, E);
    const auto i = static_cast<Eigen::Index>(m);
    r.beta_E.row(i) = fr.beta_E_coeffs.transpose();
    r.beta_D.row(i) = fr.beta_D_coeffs.transpose();
    cond[m] = fr.condition_number;
    const Eigen::VectorXd nd = sorted_symmetric_eigen(fr.cov_D).values;
    const Eigen::VectorXd ne = sorted_symmetric_eigen(fr.cov_E).values;
    margin[m] = (nd - ne).minCoeff();
    gap[m] = (nd - ne).cwiseAbs().maxCoeff();
  });
  r.condition_min = *std::min_element(cond.begin(), cond.end());
  r.condition_max = *std::max_element(cond.begin(), cond.end());
  r.cov_order_margin = *std::min_element(margin.begin(), margin.end());
  r.cov_equal_gap = *std::max_element(gap.begin(), gap.end());

  // analytic pieces
  r.beta_E_true = bc.on_E;
  r.projection_coeffs = bc.on_D;
  r.gamma = analytic_gamma(c.process, E, c.beta);
  const Eigen::VectorXd gamma = r.gamma.value_or(Eigen::VectorXd::Zero(d));
  r.limit_coeffs = E.P_inverse() * (bc.on_E + gamma);
  if (r.gamma) r.decomposition = error_decomposition(E, bc, *r.gamma);

  // Monte Carlo aggregates, reduced in replicate order
  r.mean_coeffs = r.beta_D.colwise().mean().transpose();
  r.l2_error_mean = std::sqrt(detail::sqnorm_dist(r.mean_coeffs, bc));
  r.l2_error_projection = (r.mean_coeffs - bc.on_D).norm();
  double dist = 0.0;
  for (Eigen::Index m = 0; m < r.beta_D.rows(); ++m) dist += detail::sqnorm_dist(r.beta_D.row(m).transpose(), bc);
  r.mc_distance2 = dist / static_cast<double>(M);
  const Eigen::MatrixXd cov_D = detail::sample_cov(r.beta_D);
  const Eigen::MatrixXd cov_E = detail::sample_cov(r.beta_E);
  r.mean_coeff_variance = cov_D.diagonal().mean();

  const double Md = static_cast<double>(M);
  BiasSummary& b = r.bias;
  b.e_bias = r.beta_E.colwise().mean().transpose() - bc.on_E;
  b.e_bias_se = (cov_E.diagonal() / Md).cwiseSqrt();
  b.e_bias_norm = b.e_bias.norm();
  b.e_bias_norm_se = std::sqrt(cov_E.trace() / Md);
  const Eigen::MatrixXd& A = E.A();  // S x D
  b.s_part_norm = (A * r.mean_coeffs - bc.on_S).norm();
  b.s_part_se = std::sqrt(std::max(0.0, (A * cov_D * A.transpose()).trace() / Md));
  const Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(d, d) - A.transpose() * A;  // (I - Pi_S) on D coordinates
  const double sperp_beta2 = std::max(0.0, bc.norm2 - bc.on_S.squaredNorm());
  const Eigen::VectorXd sperp_cross = bc.on_D - A.transpose() * bc.on_S;  // <(I - Pi_S) phi^D, beta>
  b.odd_part_norm = std::sqrt(std::max(
      0.0, r.mean_coeffs.dot(Q * r.mean_coeffs) - 2.0 * r.mean_coeffs.dot(sperp_cross) + sperp_beta2));
  const Eigen::VectorXd delta = r.mean_coeffs - r.limit_coeffs;
  b.odd_gap = std::sqrt(std::max(0.0, delta.dot(Q * delta)));
  b.odd_gap_se = std::sqrt(std::max(0.0, (Q * cov_D).trace() / Md));

  // grid curves
  r.grid = uniform_grid(c.p);
  Eigen::MatrixXd Phi(c.p, d);
  for (Eigen::Index j = 0; j < d; ++j) Phi.col(j) = sample(E.D().basis()[static_cast<std::size_t>(j)], r.grid);
  r.true_curve = sample(c.beta, r.grid);
  r.projection_curve = Phi * bc.on_D;
  r.replicate_curves = Phi * r.beta_D.transpose();
  r.mean_curve = r.replicate_curves.rowwise().mean();
  r.variance_curve = Eigen::VectorXd::Zero(c.p);
  if (M > 1)
    r.variance_curve =
        (r.replicate_curves.colwise() - r.mean_curve).rowwise().squaredNorm() / static_cast<double>(M - 1);
  r.limit_curve = Phi * r.limit_coeffs;
  return r;
}

// ---------------------------------------------------------------------------
// Bias convergence along one nested sample
// ---------------------------------------------------------------------------

struct SllnRow {
  int n = 0;
  Eigen::VectorXd gamma_n;
  double distance = 0.0;  // ||gamma_n - gamma||
};

/// gamma_n on the first n curves of a single sample of size max(ns), replicate 0.
inline std::vector<SllnRow> slln_study(const ScenarioConfig& c, std::span<const int> ns) {
  if (ns.empty()) return {};
  const ScenarioSetup setup = prepare(c);
  const EStructure& E = setup.E;
  const auto gamma = analytic_gamma(c.process, E, c.beta);
  if (!gamma) throw Error(ErrorKind::SingularCovariance, "no analytic gamma for this scenario");
  const FunctionExpr bf = c.beta - E.e_basis().expand(setup.beta.on_E);
  const int n_max = *std::max_element(ns.begin(), ns.end());
  const SampleBatch batch = sample_process({c.process.variant, c.seed}, n_max, 0);
  const FunctionExpr b[1] = {bf};
  const Eigen::MatrixXd XE = batch.coeffs * setup.dict_to_E;
  const Eigen::VectorXd v = batch.coeffs * gram(batch.dictionary, b).col(0);
  std::vector<SllnRow> out;
  for (int n : ns) {
    const LeastSquares ls(DesignMatrix{XE.topRows(n), c.p});
    SllnRow row{n, ls.solve(v.head(n)), 0.0};
    row.distance = (row.gamma_n - *gamma).norm();
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace sofr::harness
