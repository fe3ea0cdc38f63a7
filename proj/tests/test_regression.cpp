#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "sofr/regression.hpp"

using namespace sofr;

namespace {

constexpr double kPi = std::numbers::pi;

const Subspace& even_s() {
  static const Subspace s = even_data_space(50);
  return s;
}

const EStructure& legendre_E() {
  static const EStructure e = build_E(Subspace(legendre_even_atoms(), SpaceLabel::D), even_s());
  return e;
}

ProcessSpec appendix_c(std::uint64_t seed) { return {AppendixCProcess{}, seed}; }

FunctionExpr figure_one_beta() { return FunctionExpr::polynomial({1.0 / 3.0, 2.0, 1.0}); }

// Composite Simpson rule on a fine uniform grid, independent of the library quadrature.
double simpson(const FunctionExpr& f, const FunctionExpr& g, int intervals = 200000) {
  const double h = 2.0 / intervals;
  double s = f(-1.0) * g(-1.0) + f(1.0) * g(1.0);
  for (int i = 1; i < intervals; ++i) {
    const double t = -1.0 + i * h;
    s += (i % 2 ? 4.0 : 2.0) * f(t) * g(t);
  }
  return s * h / 3.0;
}

// Two-atom D whose cross-Gram with {cos1, cos2, ...} is diag(1, 1/2).
EStructure half_scaled_E() {
  const Subspace S({FunctionExpr::cosine(1), FunctionExpr::cosine(2), FunctionExpr::cosine(3)}, SpaceLabel::S);
  const Subspace D({FunctionExpr::cosine(1), FunctionExpr::cosine(2, 0.5) + FunctionExpr::sine(2, std::sqrt(3.0) / 2)},
                   SpaceLabel::D);
  return build_E(D, S);
}

}  // namespace

TEST(Center, SubtractsMeans) {
  const std::vector<FunctionExpr> xs = {FunctionExpr::cosine(1), FunctionExpr::cosine(2), FunctionExpr::sine(1)};
  const Eigen::Vector3d y(1.0, 2.0, 3.0);
  const auto c = center(xs, y);
  EXPECT_NEAR((c.y - Eigen::Vector3d(-1.0, 0.0, 1.0)).cwiseAbs().maxCoeff(), 0.0, 1e-15);
  const auto& rule = default_rule();
  for (std::size_t i = 0; i < rule.size(); i += 37) {
    const double t = rule.nodes()[i];
    EXPECT_NEAR(c.xs[0](t) + c.xs[1](t) + c.xs[2](t), 0.0, 1e-10);
  }
}

TEST(Center, CenteredInputUnchangedAndShiftRemoved) {
  const std::vector<FunctionExpr> xs = {FunctionExpr::cosine(1), -FunctionExpr::cosine(1)};
  const Eigen::Vector2d y(0.5, -0.5);
  const auto c = center(xs, y);
  EXPECT_LT(norm(c.xs[0] - xs[0]), 1e-12);
  EXPECT_NEAR(c.y[0], 0.5, 1e-12);
  std::vector<FunctionExpr> shifted;
  for (const auto& x : xs) shifted.push_back(x + FunctionExpr::constant(3.0) + FunctionExpr::polynomial({0, 0, 1}));
  const auto cs = center(shifted, y);
  EXPECT_LT(norm(cs.xs[0] - xs[0]), 1e-12);
  EXPECT_LT(norm(cs.xs[1] - xs[1]), 1e-12);
  EXPECT_THROW(center(std::span(xs).first(1), y.head(1)), Error);
}

TEST(Design, BasisCurvesGiveUnitRows) {
  const auto& E = legendre_E();
  const DesignMatrix X = design_matrix(E.e_basis().span(), E);
  EXPECT_LT((X.X - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-10);
  const std::vector<FunctionExpr> odd = {FunctionExpr::sine(3), FunctionExpr::polynomial({0, 1, 0, 4})};
  EXPECT_LT(design_matrix(odd, E).X.cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Design, BatchRouteMatchesSimpsonOracle) {
  const auto& E = legendre_E();
  const auto batch = sample_appendixC(appendix_c(40), 6);
  const DesignMatrix X = design_matrix(batch, E);
  const auto curves = batch.curves();
  const DesignMatrix Xg = design_matrix(curves, E);
  EXPECT_LT((X.X - Xg.X).cwiseAbs().maxCoeff(), 1e-10);
  for (Eigen::Index i = 0; i < 6; ++i)
    for (Eigen::Index j = 0; j < 3; ++j)
      EXPECT_NEAR(X.X(i, j), simpson(curves[static_cast<std::size_t>(i)], E.e_basis().basis()[static_cast<std::size_t>(j)]), 1e-8);
}

TEST(FitE, IdentityDesignRecoversCoefficients) {
  const DesignMatrix X{Eigen::MatrixXd::Identity(3, 3)};
  const Eigen::Vector3d b(0.3, -2.0, 5.0);
  EXPECT_LT((fit_E(X, b) - b).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(FitE, RankDeficiencyIsReported) {
  try {
    fit_E(DesignMatrix{Eigen::MatrixXd::Ones(2, 3)}, Eigen::Vector2d(1, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::RankDeficient);
  }
  Eigen::MatrixXd collinear(4, 2);
  collinear << 1, 2, 2, 4, 3, 6, 4, 8;
  EXPECT_THROW(fit_E(DesignMatrix{collinear}, Eigen::Vector4d(1, 2, 3, 4)), Error);
  DesignMatrix few_points{Eigen::MatrixXd::Identity(4, 3)};
  few_points.p = 2;
  EXPECT_THROW(fit_E(few_points, Eigen::Vector4d(1, 2, 3, 4)), Error);
}

TEST(FitE, NoiselessResponsesRecoverBetaWithinConditioning) {
  const auto& E = legendre_E();
  auto batch = sample_appendixC(appendix_c(41), 100);
  const Eigen::Vector3d coeffs(0.4, -1.2, 2.0);
  const FunctionExpr beta = E.e_basis().expand(coeffs);
  generate_responses(batch, beta, 0.0);
  const LeastSquares ls(design_matrix(batch, E));
  EXPECT_LT((ls.solve(batch.y) - coeffs).norm(), ls.condition_number() * 1e-12);
}

TEST(FitE, CaseAErrorShrinksWithN) {
  const EStructure E = build_E(d_theta(kPi / 3), even_s());
  const FunctionExpr beta = figure_one_beta();
  const Eigen::VectorXd truth = E.e_basis().coordinates(beta);
  double err[2] = {0.0, 0.0};
  const Eigen::Index ns[2] = {100, 500};
  for (int r = 0; r < 20; ++r)
    for (int s = 0; s < 2; ++s) {
      auto batch = sample_appendixC(appendix_c(42), ns[s], static_cast<std::uint64_t>(r));
      generate_responses(batch, beta, 1.0);
      err[s] += (fit_E(design_matrix(batch, E), batch.y) - truth).norm();
    }
  EXPECT_LT(err[1], err[0]);
}

TEST(FitD, InsideSIsNormPreservingRotation) {
  const auto& E = legendre_E();
  const Eigen::Vector3d b(1.0, -0.5, 0.25);
  EXPECT_NEAR(fit_D(b, E).norm(), b.norm(), 1e-10);
  EXPECT_EQ(fit_D(Eigen::Vector3d::Zero(), E).norm(), 0.0);
}

TEST(FitD, ScalarInversionDividesByCosTheta) {
  const double theta = 1.1;
  const EStructure E = build_E(Subspace({d_theta_atoms(theta)[0]}, SpaceLabel::D), even_s());
  Eigen::VectorXd b(1);
  b << 0.7;
  EXPECT_NEAR(fit_D(b, E)[0], 0.7 / std::cos(theta), 1e-10);
  // matches apply_pi_inverse of the E expansion
  const FunctionExpr viaop = E.apply_pi_inverse(E.e_basis().expand(b));
  EXPECT_LT(norm(viaop - E.D().expand(fit_D(b, E))), 1e-10);
}

TEST(Covariance, HandComputedRetroProjection) {
  const EStructure E = half_scaled_E();
  EXPECT_LT((E.P() - Eigen::Vector2d(1.0, 0.5).asDiagonal().toDenseMatrix()).cwiseAbs().maxCoeff(), 1e-12);
  const Covariances c = covariance(DesignMatrix{Eigen::MatrixXd::Identity(2, 2)}, 1.0, E);
  EXPECT_LT((c.cov_E - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((c.cov_D - Eigen::Vector2d(1.0, 4.0).asDiagonal().toDenseMatrix()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Covariance, EigenvalueOrderingAcrossTheta) {
  for (double theta : {0.0, kPi / 6, kPi / 3, 1.3}) {
    const EStructure E = build_E(d_theta(theta), even_s());
    auto batch = sample_appendixC(appendix_c(43), 200);
    generate_responses(batch, figure_one_beta(), 1.0);
    const FitResult r = fit(design_matrix(batch, E), batch.y, E);
    const Eigen::VectorXd nuE = sorted_symmetric_eigen(r.cov_E).values;
    const Eigen::VectorXd nuD = sorted_symmetric_eigen(r.cov_D).values;
    const Eigen::MatrixXd back = E.P_inverse() * r.cov_E * E.P_inverse().transpose();
    EXPECT_LT((r.cov_D - back).cwiseAbs().maxCoeff(), 1e-10);
    for (Eigen::Index k = 0; k < 3; ++k) {
      EXPECT_GE(nuD[k], nuE[k] - 1e-10);
      EXPECT_LE(nuD[k], nuE[k] / E.min_eigenvalue() * (1 + 1e-10));
      if (theta == 0.0) {
        EXPECT_NEAR(nuD[k], nuE[k], 1e-10);
      }
    }
  }
}

TEST(GammaN, ZeroBetaFGivesZero) {
  const auto& E = legendre_E();
  const auto batch = sample_appendixC(appendix_c(44), 50);
  const auto curves = batch.curves();
  EXPECT_EQ(gamma_n(design_matrix(batch, E), curves, FunctionExpr::zero()).norm(), 0.0);
}

TEST(GammaN, IndependentScoresShrinkTowardZero) {
  // scores on {1/sqrt2, cos1} are independent of <X, cos5> for the example process
  const ProcessSpec spec{default_example_process(6), 45};
  const Subspace S(process_model(spec).dictionary, SpaceLabel::S);
  const EStructure E = build_E(S.leading(2), S);
  const auto batch = sample_example(spec, 10000);
  const Eigen::VectorXd v = batch.coeffs.col(5);
  const DesignMatrix X = design_matrix(batch, E);
  double prev = std::numeric_limits<double>::infinity();
  for (Eigen::Index n : {100, 1000, 10000}) {
    const double g = LeastSquares(DesignMatrix{X.X.topRows(n)}).solve(v.head(n)).norm();
    EXPECT_LT(g, prev) << n;
    prev = g;
  }
}

TEST(GammaAsymptotic, ZeroForLeadingPopulationEigenfunctions) {
  const auto spec = appendix_c(0);
  const std::vector<FunctionExpr> pcs = {FunctionExpr::cosine(1), FunctionExpr::cosine(2), FunctionExpr::cosine(3)};
  const EStructure E = build_E(Subspace(pcs, SpaceLabel::D), even_s());
  const FunctionExpr beta = FunctionExpr::indicator(-0.5, 0.5);
  const FunctionExpr bf = beta - E.e_basis().project(beta);
  EXPECT_LT(gamma_asymptotic(spec, E, bf).norm(), 1e-10);
  EXPECT_EQ(gamma_asymptotic(spec, E, FunctionExpr::zero()).norm(), 0.0);
}

TEST(GammaAsymptotic, CounterexampleMatchesClosedForm) {
  const auto p = default_counterexample_process();
  const Subspace S(process_model({p, 0}).dictionary, SpaceLabel::S);
  for (int d : {3, 5, 7}) {
    const EStructure E = build_E(Subspace(counterexample_basis(p, d), SpaceLabel::D), S);
    const FunctionExpr beta = counterexample_beta(p);
    const FunctionExpr bf = beta - E.e_basis().project(beta);
    const Eigen::VectorXd g = gamma_asymptotic({p, 0}, E, bf);
    EXPECT_NEAR(g.norm(), counterexample_delta(p, d), 1e-10) << d;
    const Eigen::VectorXd delta = delta_along_pcs({p, 0}, E, bf);
    EXPECT_NEAR(delta.norm(), g.norm(), 1e-12 * std::max(1.0, g.norm()));
  }
  for (int d : {2, 4, 6}) {
    const EStructure E = build_E(Subspace(counterexample_basis(p, d), SpaceLabel::D), S);
    const FunctionExpr beta = counterexample_beta(p);
    EXPECT_LT(delta_along_pcs({p, 0}, E, beta - E.e_basis().project(beta)).norm(), 1e-8) << d;
  }
}

TEST(GammaAsymptotic, ConstantDirectionComponentsAreOne) {
  const Remark3Process p = default_remark3_process(12);
  const Subspace S(process_model({p, 0}).dictionary, SpaceLabel::S);
  for (int d : {1, 4, 9}) {
    std::vector<FunctionExpr> atoms;
    for (int k = 1; k <= d; ++k) atoms.push_back(FunctionExpr::cosine(k));
    const EStructure E = build_E(Subspace(atoms, SpaceLabel::D), S);
    const Eigen::VectorXd g =
        gamma_asymptotic({p, 0}, E, FunctionExpr::constant(1.0 / std::numbers::sqrt2));
    EXPECT_LT((g.cwiseAbs().array() - 1.0).abs().maxCoeff(), 1e-10);
  }
}

TEST(GammaAsymptotic, SingularCovarianceDetected) {
  // the example process with eta_2 = 0 leaves cos2 without variance
  ExampleProcess ex = default_example_process(4);
  ex.eta[2] = 0.0;
  const Subspace S(process_model({ex, 0}).dictionary, SpaceLabel::S);
  const EStructure E = build_E(S.leading(3), S);
  try {
    gamma_asymptotic({ex, 0}, E, FunctionExpr::cosine(4));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SingularCovariance);
  }
}

TEST(Properties, ConditionalMeanIsBetaEPlusGammaN) {
  const auto& E = legendre_E();
  const FunctionExpr beta = FunctionExpr::indicator(-0.5, 0.5);
  const auto parts = E.orthogonal_decompose(beta);
  const FunctionExpr bf = beta - parts.beta_E;
  const auto batch = sample_appendixC(appendix_c(46), 300);
  const DesignMatrix X = design_matrix(batch, E);
  const LeastSquares ls(X);
  const FunctionExpr b1[1] = {beta}, b2[1] = {bf};
  const Eigen::VectorXd exact = batch.coeffs * gram(batch.dictionary, b1).col(0);
  const Eigen::VectorXd v = batch.coeffs * gram(batch.dictionary, b2).col(0);
  const Eigen::VectorXd target = E.e_basis().coordinates(parts.beta_E) + gamma_n(ls, v);
  const int M = 200;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
  Rng rng = make_rng(46, 0, StreamTag::Pilot);
  std::normal_distribution<double> z;
  for (int m = 0; m < M; ++m) {
    Eigen::VectorXd y = exact;
    for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += z(rng);
    mean += ls.solve(y) / M;
  }
  const Eigen::VectorXd se = (ls.inverse_gram().diagonal() / M).cwiseSqrt();
  for (Eigen::Index k = 0; k < 3; ++k) EXPECT_NEAR(mean[k], target[k], 4 * se[k]) << k;
}

// Sigma^E on the Legendre span is nearly singular (the constant score has
// correlation about -0.997 with the second), so single nested paths are noisy;
// the error averaged over seeds is what shrinks reliably.
TEST(Properties, GammaNConvergesToGamma) {
  const auto& E = legendre_E();
  const FunctionExpr beta = FunctionExpr::indicator(-0.5, 0.5);
  const FunctionExpr bf = beta - E.e_basis().project(beta);
  const Eigen::VectorXd gamma = gamma_asymptotic(appendix_c(0), E, bf);
  const FunctionExpr b[1] = {bf};
  const Eigen::Index ns[3] = {100, 1000, 10000};
  double err[3] = {0.0, 0.0, 0.0};
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto batch = sample_appendixC(appendix_c(seed), 10000);
    const Eigen::VectorXd v = batch.coeffs * gram(batch.dictionary, b).col(0);
    const DesignMatrix X = design_matrix(batch, E);
    for (int s = 0; s < 3; ++s)
      err[s] += (LeastSquares(DesignMatrix{X.X.topRows(ns[s])}).solve(v.head(ns[s])) - gamma).norm() / 20;
  }
  EXPECT_LT(err[1], err[0]);
  EXPECT_LT(err[2], err[1]);
}

TEST(Report, FitJsonHasCoefficientsAndEigenvalues) {
  const auto& E = legendre_E();
  auto batch = sample_appendixC(appendix_c(48), 40);
  generate_responses(batch, figure_one_beta(), 1.0);
  const Eigen::VectorXd v = Eigen::VectorXd::Zero(40);
  const FitResult r = fit(design_matrix(batch, E), batch.y, E, std::nullopt, v);
  const auto j = to_json(r);
  EXPECT_EQ(j["beta_E_coeffs"].size(), 3u);
  EXPECT_EQ(j["cov_D_eigenvalues"].size(), 3u);
  EXPECT_TRUE(j["sigma2_hat"].is_number());
  EXPECT_EQ(j["gamma_n_coeffs"].size(), 3u);
  const FitResult exact = fit(DesignMatrix{Eigen::MatrixXd::Identity(3, 3)}, Eigen::Vector3d(1, 2, 3), E);
  EXPECT_TRUE(to_json(exact)["sigma2_hat"].is_null());
}
