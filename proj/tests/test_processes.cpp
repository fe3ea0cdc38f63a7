#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "sofr/processes.hpp"

using namespace sofr;

namespace {

ProcessSpec appendix_c(std::uint64_t seed) { return {AppendixCProcess{}, seed}; }

int nonzero_count(const SampleBatch& b, Eigen::Index i) {
  return static_cast<int>((b.coeffs.row(i).array() != 0.0).count());
}

}  // namespace

TEST(Rng, StreamSeedsDependOnEveryArgument) {
  EXPECT_NE(stream_seed(1, 0, StreamTag::Curves), stream_seed(2, 0, StreamTag::Curves));
  EXPECT_NE(stream_seed(1, 0, StreamTag::Curves), stream_seed(1, 1, StreamTag::Curves));
  EXPECT_NE(stream_seed(1, 0, StreamTag::Curves), stream_seed(1, 0, StreamTag::Noise));
  EXPECT_EQ(stream_seed(9, 4, StreamTag::Noise), stream_seed(9, 4, StreamTag::Noise));
}

TEST(Example, ZeroEtaGivesZeroCurves) {
  const ProcessSpec spec{ExampleProcess{std::vector<double>(6, 0.0)}, 1};
  const auto b = sample_example(spec, 50);
  EXPECT_EQ(b.coeffs.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Example, ConstantScoreVarianceIsEtaSquaredOverThree) {
  const double eta0 = 0.7;
  const ProcessSpec spec{ExampleProcess{{eta0}}, 2};
  const Eigen::Index n = 10000;
  const auto b = sample_example(spec, n);
  const FunctionExpr phi0[1] = {FunctionExpr::constant(1.0 / std::numbers::sqrt2)};
  const Eigen::VectorXd scores = b.coeffs * gram(b.dictionary, phi0);
  const double var = scores.squaredNorm() / n;  // known zero mean
  // Var of a squared uniform: E[U^4] - E[U^2]^2 = 1/5 - 1/9
  const double se = eta0 * eta0 * std::sqrt((1.0 / 5 - 1.0 / 9) / n);
  EXPECT_NEAR(var, eta0 * eta0 / 3.0, 5 * se);
}

TEST(Example, CurvesAreEven) {
  const auto b = sample_example({default_example_process(8), 3}, 20);
  for (Eigen::Index i = 0; i < b.n(); ++i)
    for (int k = 1; k <= 10; ++k) EXPECT_LT(std::abs(inner_product(b.curve(i), FunctionExpr::sine(k))), 1e-10);
  for (double t : {0.1, 0.37, 0.9}) EXPECT_NEAR(b.curve(0)(t), b.curve(0)(-t), 1e-12);
}

TEST(Example, EmpiricalCovarianceMatchesPopulation) {
  const ProcessSpec spec{default_example_process(4), 4};
  const Eigen::Index n = 10000;
  const auto b = sample_example(spec, n);
  const ProcessModel m = process_model(spec);
  const Eigen::MatrixXd pop = covariance_on(m, m.dictionary);
  const Eigen::MatrixXd scores = b.coeffs * gram(b.dictionary, m.dictionary);
  const Eigen::MatrixXd emp = scores.transpose() * scores / static_cast<double>(n);
  for (Eigen::Index i = 0; i < pop.rows(); ++i)
    for (Eigen::Index j = 0; j < pop.cols(); ++j) {
      // standard error of the mean of products of independent zero-mean scores
      const Eigen::ArrayXd prod = scores.col(i).array() * scores.col(j).array();
      const double se = std::sqrt((prod - prod.mean()).square().mean() / n);
      EXPECT_NEAR(emp(i, j), pop(i, j), 5 * se + 1e-15) << i << "," << j;
    }
}

TEST(CosineSubsetProcess, SeededRunsAreBitIdentical) {
  const auto a = sample_appendixC(appendix_c(11), 200, 3);
  const auto b = sample_appendixC(appendix_c(11), 200, 3);
  const auto ts = uniform_grid(201);
  EXPECT_TRUE((a.grid_values(ts).array() == b.grid_values(ts).array()).all());
  const auto c = sample_appendixC(appendix_c(11), 200, 4);
  EXPECT_FALSE((a.coeffs.array() == c.coeffs.array()).all());
}

TEST(CosineSubsetProcess, ReplicateIsIndependentOfGenerationOrder) {
  const auto direct = sample_appendixC(appendix_c(5), 50, 7);
  for (std::uint64_t r = 0; r < 7; ++r) sample_appendixC(appendix_c(5), 50, r);
  const auto later = sample_appendixC(appendix_c(5), 50, 7);
  EXPECT_TRUE((direct.coeffs.array() == later.coeffs.array()).all());
}

TEST(CosineSubsetProcess, PoissonMeanAndSubsetSupport) {
  const Eigen::Index n = 10000;
  const auto b = sample_appendixC(appendix_c(12), n);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int z = nonzero_count(b, i);
    total += z;
    // the chosen indices lie in {1..2z}
    for (Eigen::Index j = 2 * z; j < b.coeffs.cols(); ++j) EXPECT_EQ(b.coeffs(i, j), 0.0);
  }
  const double mean = total / n;
  EXPECT_NEAR(mean, 10.0, 5 * std::sqrt(10.0 / n));
}

TEST(CosineSubsetProcess, ZeroDrawsAreKeptAsZeroCurves) {
  ProcessSpec spec{AppendixCProcess{0.5, 10.0, 0.01, 60}, 13};
  const auto b = sample_appendixC(spec, 1000);
  int zeros = 0;
  for (Eigen::Index i = 0; i < b.n(); ++i) zeros += nonzero_count(b, i) == 0;
  EXPECT_EQ(b.n(), 1000);
  EXPECT_GT(zeros, 450);  // P(Z = 0) = exp(-0.5) ~ 0.61
}

TEST(CosineSubsetProcess, CurvesAreEvenAndHaveZeroMean) {
  const Eigen::Index n = 10000;
  const auto b = sample_appendixC(appendix_c(14), n);
  for (Eigen::Index i = 0; i < 10; ++i)
    for (int k = 1; k <= 6; ++k) EXPECT_LT(std::abs(inner_product(b.curve(i), FunctionExpr::sine(k))), 1e-10);
  const Eigen::VectorXd mean = b.coeffs.colwise().mean().transpose();
  EXPECT_LT(norm(linear_combination(as_span(mean), b.dictionary)), 0.5);
}

TEST(CosineSubsetProcess, ModelVariancesMatchSimulation) {
  const Eigen::Index n = 20000;
  const auto spec = appendix_c(15);
  const auto b = sample_appendixC(spec, n);
  const ProcessModel m = process_model(spec);
  for (Eigen::Index j = 0; j < 8; ++j) {
    const Eigen::ArrayXd sq = b.coeffs.col(j).array().square();
    const double se = std::sqrt((sq - sq.mean()).square().mean() / n);
    EXPECT_NEAR(sq.mean(), m.coeff_cov(j, j), 5 * se) << j;
  }
}

TEST(CosineSubsetProcess, CapIsEnforced) {
  ProcessSpec spec{AppendixCProcess{10.0, 10.0, 0.01, 2}, 16};
  try {
    sample_appendixC(spec, 100);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnsupportedProcess);
  }
}

TEST(Counterexample, LogLambdaFollowsRecursion) {
  const auto p = default_counterexample_process(8);
  const auto ll = counterexample_log_lambda(p);
  ASSERT_EQ(ll.size(), 8u);
  for (int d = 1; d < 5; ++d) {
    const double ratio = std::exp(ll[static_cast<std::size_t>(d - 1)] - ll[static_cast<std::size_t>(d)]);
    EXPECT_NEAR(ratio, 1.0 + std::exp(1.0 / p.epsilon[static_cast<std::size_t>(d - 1)]), 1e-9 * ratio);
  }
}

TEST(Counterexample, ScheduleBeyondExpRangeIsRejected) {
  auto p = default_counterexample_process(4);
  p.epsilon[1] = 1.0 / 701.0;
  try {
    counterexample_log_lambda(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BadSchedule);
  }
}

TEST(Counterexample, BasisIsOrthonormal) {
  const auto p = default_counterexample_process(10);
  const auto phi = counterexample_basis(p, 9);
  EXPECT_LT((gram(phi) - Eigen::MatrixXd::Identity(9, 9)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Counterexample, ZeroRotationGivesZeroDelta) {
  auto p = default_counterexample_process(6);
  p.epsilon[2] = std::numbers::pi / 2;  // theta_3 = 0
  EXPECT_NEAR(counterexample_delta(p, 3), 0.0, 1e-15);
}

TEST(Counterexample, EvenDimensionRejectedByClosedForm) {
  const auto p = default_counterexample_process();
  EXPECT_THROW(counterexample_delta(p, 4), Error);
  EXPECT_EQ(counterexample_delta_norm(p, 4), 0.0);
}

TEST(Counterexample, DefaultScheduleDiverges) {
  const auto p = default_counterexample_process(22);
  double prev = 0.0;
  for (int d = 3; d <= 21; d += 2) {
    const double v = counterexample_delta(p, d);
    EXPECT_GT(v, prev) << d;
    prev = v;
  }
  EXPECT_GT(prev, 21 * 0.4);
}

TEST(Counterexample, ClosedFormMatchesHandEvaluation) {
  // d = 3: eps = 1/9, mu = e^9, theta = pi/2 - 1/9, beta_3 = 1/3, beta_4 = 1/4
  const auto p = default_counterexample_process();
  const double eps = 1.0 / 9, th = std::numbers::pi / 2 - eps, mu = std::exp(9.0);
  const double c = std::cos(th), s = std::sin(th);
  const double expect = std::abs(c * s) * mu / (mu * c * c + 1) * std::abs(s / 3 - c / 4);
  EXPECT_NEAR(counterexample_delta(p, 3), expect, 1e-13 * expect);
}

TEST(Counterexample, ClosedFormAgreesWithMomentRoute) {
  const auto p = default_counterexample_process();
  for (int d : {3, 5, 7}) EXPECT_NEAR(counterexample_delta_moment(p, d), counterexample_delta(p, d), 1e-10) << d;
  for (int d : {2, 4, 6}) EXPECT_LT(counterexample_delta_moment(p, d), 1e-8) << d;
}

TEST(ConstantDirectionProcess, GammaNormIsSqrtK) {
  const auto p = default_remark3_process(12);
  EXPECT_NEAR(remark3_gamma_norm(p, 5, 1), 1.0, 1e-10);
  EXPECT_NEAR(remark3_gamma_norm(p, 6, 4), 2.0, 1e-10);
  EXPECT_EQ(remark3_gamma_norm(p, 3, 0), 0.0);
  for (int d = 1; d <= 12; ++d)
    for (int k = 1; k <= d; ++k) EXPECT_NEAR(remark3_gamma_norm(p, d, k), std::sqrt(k), 1e-10);
  EXPECT_THROW(remark3_gamma_norm(p, 13, 1), Error);
}

TEST(ConstantDirectionProcess, SampledCoefficientsMatchModel) {
  const ProcessSpec spec{default_remark3_process(4), 21};
  const auto b = sample_gaussian(spec, 20000);
  const Eigen::MatrixXd emp = b.coeffs.transpose() * b.coeffs / 20000.0;
  const Eigen::MatrixXd pop = process_model(spec).coeff_cov;
  EXPECT_LT((emp - pop).cwiseAbs().maxCoeff(), 0.05);
  for (Eigen::Index i = 0; i < 5; ++i)
    EXPECT_NEAR(b.coeffs.row(i).head(4).sum(), b.coeffs(i, 4), 1e-14);
}

TEST(Responses, NoiselessZeroBeta) {
  auto b = sample_appendixC(appendix_c(30), 20);
  generate_responses(b, FunctionExpr::zero(), 0.0);
  EXPECT_EQ(b.y.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Responses, OneHotOnBasisAtoms) {
  const std::vector<FunctionExpr> curves = {FunctionExpr::constant(1.0 / std::numbers::sqrt2), FunctionExpr::cosine(1),
                                            FunctionExpr::cosine(2)};
  const Eigen::VectorXd y = generate_responses(curves, FunctionExpr::cosine(1), 0.0, 1);
  EXPECT_NEAR(y[0], 0.0, 1e-14);
  EXPECT_NEAR(y[1], 1.0, 1e-14);
  EXPECT_NEAR(y[2], 0.0, 1e-14);
}

TEST(Responses, NoiseVarianceAndSeparateRecord) {
  auto b = sample_example({default_example_process(3), 31}, 10000);
  const auto beta = FunctionExpr::polynomial({1.0 / 3, 2.0, 1.0});
  generate_responses(b, beta, 1.0);
  const double mean = b.noise.mean();
  const double var = (b.noise.array() - mean).square().sum() / (b.n() - 1);
  EXPECT_NEAR(var, 1.0, 0.05);
  // y - noise is the exact inner product
  for (Eigen::Index i = 0; i < 5; ++i) EXPECT_NEAR(b.y[i] - b.noise[i], inner_product(b.curve(i), beta), 1e-10);
}

TEST(Responses, BatchCsvHeaderRecordsSeedAndVariant) {
  auto b = sample_example({default_example_process(2), 32}, 3);
  generate_responses(b, FunctionExpr::cosine(1), 0.5);
  std::ostringstream os;
  write_batch_csv(os, b, 11);
  const std::string text = os.str();
  EXPECT_EQ(text.rfind("# seed=32 replicate=0 p=11 variant=example\n", 0), 0u);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
}
