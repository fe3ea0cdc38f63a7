#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "sofr/fnspace.hpp"
#include "sofr/subspace.hpp"

using namespace sofr;

namespace {

// Random expression over the smooth atoms; parity selects even or odd atoms only.
enum class Parity { Any, Even, Odd };

FunctionExpr random_expr(std::mt19937_64& rng, Parity parity = Parity::Any) {
  std::uniform_real_distribution<double> w(-10.0, 10.0);
  std::uniform_int_distribution<int> k(1, 12);
  std::uniform_int_distribution<int> nterms(1, 5);
  std::vector<Term> terms;
  const int n = nterms(rng);
  for (int i = 0; i < n; ++i) {
    const int pick = std::uniform_int_distribution<int>(0, 2)(rng);
    if (parity == Parity::Even || (parity == Parity::Any && pick == 0)) {
      if (pick == 2) terms.push_back({w(rng), Polynomial{{w(rng), 0.0, w(rng), 0.0, w(rng)}}});
      else if (pick == 1) terms.push_back({w(rng), Constant{}});
      else terms.push_back({w(rng), Cosine{k(rng)}});
    } else if (parity == Parity::Odd || pick == 1) {
      if (pick == 2) terms.push_back({w(rng), Polynomial{{0.0, w(rng), 0.0, w(rng)}}});
      else terms.push_back({w(rng), Sine{k(rng)}});
    } else {
      terms.push_back({w(rng), Polynomial{{w(rng), w(rng), w(rng)}}});
    }
  }
  return FunctionExpr(std::move(terms));
}

}  // namespace

TEST(Quadrature, GaussLegendreNodesSymmetricAndWeightsSumToTwo) {
  for (int n : {1, 2, 5, 10, 17}) {
    std::vector<double> x, w;
    gauss_legendre(n, x, w);
    double sw = 0.0;
    for (int i = 0; i < n; ++i) {
      EXPECT_NEAR(x[i], -x[n - 1 - i], 1e-15);
      sw += w[i];
    }
    EXPECT_NEAR(sw, 2.0, 1e-14);
  }
}

TEST(Quadrature, DefaultRuleIntegratesLowDegreePolynomials) {
  const auto& rule = default_rule();
  EXPECT_EQ(rule.size(), 2000u);
  for (int deg = 0; deg <= 10; ++deg) {
    const double exact = (deg % 2 == 0) ? 2.0 / (deg + 1) : 0.0;
    const double got = rule.integrate([deg](double t) { return std::pow(t, deg) + 1.0; }) - 2.0;
    if (exact != 0.0) EXPECT_LT(std::abs(got - exact) / exact, 1e-12) << "degree " << deg;
    else EXPECT_LT(std::abs(got), 1e-13) << "degree " << deg;
  }
}

TEST(Quadrature, BreakpointsBecomePanelEdges) {
  const double bps[] = {-0.3, 0.71};
  QuadratureRule r(200, 10, bps);
  EXPECT_EQ(r.breakpoints().size(), 2u);
  for (double t : r.nodes()) {
    EXPECT_NE(t, -0.3);
    EXPECT_NE(t, 0.71);
  }
  // integral of the indicator of [-0.3, 0.71] is exact up to rounding
  const double got = r.integrate([](double t) { return (t >= -0.3 && t <= 0.71) ? 1.0 : 0.0; });
  EXPECT_NEAR(got, 1.01, 1e-13);
}

TEST(FnSpace, EvalExamples) {
  EXPECT_DOUBLE_EQ(FunctionExpr::constant(1.0)(0.3), 1.0);
  EXPECT_NEAR(FunctionExpr::cosine(1)(0.5), 0.0, 1e-15);
  const auto p2 = FunctionExpr::polynomial({-1.0, 0.0, 3.0}, std::sqrt(5.0 / 8.0));
  EXPECT_NEAR(p2(1.0), std::sqrt(5.0 / 8.0) * 2.0, 1e-15);
  EXPECT_NEAR(p2(1.0), 1.5811388300841898, 1e-15);
  EXPECT_DOUBLE_EQ(FunctionExpr::indicator(-0.5, 0.5)(0.5), 1.0);
  EXPECT_DOUBLE_EQ(FunctionExpr::indicator(-0.5, 0.5)(0.51), 0.0);
}

TEST(FnSpace, EvalRejectsPointsOutsideDomain) {
  EXPECT_THROW(FunctionExpr::constant(1.0)(1.0000001), std::domain_error);
  EXPECT_THROW(FunctionExpr::cosine(2)(-2.0), std::domain_error);
}

TEST(FnSpace, AtomConstructorsValidate) {
  EXPECT_THROW(make_cosine(0), std::invalid_argument);
  EXPECT_THROW(make_indicator(0.5, 0.5), std::invalid_argument);
  EXPECT_THROW(make_indicator(-1.5, 0.5), std::invalid_argument);
  EXPECT_THROW(make_polynomial(std::vector<double>(18, 1.0)), std::invalid_argument);
  EXPECT_NO_THROW(make_polynomial(std::vector<double>(17, 1.0)));
}

TEST(FnSpace, InnerProductExamples) {
  EXPECT_NEAR(inner_product(FunctionExpr::cosine(1), FunctionExpr::cosine(1)), 1.0, 1e-12);
  EXPECT_NEAR(inner_product(FunctionExpr::cosine(1), FunctionExpr::sine(1)), 0.0, 1e-12);
  const auto c = FunctionExpr::constant(1.0 / std::numbers::sqrt2);
  EXPECT_NEAR(inner_product(c, FunctionExpr::indicator(-0.5, 0.5)), 1.0 / std::numbers::sqrt2, 1e-12);
}

TEST(FnSpace, InnerProductMatchesClosedFormsAcrossAtomKinds) {
  // int t^2 cos(pi t) dt over [-1,1] = -4/pi^2
  EXPECT_NEAR(inner_product(FunctionExpr::polynomial({0, 0, 1}), FunctionExpr::cosine(1)),
              -4.0 / (std::numbers::pi * std::numbers::pi), 1e-12);
  // int_{-0.2}^{0.7} cos(2 pi t) dt = (sin(1.4 pi) - sin(-0.4 pi)) / (2 pi)
  const double expect = (std::sin(1.4 * std::numbers::pi) + std::sin(0.4 * std::numbers::pi)) / (2 * std::numbers::pi);
  EXPECT_NEAR(inner_product(FunctionExpr::indicator(-0.2, 0.7), FunctionExpr::cosine(2)), expect, 1e-12);
  // int_{0.1}^{0.35} t^3 dt
  EXPECT_NEAR(inner_product(FunctionExpr::indicator(0.1, 0.35), FunctionExpr::polynomial({0, 0, 0, 1})),
              (std::pow(0.35, 4) - std::pow(0.1, 4)) / 4.0, 1e-13);
  // overlapping indicators
  EXPECT_NEAR(inner_product(FunctionExpr::indicator(-0.6, 0.2), FunctionExpr::indicator(-0.1, 0.9)), 0.3, 1e-13);
}

TEST(FnSpace, NormExamples) {
  EXPECT_DOUBLE_EQ(norm(FunctionExpr::zero()), 0.0);
  EXPECT_NEAR(norm(FunctionExpr::cosine(3)), 1.0, 1e-12);
  EXPECT_NEAR(norm(FunctionExpr::indicator(-0.5, 0.5)), 1.0, 1e-12);
  EXPECT_NEAR(norm(FunctionExpr::cosine(3) - FunctionExpr::cosine(3)), 0.0, 1e-15);
}

TEST(FnSpace, BilinearityOnRandomCombinations) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> coef(-10.0, 10.0);
  for (int trial = 0; trial < 200; ++trial) {
    const auto f = random_expr(rng), g = random_expr(rng), h = random_expr(rng);
    const double a = coef(rng), b = coef(rng);
    const double lhs = inner_product(a * f + b * g, h);
    const double rhs = a * inner_product(f, h) + b * inner_product(g, h);
    EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, std::abs(lhs)));
  }
}

TEST(FnSpace, EvenAndOddExpressionsAreOrthogonal) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto e = random_expr(rng, Parity::Even);
    const auto o = random_expr(rng, Parity::Odd);
    EXPECT_LT(std::abs(inner_product(e, o)), 1e-10);
  }
}

TEST(FnSpace, LegendreEvenAtomsAreOrthonormal) {
  const auto atoms = legendre_even_atoms();
  const Eigen::MatrixXd G = gram(atoms);
  EXPECT_LT((G - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(FnSpace, GramMatchesPairwiseInnerProducts) {
  std::mt19937_64 rng(3);
  std::vector<FunctionExpr> fs, gs;
  for (int i = 0; i < 4; ++i) fs.push_back(random_expr(rng));
  for (int i = 0; i < 3; ++i) gs.push_back(random_expr(rng));
  gs.push_back(FunctionExpr::indicator(-0.25, 0.6));
  const Eigen::MatrixXd G = gram(fs, gs);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(G(i, j), inner_product(fs[i], gs[j]), 1e-10 * std::max(1.0, std::abs(G(i, j))));
}

TEST(FnSpace, GramSchmidtNormalizesSingleConstant) {
  const FunctionExpr in[] = {FunctionExpr::constant(1.0)};
  const auto out = gram_schmidt(in);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_LT(norm(out[0] - FunctionExpr::constant(1.0 / std::numbers::sqrt2)), 1e-12);
}

TEST(FnSpace, GramSchmidtGivesNormalizedLegendre) {
  const FunctionExpr in[] = {FunctionExpr::constant(1.0), FunctionExpr::polynomial({0.0, 1.0})};
  const auto out = gram_schmidt(in);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_LT(norm(out[0] - FunctionExpr::constant(1.0 / std::numbers::sqrt2)), 1e-12);
  EXPECT_LT(norm(out[1] - FunctionExpr::polynomial({0.0, std::sqrt(1.5)})), 1e-12);
}

TEST(FnSpace, GramSchmidtRejectsDuplicates) {
  const FunctionExpr in[] = {FunctionExpr::cosine(1), FunctionExpr::cosine(1)};
  try {
    gram_schmidt(in);
    FAIL() << "expected DependentInput";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DependentInput);
  }
}

TEST(FnSpace, GramSchmidtOutputIsOrthonormalAndSpansInput) {
  std::mt19937_64 rng(5);
  std::vector<FunctionExpr> fs;
  for (int k = 0; k < 6; ++k) fs.push_back(FunctionExpr::polynomial({0, 0, 0, 0, 0, 0}) + FunctionExpr::cosine(k + 1) +
                                           0.3 * FunctionExpr::polynomial(std::vector<double>(static_cast<std::size_t>(k + 1), 1.0)));
  const auto q = gram_schmidt(fs);
  EXPECT_LT((gram(q) - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff(), 1e-10);
  // each input is reproduced by its projection on the output span
  for (const auto& f : fs) {
    FunctionExpr proj;
    for (const auto& e : q) proj += inner_product(f, e) * e;
    EXPECT_LT(norm(f - proj), 1e-10);
  }
}

TEST(FnSpace, CanonicalFormMergesLikeAtoms) {
  const auto f = FunctionExpr::cosine(2, 1.5) + FunctionExpr::polynomial({1.0, 2.0}) +
                 FunctionExpr::cosine(2, -0.5) + FunctionExpr::polynomial({0.0, -2.0, 1.0});
  ASSERT_EQ(f.terms().size(), 2u);
  EXPECT_TRUE(std::holds_alternative<Polynomial>(f.terms()[0].atom));
  EXPECT_EQ(std::get<Polynomial>(f.terms()[0].atom).coeffs, (std::vector<double>{1.0, 0.0, 1.0}));
  EXPECT_DOUBLE_EQ(f.terms()[1].weight, 1.0);
  EXPECT_TRUE((FunctionExpr::sine(3) - FunctionExpr::sine(3)).empty());
}

TEST(FnSpace, TextFormParsesHandWrittenTerms) {
  const auto f = parse_function("0.5*const() + 2*cos(3) - 1.5*sin(1) + poly(0.3333333333333333, 2, 1) + ind(-0.5,0.5)");
  EXPECT_NEAR(f(0.25), 0.5 + 2 * std::cos(0.75 * std::numbers::pi) - 1.5 * std::sin(0.25 * std::numbers::pi) +
                           (1.0 / 3 + 0.5 + 0.0625) + 1.0,
              1e-12);
  EXPECT_THROW(parse_function("2*tan(1)"), Error);
  EXPECT_THROW(parse_function("cos(1.5)"), Error);
  EXPECT_THROW(parse_function(""), Error);
  EXPECT_THROW(parse_function("2*cos(1) 3*sin(2)"), Error);
}

TEST(FnSpace, TextFormRoundTripsExactly) {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 100; ++trial) {
    auto f = random_expr(rng) + FunctionExpr::indicator(-0.123456789, 0.987654321, 0.1 * trial);
    const auto text = to_string(f);
    const auto g = parse_function(text);
    EXPECT_EQ(to_string(g), text);
    for (double t : {-1.0, -0.3, 0.0, 0.41, 1.0}) EXPECT_EQ(f(t), g(t));
  }
  EXPECT_TRUE(parse_function(to_string(FunctionExpr::zero())).empty());
}
