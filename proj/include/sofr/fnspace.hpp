#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <span>
#include <vector>

#include "sofr/errors.hpp"
#include "sofr/function_expr.hpp"
#include "sofr/quadrature.hpp"

namespace sofr {

namespace detail {

/// Coefficients of an expression on the orthogonal system {1, cos(pi k t), sin(pi k t)}.
struct TrigCoeffs {
  double constant = 0.0;
  std::map<int, double> cos;
  std::map<int, double> sin;

  // Exact L2([-1,1]) products: <1,1> = 2, <cos j, cos k> = <sin j, sin k> = delta_jk,
  // every mixed pair integrates to zero over a whole number of periods.
  friend double dot(const TrigCoeffs& f, const TrigCoeffs& g) {
    double s = 2.0 * f.constant * g.constant;
    auto sparse = [](const std::map<int, double>& a, const std::map<int, double>& b) {
      double acc = 0.0;
      auto ia = a.begin();
      auto ib = b.begin();
      while (ia != a.end() && ib != b.end()) {
        if (ia->first < ib->first) ++ia;
        else if (ib->first < ia->first) ++ib;
        else acc += (ia++)->second * (ib++)->second;
      }
      return acc;
    };
    return s + sparse(f.cos, g.cos) + sparse(f.sin, g.sin);
  }
};

/// An expression tabulated on a quadrature rule, with its trigonometric
/// coefficients kept for exact products when it has no other atoms.
struct SplitSample {
  TrigCoeffs trig;
  Eigen::VectorXd values;
  bool trig_only = true;
};

inline SplitSample split_sample(const FunctionExpr& f, const QuadratureRule& rule) {
  SplitSample s;
  const auto nodes = rule.nodes();
  const auto n = static_cast<Eigen::Index>(nodes.size());
  s.values = Eigen::VectorXd::Zero(n);
  for (const auto& term : f.terms()) {
    if (std::holds_alternative<Constant>(term.atom)) s.trig.constant += term.weight;
    else if (const auto* c = std::get_if<Cosine>(&term.atom)) s.trig.cos[c->k] += term.weight;
    else if (const auto* sn = std::get_if<Sine>(&term.atom)) s.trig.sin[sn->k] += term.weight;
    else s.trig_only = false;
    for (Eigen::Index i = 0; i < n; ++i) s.values[i] += term.weight * eval_atom(term.atom, nodes[i]);
  }
  return s;
}

inline double weighted_dot(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& w) {
  return (a.array() * b.array() * w.array()).sum();
}

// Summing an exact trigonometric part and a quadrature part separately cancels
// badly for functions with large atom weights, so mixed pairs use quadrature only.
inline double split_inner(const SplitSample& f, const SplitSample& g, const Eigen::VectorXd& w) {
  if (f.trig_only && g.trig_only) return dot(f.trig, g.trig);
  return weighted_dot(f.values, g.values, w);
}

inline QuadratureRule rule_for(std::span<const FunctionExpr> fs, std::span<const FunctionExpr> gs,
                               const QuadratureRule& base) {
  std::vector<double> bps;
  for (const auto& f : fs) {
    auto b = f.breakpoints();
    bps.insert(bps.end(), b.begin(), b.end());
  }
  for (const auto& g : gs) {
    auto b = g.breakpoints();
    bps.insert(bps.end(), b.begin(), b.end());
  }
  if (bps.empty()) return base;
  return base.with_breakpoints(bps);
}

inline Eigen::VectorXd to_eigen(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace detail

/// L2([-1,1]) inner product.
///
/// Exact when both arguments are purely trigonometric; otherwise the
/// composite Gauss-Legendre rule with panel edges forced at every indicator
/// discontinuity of either argument.
inline double inner_product(const FunctionExpr& f, const FunctionExpr& g,
                            const QuadratureRule& rule = default_rule()) {
  if (f.empty() || g.empty()) return 0.0;
  if (f.is_trigonometric() && g.is_trigonometric()) {
    const QuadratureRule none(1, 1);
    return dot(detail::split_sample(f, none).trig, detail::split_sample(g, none).trig);
  }
  const FunctionExpr pair[2] = {f, g};
  const QuadratureRule r = detail::rule_for(pair, {}, rule);
  const Eigen::VectorXd w = detail::to_eigen(r.weights());
  return detail::split_inner(detail::split_sample(f, r), detail::split_sample(g, r), w);
}

inline double norm(const FunctionExpr& f, const QuadratureRule& rule = default_rule()) {
  return std::sqrt(std::max(0.0, inner_product(f, f, rule)));
}

/// Matrix of inner products G(i, j) = <fs[i], gs[j]>, each function tabulated once.
inline Eigen::MatrixXd gram(std::span<const FunctionExpr> fs, std::span<const FunctionExpr> gs,
                            const QuadratureRule& rule = default_rule()) {
  const QuadratureRule r = detail::rule_for(fs, gs, rule);
  const Eigen::VectorXd w = detail::to_eigen(r.weights());
  std::vector<detail::SplitSample> sf, sg;
  sf.reserve(fs.size());
  sg.reserve(gs.size());
  for (const auto& f : fs) sf.push_back(detail::split_sample(f, r));
  for (const auto& g : gs) sg.push_back(detail::split_sample(g, r));
  Eigen::MatrixXd G(static_cast<Eigen::Index>(fs.size()), static_cast<Eigen::Index>(gs.size()));
  for (std::size_t i = 0; i < fs.size(); ++i)
    for (std::size_t j = 0; j < gs.size(); ++j)
      G(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = detail::split_inner(sf[i], sg[j], w);
  return G;
}

inline Eigen::MatrixXd gram(std::span<const FunctionExpr> fs, const QuadratureRule& rule = default_rule()) {
  Eigen::MatrixXd G = gram(fs, fs, rule);
  return 0.5 * (G + G.transpose());
}

/// Values of f at arbitrary points of [-1, 1].
inline Eigen::VectorXd sample(const FunctionExpr& f, std::span<const double> ts) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(ts.size()));
  for (std::size_t i = 0; i < ts.size(); ++i) v[static_cast<Eigen::Index>(i)] = f(ts[i]);
  return v;
}

/// p equispaced points from -1 to 1 inclusive.
inline std::vector<double> uniform_grid(int p) {
  if (p < 2) throw std::invalid_argument("uniform_grid: p must be >= 2");
  std::vector<double> t(static_cast<std::size_t>(p));
  for (int i = 0; i < p; ++i) t[static_cast<std::size_t>(i)] = -1.0 + 2.0 * i / (p - 1);
  t.back() = 1.0;
  return t;
}

/// Coefficients C with output_i = sum_j C(i, j) * input_j from modified
/// Gram-Schmidt with one re-orthogonalization pass, carried out in the
/// coordinates of the inputs under their Gram matrix.
///
/// Throws DependentInput when a residual norm drops below tol relative to the
/// norm of the input it came from (absolute when that norm is below one).
inline Eigen::MatrixXd gram_schmidt_coefficients(const Eigen::MatrixXd& G, double tol = 1e-10) {
  const Eigen::Index m = G.rows();
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(m, m);
  auto ip = [&G](const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return a.dot(G * b); };
  for (Eigen::Index k = 0; k < m; ++k) {
    Eigen::VectorXd v = Eigen::VectorXd::Unit(m, k);
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index j = 0; j < k; ++j) {
        const Eigen::VectorXd q = C.row(j).transpose();
        v -= ip(q, v) * q;
      }
    }
    const double r = std::sqrt(std::max(0.0, ip(v, v)));
    const double scale = std::max(1.0, std::sqrt(std::max(0.0, G(k, k))));
    if (r < tol * scale)
      throw Error(ErrorKind::DependentInput,
                  "residual norm " + std::to_string(r) + " at input " + std::to_string(k));
    C.row(k) = (v / r).transpose();
  }
  return C;
}

/// Coefficients as above from Householder QR of the quadrature-weighted
/// values F (one column per input). Accurate to eps * cond(F) rather than
/// eps * cond(F)^2, which matters for nearly dependent inputs.
inline Eigen::MatrixXd gram_schmidt_coefficients_qr(const Eigen::MatrixXd& F, double tol = 1e-10) {
  const Eigen::Index m = F.cols();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(F);
  Eigen::MatrixXd R = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
  for (Eigen::Index k = 0; k < m; ++k) {
    const double scale = std::max(1.0, F.col(k).norm());
    if (std::abs(R(k, k)) < tol * scale)
      throw Error(ErrorKind::DependentInput,
                  "residual norm " + std::to_string(std::abs(R(k, k))) + " at input " + std::to_string(k));
    if (R(k, k) < 0.0) R.row(k) *= -1.0;
  }
  const Eigen::MatrixXd Rinv = R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(m, m));
  return Rinv.transpose();
}

/// Orthonormalize fs; the result spans the same space in the same order.
inline std::vector<FunctionExpr> gram_schmidt(std::span<const FunctionExpr> fs,
                                              const QuadratureRule& rule = default_rule()) {
  const bool trig = std::all_of(fs.begin(), fs.end(), [](const FunctionExpr& f) { return f.is_trigonometric(); });
  Eigen::MatrixXd C;
  if (trig) {
    C = gram_schmidt_coefficients(gram(fs, rule));
  } else {
    const QuadratureRule r = detail::rule_for(fs, {}, rule);
    const Eigen::VectorXd sw = detail::to_eigen(r.weights()).cwiseSqrt();
    Eigen::MatrixXd F(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(fs.size()));
    for (std::size_t j = 0; j < fs.size(); ++j)
      F.col(static_cast<Eigen::Index>(j)) = detail::split_sample(fs[j], r).values.cwiseProduct(sw);
    C = gram_schmidt_coefficients_qr(F);
  }
  std::vector<FunctionExpr> out;
  out.reserve(fs.size());
  for (Eigen::Index i = 0; i < C.rows(); ++i) {
    const Eigen::VectorXd row = C.row(i).transpose();
    out.push_back(linear_combination({row.data(), static_cast<std::size_t>(row.size())}, fs));
  }
  return out;
}

}  // namespace sofr
