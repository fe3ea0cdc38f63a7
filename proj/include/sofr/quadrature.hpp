#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace sofr {

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
///
/// Newton iteration on P_n started from the Chebyshev-like guess
/// cos(pi (i - 1/4) / (n + 1/2)); nodes returned in ascending order.
inline void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n must be >= 1");
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  if (n == 1) {
    weights[0] = 2.0;
    return;
  }
  // P_n(x) and P_n'(x) by the three-term recurrence
  auto legendre = [n](double x, double& dp) {
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    return p1;
  };
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      const double dx = legendre(x, dp) / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    legendre(x, dp);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    nodes[i] = -x;
    nodes[n - 1 - i] = x;
    weights[i] = w;
    weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) nodes[n / 2] = 0.0;
}

/// Composite Gauss-Legendre rule on [-1, 1].
///
/// The interval is split at the supplied breakpoints and each piece receives a
/// share of the panel budget proportional to its length (at least one panel).
/// No node ever lands on a breakpoint, so piecewise-smooth integrands whose
/// discontinuities are listed as breakpoints integrate to full panel accuracy.
class QuadratureRule {
 public:
  static constexpr int kDefaultPanels = 200;
  static constexpr int kDefaultNodesPerPanel = 10;

  QuadratureRule() : QuadratureRule(kDefaultPanels, kDefaultNodesPerPanel) {}

  QuadratureRule(int panels, int nodes_per_panel, std::span<const double> breakpoints = {})
      : panels_(panels), nodes_per_panel_(nodes_per_panel) {
    if (panels < 1 || nodes_per_panel < 1)
      throw std::invalid_argument("QuadratureRule: panels and nodes_per_panel must be >= 1");
    std::vector<double> cuts{-1.0, 1.0};
    for (double b : breakpoints)
      if (b > -1.0 && b < 1.0) cuts.push_back(b);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    breakpoints_.assign(cuts.begin() + 1, cuts.end() - 1);

    std::vector<double> ref_x, ref_w;
    gauss_legendre(nodes_per_panel, ref_x, ref_w);
    for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
      const double a = cuts[s], b = cuts[s + 1];
      const int m = std::max(1, static_cast<int>(std::lround(panels * (b - a) / 2.0)));
      const double h = (b - a) / m;
      for (int j = 0; j < m; ++j) {
        const double lo = a + j * h;
        const double mid = lo + 0.5 * h;
        for (int q = 0; q < nodes_per_panel; ++q) {
          nodes_.push_back(mid + 0.5 * h * ref_x[q]);
          weights_.push_back(0.5 * h * ref_w[q]);
        }
      }
    }
  }

  std::span<const double> nodes() const noexcept { return nodes_; }
  std::span<const double> weights() const noexcept { return weights_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  int panels() const noexcept { return panels_; }
  int nodes_per_panel() const noexcept { return nodes_per_panel_; }
  std::span<const double> breakpoints() const noexcept { return breakpoints_; }

  /// Same panel budget, split at additional breakpoints.
  QuadratureRule with_breakpoints(std::span<const double> extra) const {
    std::vector<double> all(breakpoints_.begin(), breakpoints_.end());
    all.insert(all.end(), extra.begin(), extra.end());
    return QuadratureRule(panels_, nodes_per_panel_, all);
  }

  template <class F>
  double integrate(F&& f) const {
    double s = 0.0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) s += weights_[i] * f(nodes_[i]);
    return s;
  }

 private:
  int panels_;
  int nodes_per_panel_;
  std::vector<double> breakpoints_;
  std::vector<double> nodes_;
  std::vector<double> weights_;
};

inline const QuadratureRule& default_rule() {
  static const QuadratureRule rule;
  return rule;
}

}  // namespace sofr
