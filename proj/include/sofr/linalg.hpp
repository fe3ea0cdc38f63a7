#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

namespace sofr {

struct SymmetricEigen {
  Eigen::VectorXd values;   // non-increasing
  Eigen::MatrixXd vectors;  // columns, orthonormal
};

namespace detail {

inline Eigen::Index dominant_index(const Eigen::VectorXd& v) {
  Eigen::Index idx = 0;
  double best = -1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (std::abs(v[i]) > best + 1e-12) {
      best = std::abs(v[i]);
      idx = i;
    }
  return idx;
}

inline bool is_diagonal(const Eigen::MatrixXd& M) {
  for (Eigen::Index j = 0; j < M.cols(); ++j)
    for (Eigen::Index i = 0; i < M.rows(); ++i)
      if (i != j && M(i, j) != 0.0) return false;
  return true;
}

}  // namespace detail

/// Eigen-decomposition of a symmetric matrix with a deterministic layout.
///
/// Eigenvalues are returned in non-increasing order. Eigenvalues within
/// tie_tol * max|lambda| of each other count as equal and are ordered by the
/// index of the dominant component of their eigenvector. Each eigenvector is
/// signed so that its largest-magnitude component is positive (the first one
/// on exact magnitude ties). Exactly diagonal input bypasses the iterative
/// solver and yields unit eigenvectors.
inline SymmetricEigen sorted_symmetric_eigen(const Eigen::MatrixXd& M, double tie_tol = 1e-12) {
  const Eigen::Index n = M.rows();
  Eigen::VectorXd vals(n);
  Eigen::MatrixXd vecs(n, n);
  if (detail::is_diagonal(M)) {
    vals = M.diagonal();
    vecs.setIdentity();
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (M + M.transpose()));
    vals = es.eigenvalues();
    vecs = es.eigenvectors();
  }
  const double scale = n > 0 ? std::max(vals.cwiseAbs().maxCoeff(), 0.0) : 0.0;
  std::vector<Eigen::Index> dom(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) dom[static_cast<std::size_t>(j)] = detail::dominant_index(vecs.col(j));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return vals[a] > vals[b]; });
  // runs of numerically equal eigenvalues are reordered by dominant index
  for (std::size_t lo = 0; lo < order.size();) {
    std::size_t hi = lo + 1;
    while (hi < order.size() && vals[order[hi - 1]] - vals[order[hi]] <= tie_tol * scale) ++hi;
    std::stable_sort(order.begin() + static_cast<std::ptrdiff_t>(lo), order.begin() + static_cast<std::ptrdiff_t>(hi),
                     [&](Eigen::Index a, Eigen::Index b) {
                       return dom[static_cast<std::size_t>(a)] < dom[static_cast<std::size_t>(b)];
                     });
    lo = hi;
  }
  SymmetricEigen out{Eigen::VectorXd(n), Eigen::MatrixXd(n, n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index src = order[static_cast<std::size_t>(j)];
    out.values[j] = vals[src];
    Eigen::VectorXd v = vecs.col(src);
    if (v[detail::dominant_index(v)] < 0.0) v = -v;
    out.vectors.col(j) = v;
  }
  return out;
}

inline std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace sofr
