#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "sofr/errors.hpp"
#include "sofr/fnspace.hpp"
#include "sofr/linalg.hpp"

namespace sofr {

enum class SpaceLabel { D, S, E, F };

inline const char* to_string(SpaceLabel l) {
  switch (l) {
    case SpaceLabel::D: return "D";
    case SpaceLabel::S: return "S";
    case SpaceLabel::E: return "E";
    case SpaceLabel::F: return "F";
  }
  return "?";
}

/// An ordered orthonormal basis of a finite-dimensional subspace of L2([-1,1]).
class Subspace {
 public:
  static constexpr double kOrthonormalityTol = 1e-8;

  Subspace(std::vector<FunctionExpr> basis, SpaceLabel label) : basis_(std::move(basis)), label_(label) {
    if (basis_.empty()) throw Error(ErrorKind::BadDimension, "a subspace needs at least one basis function");
    const Eigen::MatrixXd G = gram(basis_);
    const double dev = (G - Eigen::MatrixXd::Identity(G.rows(), G.cols())).cwiseAbs().maxCoeff();
    if (dev > kOrthonormalityTol)
      throw Error(ErrorKind::NotOrthonormal, std::string("basis of ") + to_string(label) +
                                                 " deviates from orthonormal by " + std::to_string(dev));
  }

  /// Orthonormalize arbitrary independent functions first.
  static Subspace from_span(std::span<const FunctionExpr> fs, SpaceLabel label) {
    return Subspace(gram_schmidt(fs), label);
  }

  const std::vector<FunctionExpr>& basis() const noexcept { return basis_; }
  std::span<const FunctionExpr> span() const noexcept { return basis_; }
  Eigen::Index dim() const noexcept { return static_cast<Eigen::Index>(basis_.size()); }
  SpaceLabel label() const noexcept { return label_; }

  /// <phi_k, f> for every basis function.
  Eigen::VectorXd coordinates(const FunctionExpr& f) const {
    const FunctionExpr one[1] = {f};
    return gram(basis_, one).col(0);
  }

  FunctionExpr expand(const Eigen::VectorXd& coords) const {
    return linear_combination(as_span(coords), basis_);
  }

  FunctionExpr project(const FunctionExpr& f) const { return expand(coordinates(f)); }

  /// ||f - project(f)||.
  double residual_norm(const FunctionExpr& f) const { return norm(f - project(f)); }

  /// First k basis functions as a nested subspace.
  Subspace leading(Eigen::Index k) const {
    if (k < 1 || k > dim()) throw Error(ErrorKind::BadDimension, "leading(k) needs 1 <= k <= dim");
    return Subspace(std::vector<FunctionExpr>(basis_.begin(), basis_.begin() + k), label_);
  }

 private:
  std::vector<FunctionExpr> basis_;
  SpaceLabel label_;
};

// ---------------------------------------------------------------------------
// Standard bases
// ---------------------------------------------------------------------------

/// {1/sqrt2, sqrt(5/8)(3t^2-1), sqrt(9/128)(35t^4-30t^2+3)}: normalized even Legendre polynomials.
inline std::vector<FunctionExpr> legendre_even_atoms() {
  return {FunctionExpr::constant(1.0 / std::numbers::sqrt2),
          FunctionExpr::polynomial({-1.0, 0.0, 3.0}, std::sqrt(5.0 / 8.0)),
          FunctionExpr::polynomial({3.0, 0.0, -30.0, 0.0, 35.0}, std::sqrt(9.0 / 128.0))};
}

/// cos(theta)/sqrt2 + sin(theta) sqrt(3/2) t followed by the two higher even Legendre atoms.
inline std::vector<FunctionExpr> d_theta_atoms(double theta) {
  auto atoms = legendre_even_atoms();
  atoms[0] = FunctionExpr::constant(std::cos(theta) / std::numbers::sqrt2) +
             FunctionExpr::polynomial({0.0, std::sin(theta) * std::sqrt(1.5)});
  return atoms;
}

inline Subspace d_theta(double theta) { return Subspace(d_theta_atoms(theta), SpaceLabel::D); }

/// Truncated basis of the even functions: the three even Legendre atoms then
/// cos(pi t), cos(2 pi t), ... orthonormalized against them, k_s functions in all.
inline Subspace even_data_space(int k_s) {
  if (k_s < 3) throw Error(ErrorKind::BadDimension, "even_data_space needs K_S >= 3");
  std::vector<FunctionExpr> raw = {FunctionExpr::constant(1.0), FunctionExpr::polynomial({0.0, 0.0, 1.0}),
                                   FunctionExpr::polynomial({0.0, 0.0, 0.0, 0.0, 1.0})};
  for (int k = 1; raw.size() < static_cast<std::size_t>(k_s); ++k) raw.push_back(FunctionExpr::cosine(k));
  return Subspace::from_span(raw, SpaceLabel::S);
}

// ---------------------------------------------------------------------------
// Cross-Gram and identifiability
// ---------------------------------------------------------------------------

/// A(i, j) = <phi_i^S, phi_j^D>, a dim(S) x dim(D) matrix.
inline Eigen::MatrixXd cross_gram(const Subspace& D, const Subspace& S) { return gram(S.span(), D.span()); }

struct IdentifiabilityCheck {
  bool identifiable;
  double min_eigenvalue;
};

inline constexpr double kIdentifiabilityTol = 1e-8;

inline IdentifiabilityCheck check_identifiable(const Eigen::MatrixXd& A, double tol = kIdentifiabilityTol) {
  const Eigen::MatrixXd AtA = A.transpose() * A;
  const double mn = std::max(0.0, sorted_symmetric_eigen(AtA).values.minCoeff());
  return {mn > tol, mn};
}

// ---------------------------------------------------------------------------
// E-structure: projection of D onto S
// ---------------------------------------------------------------------------

struct Decomposition {
  FunctionExpr beta_E;
  FunctionExpr beta_F;
  FunctionExpr beta_Sperp;
};

/// Cross-Gram eigenstructure, orthonormal basis of E = pi(D), and the
/// coefficient map P from D-coordinates to E-coordinates (V_S = I).
class EStructure {
 public:
  EStructure(Subspace D, Subspace S, double tol = kIdentifiabilityTol)
      : D_(std::make_shared<const Subspace>(std::move(D))),
        S_(std::make_shared<const Subspace>(std::move(S))) {
    A_ = cross_gram(*D_, *S_);
    const SymmetricEigen eig = sorted_symmetric_eigen(A_.transpose() * A_);
    eigenvalues_ = eig.values.cwiseMax(0.0);
    V_ = eig.vectors;
    min_eigenvalue_ = eigenvalues_.minCoeff();
    if (!(min_eigenvalue_ > tol)) throw NotIdentifiableError(min_eigenvalue_, tol);
    if (eigenvalues_.maxCoeff() > 1.0 + 1e-8)
      throw Error(ErrorKind::NotOrthonormal, "eigenvalue of A^T A above one; inputs are not orthonormal");

    const Eigen::VectorXd sq = eigenvalues_.cwiseSqrt();
    const Eigen::VectorXd isq = sq.cwiseInverse();
    P_ = sq.asDiagonal() * V_.transpose();
    P_inv_ = V_ * isq.asDiagonal();
    e_in_s_ = isq.asDiagonal() * V_.transpose() * A_.transpose();

    std::vector<FunctionExpr> e;
    for (Eigen::Index j = 0; j < e_in_s_.rows(); ++j) {
      const Eigen::VectorXd row = e_in_s_.row(j).transpose();
      e.push_back(linear_combination(as_span(row), S_->basis()));
    }
    E_ = std::make_shared<const Subspace>(std::move(e), SpaceLabel::E);
    f_in_s_ = complement_rows(e_in_s_);
  }

  const Subspace& D() const noexcept { return *D_; }
  const Subspace& S() const noexcept { return *S_; }
  const Subspace& e_basis() const noexcept { return *E_; }
  Eigen::Index dim() const noexcept { return D_->dim(); }
  Eigen::Index k_s() const noexcept { return S_->dim(); }

  const Eigen::MatrixXd& A() const noexcept { return A_; }
  const Eigen::MatrixXd& V_D() const noexcept { return V_; }
  /// Eigenvalues of A^T A in non-increasing order.
  const Eigen::VectorXd& D_D() const noexcept { return eigenvalues_; }
  double min_eigenvalue() const noexcept { return min_eigenvalue_; }
  const Eigen::MatrixXd& P() const noexcept { return P_; }
  const Eigen::MatrixXd& P_inverse() const noexcept { return P_inv_; }
  /// Row j holds the S-coordinates of phi_j^E.
  const Eigen::MatrixXd& e_in_s() const noexcept { return e_in_s_; }

  /// Rows: S-coordinates of an orthonormal basis of F, the complement of E
  /// inside the truncated S (K_S - d rows; empty when E fills S).
  const Eigen::MatrixXd& f_in_s() const noexcept { return f_in_s_; }

  std::vector<FunctionExpr> f_basis() const {
    std::vector<FunctionExpr> f;
    for (Eigen::Index j = 0; j < f_in_s_.rows(); ++j) {
      const Eigen::VectorXd row = f_in_s_.row(j).transpose();
      f.push_back(linear_combination(as_span(row), S_->basis()));
    }
    return f;
  }

  /// pi(g) = sum_k (A <g, phi^D>)_k phi_k^S for g in D.
  FunctionExpr apply_pi(const FunctionExpr& g) const {
    const Eigen::VectorXd c = in_subspace_coordinates(*D_, g, "apply_pi");
    const Eigen::VectorXd s = A_ * c;
    return linear_combination(as_span(s), S_->basis());
  }

  /// pi^{-1}(h) = sum_j (P^{-1} <h, phi^E>)_j phi_j^D for h in E.
  FunctionExpr apply_pi_inverse(const FunctionExpr& h) const {
    const Eigen::VectorXd e = in_subspace_coordinates(*E_, h, "apply_pi_inverse");
    return D_->expand(P_inv_ * e);
  }

  /// beta = beta^E + beta^F + beta^{S-perp} relative to the truncated S.
  Decomposition orthogonal_decompose(const FunctionExpr& beta) const {
    const Eigen::VectorXd s = S_->coordinates(beta);
    const Eigen::VectorXd e = e_in_s_ * s;
    const Eigen::VectorXd f = s - e_in_s_.transpose() * e;
    Decomposition out;
    out.beta_E = E_->expand(e);
    out.beta_F = linear_combination(as_span(f), S_->basis());
    out.beta_Sperp = beta - S_->expand(s);
    return out;
  }

 private:
  static Eigen::VectorXd in_subspace_coordinates(const Subspace& space, const FunctionExpr& g, const char* op) {
    const Eigen::VectorXd c = space.coordinates(g);
    const double res = norm(g - space.expand(c));
    if (res > 1e-8 * std::max(1.0, c.norm()))
      throw Error(ErrorKind::NotInSubspace, std::string(op) + ": residual " + std::to_string(res) + " outside " +
                                                to_string(space.label()));
    return c;
  }

  // Gram-Schmidt of the coordinate axes of R^{K_S} against the rows of Q.
  static Eigen::MatrixXd complement_rows(const Eigen::MatrixXd& Q) {
    const Eigen::Index ks = Q.cols();
    std::vector<Eigen::VectorXd> q;
    for (Eigen::Index j = 0; j < Q.rows(); ++j) q.push_back(Q.row(j).transpose());
    const std::size_t start = q.size();
    for (Eigen::Index k = 0; k < ks && static_cast<Eigen::Index>(q.size()) < ks; ++k) {
      Eigen::VectorXd v = Eigen::VectorXd::Unit(ks, k);
      for (int pass = 0; pass < 2; ++pass)
        for (const auto& u : q) v -= u.dot(v) * u;
      const double r = v.norm();
      if (r < 1e-8) continue;
      q.push_back(v / r);
    }
    Eigen::MatrixXd F(static_cast<Eigen::Index>(q.size() - start), ks);
    for (std::size_t i = start; i < q.size(); ++i) F.row(static_cast<Eigen::Index>(i - start)) = q[i].transpose();
    return F;
  }

  std::shared_ptr<const Subspace> D_, S_, E_;
  Eigen::MatrixXd A_, V_, P_, P_inv_, e_in_s_, f_in_s_;
  Eigen::VectorXd eigenvalues_;
  double min_eigenvalue_ = 0.0;
};

inline EStructure build_E(const Subspace& D, const Subspace& S, double tol = kIdentifiabilityTol) {
  return EStructure(D, S, tol);
}

/// Eigenvalues, smallest eigenvalue, d and K_S.
inline nlohmann::json diagnostics_json(const EStructure& es) {
  std::vector<double> ev(es.D_D().data(), es.D_D().data() + es.D_D().size());
  return {{"d", es.dim()}, {"k_s", es.k_s()}, {"eigenvalues", ev}, {"min_eigenvalue", es.min_eigenvalue()}};
}

}  // namespace sofr
