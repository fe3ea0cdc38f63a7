#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "sofr/errors.hpp"
#include "sofr/fnspace.hpp"
#include "sofr/linalg.hpp"

namespace sofr {

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

enum class StreamTag : std::uint64_t { Curves = 1, Noise = 2, Pilot = 3, Matrix = 4 };

/// Seed of the stream for one replicate; depends on nothing but its arguments.
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t replicate, StreamTag tag) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ replicate);
  return splitmix64(h ^ static_cast<std::uint64_t>(tag));
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::uint64_t replicate, StreamTag tag) {
  return Rng(stream_seed(seed, replicate, tag));
}

// ---------------------------------------------------------------------------
// Process variants
// ---------------------------------------------------------------------------

/// X = sum_{k=0}^{K} U_k eta_k phi_k with phi_0 = 1/sqrt2, phi_k = cos(pi k t), U_k ~ Unif[-1,1].
struct ExampleProcess {
  std::vector<double> eta;  // eta[k], k = 0..K
};

inline ExampleProcess default_example_process(int K) {
  ExampleProcess p;
  for (int k = 0; k <= K; ++k) p.eta.push_back(1.0 / (k + 1));
  return p;
}

/// Z ~ Poisson, a random Z-subset J of {1..2Z}, X = sum_{j in J} alpha_j eta_j theta_j
/// with theta_1 = 1/sqrt2, theta_{k+1} = cos(pi k t), alpha_j ~ Unif[-amplitude, amplitude].
struct AppendixCProcess {
  double poisson_mean = 10.0;
  double amplitude = 10.0;
  double eta_first = 0.01;
  int z_cap = 60;

  double eta(int j) const { return j == 1 ? eta_first : 1.0 / j; }
};

/// Gaussian process on psi_k = cos(pi k t) with variances lambda_k from
/// lambda_{d+1} = lambda_d / (1 + exp(1/eps_d)); rotation angles theta_d = pi/2 - eps_d.
struct CounterexampleProcess {
  std::vector<double> beta;     // beta[k-1], coefficients of beta on psi_k
  std::vector<double> epsilon;  // epsilon[d-1]
  double lambda1 = 1.0;

  int cap() const { return static_cast<int>(beta.size()); }
};

inline CounterexampleProcess default_counterexample_process(int cap = 22) {
  CounterexampleProcess p;
  for (int d = 1; d <= cap; ++d) {
    p.beta.push_back(1.0 / d);
    p.epsilon.push_back(1.0 / (static_cast<double>(d) * d));
  }
  return p;
}

/// X = sum_d Z_d sqrt(lambda_d) phi_d + (sum_j Z_j sqrt(lambda_j)) phi with
/// phi_d = cos(pi d t) and phi = 1/sqrt2; the target is beta = c phi.
struct Remark3Process {
  std::vector<double> lambda;  // strictly decreasing
  double c = 1.0;

  int cap() const { return static_cast<int>(lambda.size()); }
};

inline Remark3Process default_remark3_process(int cap = 12) {
  Remark3Process p;
  for (int k = 1; k <= cap; ++k) p.lambda.push_back(1.0 / (static_cast<double>(k) * k));
  return p;
}

using ProcessVariant = std::variant<ExampleProcess, AppendixCProcess, CounterexampleProcess, Remark3Process>;

struct ProcessSpec {
  ProcessVariant variant;
  std::uint64_t seed = 0;
};

inline std::string variant_name(const ProcessSpec& spec) {
  static const char* names[] = {"example", "appendixC", "counterexample", "remark3"};
  return names[spec.variant.index()];
}

// ---------------------------------------------------------------------------
// Counterexample schedule
// ---------------------------------------------------------------------------

/// log lambda_k for k = 1..cap.
inline std::vector<double> counterexample_log_lambda(const CounterexampleProcess& p) {
  if (p.cap() < 2 || p.epsilon.size() < static_cast<std::size_t>(p.cap()))
    throw Error(ErrorKind::BadSchedule, "counterexample needs cap >= 2 and an epsilon per index");
  if (!(p.lambda1 > 0.0)) throw Error(ErrorKind::BadSchedule, "lambda_1 must be positive");
  std::vector<double> out{std::log(p.lambda1)};
  for (int d = 1; d < p.cap(); ++d) {
    const double eps = p.epsilon[static_cast<std::size_t>(d - 1)];
    if (!(eps > 0.0) || 1.0 / eps > 700.0)
      throw Error(ErrorKind::BadSchedule, "1/epsilon_" + std::to_string(d) + " outside (0, 700]");
    const double inv = 1.0 / eps;
    // log(1 + e^inv) without overflow
    out.push_back(out.back() - (inv + std::log1p(std::exp(-inv))));
  }
  return out;
}

inline double counterexample_theta(const CounterexampleProcess& p, int d) {
  return std::numbers::pi / 2 - p.epsilon.at(static_cast<std::size_t>(d - 1));
}

/// phi_1..phi_d: odd k rotates (psi_k, psi_{k+1}) by theta_k, even k completes the pair.
inline std::vector<FunctionExpr> counterexample_basis(const CounterexampleProcess& p, int d) {
  if (d < 1 || d + 1 > p.cap())
    throw Error(ErrorKind::BadDimension, "counterexample basis needs 1 <= d and d + 1 <= cap");
  std::vector<FunctionExpr> out;
  for (int k = 1; k <= d; ++k) {
    if (k % 2 == 1) {
      const double th = counterexample_theta(p, k);
      out.push_back(FunctionExpr::cosine(k, std::cos(th)) + FunctionExpr::cosine(k + 1, std::sin(th)));
    } else {
      const double th = counterexample_theta(p, k - 1);
      out.push_back(FunctionExpr::cosine(k - 1, std::sin(th)) - FunctionExpr::cosine(k, std::cos(th)));
    }
  }
  return out;
}

inline FunctionExpr counterexample_beta(const CounterexampleProcess& p) {
  FunctionExpr b;
  for (int k = 1; k <= p.cap(); ++k) b += FunctionExpr::cosine(k, p.beta[static_cast<std::size_t>(k - 1)]);
  return b;
}

/// |delta_d^d| = |cos sin| mu / (mu cos^2 + 1) * |beta_d sin - beta_{d+1} cos| with mu = exp(1/eps_d).
inline double counterexample_delta(const CounterexampleProcess& p, int d) {
  if (d < 1 || d % 2 == 0) throw Error(ErrorKind::BadDimension, "closed form needs odd d");
  if (d + 1 > p.cap()) throw Error(ErrorKind::BadDimension, "d + 1 exceeds the dictionary cap");
  counterexample_log_lambda(p);  // validates the schedule
  const double eps = p.epsilon[static_cast<std::size_t>(d - 1)];
  const double c = std::cos(counterexample_theta(p, d));
  const double s = std::sin(counterexample_theta(p, d));
  const double inv_mu = std::exp(-1.0 / eps);
  const double bt = std::abs(p.beta[static_cast<std::size_t>(d - 1)] * s - p.beta[static_cast<std::size_t>(d)] * c);
  return std::abs(c * s) / (c * c + inv_mu) * bt;
}

/// As counterexample_delta, zero for even d.
inline double counterexample_delta_norm(const CounterexampleProcess& p, int d) {
  if (d >= 1 && d % 2 == 0) return 0.0;
  return counterexample_delta(p, d);
}

// ---------------------------------------------------------------------------
// Analytic second moments
// ---------------------------------------------------------------------------

/// X = sum_k a_k dictionary_k with E[a] = 0 and Cov(a) = coeff_cov.
struct ProcessModel {
  std::vector<FunctionExpr> dictionary;
  Eigen::MatrixXd coeff_cov;
};

inline double poisson_tail(double mean, int z) {
  // P(Z >= z)
  if (z <= 0) return 1.0;
  double pmf = std::exp(-mean), cdf = pmf;
  for (int k = 1; k < z; ++k) {
    pmf *= mean / k;
    cdf += pmf;
  }
  return std::max(0.0, 1.0 - cdf);
}

inline ProcessModel process_model(const ProcessSpec& spec) {
  ProcessModel m;
  const double isq2 = 1.0 / std::numbers::sqrt2;
  if (const auto* ex = std::get_if<ExampleProcess>(&spec.variant)) {
    const auto K = static_cast<Eigen::Index>(ex->eta.size());
    m.coeff_cov = Eigen::MatrixXd::Zero(K, K);
    for (Eigen::Index k = 0; k < K; ++k) {
      m.dictionary.push_back(k == 0 ? FunctionExpr::constant(isq2) : FunctionExpr::cosine(static_cast<int>(k)));
      m.coeff_cov(k, k) = ex->eta[static_cast<std::size_t>(k)] * ex->eta[static_cast<std::size_t>(k)] / 3.0;
    }
  } else if (const auto* ac = std::get_if<AppendixCProcess>(&spec.variant)) {
    // P(j in J) = sum_z P(Z = z) 1[j <= 2z] / 2 = P(Z >= ceil(j/2)) / 2
    const int m_atoms = 2 * ac->z_cap;
    m.coeff_cov = Eigen::MatrixXd::Zero(m_atoms, m_atoms);
    for (int j = 1; j <= m_atoms; ++j) {
      m.dictionary.push_back(j == 1 ? FunctionExpr::constant(isq2) : FunctionExpr::cosine(j - 1));
      const double e = ac->eta(j);
      m.coeff_cov(j - 1, j - 1) =
          0.5 * poisson_tail(ac->poisson_mean, (j + 1) / 2) * ac->amplitude * ac->amplitude / 3.0 * e * e;
    }
  } else if (const auto* ce = std::get_if<CounterexampleProcess>(&spec.variant)) {
    const auto loglam = counterexample_log_lambda(*ce);
    m.coeff_cov = Eigen::MatrixXd::Zero(ce->cap(), ce->cap());
    for (int k = 1; k <= ce->cap(); ++k) {
      m.dictionary.push_back(FunctionExpr::cosine(k));
      m.coeff_cov(k - 1, k - 1) = std::exp(loglam[static_cast<std::size_t>(k - 1)]);
    }
  } else {
    const auto& r3 = std::get<Remark3Process>(spec.variant);
    const int n = r3.cap();
    m.coeff_cov = Eigen::MatrixXd::Zero(n + 1, n + 1);
    for (int d = 1; d <= n; ++d) {
      m.dictionary.push_back(FunctionExpr::cosine(d));
      const double l = r3.lambda[static_cast<std::size_t>(d - 1)];
      m.coeff_cov(d - 1, d - 1) = l;
      m.coeff_cov(d - 1, n) = m.coeff_cov(n, d - 1) = l;
      m.coeff_cov(n, n) += l;
    }
    m.dictionary.push_back(FunctionExpr::constant(isq2));
  }
  return m;
}

/// Cov(<X, f_i>, <X, g_j>).
inline Eigen::MatrixXd covariance_on(const ProcessModel& m, std::span<const FunctionExpr> fs,
                                     std::span<const FunctionExpr> gs) {
  const Eigen::MatrixXd Gf = gram(m.dictionary, fs);
  const Eigen::MatrixXd Gg = gram(m.dictionary, gs);
  return Gf.transpose() * m.coeff_cov * Gg;
}

inline Eigen::MatrixXd covariance_on(const ProcessModel& m, std::span<const FunctionExpr> fs) {
  const Eigen::MatrixXd Gf = gram(m.dictionary, fs);
  const Eigen::MatrixXd S = Gf.transpose() * m.coeff_cov * Gf;
  return 0.5 * (S + S.transpose());
}

inline constexpr double kSingularCovarianceTol = 1e-12;

/// (Sigma^E)^{-1} Cov(X^E, <X, beta_F>) from the model moments.
///
/// Singularity is judged on the correlation matrix so that legitimately tiny
/// but well-separated variances are not mistaken for rank loss.
inline Eigen::VectorXd moment_gamma(const ProcessModel& m, std::span<const FunctionExpr> e_basis,
                                    const FunctionExpr& beta_F, double tol = kSingularCovarianceTol) {
  const Eigen::MatrixXd Sigma = covariance_on(m, e_basis);
  const FunctionExpr bf[1] = {beta_F};
  const Eigen::VectorXd c = covariance_on(m, e_basis, bf).col(0);
  const Eigen::VectorXd diag = Sigma.diagonal();
  if ((diag.array() <= 0.0).any())
    throw Error(ErrorKind::SingularCovariance, "a basis direction carries zero variance");
  const Eigen::VectorXd is = diag.cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd R = is.asDiagonal() * Sigma * is.asDiagonal();
  const double mn = sorted_symmetric_eigen(R).values.minCoeff();
  if (mn < tol)
    throw Error(ErrorKind::SingularCovariance, "min eigenvalue of scaled Sigma^E = " + std::to_string(mn));
  // solve R (D^{1/2} gamma) = D^{-1/2} c
  const Eigen::VectorXd z = R.ldlt().solve(is.asDiagonal() * c);
  return is.asDiagonal() * z;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// n curves as rows of coefficients on the model dictionary, plus responses
/// once generate_responses has run.
struct SampleBatch {
  std::vector<FunctionExpr> dictionary;
  Eigen::MatrixXd coeffs;  // n x dictionary size
  Eigen::VectorXd y;
  Eigen::VectorXd noise;   // y - <x, beta>
  double sigma = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t replicate = 0;
  std::string variant;

  Eigen::Index n() const noexcept { return coeffs.rows(); }

  FunctionExpr curve(Eigen::Index i) const {
    const Eigen::VectorXd row = coeffs.row(i).transpose();
    return linear_combination(as_span(row), dictionary);
  }

  std::vector<FunctionExpr> curves() const {
    std::vector<FunctionExpr> out;
    out.reserve(static_cast<std::size_t>(n()));
    for (Eigen::Index i = 0; i < n(); ++i) out.push_back(curve(i));
    return out;
  }

  /// n x p values on the given points.
  Eigen::MatrixXd grid_values(std::span<const double> ts) const {
    Eigen::MatrixXd B(static_cast<Eigen::Index>(dictionary.size()), static_cast<Eigen::Index>(ts.size()));
    for (std::size_t k = 0; k < dictionary.size(); ++k) B.row(static_cast<Eigen::Index>(k)) = sample(dictionary[k], ts);
    return coeffs * B;
  }
};

namespace detail {

inline SampleBatch empty_batch(const ProcessSpec& spec, const ProcessModel& m, Eigen::Index n,
                               std::uint64_t replicate) {
  SampleBatch b;
  b.dictionary = m.dictionary;
  b.coeffs = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(m.dictionary.size()));
  b.seed = spec.seed;
  b.replicate = replicate;
  b.variant = variant_name(spec);
  return b;
}

}  // namespace detail

inline SampleBatch sample_example(const ProcessSpec& spec, Eigen::Index n, std::uint64_t replicate = 0) {
  const auto& ex = std::get<ExampleProcess>(spec.variant);
  SampleBatch b = detail::empty_batch(spec, process_model(spec), n, replicate);
  Rng rng = make_rng(spec.seed, replicate, StreamTag::Curves);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i)
    for (std::size_t k = 0; k < ex.eta.size(); ++k) b.coeffs(i, static_cast<Eigen::Index>(k)) = u(rng) * ex.eta[k];
  return b;
}

inline SampleBatch sample_appendixC(const ProcessSpec& spec, Eigen::Index n, std::uint64_t replicate = 0) {
  const auto& ac = std::get<AppendixCProcess>(spec.variant);
  SampleBatch b = detail::empty_batch(spec, process_model(spec), n, replicate);
  Rng rng = make_rng(spec.seed, replicate, StreamTag::Curves);
  std::poisson_distribution<int> pz(ac.poisson_mean);
  std::uniform_real_distribution<double> ua(-ac.amplitude, ac.amplitude);
  std::vector<int> pool;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int z = pz(rng);
    if (z > ac.z_cap) throw Error(ErrorKind::UnsupportedProcess, "Poisson draw above z_cap");
    pool.resize(static_cast<std::size_t>(2 * z));
    std::iota(pool.begin(), pool.end(), 1);
    // partial Fisher-Yates: the first z entries form a uniform z-subset
    for (int r = 0; r < z; ++r) {
      std::uniform_int_distribution<int> pick(r, 2 * z - 1);
      std::swap(pool[static_cast<std::size_t>(r)], pool[static_cast<std::size_t>(pick(rng))]);
    }
    std::sort(pool.begin(), pool.begin() + z);
    for (int r = 0; r < z; ++r) {
      const int j = pool[static_cast<std::size_t>(r)];
      b.coeffs(i, j - 1) = ua(rng) * ac.eta(j);
    }
  }
  return b;
}

inline SampleBatch sample_gaussian(const ProcessSpec& spec, Eigen::Index n, std::uint64_t replicate = 0) {
  const ProcessModel m = process_model(spec);
  SampleBatch b = detail::empty_batch(spec, m, n, replicate);
  Rng rng = make_rng(spec.seed, replicate, StreamTag::Curves);
  std::normal_distribution<double> z;
  if (const auto* ce = std::get_if<CounterexampleProcess>(&spec.variant)) {
    const auto loglam = counterexample_log_lambda(*ce);
    for (Eigen::Index i = 0; i < n; ++i)
      for (int k = 0; k < ce->cap(); ++k) b.coeffs(i, k) = z(rng) * std::exp(0.5 * loglam[static_cast<std::size_t>(k)]);
  } else {
    const auto& r3 = std::get<Remark3Process>(spec.variant);
    for (Eigen::Index i = 0; i < n; ++i) {
      double total = 0.0;
      for (int k = 0; k < r3.cap(); ++k) {
        const double a = z(rng) * std::sqrt(r3.lambda[static_cast<std::size_t>(k)]);
        b.coeffs(i, k) = a;
        total += a;
      }
      b.coeffs(i, r3.cap()) = total;
    }
  }
  return b;
}

/// Dispatch on the variant.
inline SampleBatch sample_process(const ProcessSpec& spec, Eigen::Index n, std::uint64_t replicate = 0) {
  switch (spec.variant.index()) {
    case 0: return sample_example(spec, n, replicate);
    case 1: return sample_appendixC(spec, n, replicate);
    default: return sample_gaussian(spec, n, replicate);
  }
}

/// y_i = <x_i, beta> + eps_i with eps_i ~ N(0, sigma^2) drawn from the noise stream.
inline void generate_responses(SampleBatch& batch, const FunctionExpr& beta, double sigma) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be non-negative");
  const FunctionExpr b[1] = {beta};
  const Eigen::VectorXd g = gram(batch.dictionary, b).col(0);
  batch.sigma = sigma;
  batch.noise = Eigen::VectorXd::Zero(batch.n());
  if (sigma > 0.0) {
    Rng rng = make_rng(batch.seed, batch.replicate, StreamTag::Noise);
    std::normal_distribution<double> z(0.0, sigma);
    for (Eigen::Index i = 0; i < batch.n(); ++i) batch.noise[i] = z(rng);
  }
  batch.y = batch.coeffs * g + batch.noise;
}

/// Responses for arbitrary curves.
inline Eigen::VectorXd generate_responses(std::span<const FunctionExpr> curves, const FunctionExpr& beta, double sigma,
                                          std::uint64_t seed, std::uint64_t replicate = 0) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be non-negative");
  const FunctionExpr b[1] = {beta};
  Eigen::VectorXd y = gram(curves, b).col(0);
  if (sigma > 0.0) {
    Rng rng = make_rng(seed, replicate, StreamTag::Noise);
    std::normal_distribution<double> z(0.0, sigma);
    for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += z(rng);
  }
  return y;
}

/// One row per curve of p grid values followed by y.
inline void write_batch_csv(std::ostream& os, const SampleBatch& batch, int p = 201) {
  const auto ts = uniform_grid(p);
  const Eigen::MatrixXd V = batch.grid_values(ts);
  os << "# seed=" << batch.seed << " replicate=" << batch.replicate << " p=" << p << " variant=" << batch.variant
     << "\n";
  for (int j = 0; j < p; ++j) os << "x" << j << ",";
  os << "y\n";
  for (Eigen::Index i = 0; i < V.rows(); ++i) {
    for (Eigen::Index j = 0; j < V.cols(); ++j) os << detail::format_double(V(i, j)) << ",";
    os << (batch.y.size() == V.rows() ? detail::format_double(batch.y[i]) : std::string("nan")) << "\n";
  }
}

// ---------------------------------------------------------------------------
// Moment-route checks
// ---------------------------------------------------------------------------

/// |gamma^d| for the counterexample from the model moments: E_d = span(phi_1..phi_d),
/// beta^{F_d} = beta minus its projection on E_d. Equals the closed form for odd d
/// and zero for even d while the covariance stays numerically resolvable (d <= 7
/// under the default schedule).
inline double counterexample_delta_moment(const CounterexampleProcess& p, int d) {
  const ProcessSpec spec{p, 0};
  const ProcessModel m = process_model(spec);
  const auto e = counterexample_basis(p, d);
  const FunctionExpr beta = counterexample_beta(p);
  FunctionExpr bf = beta;
  for (const auto& f : e) bf -= inner_product(beta, f) * f;
  return moment_gamma(m, e, bf).norm();
}

/// ||gamma^{d,k}|| for the remark3 process: D_d = span(phi_1..phi_d) lies in S,
/// beta = c phi is entirely in F, and the first k eigenfunctions of Sigma on D_d
/// are phi_1..phi_k because lambda is decreasing.
inline double remark3_gamma_norm(const Remark3Process& p, int d, int k) {
  if (d < 1 || d > p.cap() || k < 0 || k > d)
    throw Error(ErrorKind::BadDimension, "remark3 needs 0 <= k <= d <= cap");
  if (k == 0) return 0.0;
  const ProcessSpec spec{p, 0};
  const ProcessModel m = process_model(spec);
  std::vector<FunctionExpr> e;
  for (int j = 1; j <= d; ++j) e.push_back(FunctionExpr::cosine(j));
  const FunctionExpr beta = FunctionExpr::constant(p.c / std::numbers::sqrt2);
  const Eigen::VectorXd gamma = moment_gamma(m, e, beta);
  const SymmetricEigen eig = sorted_symmetric_eigen(covariance_on(m, e));
  return (eig.vectors.leftCols(k).transpose() * gamma).norm();
}

}  // namespace sofr
