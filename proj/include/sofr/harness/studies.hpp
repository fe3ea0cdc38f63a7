#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "sofr/errors.hpp"
#include "sofr/fpca.hpp"
#include "sofr/harness/config.hpp"
#include "sofr/harness/pool.hpp"
#include "sofr/processes.hpp"
#include "sofr/regression.hpp"
#include "sofr/subspace.hpp"

namespace sofr::harness {

// ---------------------------------------------------------------------------
// Divergence counterexample
// ---------------------------------------------------------------------------

struct CounterexampleRow {
  int d = 0;
  double closed_form = 0.0;           // ||delta^d||, zero for even d
  std::optional<double> moment_route;  // only where the moments are resolvable
};

struct CounterexampleTable {
  std::vector<CounterexampleRow> rows;
  bool odd_strictly_increasing = true;
  double max_moment_gap = 0.0;
};

inline CounterexampleTable run_counterexample(const CounterexampleConfig& c) {
  CounterexampleTable t;
  double prev = -std::numeric_limits<double>::infinity();
  for (int d = 1; d <= c.d_max; ++d) {
    CounterexampleRow row{d, counterexample_delta_norm(c.process, d), std::nullopt};
    if (d <= c.moment_d_max) {
      row.moment_route = counterexample_delta_moment(c.process, d);
      t.max_moment_gap = std::max(t.max_moment_gap, std::abs(*row.moment_route - row.closed_form));
    }
    if (d % 2 == 1) {
      if (!(row.closed_form > prev)) t.odd_strictly_increasing = false;
      prev = row.closed_form;
    }
    t.rows.push_back(row);
  }
  return t;
}

// ---------------------------------------------------------------------------
// PC-truncated estimator
// ---------------------------------------------------------------------------

struct TruncationRow {
  int d = 0;
  int k = 0;
  int n = 0;
  double gamma_norm = 0.0;
  double bound = 0.0;  // C_k ||beta^{F_d}||^2
  double target = 0.0;
  double beta_F_norm2 = 0.0;
  double mc_error = 0.0;  // mean over replicates of ||beta_tilde^{d,k} - beta^D||
  double mc_error_se = 0.0;
  TruncationReport report;
};

inline int truncation_sample_size(int d) { return std::max(20 * d, 500); }

/// Nested chain D_d = span of the first d dictionary atoms, S = the first k_s.
inline std::vector<TruncationRow> run_truncation_study(const TruncationConfig& c, int jobs = 1) {
  const ProcessModel model = process_model(c.process);
  if (static_cast<std::size_t>(c.k_s) > model.dictionary.size())
    throw Error(ErrorKind::ConfigError, "k_s exceeds the process dictionary");
  const Subspace S(std::vector<FunctionExpr>(model.dictionary.begin(), model.dictionary.begin() + c.k_s),
                   SpaceLabel::S);
  const TruncationInputs in{c.process, S, S.basis(), c.beta};
  const KdSchedule sched = choose_kd(c.d_schedule, in, c.tau0);

  std::vector<TruncationRow> rows(c.d_schedule.size());
  std::vector<EStructure> Es;
  std::vector<KLBasis> kls;
  std::vector<Eigen::MatrixXd> grams;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int d = c.d_schedule[i];
    const Subspace D(std::vector<FunctionExpr>(S.basis().begin(), S.basis().begin() + d), SpaceLabel::D);
    Es.push_back(build_E(D, S));
    kls.push_back(kl_decompose(population_covariance(c.process, D), D));
    grams.push_back(gram(model.dictionary, Es.back().e_basis().span()));
    const GammaDK g = gamma_dk(c.process, Es.back(), c.beta, sched.k[i]);
    TruncationRow& r = rows[i];
    r.d = d;
    r.k = sched.k[i];
    r.n = truncation_sample_size(d);
    r.gamma_norm = g.norm;
    r.bound = sched.product[i];
    r.target = sched.target[i];
    r.beta_F_norm2 = g.beta_F_zero ? 0.0 : g.beta_F_norm * g.beta_F_norm;
    r.report.k = r.k;
    r.report.d = d;
    r.report.gamma_dk_coeffs = g.coeffs;
    r.report.bound = r.bound;
    r.report.k_d_schedule = sched.k;
  }

  // replicate streams: one block of ids per schedule entry
  const std::size_t R = static_cast<std::size_t>(c.replicates);
  std::vector<double> err(rows.size() * R);
  std::vector<Eigen::VectorXd> tilde(rows.size() * R);
  parallel_for(rows.size() * R, jobs, [&](std::size_t job) {
    const std::size_t i = job / R;
    const EStructure& E = Es[i];
    SampleBatch batch = sample_process(c.process, rows[i].n, (static_cast<std::uint64_t>(i) << 32) | (job % R));
    generate_responses(batch, c.beta, c.sigma);
    const FitResult fr = fit(DesignMatrix{batch.coeffs * grams[i]}, batch.y, E);
    const FunctionExpr b[1] = {c.beta};
    const Eigen::VectorXd target = gram(E.D().span(), b).col(0);
    tilde[job] = truncate_coeffs(fr.beta_D_coeffs, kls[i], rows[i].k);
    err[job] = (tilde[job] - target).norm();
  });
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double s = 0.0, s2 = 0.0;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(rows[i].d);
    for (std::size_t r = 0; r < R; ++r) {
      s += err[i * R + r];
      s2 += err[i * R + r] * err[i * R + r];
      mean += tilde[i * R + r];
    }
    const double Rd = static_cast<double>(R);
    rows[i].mc_error = s / Rd;
    rows[i].mc_error_se = R > 1 ? std::sqrt(std::max(0.0, (s2 - s * s / Rd) / (Rd - 1.0)) / Rd) : 0.0;
    rows[i].report.beta_dk_coeffs = mean / Rd;
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Interlacing
// ---------------------------------------------------------------------------

struct InterlacingTrial {
  int trial = 0;
  int size = 0;
  InterlacingReport report;
};

struct InterlacingStudy {
  std::vector<InterlacingTrial> trials;
  InterlacingReport process_chain;  // leading blocks of Sigma on the even space, appendixC process
  std::size_t total_violations = 0;
  double worst_margin = std::numeric_limits<double>::infinity();
};

/// Symmetric matrix with standard normal entries from the trial's own stream.
inline Eigen::MatrixXd random_symmetric(int n, std::uint64_t seed, std::uint64_t trial) {
  Rng rng = make_rng(seed, trial, StreamTag::Matrix);
  std::normal_distribution<double> z;
  Eigen::MatrixXd M(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i <= j; ++i) M(i, j) = M(j, i) = z(rng);
  return M;
}

inline std::vector<Eigen::MatrixXd> leading_blocks(const Eigen::MatrixXd& M) {
  std::vector<Eigen::MatrixXd> out;
  for (Eigen::Index k = 1; k <= M.rows(); ++k) out.push_back(M.topLeftCorner(k, k));
  return out;
}

inline InterlacingStudy run_interlacing_study(const InterlacingConfig& c, int jobs = 1) {
  InterlacingStudy s;
  s.trials.resize(static_cast<std::size_t>(c.trials));
  parallel_for(s.trials.size(), jobs, [&](std::size_t t) {
    const Eigen::MatrixXd M = random_symmetric(c.size, c.seed, t);
    s.trials[t] = {static_cast<int>(t), c.size, interlacing_verify(leading_blocks(M), c.slack)};
  });
  const Eigen::MatrixXd Sigma = population_covariance({AppendixCProcess{}, c.seed}, even_data_space(c.process_dim));
  s.process_chain = interlacing_verify(leading_blocks(Sigma), c.slack);
  for (const auto& t : s.trials) {
    s.total_violations += t.report.violations;
    s.worst_margin = std::min(s.worst_margin, t.report.worst_margin);
  }
  return s;
}

}  // namespace sofr::harness
