#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "sofr/errors.hpp"
#include "sofr/fpca.hpp"
#include "sofr/function_expr.hpp"
#include "sofr/harness/scenario.hpp"
#include "sofr/harness/studies.hpp"
#include "sofr/regression.hpp"

namespace sofr::harness {

using sofr::detail::format_double;

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

inline std::filesystem::path ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create " + dir + ": " + ec.message());
  return dir;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  os << content;
  os.flush();
  if (!os) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

inline std::string scenario_stem(const std::string& label, std::uint64_t seed) {
  return label + "_" + std::to_string(seed);
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline std::string csv_number(double x) { return std::isnan(x) ? "nan" : format_double(x); }

inline void write_curves_csv(std::ostream& os, const ScenarioResult& r) {
  os << "t,beta,projection,mean,variance,limit";
  for (Eigen::Index m = 0; m < r.replicate_curves.cols(); ++m) os << ",rep_" << m;
  os << "\n";
  for (std::size_t i = 0; i < r.grid.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    os << format_double(r.grid[i]) << "," << format_double(r.true_curve[ii]) << ","
       << format_double(r.projection_curve[ii]) << "," << format_double(r.mean_curve[ii]) << ","
       << format_double(r.variance_curve[ii]) << "," << (r.gamma ? csv_number(r.limit_curve[ii]) : "nan");
    for (Eigen::Index m = 0; m < r.replicate_curves.cols(); ++m) os << "," << format_double(r.replicate_curves(ii, m));
    os << "\n";
  }
}

inline void write_slln_csv(std::ostream& os, std::span<const SllnRow> rows) {
  os << "n,distance";
  const Eigen::Index d = rows.empty() ? 0 : rows.front().gamma_n.size();
  for (Eigen::Index j = 0; j < d; ++j) os << ",gamma_n_" << j;
  os << "\n";
  for (const auto& r : rows) {
    os << r.n << "," << format_double(r.distance);
    for (Eigen::Index j = 0; j < d; ++j) os << "," << format_double(r.gamma_n[j]);
    os << "\n";
  }
}

inline void write_counterexample_csv(std::ostream& os, const CounterexampleTable& t) {
  os << "d,delta_closed_form,delta_moment_route\n";
  for (const auto& r : t.rows)
    os << r.d << "," << format_double(r.closed_form) << ","
       << (r.moment_route ? format_double(*r.moment_route) : std::string("nan")) << "\n";
}

inline void write_truncation_csv(std::ostream& os, std::span<const TruncationRow> rows) {
  os << "d,k_d,n,gamma_dk_norm,bound,target,beta_F_norm2,mc_error,mc_error_se\n";
  for (const auto& r : rows)
    os << r.d << "," << r.k << "," << r.n << "," << format_double(r.gamma_norm) << "," << format_double(r.bound) << ","
       << format_double(r.target) << "," << format_double(r.beta_F_norm2) << "," << format_double(r.mc_error) << ","
       << format_double(r.mc_error_se) << "\n";
}

inline void write_interlacing_csv(std::ostream& os, const InterlacingStudy& s) {
  os << "trial,size,checks,violations,worst_margin\n";
  for (const auto& t : s.trials)
    os << t.trial << "," << t.size << "," << t.report.checks << "," << t.report.violations << ","
       << format_double(t.report.worst_margin) << "\n";
}

/// Numeric table with one header row; lines starting with '#' are skipped.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(ErrorKind::ParseError, "no column " + name);
    return static_cast<std::size_t>(it - header.begin());
  }
};

inline CsvTable load_csv(std::istream& is) {
  CsvTable t;
  std::string line;
  bool have_header = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.header.size())
      throw Error(ErrorKind::ParseError, "row " + std::to_string(t.rows.size() + 1) + " has " +
                                             std::to_string(cells.size()) + " cells, header has " +
                                             std::to_string(t.header.size()));
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) {
      char* end = nullptr;
      const double v = std::strtod(c.c_str(), &end);
      if (c.empty() || *end != '\0') throw Error(ErrorKind::ParseError, "not a number: '" + c + "'");
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  if (!have_header) throw Error(ErrorKind::ParseError, "empty CSV");
  return t;
}

inline CsvTable load_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  return load_csv(is);
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace detail {

using sofr::detail::number_or_null;
using sofr::detail::to_std;

inline nlohmann::json terms_json(const ErrorTerms& t) {
  return {{"beta_F_norm2", t.beta_F_norm2},
          {"gamma_norm2", t.gamma_norm2},
          {"sperp_norm2", t.sperp_norm2},
          {"sum", t.sum()},
          {"limit_distance2", t.limit_distance2}};
}

}  // namespace detail

inline nlohmann::json summary_json(const ScenarioResult& r) {
  using detail::number_or_null;
  using detail::to_std;
  const BiasSummary& b = r.bias;
  nlohmann::json j = {
      {"status", "ok"},
      {"case", r.case_label},
      {"seed", r.seed},
      {"variant", r.variant},
      {"subspace", r.subspace},
      {"n", r.n},
      {"replicates", r.replicates},
      {"sigma", r.sigma},
      {"k_s", r.k_s},
      {"p", r.p},
      {"d", r.d},
      {"d_in_s", r.d_in_s},
      {"identifiability", {{"min_eigenvalue", r.min_eigenvalue}, {"eigenvalues", to_std(r.identifiability_eigenvalues)}}},
      {"l2_error_mean", r.l2_error_mean},
      {"l2_error_projection", r.l2_error_projection},
      {"mc_distance2", r.mc_distance2},
      {"mean_coeff_variance", r.mean_coeff_variance},
      {"beta_E_coeffs", to_std(r.beta_E_true)},
      {"projection_coeffs", to_std(r.projection_coeffs)},
      {"mean_beta_D_coeffs", to_std(r.mean_coeffs)},
      {"limit_beta_D_coeffs", to_std(r.limit_coeffs)},
      {"gamma_coeffs", r.gamma ? nlohmann::json(to_std(*r.gamma)) : nlohmann::json()},
      {"decomposition", r.decomposition ? detail::terms_json(*r.decomposition) : nlohmann::json()},
      {"bias",
       {{"e_bias", to_std(b.e_bias)},
        {"e_bias_se", to_std(b.e_bias_se)},
        {"e_bias_norm", b.e_bias_norm},
        {"e_bias_norm_se", b.e_bias_norm_se},
        {"s_part_norm", b.s_part_norm},
        {"s_part_se", b.s_part_se},
        {"odd_part_norm", b.odd_part_norm},
        {"odd_gap", b.odd_gap},
        {"odd_gap_se", b.odd_gap_se}}},
      {"condition_number", {{"min", number_or_null(r.condition_min)}, {"max", number_or_null(r.condition_max)}}},
      {"covariance_ordering",
       {{"worst_margin", number_or_null(r.cov_order_margin)}, {"max_abs_gap", number_or_null(r.cov_equal_gap)}}}};
  return j;
}

inline nlohmann::json failure_json(const std::string& label, std::uint64_t seed, const Error& e,
                                   std::optional<double> min_eigenvalue = std::nullopt) {
  nlohmann::json j = {{"status", to_string(e.kind())}, {"case", label}, {"seed", seed}, {"message", e.what()}};
  if (min_eigenvalue) j["identifiability"] = {{"min_eigenvalue", *min_eigenvalue}};
  return j;
}

inline nlohmann::json counterexample_json(const CounterexampleTable& t, std::uint64_t seed) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows)
    rows.push_back({{"d", r.d},
                    {"delta_closed_form", r.closed_form},
                    {"delta_moment_route", r.moment_route ? nlohmann::json(*r.moment_route) : nlohmann::json()}});
  return {{"seed", seed},
          {"d_max", t.rows.empty() ? 0 : t.rows.back().d},
          {"odd_strictly_increasing", t.odd_strictly_increasing},
          {"max_moment_gap", t.max_moment_gap},
          {"rows", rows}};
}

inline nlohmann::json truncation_json(std::span<const TruncationRow> rows, std::uint64_t seed) {
  nlohmann::json reports = nlohmann::json::array();
  for (const auto& r : rows) reports.push_back(to_json(r.report));
  return {{"seed", seed}, {"reports", reports}};
}

inline nlohmann::json interlacing_json(const InterlacingStudy& s, std::uint64_t seed) {
  return {{"seed", seed},
          {"trials", s.trials.size()},
          {"size", s.trials.empty() ? 0 : s.trials.front().size},
          {"total_violations", s.total_violations},
          {"worst_margin", detail::number_or_null(s.worst_margin)},
          {"process_chain", to_json(s.process_chain)}};
}

inline std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// SVG
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fixed(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", x);
  return buf;
}

}  // namespace detail

/// Line chart on t in [-1, 1]: faint replicate curves, true beta (solid),
/// projection on D (dashed), pointwise mean (dotted).
inline void write_svg(std::ostream& os, const ScenarioResult& r) {
  constexpr double W = 640, H = 400, L = 60, R = 20, T = 30, B = 40;
  double lo = r.true_curve.minCoeff(), hi = r.true_curve.maxCoeff();
  for (const Eigen::VectorXd* v : {&r.projection_curve, &r.mean_curve}) {
    lo = std::min(lo, v->minCoeff());
    hi = std::max(hi, v->maxCoeff());
  }
  if (r.replicate_curves.size() > 0) {
    lo = std::min(lo, r.replicate_curves.minCoeff());
    hi = std::max(hi, r.replicate_curves.maxCoeff());
  }
  if (hi - lo < 1e-12) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  auto X = [&](double t) { return L + (t + 1.0) / 2.0 * (W - L - R); };
  auto Y = [&](double y) { return T + (hi - y) / (hi - lo) * (H - T - B); };
  auto polyline = [&](const Eigen::VectorXd& v, const std::string& style) {
    os << "<polyline fill=\"none\" " << style << " points=\"";
    for (std::size_t i = 0; i < r.grid.size(); ++i)
      os << (i ? " " : "") << detail::fixed(X(r.grid[i])) << "," << detail::fixed(Y(v[static_cast<Eigen::Index>(i)]));
    os << "\"/>\n";
  };
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" data-ymin=\""
     << format_double(lo) << "\" data-ymax=\"" << format_double(hi) << "\">\n";
  os << "<!-- case=" << r.case_label << " seed=" << r.seed << " t=[-1,1] y=[" << format_double(lo) << ","
     << format_double(hi) << "] -->\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << L << "\" y=\"18\" font-family=\"sans-serif\" font-size=\"13\">" << r.case_label << " ("
     << r.subspace << ", n=" << r.n << ", M=" << r.replicates << ")</text>\n";
  // axes and ticks
  os << "<g stroke=\"black\" stroke-width=\"1\">\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\"/>\n";
  os << "</g>\n<g font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">\n";
  for (double t : {-1.0, -0.5, 0.0, 0.5, 1.0})
    os << "<text x=\"" << detail::fixed(X(t)) << "\" y=\"" << H - B + 16 << "\">" << detail::fixed(t) << "</text>\n";
  for (int k = 0; k <= 4; ++k) {
    const double y = lo + (hi - lo) * k / 4.0;
    os << "<text x=\"" << L - 26 << "\" y=\"" << detail::fixed(Y(y) + 4) << "\">" << detail::fixed(y) << "</text>\n";
  }
  os << "</g>\n";
  if (r.replicate_curves.cols() > 0) {
    os << "<g class=\"replicates\">\n";
    for (Eigen::Index m = 0; m < r.replicate_curves.cols(); ++m)
      polyline(r.replicate_curves.col(m), "stroke=\"#c8c8c8\" stroke-width=\"0.6\"");
    os << "</g>\n";
  }
  polyline(r.true_curve, "class=\"beta\" stroke=\"black\" stroke-width=\"2\"");
  polyline(r.projection_curve, "class=\"projection\" stroke=\"#1f5fbf\" stroke-width=\"1.6\" stroke-dasharray=\"8,5\"");
  polyline(r.mean_curve, "class=\"mean\" stroke=\"#c0392b\" stroke-width=\"2\" stroke-dasharray=\"2,3\"");
  // legend
  const double lx = W - R - 170, ly = T + 8;
  const char* names[] = {"true beta", "projection on D", "pointwise mean"};
  const char* styles[] = {"stroke=\"black\" stroke-width=\"2\"",
                          "stroke=\"#1f5fbf\" stroke-width=\"1.6\" stroke-dasharray=\"8,5\"",
                          "stroke=\"#c0392b\" stroke-width=\"2\" stroke-dasharray=\"2,3\""};
  for (int i = 0; i < 3; ++i) {
    const double y = ly + 16 * i;
    os << "<line x1=\"" << lx << "\" y1=\"" << y << "\" x2=\"" << lx + 30 << "\" y2=\"" << y << "\" " << styles[i]
       << "/>\n";
    os << "<text x=\"" << lx + 38 << "\" y=\"" << y + 4 << "\" font-family=\"sans-serif\" font-size=\"11\">"
       << names[i] << "</text>\n";
  }
  os << "</svg>\n";
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

struct Emitted {
  std::vector<std::filesystem::path> files;
};

/// Curves CSV, summary JSON and SVG; a result without replicates gets only the JSON.
inline Emitted emit_scenario(const ScenarioResult& r, const std::string& out_dir) {
  const auto dir = ensure_dir(out_dir);
  const std::string stem = scenario_stem(r.case_label, r.seed);
  Emitted e;
  if (r.replicates > 0 && r.replicate_curves.cols() > 0) {
    std::ostringstream csv, svg;
    write_curves_csv(csv, r);
    write_svg(svg, r);
    e.files.push_back(dir / (stem + "_curves.csv"));
    write_file(e.files.back(), csv.str());
    e.files.push_back(dir / (stem + "_figure.svg"));
    write_file(e.files.back(), svg.str());
    e.files.push_back(dir / (stem + "_summary.json"));
    write_file(e.files.back(), dump(summary_json(r)));
  } else {
    nlohmann::json j = {{"status", "ok"}, {"case", r.case_label}, {"seed", r.seed}, {"replicates", 0}};
    e.files.push_back(dir / (stem + "_summary.json"));
    write_file(e.files.back(), dump(j));
  }
  return e;
}

}  // namespace sofr::harness
