#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sofr/errors.hpp"
#include "sofr/function_expr.hpp"
#include "sofr/processes.hpp"

namespace sofr::harness {

using Ini = boost::property_tree::ptree;

inline Ini load_ini(const std::string& path) {
  Ini tree;
  try {
    boost::property_tree::ini_parser::read_ini(path, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(ErrorKind::ConfigError, e.what());
  }
  return tree;
}

inline Ini parse_ini(const std::string& text) {
  Ini tree;
  std::istringstream is(text);
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(ErrorKind::ConfigError, e.what());
  }
  return tree;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline double to_double(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') throw Error(ErrorKind::ConfigError, key + ": not a number: '" + text + "'");
  return v;
}

inline long long to_int(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || *end != '\0') throw Error(ErrorKind::ConfigError, key + ": not an integer: '" + text + "'");
  return v;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep))
    if (!trim(cur).empty()) out.push_back(trim(cur));
  return out;
}

}  // namespace detail

/// Typed access to one section; every lookup names its key in errors.
class Section {
 public:
  Section(const Ini& tree, std::string name) : name_(std::move(name)) {
    if (auto child = tree.get_child_optional(name_)) node_ = *child;
  }

  bool present() const { return !node_.empty(); }
  bool has(const std::string& key) const { return node_.get_optional<std::string>(key).has_value(); }

  std::string str(const std::string& key, std::optional<std::string> fallback = std::nullopt) const {
    if (auto v = node_.get_optional<std::string>(key)) return detail::trim(*v);
    if (fallback) return *fallback;
    throw Error(ErrorKind::ConfigError, "missing key [" + name_ + "] " + key);
  }

  double real(const std::string& key, std::optional<double> fallback = std::nullopt) const {
    if (has(key)) return detail::to_double(qualified(key), str(key));
    if (fallback) return *fallback;
    throw Error(ErrorKind::ConfigError, "missing key [" + name_ + "] " + key);
  }

  long long integer(const std::string& key, std::optional<long long> fallback = std::nullopt) const {
    if (has(key)) return detail::to_int(qualified(key), str(key));
    if (fallback) return *fallback;
    throw Error(ErrorKind::ConfigError, "missing key [" + name_ + "] " + key);
  }

  /// "3, 5, 7" or "3..9" or a mix of both.
  std::vector<int> int_list(const std::string& key) const {
    std::vector<int> out;
    for (const auto& part : detail::split(str(key), ',')) {
      const auto dots = part.find("..");
      if (dots == std::string::npos) {
        out.push_back(static_cast<int>(detail::to_int(qualified(key), part)));
      } else {
        const auto lo = detail::to_int(qualified(key), part.substr(0, dots));
        const auto hi = detail::to_int(qualified(key), part.substr(dots + 2));
        if (hi < lo) throw Error(ErrorKind::ConfigError, qualified(key) + ": empty range " + part);
        for (auto v = lo; v <= hi; ++v) out.push_back(static_cast<int>(v));
      }
    }
    return out;
  }

  std::map<std::string, double> reals() const {
    std::map<std::string, double> out;
    for (const auto& [k, v] : node_) out[k] = detail::to_double(qualified(k), v.data());
    return out;
  }

  FunctionExpr function(const std::string& key) const {
    try {
      return parse_function(str(key));
    } catch (const Error& e) {
      throw Error(ErrorKind::ConfigError, qualified(key) + ": " + e.what());
    }
  }

  std::string qualified(const std::string& key) const { return "[" + name_ + "] " + key; }

 private:
  std::string name_;
  Ini node_;
};

/// A real number or a multiple of pi: "1.2", "pi", "pi/3", "2*pi/3", "2pi".
inline double parse_angle(const std::string& key, const std::string& text) {
  std::string s;
  for (char c : text)
    if (c != ' ' && c != '\t') s += c;
  const auto at = s.find("pi");
  if (at == std::string::npos) return detail::to_double(key, s);
  std::string num = s.substr(0, at);
  if (!num.empty() && num.back() == '*') num.pop_back();
  const double a = num.empty() ? 1.0 : (num == "-" ? -1.0 : detail::to_double(key, num));
  const std::string rest = s.substr(at + 2);
  double b = 1.0;
  if (!rest.empty()) {
    if (rest[0] != '/') throw Error(ErrorKind::ConfigError, key + ": bad angle '" + text + "'");
    b = detail::to_double(key, rest.substr(1));
  }
  return a * std::numbers::pi / b;
}

// ---------------------------------------------------------------------------
// Process section
// ---------------------------------------------------------------------------

inline ProcessSpec parse_process(const Ini& tree, std::uint64_t seed) {
  const Section s(tree, "process");
  const std::string v = s.str("variant", "appendixC");
  if (v == "appendixC") {
    AppendixCProcess p;
    p.poisson_mean = s.real("poisson_mean", p.poisson_mean);
    p.amplitude = s.real("amplitude", p.amplitude);
    p.eta_first = s.real("eta_first", p.eta_first);
    p.z_cap = static_cast<int>(s.integer("z_cap", p.z_cap));
    if (!(p.poisson_mean > 0.0) || p.z_cap < 1) throw Error(ErrorKind::ConfigError, "[process] bad appendixC values");
    return {p, seed};
  }
  if (v == "example") {
    const auto K = s.integer("k", 10);
    if (K < 0) throw Error(ErrorKind::ConfigError, "[process] k must be >= 0");
    return {default_example_process(static_cast<int>(K)), seed};
  }
  if (v == "counterexample") {
    const auto cap = s.integer("cap", 22);
    if (cap < 2) throw Error(ErrorKind::ConfigError, "[process] cap must be >= 2");
    auto p = default_counterexample_process(static_cast<int>(cap));
    p.lambda1 = s.real("lambda1", p.lambda1);
    return {p, seed};
  }
  if (v == "remark3") {
    const auto cap = s.integer("cap", 12);
    if (cap < 1) throw Error(ErrorKind::ConfigError, "[process] cap must be >= 1");
    auto p = default_remark3_process(static_cast<int>(cap));
    p.c = s.real("c", p.c);
    return {p, seed};
  }
  throw Error(ErrorKind::ConfigError, "[process] unknown variant '" + v + "'");
}

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

enum class SubspaceKind { Theta, Pcs, Atoms };

struct SubspaceSpec {
  SubspaceKind kind = SubspaceKind::Theta;
  double theta = 0.0;
  int k = 3;
  std::vector<FunctionExpr> atoms;

  std::string describe() const {
    switch (kind) {
      case SubspaceKind::Theta: return "D_theta(" + sofr::detail::format_double(theta) + ")";
      case SubspaceKind::Pcs: return "first-" + std::to_string(k) + "-PCs";
      case SubspaceKind::Atoms: return "atoms(" + std::to_string(atoms.size()) + ")";
    }
    return "";
  }
  int dim() const { return kind == SubspaceKind::Theta ? 3 : kind == SubspaceKind::Pcs ? k : static_cast<int>(atoms.size()); }
};

struct ScenarioConfig {
  std::string case_label = "scenario";
  FunctionExpr beta;
  SubspaceSpec subspace;
  ProcessSpec process{AppendixCProcess{}, 12345};
  int n = 500;
  int replicates = 100;
  double sigma = 1.0;
  std::uint64_t seed = 12345;
  int k_s = 50;
  int p = 201;
  std::string out_dir;
  std::vector<int> slln_n;                 // sample sizes of the nested bias study
  std::map<std::string, double> acceptance;  // thresholds, read by the acceptance runner
};

inline SubspaceSpec parse_subspace(const Ini& tree) {
  const Section s(tree, "subspace");
  SubspaceSpec out;
  const std::string kind = s.str("kind", "theta");
  if (kind == "theta") {
    out.kind = SubspaceKind::Theta;
    out.theta = parse_angle(s.qualified("theta"), s.str("theta", "0"));
  } else if (kind == "legendre") {
    out.kind = SubspaceKind::Theta;
    out.theta = 0.0;
  } else if (kind == "pcs") {
    out.kind = SubspaceKind::Pcs;
    out.k = static_cast<int>(s.integer("k", 3));
    if (out.k < 1) throw Error(ErrorKind::ConfigError, "[subspace] k must be >= 1");
  } else if (kind == "atoms") {
    out.kind = SubspaceKind::Atoms;
    for (const auto& a : detail::split(s.str("atoms"), ';')) {
      try {
        out.atoms.push_back(parse_function(a));
      } catch (const Error& e) {
        throw Error(ErrorKind::ConfigError, std::string("[subspace] atoms: ") + e.what());
      }
    }
    if (out.atoms.empty()) throw Error(ErrorKind::ConfigError, "[subspace] atoms is empty");
  } else {
    throw Error(ErrorKind::ConfigError, "[subspace] unknown kind '" + kind + "'");
  }
  return out;
}

inline void validate(const ScenarioConfig& c) {
  auto bad = [](const std::string& m) { throw Error(ErrorKind::ConfigError, m); };
  if (c.replicates < 1) bad("[scenario] replicates must be >= 1");
  if (c.n < c.subspace.dim()) bad("[scenario] n must be >= d");
  if (!(c.sigma >= 0.0)) bad("[scenario] sigma must be >= 0");
  if (c.k_s < 3) bad("[scenario] k_s must be >= 3");
  if (c.p < 2) bad("[scenario] p must be >= 2");
  if (c.subspace.kind == SubspaceKind::Theta && !(c.subspace.theta >= 0.0 && c.subspace.theta <= 2 * std::numbers::pi))
    bad("[subspace] theta must lie in [0, 2 pi]");
  if (c.case_label.empty() || c.case_label.find_first_of("/\\ ") != std::string::npos)
    bad("[scenario] case must be a non-empty file-name token");
  for (int m : c.slln_n)
    if (m < c.subspace.dim()) bad("[bias] every slln_n must be >= d");
}

inline ScenarioConfig parse_scenario(const Ini& tree) {
  const Section s(tree, "scenario");
  ScenarioConfig c;
  c.case_label = s.str("case", c.case_label);
  c.seed = static_cast<std::uint64_t>(s.integer("seed", static_cast<long long>(c.seed)));
  c.n = static_cast<int>(s.integer("n", c.n));
  c.replicates = static_cast<int>(s.integer("replicates", c.replicates));
  c.sigma = s.real("sigma", c.sigma);
  c.k_s = static_cast<int>(s.integer("k_s", c.k_s));
  c.p = static_cast<int>(s.integer("p", c.p));
  c.out_dir = s.str("out", "");
  c.beta = Section(tree, "beta").function("terms");
  c.subspace = parse_subspace(tree);
  c.process = parse_process(tree, c.seed);
  const Section b(tree, "bias");
  if (b.has("slln_n")) c.slln_n = b.int_list("slln_n");
  c.acceptance = Section(tree, "acceptance").reals();
  validate(c);
  return c;
}

// ---------------------------------------------------------------------------
// Studies
// ---------------------------------------------------------------------------

struct CounterexampleConfig {
  CounterexampleProcess process = default_counterexample_process();
  std::uint64_t seed = 12345;
  int d_max = 21;
  int moment_d_max = 7;
  std::string out_dir;
};

inline CounterexampleConfig parse_counterexample(const Ini& tree) {
  const Section s(tree, "counterexample");
  CounterexampleConfig c;
  c.seed = static_cast<std::uint64_t>(s.integer("seed", static_cast<long long>(c.seed)));
  c.d_max = static_cast<int>(s.integer("d_max", c.d_max));
  c.moment_d_max = static_cast<int>(s.integer("moment_d_max", c.moment_d_max));
  c.out_dir = s.str("out", "");
  c.process = default_counterexample_process(static_cast<int>(s.integer("cap", c.d_max + 1)));
  if (s.has("lambda1")) c.process.lambda1 = s.real("lambda1");
  if (c.d_max < 1 || c.d_max + 1 > c.process.cap())
    throw Error(ErrorKind::ConfigError, "[counterexample] need 1 <= d_max and d_max + 1 <= cap");
  if (c.moment_d_max < 0) throw Error(ErrorKind::ConfigError, "[counterexample] moment_d_max must be >= 0");
  return c;
}

struct TruncationConfig {
  ProcessSpec process{AppendixCProcess{}, 12345};
  FunctionExpr beta;
  std::vector<int> d_schedule;
  double tau0 = 1.0;
  int k_s = 40;
  int replicates = 20;
  double sigma = 1.0;
  std::uint64_t seed = 12345;
  std::string out_dir;
};

inline TruncationConfig parse_truncation(const Ini& tree) {
  const Section s(tree, "truncation");
  TruncationConfig c;
  c.seed = static_cast<std::uint64_t>(s.integer("seed", static_cast<long long>(c.seed)));
  c.d_schedule = s.int_list("d_schedule");
  c.tau0 = s.real("tau0", c.tau0);
  c.k_s = static_cast<int>(s.integer("k_s", c.k_s));
  c.replicates = static_cast<int>(s.integer("replicates", c.replicates));
  c.sigma = s.real("sigma", c.sigma);
  c.out_dir = s.str("out", "");
  c.beta = Section(tree, "beta").function("terms");
  c.process = parse_process(tree, c.seed);
  if (c.d_schedule.empty()) throw Error(ErrorKind::ConfigError, "[truncation] d_schedule is empty");
  for (std::size_t i = 0; i < c.d_schedule.size(); ++i)
    if (c.d_schedule[i] < 1 || (i > 0 && c.d_schedule[i] <= c.d_schedule[i - 1]))
      throw Error(ErrorKind::ConfigError, "[truncation] d_schedule must be positive and strictly increasing");
  if (c.d_schedule.back() > c.k_s) throw Error(ErrorKind::ConfigError, "[truncation] largest d exceeds k_s");
  if (c.replicates < 1 || !(c.tau0 > 0.0) || !(c.sigma >= 0.0))
    throw Error(ErrorKind::ConfigError, "[truncation] replicates >= 1, tau0 > 0, sigma >= 0 required");
  return c;
}

struct InterlacingConfig {
  int trials = 100;
  int size = 50;
  int process_dim = 20;
  std::uint64_t seed = 12345;
  double slack = 1e-10;
  std::string out_dir;
};

inline InterlacingConfig parse_interlacing(const Ini& tree) {
  const Section s(tree, "interlacing");
  InterlacingConfig c;
  c.seed = static_cast<std::uint64_t>(s.integer("seed", static_cast<long long>(c.seed)));
  c.trials = static_cast<int>(s.integer("trials", c.trials));
  c.size = static_cast<int>(s.integer("size", c.size));
  c.process_dim = static_cast<int>(s.integer("process_dim", c.process_dim));
  c.slack = s.real("slack", c.slack);
  c.out_dir = s.str("out", "");
  if (c.trials < 1 || c.size < 1 || c.process_dim < 3)
    throw Error(ErrorKind::ConfigError, "[interlacing] trials >= 1, size >= 1, process_dim >= 3 required");
  return c;
}

// ---------------------------------------------------------------------------
// Output directory
// ---------------------------------------------------------------------------

inline constexpr const char* kOutDirEnv = "SOFR_OUT_DIR";

/// Command line, then config, then the environment, then the working directory.
inline std::string resolve_out_dir(const std::string& cli, const std::string& config) {
  if (!cli.empty()) return cli;
  if (!config.empty()) return config;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  return ".";
}

}  // namespace sofr::harness
