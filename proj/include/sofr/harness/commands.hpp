#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include "sofr/errors.hpp"
#include "sofr/harness/config.hpp"
#include "sofr/harness/emit.hpp"
#include "sofr/harness/scenario.hpp"
#include "sofr/harness/studies.hpp"

namespace sofr::harness {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitNotIdentifiable = 2, kExitRankDeficient = 3, kExitConfig = 4 };

inline int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::NotIdentifiable: return kExitNotIdentifiable;
    case ErrorKind::RankDeficient: return kExitRankDeficient;
    case ErrorKind::ConfigError:
    case ErrorKind::ParseError: return kExitConfig;
    default: return kExitFailure;
  }
}

/// Overrides shared by every subcommand.
struct CommandOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  int jobs = 1;
};

namespace detail {

inline void say_files(std::ostream& out, const Emitted& e) {
  for (const auto& f : e.files) out << "wrote " << f.string() << "\n";
}

inline std::filesystem::path write_one(const std::string& dir, const std::string& name, const std::string& content,
                                       std::ostream& out) {
  const auto path = ensure_dir(dir) / name;
  write_file(path, content);
  out << "wrote " << path.string() << "\n";
  return path;
}

inline ScenarioConfig load_scenario(const CommandOptions& o) {
  ScenarioConfig c = parse_scenario(load_ini(o.config_path));
  if (o.seed) {
    c.seed = *o.seed;
    c.process.seed = *o.seed;
  }
  return c;
}

/// Runs fn, translating library errors into exit codes and a message on err.
template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

/// Scenario subcommands share the identifiability gate: on failure the
/// summary JSON records the status and the smallest eigenvalue of A^T A.
template <class Fn>
int scenario_command(const CommandOptions& o, std::ostream& out, std::ostream& err, Fn&& body) {
  return guarded(err, [&] {
    const ScenarioConfig c = load_scenario(o);
    const std::string dir = resolve_out_dir(o.out_dir, c.out_dir);
    try {
      return body(c, dir);
    } catch (const NotIdentifiableError& e) {
      out << "min_eigenvalue=" << format_double(e.min_eigenvalue()) << "\n";
      write_one(dir, scenario_stem(c.case_label, c.seed) + "_summary.json",
                dump(failure_json(c.case_label, c.seed, e, e.min_eigenvalue())), out);
      throw;
    } catch (const Error& e) {
      write_one(dir, scenario_stem(c.case_label, c.seed) + "_summary.json",
                dump(failure_json(c.case_label, c.seed, e)), out);
      throw;
    }
  });
}

}  // namespace detail

inline int cmd_simulate(const CommandOptions& o, std::ostream& out, std::ostream& err) {
  return detail::scenario_command(o, out, err, [&](const ScenarioConfig& c, const std::string& dir) {
    const ScenarioResult r = run_scenario(c, o.jobs);
    out << "min_eigenvalue=" << format_double(r.min_eigenvalue) << "\n";
    out << "l2_error_mean=" << format_double(r.l2_error_mean) << "\n";
    detail::say_files(out, emit_scenario(r, dir));
    return kExitOk;
  });
}

/// Analytic decomposition and gamma curve, plus gamma_n along one nested sample.
inline int cmd_bias(const CommandOptions& o, std::ostream& out, std::ostream& err) {
  return detail::scenario_command(o, out, err, [&](const ScenarioConfig& c, const std::string& dir) {
    const ScenarioResult r = run_scenario(c, o.jobs);
    out << "min_eigenvalue=" << format_double(r.min_eigenvalue) << "\n";
    detail::say_files(out, emit_scenario(r, dir));
    if (r.decomposition) {
      const ErrorTerms& t = *r.decomposition;
      out << "beta_F_norm2=" << format_double(t.beta_F_norm2) << "\n"
          << "gamma_norm2=" << format_double(t.gamma_norm2) << "\n"
          << "sperp_norm2=" << format_double(t.sperp_norm2) << "\n";
    }
    if (!c.slln_n.empty()) {
      const auto rows = slln_study(c, c.slln_n);
      std::ostringstream csv;
      write_slln_csv(csv, rows);
      detail::write_one(dir, scenario_stem(c.case_label, c.seed) + "_slln.csv", csv.str(), out);
    }
    return kExitOk;
  });
}

inline int cmd_counterexample(const CommandOptions& o, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    CounterexampleConfig c = parse_counterexample(load_ini(o.config_path));
    if (o.seed) c.seed = *o.seed;
    const std::string dir = resolve_out_dir(o.out_dir, c.out_dir);
    const CounterexampleTable t = run_counterexample(c);
    std::ostringstream csv;
    write_counterexample_csv(csv, t);
    detail::write_one(dir, "counterexample_" + std::to_string(c.seed) + ".csv", csv.str(), out);
    detail::write_one(dir, "counterexample_" + std::to_string(c.seed) + ".json", dump(counterexample_json(t, c.seed)),
                      out);
    out << "odd_strictly_increasing=" << (t.odd_strictly_increasing ? "true" : "false") << "\n";
    return kExitOk;
  });
}

inline int cmd_truncation(const CommandOptions& o, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    TruncationConfig c = parse_truncation(load_ini(o.config_path));
    if (o.seed) {
      c.seed = *o.seed;
      c.process.seed = *o.seed;
    }
    const std::string dir = resolve_out_dir(o.out_dir, c.out_dir);
    const auto rows = run_truncation_study(c, o.jobs);
    std::ostringstream csv;
    write_truncation_csv(csv, rows);
    detail::write_one(dir, "truncation_" + std::to_string(c.seed) + ".csv", csv.str(), out);
    detail::write_one(dir, "truncation_" + std::to_string(c.seed) + ".json", dump(truncation_json(rows, c.seed)), out);
    return kExitOk;
  });
}

inline int cmd_interlacing(const CommandOptions& o, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    InterlacingConfig c = parse_interlacing(load_ini(o.config_path));
    if (o.seed) c.seed = *o.seed;
    const std::string dir = resolve_out_dir(o.out_dir, c.out_dir);
    const InterlacingStudy s = run_interlacing_study(c, o.jobs);
    std::ostringstream csv, ev;
    write_interlacing_csv(csv, s);
    write_eigenvalue_csv(ev, s.process_chain.eigenvalues);
    detail::write_one(dir, "interlacing_" + std::to_string(c.seed) + ".csv", csv.str(), out);
    detail::write_one(dir, "interlacing_" + std::to_string(c.seed) + "_eigenvalues.csv", ev.str(), out);
    detail::write_one(dir, "interlacing_" + std::to_string(c.seed) + ".json", dump(interlacing_json(s, c.seed)), out);
    out << "violations=" << s.total_violations + s.process_chain.violations << "\n";
    return kExitOk;
  });
}

}  // namespace sofr::harness
