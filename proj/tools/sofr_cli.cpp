#include <CLI11.hpp>

#include <cstdint>
#include <functional>
#include <iostream>
#include <map>
#include <string>

#include "sofr/harness/commands.hpp"

using namespace sofr::harness;

int main(int argc, char** argv) {
  CLI::App app{"Scalar-on-function regression in identifiable subspaces: simulations and studies"};
  app.require_subcommand(1);

  using Command = std::function<int(const CommandOptions&, std::ostream&, std::ostream&)>;
  const std::map<std::string, std::pair<std::string, Command>> commands = {
      {"simulate", {"Monte Carlo scenario: curves CSV, summary JSON, SVG figure", cmd_simulate}},
      {"bias", {"Scenario plus analytic bias decomposition and nested gamma_n table", cmd_bias}},
      {"counterexample", {"Divergence counterexample table over d", cmd_counterexample}},
      {"truncation", {"PC-truncated estimator along a k_d schedule", cmd_truncation}},
      {"interlacing", {"Eigenvalue interlacing on nested symmetric families", cmd_interlacing}},
  };

  CommandOptions opts;
  std::uint64_t seed = 0;
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, entry] : commands) {
    CLI::App* sub = app.add_subcommand(name, entry.first);
    sub->add_option("config", opts.config_path, "INI config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Override the config seed");
    sub->add_option("--out", opts.out_dir, "Output directory (default: config, then $SOFR_OUT_DIR, then .)");
    sub->add_option("--jobs", opts.jobs, "Worker threads, 0 for all cores")->check(CLI::NonNegativeNumber);
    subs[name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  for (const auto& [name, sub] : subs) {
    if (!sub->parsed()) continue;
    if (sub->count("--seed") > 0) opts.seed = seed;
    return commands.at(name).second(opts, std::cout, std::cerr);
  }
  return kExitFailure;
}
