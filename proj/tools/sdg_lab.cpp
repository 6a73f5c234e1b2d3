// Command-line front end for the game laboratory: loads a scenario file and
// runs one stage or the whole pipeline, writing artifacts and a summary.
//
// Exit codes: 0 all checks passed, 1 at least one check failed, 2 bad
// configuration or usage.

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "sdg/scenario.hpp"

namespace {

struct CliOptions {
  std::string scenario_file;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> n_paths;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CliOptions& opt) {
  cmd->add_option("--scenario", opt.scenario_file, "Scenario JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out-dir", opt.out_dir,
                  "Directory for artifacts and summary.json (default: none)");
  cmd->add_option("--seed", opt.seed, "Override the scenario's base seed");
  cmd->add_option("--paths", opt.n_paths, "Override every Monte Carlo path count");
  cmd->add_flag("--quiet", opt.quiet, "Suppress per-check output");
}

int run(const CliOptions& opt, const std::vector<std::string>& stages) {
  const sdg::Scenario sc = sdg::load_scenario(opt.scenario_file);
  sdg::RunOverrides ov;
  ov.seed = opt.seed;
  ov.n_paths = opt.n_paths;
  ov.out_dir = opt.out_dir;
  ov.quiet = opt.quiet;
  ov.stages = stages;
  const sdg::RunResult res = sdg::run_scenario(sc, ov);
  return res.all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical laboratory for delayed-strategy stochastic differential games"};
  app.require_subcommand(1);

  CliOptions opt;
  const std::vector<std::pair<std::string, std::string>> stage_commands = {
      {"simulate", "Sample a showcase path and estimate the game cost"},
      {"fixpoint", "Check strategy-pair resolution: replay, order, delay class"},
      {"solve-hji", "Solve the upper and lower value equations"},
      {"check-isaacs", "Audit the Hamiltonians for a saddle point"},
      {"check-dpp", "Check both dynamic-programming inequalities"},
      {"regularity", "Estimate Lipschitz/Hoelder constants of the solved values"},
  };
  for (const auto& [name, help] : stage_commands) {
    add_common(app.add_subcommand(name, help), opt);
  }
  add_common(app.add_subcommand("run", "Run every stage the scenario configures"), opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help or the parse error
    return code == 0 ? 0 : 2;
  }

  const CLI::App* sub = app.get_subcommands().front();
  std::vector<std::string> stages;
  if (sub->get_name() != "run") stages = {sub->get_name()};

  try {
    return run(opt, stages);
  } catch (const sdg::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
