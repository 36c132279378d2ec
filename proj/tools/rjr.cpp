// rjr: command-line front end for the nuclear-spin lattice simulator.

#include <CLI11.hpp>
#include <exception>
#include <iostream>
#include <string>

#include "rjr/app.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Mean-field, exact-diagonalization and transport runs for nuclear-spin lattices", "rjr"};
  app.set_version_flag("--version", RJR_VERSION);
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  rjr::RunOptions opt;
  std::string out_dir = ".";
  app.add_option("-c,--config", config_path, "JSON run configuration (defaults apply when omitted)")
      ->check(CLI::ExistingFile);
  app.add_option("-o,--out", out_dir, "Output directory");
  app.add_option("-j,--workers", opt.workers, "Worker threads for sweeps")->check(CLI::PositiveNumber);
  app.add_option("--seed", opt.seed, "Seed for randomized initial guesses");
  app.add_flag("--strict", opt.strict, "Exit with code 2 if any solve fails to converge");

  const std::pair<const char*, const char*> commands[] = {
      {"regime", "Print the dimensionless couplings and window hints"},
      {"phase-diagram", "Sweep the configured axes and record order parameters"},
      {"charge-profile", "Site densities and spin profiles over the configured axes"},
      {"confinement", "Static domain-wall potential V(d) on a chain"},
      {"conductance", "Linear conductance of a probed island versus chemical potential"},
      {"bands", "Dispersions, nesting and Dirac-cone checks"},
      {"correlators", "Density correlator profile with oscillatory and exponential fits"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? rjr::exit_code::ok : rjr::exit_code::config_error;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  opt.out_dir = out_dir;
  try {
    const rjr::RunConfig cfg = config_path.empty() ? rjr::parse_config(nlohmann::json::object())
                                                   : rjr::load_config(config_path);
    return rjr::run_command(command, cfg, opt, std::cout);
  } catch (const rjr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return rjr::exit_code::config_error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return rjr::exit_code::config_error;
  }
}
