// Command-line front end: thermistor <validate|solve|regularity|sweep|all> --config FILE

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <utility>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "thermistor/error.hpp"
#include "thermistor/field_io.hpp"
#include "thermistor/runner/config.hpp"
#include "thermistor/runner/runner.hpp"

int main(int argc, char** argv) {
  using namespace thermistor;
  CLI::App app{"Coupled thermistor solver and regularity lab"};
  app.require_subcommand(1, 1);
  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  bool quiet = false;
  app.add_option("--config", config_path, "experiment config file")->required();
  app.add_option("--out", out_dir, "output directory (overrides [output] directory)");
  app.add_option("--seed", seed, "seed for randomized probes (overrides [run] seed)");
  app.add_option("--workers", workers, "parallel sweep workers (overrides [run] workers)")
      ->check(CLI::PositiveNumber);
  app.add_flag("--quiet", quiet, "only log warnings and errors");
  app.fallthrough();
  const std::pair<const char*, const char*> commands[] = {
      {"validate", "check the coefficient assumptions"},
      {"solve", "run the coupled fixed point"},
      {"regularity", "cascade, modulus and stability diagnostics"},
      {"sweep", "one row per value of the configured sweep axis"},
      {"all", "validate, solve, regularity and sweep in one run"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : runner::kConfigFailure;
  }
  spdlog::set_level(quiet ? spdlog::level::warn : spdlog::level::info);

  runner::ExperimentConfig config;
  try {
    config = runner::parse_config(io::read_text(config_path));
  } catch (const Error& e) {
    std::cerr << config_path << ": " << e.what() << "\n";
    return runner::kConfigFailure;
  }
  runner::RunOptions opt;
  if (out_dir) opt.out_dir = *out_dir;
  opt.seed = seed;
  opt.workers = workers;
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return runner::run_command(command, config, opt);
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return e.code() == Errc::ConfigError ? runner::kConfigFailure : runner::kSolverFailure;
  }
}
