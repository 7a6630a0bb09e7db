// Command-line driver: build, sweep, fit, frontier, report.
//
// Exit codes: 0 success, 2 configuration error, 3 data error,
// 4 numerical failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "segmarket/experiment.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kData = 3, kNumerical = 4 };

struct Common {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool has_seed = false;
  unsigned threads = 1;
  bool resume = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "experiment config file")->required();
  cmd->add_option("--out", c.out, "output directory (overrides output.dir and SEGMARKET_OUT)");
  cmd->add_option("--seed", c.seed, "base seed for the sweep (overrides sweep.base_seed)")
      ->each([&](const std::string&) { c.has_seed = true; });
  cmd->add_option("--threads", c.threads, "worker threads, 0 = all cores")->default_val(1);
  cmd->add_flag("--resume", c.resume, "keep finished rows of an existing results table");
}

segmarket::ExperimentConfig resolve(const Common& c) {
  auto cfg = segmarket::load_config(c.config);
  if (const char* env = std::getenv("SEGMARKET_OUT"); env && *env) cfg.output_dir = env;
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (c.has_seed) cfg.base_seed = c.seed;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Efficiency loss of segmented ride-sharing markets on shareability networks"};
  app.require_subcommand(1);
  Common common;
  std::string mode = "all";

  auto* build = app.add_subcommand("build", "build the trip table and shareability network");
  auto* sweep = app.add_subcommand("sweep", "evaluate every market scenario of the grid");
  auto* fit = app.add_subcommand("fit", "fit the scaling and loss models to the results table");
  auto* frontier = app.add_subcommand("frontier", "locate worst tightness per thickness and write plot data");
  auto* report = app.add_subcommand("report", "run build, sweep, fit and frontier in sequence");
  for (auto* cmd : {build, sweep, fit, frontier, report}) add_common(cmd, common);
  fit->add_option("--mode", mode, "power, alpha, beta, quartic or all")->default_val("all");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    const auto cfg = resolve(common);
    segmarket::RunOptions opt;
    opt.threads = common.threads;
    opt.resume = common.resume;
    if (build->parsed()) segmarket::cmd_build(cfg, opt);
    else if (sweep->parsed()) segmarket::cmd_sweep(cfg, opt);
    else if (fit->parsed()) segmarket::cmd_fit(cfg, segmarket::parse_fit_mode(mode), opt);
    else if (frontier->parsed()) segmarket::cmd_frontier(cfg, opt);
    else if (report->parsed()) segmarket::cmd_report(cfg, opt);
    return kOk;
  } catch (const segmarket::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const segmarket::FitFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n" << e.diagnostics() << "\n";
    return kNumerical;
  } catch (const segmarket::DomainError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const segmarket::Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
}
