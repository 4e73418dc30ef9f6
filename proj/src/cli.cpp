#include "stabilab/harness.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace stabilab {

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"stabilab: stability bounds and coupled SGD experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir, in_dir;
  auto* bounds = app.add_subcommand("bounds", "Evaluate the closed-form stability bound");
  auto* simulate = app.add_subcommand("simulate", "Run coupled chains and estimate Wasserstein distances");
  auto* verify = app.add_subcommand("verify", "Run the certificate suite");
  for (auto* sub : {bounds, simulate, verify}) {
    sub->add_option("--config", config_path, "Experiment config (JSON)")->required();
    sub->add_option("--out", out_dir, "Output directory")->required();
  }
  auto* report = app.add_subcommand("report", "Summarize an output directory as markdown");
  report->add_option("--in", in_dir, "Directory written by another subcommand")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_usage;
  }

  const RunOptions options{threads_from_env()};
  try {
    if (*report) return cmd_report(in_dir, std::cout);
    const ExperimentConfig config = load_config(config_path);
    if (*bounds) return cmd_bounds(config, out_dir);
    if (*simulate) return cmd_simulate(config, out_dir, options);
    return cmd_verify(config, out_dir, options);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_usage;
  } catch (const InadmissibleError& e) {
    std::cerr << "inadmissible: " << e.what() << '\n';
    return exit_inadmissible;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_usage;
  }
}

}  // namespace stabilab
