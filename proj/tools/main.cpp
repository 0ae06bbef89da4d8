#include <iostream>

#include <CLI11.hpp>

#include "app.hpp"

int main(int argc, char** argv) {
  using namespace gripstab::app;

  CLI::App cli{"Grasp stability: synthetic pull tests, dataset handling, SAM training and evaluation"};
  cli.require_subcommand(1);
  cli.fallthrough();

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out;
  bool resume = false;
  cli.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  auto* seed_opt = cli.add_option("--seed", seed, "Seed for simulation, folds and training");
  auto* out_opt = cli.add_option("--out", out, "Output location (dataset, run or report directory)");
  cli.add_flag("--resume", resume, "Skip finished runs and completed folds");

  std::vector<std::string> report_inputs;
  cli.add_subcommand("simulate", "Generate a synthetic dataset");
  cli.add_subcommand("label", "Relabel a dataset from its stored force traces");
  cli.add_subcommand("split", "Write the class split and fold table");
  cli.add_subcommand("train", "Cross-validate or train a single model");
  cli.add_subcommand("evaluate", "Evaluate a checkpoint and write report and plots");
  cli.add_subcommand("report", "Tabulate report.json files")
      ->add_option("inputs", report_inputs, "name=path entries")
      ->required();

  CLI11_PARSE(cli, argc, argv);

  Invocation inv;
  try {
    inv.config = config_path.empty() ? default_config() : load_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  if (*seed_opt) inv.overrides.seed = seed;
  if (*out_opt) inv.overrides.out = out;
  inv.overrides.resume = resume;
  inv.report_inputs = report_inputs;

  return run(cli.get_subcommands().front()->get_name(), inv, std::cout, std::cerr);
}
