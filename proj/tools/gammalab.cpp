#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "gammalab/experiments.hpp"

namespace {

gammalab::ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file: " + path);
  gammalab::ordered_json j;
  f >> j;
  return gammalab::ExperimentConfig::from_json(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gammalab: moving-anisotropy convergence experiments"};
  app.require_subcommand(1);

  auto* run_cmd = app.add_subcommand("run", "run an experiment and write its report");
  std::string experiment, config_path, out_dir, format;
  run_cmd->add_option("--experiment", experiment, "E1..E6 (overrides the config's experiment)");
  run_cmd->add_option("--config", config_path, "JSON config path; omitted: built-in defaults");
  run_cmd->add_option("--out", out_dir, "output directory (default: config's, else ./out)");
  run_cmd->add_option("--format", format, "csv or json (default: config's, else csv)");

  auto* list_cmd = app.add_subcommand("list-experiments", "list experiments and what they verify");

  auto* validate_cmd = app.add_subcommand("validate", "dry-run checks of a config");
  std::string validate_path;
  validate_cmd->add_option("--config", validate_path, "JSON config path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (list_cmd->parsed()) {
      for (const auto& [name, what] : gammalab::list_experiments())
        std::cout << name << "\n    " << what << "\n";
      return 0;
    }
    if (validate_cmd->parsed()) {
      const auto config = load_config(validate_path);
      for (const auto& note : gammalab::validate(config)) std::cout << note << "\n";
      std::cout << "config ok\n";
      return 0;
    }
    gammalab::ExperimentConfig config;
    if (!config_path.empty()) {
      config = load_config(config_path);
      if (!experiment.empty()) config.experiment = experiment;
    } else {
      if (experiment.empty())
        throw std::runtime_error("run: provide --experiment and/or --config");
      config = gammalab::default_config(experiment);
    }
    if (!out_dir.empty()) config.output.dir = out_dir;
    if (!format.empty()) config.output.format = format;
    const auto report = gammalab::run(config);
    const auto emitted = gammalab::emit(report, config.output.dir, config.output.format,
                                        config.canonical_experiment());
    std::cout << "wrote " << emitted.path << " (" << report.rows.size() << " rows";
    if (report.fitted_rate) std::cout << ", fitted rate " << *report.fitted_rate;
    std::cout << ")\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
