// Command-line front end: run, sweep, gradcheck, export-masks.
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "plreg/config.hpp"
#include "plreg/errors.hpp"
#include "plreg/gradcheck_suite.hpp"
#include "plreg/runner.hpp"

namespace {

constexpr int kUsageError = 2;

std::vector<double> parse_values(const std::string& list) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    const std::size_t end = std::min(list.find(',', start), list.size());
    const std::string item = list.substr(start, end - start);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (item.empty() || used != item.size()) {
      throw plreg::UsageError("--values: '" + item + "' is not a number");
    }
    out.push_back(v);
    start = end + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PL-Reg experiment runner"};
  app.set_version_flag("--version", plreg::version_string());
  app.require_subcommand(1);

  std::string config_path;
  auto* run = app.add_subcommand("run", "run every seed of a config");
  run->add_option("--config", config_path, "experiment config (JSON) or a run manifest")
      ->required();

  std::string axis, values;
  auto* sweep = app.add_subcommand("sweep", "run a config over several values of one weight");
  sweep->add_option("--config", config_path, "experiment config (JSON)")->required();
  sweep->add_option("--axis", axis, "w_p1, w_p2, w_lreg, lambda_infomax or lambda_kd")
      ->required();
  sweep->add_option("--values", values, "comma separated values, e.g. 5e-4,1e-3,2e-3")
      ->required();

  bool inject_fault = false;
  std::size_t instances = 20;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every loss");
  grad->add_option("--instances", instances, "random instances per check")
      ->check(CLI::PositiveNumber);
  grad->add_flag("--inject-fault", inject_fault, "add an op with a wrong backward (self-test)")
      ->group("");

  std::string run_dir;
  auto* masks = app.add_subcommand("export-masks", "write masks_heatmap.csv for a CIL run");
  masks->add_option("--run", run_dir, "run directory holding manifest.txt and masks.csv")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return plreg::run(plreg::parse_config(config_path), std::cout);
    if (*sweep) {
      return plreg::sweep(plreg::parse_config(config_path), axis, parse_values(values), std::cout);
    }
    if (*grad) {
      plreg::SuiteOptions options;
      options.instances = instances;
      options.inject_fault = inject_fault;
      return plreg::gradcheck_cmd(std::cout, options);
    }
    if (*masks) return plreg::export_masks(run_dir, std::cout);
  } catch (const plreg::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const plreg::UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kUsageError;
}
