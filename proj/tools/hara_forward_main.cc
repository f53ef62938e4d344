// hara-forward: synthesize and verify a HARA forward utility on a market tree.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "hara/error.h"
#include "hara/scenario.h"

namespace {

std::vector<std::string> split_checks(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HARA forward utilities on discrete market trees"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run a scenario file");
  std::string config;
  std::string out_dir = ".";
  std::string checks;
  std::uint64_t seed = 0;
  double tol_foc = 0.0;
  double tol_verify = 0.0;
  bool quiet = false;
  bool plot_data = false;
  run->add_option("config", config, "scenario JSON file")->required();
  run->add_option("--out-dir", out_dir, "directory for result.csv and report.json");
  auto* checks_opt = run->add_option("--checks", checks,
                                     "comma-separated subset of verify,mhm,reconstruction,log_identity,"
                                     "closed_form_crosscheck");
  auto* seed_opt = run->add_option("--seed", seed, "seed for sampled strategies and densities");
  auto* tol_foc_opt = run->add_option("--tol-foc", tol_foc, "first-order-condition tolerance");
  auto* tol_verify_opt = run->add_option("--tol-verify", tol_verify, "verifier tolerance");
  run->add_flag("--quiet", quiet, "print nothing on success");
  run->add_flag("--plot-data", plot_data, "also write plot_data.csv (time,quantity,path_id,value)");

  auto* exp = app.add_subcommand("export-market", "print the explicit-market form of a scenario's market");
  std::string exp_config;
  exp->add_option("config", exp_config, "scenario JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : hara::kExitSchema;
  }

  if (*exp) {
    try {
      const hara::MarketTree tree = hara::build_market(hara::load_scenario(exp_config).market);
      std::cout << hara::export_explicit_market(tree);
      return 0;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return hara::kExitSchema;
    }
  }

  hara::RunOverrides overrides;
  if (*checks_opt) overrides.checks = split_checks(checks);
  if (*seed_opt) overrides.seed = seed;
  if (*tol_foc_opt) overrides.tol_foc = tol_foc;
  if (*tol_verify_opt) overrides.tol_verify = tol_verify;

  hara::ScenarioOutcome outcome;
  try {
    outcome = hara::run_scenario(config, out_dir, overrides, plot_data);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return hara::kExitSchema;
  }
  switch (outcome.exit_code) {
    case hara::kExitOk:
      if (!quiet) std::cout << "pass: " << outcome.message << "\n";
      break;
    case hara::kExitCheckFailed:
      std::cerr << "check failed: " << outcome.message << "\n";
      break;
    case hara::kExitSchema:
      std::cerr << "invalid scenario: " << outcome.message << "\n";
      break;
    default:
      std::cerr << "solver failure: " << outcome.message << "\n";
      break;
  }
  return outcome.exit_code;
}
