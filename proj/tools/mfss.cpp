// SPDX-License-Identifier: Apache-2.0
// Command-line driver for the staged MFSS workflow.
#include <CLI11.hpp>

#include <iostream>

#include "mfss/config.hpp"
#include "mfss/error.hpp"
#include "mfss/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Multi-fidelity stratified sampling for rare-event probabilities"};
  app.require_subcommand(1);

  std::string config_path;
  std::size_t workers = 0;
  std::string output_dir;
  bool force = false;
  std::size_t n = 0;

  auto common = [&](CLI::App* c) {
    c->add_option("-c,--config", config_path, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
    c->add_option("-w,--workers", workers, "worker threads (overrides the config)");
    c->add_option("-o,--output-dir", output_dir, "artifact directory (overrides the config)");
    c->add_flag("--force", force, "accept upstream artifacts produced under a different config hash");
  };
  auto* phase1 = app.add_subcommand("phase1", "Phase-I SV sampling and stratification");
  auto* train = app.add_subcommand("train", "adaptive surrogate training");
  auto* estimate = app.add_subcommand("estimate", "allocation and MFSS estimation");
  auto* gss = app.add_subcommand("baseline-gss", "HF-only stratified baseline");
  auto* oracle = app.add_subcommand("oracle-mc", "brute-force HF Monte Carlo reference");
  auto* report = app.add_subcommand("report", "side-by-side table of MFSS, GSS and oracle results");
  auto* all = app.add_subcommand("run", "phase1, train, estimate and report in sequence");
  for (auto* c : {phase1, train, estimate, gss, oracle, report, all}) common(c);
  gss->add_option("-n,--n-per-stratum", n, "HF samples per stratum (default from config)");
  oracle->add_option("-n,--samples", n, "number of HF samples (default from config)");

  CLI11_PARSE(app, argc, argv);

  try {
    mfss::RunConfig cfg = mfss::load_config(config_path);
    if (workers) cfg.workers = workers;
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    mfss::StageOptions opt;
    opt.force = force;

    if (*phase1) std::cout << mfss::run_phase1(cfg, opt);
    if (*train) std::cout << mfss::run_train(cfg, opt);
    if (*estimate) std::cout << mfss::run_estimate(cfg, opt);
    if (*gss) std::cout << mfss::run_baseline_gss(cfg, n ? n : cfg.baseline_n_per_stratum, opt);
    if (*oracle) std::cout << mfss::run_oracle(cfg, n ? n : cfg.oracle_n, opt);
    if (*report) std::cout << mfss::run_report(cfg, opt);
    if (*all) {
      std::cout << mfss::run_phase1(cfg, opt);
      std::cout << mfss::run_train(cfg, opt);
      std::cout << mfss::run_estimate(cfg, opt);
      std::cout << mfss::run_report(cfg, opt);
    }
  } catch (const mfss::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return mfss::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
