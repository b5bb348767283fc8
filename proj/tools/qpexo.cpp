// qpexo: synthetic data, training, utility tables, replay and evaluation.

#include "qpexo/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace {

enum ExitCode { kOk = 0, kValidation = 1, kFault = 2 };

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> controller;
  std::optional<std::string> trace;
  std::optional<std::string> label;
  std::optional<std::string> method;
  std::optional<unsigned> workers;
};

qpexo::RunConfig effective_config(const Overrides& o) {
  qpexo::RunConfig cfg = o.config.empty() ? qpexo::parse_run_config("") : qpexo::load_run_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.out = *o.out;
  if (o.controller) cfg.controller.kind = qpexo::controller_from_string(*o.controller);
  if (o.trace) cfg.trace = *o.trace;
  if (o.label) cfg.trace_label = *o.label;
  if (o.method) cfg.utility_method = *o.method;
  if (o.workers) cfg.workers = *o.workers;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Intent-driven control of a quasi-passive hip exoskeleton"};
  app.require_subcommand(1);
  Overrides o;
  app.add_option("--config", o.config, "TOML run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "seed for synthetic generation");
  app.add_option("--out", o.out, "output directory");

  auto* gen = app.add_subcommand("gen-synthetic", "write labeled synthetic traces and human references");
  auto* train = app.add_subcommand("train", "learn the motion model database");
  auto* ub = app.add_subcommand("utility-build", "build the utility database");
  ub->add_option("--method", o.method, "closed-form or value-iteration");
  auto* sim = app.add_subcommand("simulate", "replay trials through one controller");
  sim->add_option("--controller", o.controller, "umc, eumc or pec");
  sim->add_option("--trace", o.trace, "replay this trace instead of the manifest trials");
  sim->add_option("--label", o.label, "truth label of --trace");
  auto* ev = app.add_subcommand("evaluate", "replay all trials with every configured controller");
  ev->add_option("--workers", o.workers, "worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kValidation;
  }

  try {
    const auto cfg = effective_config(o);
    if (gen->parsed()) {
      const auto m = qpexo::cmd_gen_synthetic(cfg);
      std::cout << "wrote " << m.demos.size() << " demos, " << m.trials.size() << " trials, " << m.references.size()
                << " references to " << cfg.data_path().string() << "\n";
    } else if (train->parsed()) {
      const auto db = qpexo::cmd_train(cfg);
      std::cout << "trained " << db.models.size() << " models -> " << cfg.model_db_path().string() << "\n";
    } else if (ub->parsed()) {
      const auto r = qpexo::cmd_utility_build(cfg);
      std::cout << "utility table (" << r.table.method << ") -> " << cfg.utility_db_path().string()
                << "; max |closed-form - value-iteration| = " << r.max_method_deviation << "\n";
    } else if (sim->parsed()) {
      const auto report = qpexo::cmd_simulate(cfg);
      std::cout << "replayed " << report["trials"].size() << " trials with " << report["controller"].get<std::string>() << "\n";
    } else if (ev->parsed()) {
      const auto report = qpexo::cmd_evaluate(cfg);
      std::cout << report["summary"].dump(2) << "\n";
    }
  } catch (const qpexo::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const qpexo::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "fault: " << e.what() << "\n";
    return kFault;
  }
  return kOk;
}
