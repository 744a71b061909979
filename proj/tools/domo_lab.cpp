#include "domo/experiments.hpp"
#include "domo/serialization.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailures = 1;
constexpr int kExitUsage = 2;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> jobs;
  std::string experiment;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "base seed; MDP i uses seed + i");
  cmd->add_option("--out", o.out, "output path");
}

domo::ExperimentConfig load_config(const CommonOptions& o) {
  domo::ExperimentConfig cfg = o.config.empty() ? domo::ExperimentConfig{} : domo::validate_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.output = o.out;
  if (!o.experiment.empty()) cfg.experiment = domo::experiment_from_string(o.experiment);
  cfg.validate();
  return cfg;
}

int resolve_jobs(const std::optional<int>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("DOMO_LAB_JOBS")) {
    try {
      const int jobs = std::stoi(env);
      if (jobs >= 1) return jobs;
    } catch (const std::exception&) {
    }
    throw domo::ConfigError(std::string("DOMO_LAB_JOBS must be a positive integer, got '") + env + "'");
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

int finish(const domo::ExperimentResult& result, const std::string& path) {
  domo::write_csv_atomic(path, result.rows);
  std::cout << result.summary;
  std::cout << "wrote " << result.rows.size() << " rows to " << path << "\n";
  if (result.failures > 0) {
    std::cerr << result.failures << " failure(s)\n";
    return kExitFailures;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tabular off-policy control lab: V-trace operators, DoMo-VI/AC, policy gradients"};
  app.require_subcommand(1);

  CommonOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-mdp", "generate a random MDP and write it as JSON");
  add_common(gen_cmd, gen);

  CommonOptions run;
  auto* run_cmd = app.add_subcommand("run", "run an experiment and write its CSV");
  add_common(run_cmd, run);
  run_cmd->add_option("--jobs", run.jobs, "worker threads (default: DOMO_LAB_JOBS, then all cores)")
      ->check(CLI::PositiveNumber);
  run_cmd->add_option("--experiment", run.experiment,
                      "fig_rate | fig_gradient_step | fig_bias_variance | theorem_audit | online");

  CommonOptions audit;
  bool inject_bug = false;
  auto* audit_cmd = app.add_subcommand("audit", "run the invariant battery; nonzero exit on any failure");
  add_common(audit_cmd, audit);
  audit_cmd->add_option("--jobs", audit.jobs, "worker threads (default: DOMO_LAB_JOBS, then all cores)")
      ->check(CLI::PositiveNumber);
  audit_cmd->add_flag("--inject-bug", inject_bug, "differentiate the clipped trace as 1 (negative control)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) {
      const domo::ExperimentConfig cfg = load_config(gen);
      const domo::Mdpd mdp = domo::gen_random_mdp(cfg.n_states, cfg.n_actions, cfg.alpha, cfg.gamma, cfg.seed);
      if (gen.out.empty()) {
        std::cout << domo::mdp_to_json(mdp) << "\n";
      } else {
        domo::save_mdp(mdp, gen.out);
        std::cout << "wrote " << gen.out << "\n";
      }
      return kExitOk;
    }
    if (*run_cmd) {
      const domo::ExperimentConfig cfg = load_config(run);
      return finish(domo::run_experiment(cfg, resolve_jobs(run.jobs)), cfg.output);
    }
    domo::ExperimentConfig cfg = load_config(audit);
    cfg.experiment = domo::Experiment::TheoremAudit;
    if (inject_bug) cfg.inject_clip_bug = true;
    return finish(domo::theorem_audit(cfg, resolve_jobs(audit.jobs)), cfg.output);
  } catch (const domo::ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailures;
  }
}
