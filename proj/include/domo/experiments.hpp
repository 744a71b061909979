#pragma once

#include "domo/algorithms.hpp"
#include "domo/mdp.hpp"
#include "domo/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace domo {

enum class Experiment { FigRate, FigGradientStep, FigBiasVariance, TheoremAudit, Online };

std::string to_string(Experiment e);
Experiment experiment_from_string(const std::string& name);

enum class BehaviorMode { Uniform, MixedPrevious };

/// Config file problem; `what()` carries "source:line: message".
class ConfigError : public ParameterError {
 public:
  using ParameterError::ParameterError;
};

struct ExperimentConfig {
  Experiment experiment = Experiment::FigRate;

  // random MDP protocol
  int n_states = 20;
  int n_actions = 5;
  double alpha = 0.01;
  double gamma = 0.9;
  int n_mdps = 100;
  std::uint64_t seed = 0;

  // control recursions
  int iterations = 30;
  double c_bar = 10.0;
  BehaviorMode behavior = BehaviorMode::MixedPrevious;
  double behavior_epsilon = 0.1;
  AscentMode improvement = AscentMode::Converge;
  double learning_rate = 1.0;
  double ascent_tol = 1e-10;
  int ascent_max_steps = 10000;
  std::vector<int> gradient_steps = {1, 10, 100};

  // bias-variance sweep; logits theta ~ N(0, theta_scale^2)
  double theta_scale = 0.5;
  std::vector<double> c_bar_grid = {0.0, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0};
  int n_traj = 10;
  int n_rep = 100;
  int horizon = 100;

  // online actor-critic
  OnlineAcConfig online;
  int record_every = 10;

  // theorem audit
  int audit_mdps = 10;
  int audit_samples = 100000;
  int audit_horizon = 10;
  bool inject_clip_bug = false;

  std::string output = "results.csv";

  /// Throws ConfigError naming the offending key.
  void validate() const;
};

/// `key = value` lines; `#` starts a comment; lists are comma-separated.
/// Unknown keys and malformed values are rejected with "source:line:" messages.
ExperimentConfig parse_config(std::istream& in, const std::string& source = "<config>");
ExperimentConfig validate_config(const std::string& path);

/// Tidy long-format result row. `note` is empty unless `value` is not finite.
struct ResultRow {
  std::string experiment;
  std::uint64_t seed = 0;
  std::string algorithm;
  std::string trace_kind;
  double trace_param = 0.0;
  int iteration = 0;
  std::string metric;
  double value = 0.0;
  std::string note;
};

inline constexpr const char* kCsvVersionLine = "# domo-lab results v1";
inline constexpr const char* kCsvHeader = "experiment,seed,algorithm,trace_kind,trace_param,iteration,metric,value,note";

/// Shortest decimal text that parses back to the same double; "nan", "inf", "-inf" otherwise.
std::string format_double(double v);

void write_csv(std::ostream& out, const std::vector<ResultRow>& rows);
/// Writes to a sibling temporary file, then renames it over `path`.
void write_csv_atomic(const std::string& path, const std::vector<ResultRow>& rows);

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::string summary;
  int failures = 0;  // runs that threw, or audit checks that failed
};

/// Seeds are base seed + i for i < n_mdps; work for different seeds runs on up
/// to `jobs` threads and is merged in seed order, so rows never depend on `jobs`.
ExperimentResult run_experiment(const ExperimentConfig& cfg, int jobs = 1);

/// Runs the invariant battery on audit_mdps seeds; one row per (check, spec, metric).
ExperimentResult theorem_audit(const ExperimentConfig& cfg, int jobs = 1);

/// Mean and standard error per (algorithm, trace_kind, trace_param, iteration, metric).
std::string summarize(const std::vector<ResultRow>& rows);

/// Deterministic two-state chain: action 0 stays, action 1 switches; only
/// staying in state 1 pays reward 1.
Mdpd two_state_chain(double gamma);

}  // namespace domo
