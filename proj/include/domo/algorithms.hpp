#pragma once

#include "domo/mdp.hpp"
#include "domo/sampling.hpp"
#include "domo/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace domo {

/// Per-iteration record of a control recursion. Errors are measured on the
/// exact value of each iterate's policy, V^{pi_i}, never on the recursion's V_i.
struct IterationTrace {
  std::string algorithm;
  TraceSpec spec;
  std::vector<double> errors_l2;
  std::vector<double> errors_inf;
  std::optional<double> eta_star;
  std::vector<double> eta_seq;
  std::optional<int> diverged_at;
  std::string config;

  int iterations() const { return static_cast<int>(errors_l2.size()); }
};

enum class InitMode { GreedyLog, WarmStart, Uniform };

/// Fixed: exactly n_steps steps of size learning_rate.
/// Converge: step size adapts (doubling on improvement, halving on failure)
/// until the gradient infinity-norm drops below tol or max_steps is reached.
/// Exact: no ascent; the improvement step uses exact_improvement.
enum class AscentMode { Fixed, Converge, Exact };

struct InnerAscentConfig {
  AscentMode mode = AscentMode::Converge;
  int n_steps = 1;
  double learning_rate = 1.0;
  double tol = 1e-10;
  int max_steps = 10000;
  InitMode init_mode = InitMode::GreedyLog;
  double greedy_log_eps = 1e-5;

  static InnerAscentConfig fixed(int n_steps, double learning_rate = 1.0) {
    InnerAscentConfig c;
    c.mode = AscentMode::Fixed;
    c.n_steps = n_steps;
    c.learning_rate = learning_rate;
    return c;
  }
  static InnerAscentConfig converge() { return InnerAscentConfig{}; }
  static InnerAscentConfig exact() {
    InnerAscentConfig c;
    c.mode = AscentMode::Exact;
    return c;
  }

  void validate() const;
};

/// Which behavior policy a recursion uses at iteration i.
struct Behavior {
  enum class Mode { Fixed, MixedPrevious };
  Mode mode = Mode::Fixed;
  std::optional<TabularPolicyd> fixed;
  double epsilon = 0.1;

  Behavior(TabularPolicyd mu) : fixed(std::move(mu)) {}  // NOLINT(google-explicit-constructor)
  static Behavior mixed_previous(double epsilon) {
    Behavior b;
    b.mode = Mode::MixedPrevious;
    b.epsilon = epsilon;
    return b;
  }

  /// mu_i given the previous iterate's policy (uniform before the first improvement).
  TabularPolicyd at(const TabularPolicyd& previous) const;
  std::string describe() const;

 private:
  Behavior() = default;
};

struct InnerAscentResult {
  SoftmaxPolicyd theta;
  int steps = 0;
  double objective = 0.0;
  double grad_inf = 0.0;
};

/// Gradient ascent on L(theta) = mean_x R_{pi_theta, mu} v (x). Rejects AscentMode::Exact.
InnerAscentResult inner_maximize(const Mdpd& mdp, const TabularPolicyd& mu, const TraceSpec& spec, const Vectord& v,
                                 const SoftmaxPolicyd& init_theta, const InnerAscentConfig& cfg);

struct ExactImprovement {
  TabularPolicyd policy;
  Vectord value;  // R_{policy, mu} v
  int sweeps = 0;
};

/// Global maximizer of pi -> R_{pi, mu} v, simultaneously at every state.
/// For a fixed u the per-state objective sum_a pi_a q(x, a) + gamma w(x, a; pi_a) (P (u - v))(x, a)
/// is separable and piecewise linear in pi(.|x), so its maximum sits on a finite
/// vertex set; iterating that per-state maximization is a gamma-contraction whose
/// fixed point is the joint maximum. Peng's family reduces to the one-step greedy policy.
ExactImprovement exact_improvement(const Mdpd& mdp, const TabularPolicyd& mu, const TraceSpec& spec, const Vectord& v,
                                   double tol = 1e-13);

/// Reference optimum for error curves.
struct Reference {
  Vectord v_star;
  TabularPolicyd pi_star;
};
Reference reference_optimum(const Mdpd& mdp);

IterationTrace run_vi(const Mdpd& mdp, int iters);
IterationTrace run_multistep_pe(const Mdpd& mdp, const Behavior& mu, const TraceSpec& spec, int iters);
IterationTrace run_multistep_pi(const Mdpd& mdp, const Behavior& mu, const TraceSpec& spec, int iters,
                                const InnerAscentConfig& cfg);
IterationTrace run_domo_vi(const Mdpd& mdp, const Behavior& mu, const TraceSpec& spec, int iters,
                           const InnerAscentConfig& cfg);
/// DoMo-AC with exact gradients: greedy-log initialization, cfg.n_steps fixed-size ascent steps.
IterationTrace run_domo_ac_tabular(const Mdpd& mdp, const Behavior& mu, const TraceSpec& spec, int iters,
                                   const InnerAscentConfig& cfg);
/// lambda-policy iteration: improvement against the on-policy TD(lambda) operator, exact evaluation.
IterationTrace run_lambda_pi(const Mdpd& mdp, double lambda, int iters, const InnerAscentConfig& cfg);

struct OnlineAcConfig {
  double actor_lr = 0.5;
  double critic_lr = 0.25;
  double polyak_tau = 0.1;
  int segment_length = 10;
  int total_iterations = 2000;

  void validate() const;
};

/// Sample-based DoMo-AC with tabular actor and critic and a Polyak target
/// critic. Behavior is the current policy snapshot, refreshed every iteration.
IterationTrace run_domo_ac_online(const Mdpd& mdp, const TraceSpec& spec, const OnlineAcConfig& cfg,
                                  std::uint64_t seed);

/// Convergence envelope max{(eta*)^i, prod_{j<=i} eta_j} * 4 R_bar / (1 - gamma)^2,
/// indexed like IterationTrace::errors_inf.
std::vector<double> convergence_envelope(const IterationTrace& trace, double reward_bound, double gamma);

}  // namespace domo
