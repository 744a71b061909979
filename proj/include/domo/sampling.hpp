#pragma once

#include "domo/mdp.hpp"
#include "domo/types.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace domo {

struct Step {
  int state;
  int action;
  double reward;
  int next_state;
};

/// Consecutive transitions X_0, A_0, R_0, X_1, ... sampled under a behavior policy.
struct Trajectory {
  std::vector<Step> steps;

  int length() const { return static_cast<int>(steps.size()); }
  int start_state() const { return steps.front().state; }
  int final_state() const { return steps.back().next_state; }
};

/// Draws trajectories from one (mdp, behavior) pair using precomputed
/// cumulative tables. Owns no RNG; callers pass a seeded engine.
class TrajectorySampler {
 public:
  TrajectorySampler(const Mdpd& mdp, const TabularPolicyd& mu);

  Trajectory sample(int start_state, int horizon, std::mt19937_64& rng) const;
  int sample_action(int x, std::mt19937_64& rng) const;
  int sample_next(int x, int a, std::mt19937_64& rng) const;

 private:
  const Mdpd& mdp_;
  Matrixd action_cdf_;      // n_states x n_actions
  Matrixd transition_cdf_;  // (n_states * n_actions) x n_states
};

/// Rolls the chain for `horizon` steps (capped by mdp.horizon_cap()).
Trajectory sample_trajectory(const Mdpd& mdp, const TabularPolicyd& mu, int start_state, int horizon,
                             std::uint64_t seed);

/// How the clipped branch of min(c_bar, rho) is differentiated. `One` is a
/// deliberately wrong rule kept as a negative control for the audit.
enum class ClipSubgradient { Zero, One };

/// V(X_0) + sum_t gamma^t c_{0:t-1} rho_t delta_t over the trajectory.
double stochastic_target(const Trajectory& traj, const TabularPolicyd& pi, const TabularPolicyd& mu,
                         const TraceSpec& spec, const Vectord& v, double gamma);

/// Logit gradient (n_states x n_actions) of stochastic_target on a fixed trajectory.
Matrixd stochastic_gradient(const Trajectory& traj, const SoftmaxPolicyd& theta, const TabularPolicyd& mu,
                            const TraceSpec& spec, const Vectord& v, double gamma,
                            ClipSubgradient clip = ClipSubgradient::Zero);

/// Doubly-robust estimates V_hat(X_t) for t = 0..length, with V_hat(X_length) = v(X_length).
Vectord doubly_robust_values(const Trajectory& traj, const TabularPolicyd& pi, const TabularPolicyd& mu,
                             const Vectord& v, double gamma);

/// sum_t gamma^t rho_{0:t} A_hat_t grad log pi(A_t|X_t) with the doubly-robust advantage
/// A_hat_t = R_t + gamma V_hat(X_{t+1}) - V(X_t).
Matrixd dr_score_gradient(const Trajectory& traj, const SoftmaxPolicyd& theta, const TabularPolicyd& mu,
                          const Vectord& v, double gamma);

/// Bootstrap used inside the trace term of the backward target recursion.
enum class TargetBootstrap {
  NextState,     // gamma c_t (V_target(X_{t+1}) - v(X_{t+1}))
  CurrentState,  // gamma c_t (V_target(X_{t+1}) - v(X_t)), kept for comparison
};

/// Backward V-trace targets for t = 0..length with V_target(X_length) = v(X_length).
/// The TD term uses min(rho_bar, rho) when spec.rho_bar is set.
Vectord recursive_targets(const Trajectory& traj, const TabularPolicyd& pi, const TabularPolicyd& mu,
                          const TraceSpec& spec, const Vectord& v, double gamma,
                          TargetBootstrap bootstrap = TargetBootstrap::NextState);

struct EstimatorStats {
  double c_bar = 0.0;
  double bias_sq = 0.0;
  double variance = 0.0;
  double mse = 0.0;
  int n_trajectories = 0;
  int n_repetitions = 0;
};

struct BiasVarianceSetup {
  std::vector<double> c_bar_grid;
  int n_traj = 10;
  int n_rep = 20;
  int horizon = 100;
};

/// Bias, variance and squared error of the averaged stochastic gradient of the
/// state-averaged objective (start states uniform) against the exact policy
/// gradient. All grid points share the same sampled trajectories.
std::vector<EstimatorStats> bias_variance_sweep(const Mdpd& mdp, const SoftmaxPolicyd& theta,
                                                const TabularPolicyd& mu, const Vectord& v,
                                                const BiasVarianceSetup& setup, std::uint64_t seed);

}  // namespace domo
