#pragma once

// Independent reference computations used by tests and the audit. None of
// these share code paths with the analytic routines they check.

#include "domo/mdp.hpp"
#include "domo/sampling.hpp"
#include "domo/types.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace domo::oracle {

/// Central differences of f over every logit, step h. Result is
/// n_outputs x (n_states * n_actions), columns laid out like PolicyGradient.
Matrixd finite_difference(const std::function<Vectord(const SoftmaxPolicyd&)>& f, const SoftmaxPolicyd& theta,
                          double h = 1e-5);

/// Repeated application of T^pi from zero.
Vectord power_iteration_value(const Mdpd& mdp, const TabularPolicyd& pi, int sweeps);

/// (V^pi, best deterministic policy index vector) over all |A|^|X| deterministic policies.
struct Enumeration {
  Vectord best_value;
  std::vector<int> best_actions;
  std::size_t n_policies = 0;
};
Enumeration enumerate_deterministic(const Mdpd& mdp);

/// Every deterministic policy as an action vector, in lexicographic order.
std::vector<std::vector<int>> deterministic_policies(int n_states, int n_actions);

/// Series form of the contraction rate: per state, sum_{t>=1} gamma^t E[c_{0:t-2} (1 - c_{t-1})]
/// under mu, truncated at n_terms. Only meaningful for families with c <= rho.
Vectord contraction_series(const Mdpd& mdp, const TabularPolicyd& pi, const TabularPolicyd& mu,
                           const TraceSpec& spec, int n_terms);

/// argmax_pi T_lambda^pi v, solved as optimal control of the MDP with discount
/// gamma lambda and reward r + gamma (1 - lambda) P v.
TabularPolicyd lambda_greedy(const Mdpd& mdp, double lambda, const Vectord& v);

/// For each state x, max over all policies of R_{pi, mu} v (x), found by a
/// grid over the product of simplices refined by coordinate pattern search.
/// Intended for tiny models (n_actions == 2).
Vectord per_state_maxima(const Mdpd& mdp, const TabularPolicyd& mu, const TraceSpec& spec, const Vectord& v,
                         int grid = 21);

/// Monte-Carlo discounted return from x after taking a, then following pi, for
/// `episodes` episodes truncated at `horizon`. Returns (mean, standard error).
std::pair<double, double> monte_carlo_q(const Mdpd& mdp, const TabularPolicyd& pi, int x, int a, int episodes,
                                        int horizon, std::uint64_t seed);

/// Marginal state distribution after t steps from `start` under mu.
Vectord state_marginal(const Mdpd& mdp, const TabularPolicyd& mu, int start, int t);

}  // namespace domo::oracle
