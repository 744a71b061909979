#pragma once

// Invariant battery shared by the `audit` subcommand and the acceptance tests.
// Every check runs on one generated MDP and reports one case per spec it covers.

#include "domo/mdp.hpp"
#include "domo/sampling.hpp"
#include "domo/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace domo {

struct AuditCase {
  std::string check;
  std::uint64_t seed = 0;
  TraceSpec spec;
  double statistic = 0.0;  // passes when statistic <= tolerance
  double tolerance = 0.0;
  bool passed = false;
};

struct AuditSettings {
  int n_states = 20;
  int n_actions = 5;
  double alpha = 0.01;
  double gamma = 0.9;
  int iterations = 30;         // DoMo-VI and lambda-PI runs
  double behavior_epsilon = 0.1;
  int samples = 100000;        // Monte-Carlo trajectories per unbiasedness case
  int horizon = 10;            // truncation of the unbiasedness cases
  int identity_trajectories = 1000;
  ClipSubgradient clip = ClipSubgradient::Zero;
};

/// Random policy with Dirichlet(1) rows drawn from its own stream.
TabularPolicyd random_policy(int n_states, int n_actions, std::uint64_t seed, std::uint64_t index);

Mdpd audit_mdp(const AuditSettings& s, std::uint64_t seed);

/// ||R v^pi - v^pi||_inf for each spec family.
std::vector<AuditCase> audit_fixed_point(const AuditSettings& s, std::uint64_t seed);
/// Worst excess of ||R V1 - R V2||_inf over eta ||V1 - V2||_inf on random pairs.
std::vector<AuditCase> audit_contraction(const AuditSettings& s, std::uint64_t seed);
/// eta - gamma for the families whose rate is guaranteed not to exceed gamma.
std::vector<AuditCase> audit_rate_below_gamma(const AuditSettings& s, std::uint64_t seed, bool include_q_lambda);
/// c_bar = 0 gives the one-step backup, c_bar = 1e9 gives v^pi, with matching rates.
std::vector<AuditCase> audit_reductions(const AuditSettings& s, std::uint64_t seed);
/// max_j (gap_j - eta ||grad_j V^pi||_inf) for c_bar in {0, 0.5, 1, 10}.
std::vector<AuditCase> audit_gradient_bound(const AuditSettings& s, std::uint64_t seed);
/// Relative error of the analytic gradients against central differences.
std::vector<AuditCase> audit_gradient_fd(const AuditSettings& s, std::uint64_t seed);
/// Largest |z| of sampled targets and gradients against the truncated operator.
std::vector<AuditCase> audit_unbiasedness(const AuditSettings& s, std::uint64_t seed);
/// Per-trajectory gap between the uncapped gradient and its doubly-robust score form.
std::vector<AuditCase> audit_dr_identity(const AuditSettings& s, std::uint64_t seed);
/// errors_inf of DoMo-VI (exact improvement) above the convergence envelope.
std::vector<AuditCase> audit_convergence_bound(const AuditSettings& s, std::uint64_t seed);
/// errors_inf of lambda-PI above its geometric rate, lambda in {0.5, 0.9}.
std::vector<AuditCase> audit_lambda_rate(const AuditSettings& s, std::uint64_t seed);
/// Fraction of states where the ascent maximizer of Peng's operator disagrees with
/// the one-step greedy action (3 states, 2 actions).
std::vector<AuditCase> audit_peng_greedy(const AuditSettings& s, std::uint64_t seed);
/// Gap between the joint maximizer and per-state brute-force maxima (3 states, 2 actions).
std::vector<AuditCase> audit_joint_maximizer(const AuditSettings& s, std::uint64_t seed);

/// Every check above for one seed.
std::vector<AuditCase> audit_all(const AuditSettings& s, std::uint64_t seed);

}  // namespace domo
