#include "domo/audit.hpp"

#include "domo/algorithms.hpp"
#include "domo/gradients.hpp"
#include "domo/operators.hpp"
#include "domo/oracles.hpp"

#include <algorithm>
#include <cmath>

namespace domo {

namespace {

constexpr std::uint64_t kPolicyStream = 0x504f4c;     // "POL"
constexpr std::uint64_t kValueStream = 0x56414c;      // "VAL"
constexpr std::uint64_t kTrajectoryStream = 0x545241;  // "TRA"

constexpr double kFixedPointTol = 1e-8;
constexpr double kContractionTol = 1e-9;
constexpr double kRateTol = 1e-12;
constexpr double kBackupTol = 1e-12;
constexpr double kUncappedTol = 1e-8;
constexpr double kUncappedRateTol = 1e-10;
constexpr double kGradientBoundTol = 1e-8;
constexpr double kFdRelTol = 1e-5;
constexpr double kZTol = 4.0;
constexpr double kIdentityTol = 1e-10;
constexpr double kEnvelopeTol = 1e-6;
constexpr double kPengMismatchTol = 0.05;
constexpr double kJointTol = 1e-3;

AuditCase make_case(const std::string& check, std::uint64_t seed, const TraceSpec& spec, double statistic,
                    double tolerance) {
  return {check, seed, spec, statistic, tolerance, statistic <= tolerance};
}

Vectord random_values(int n, std::uint64_t seed, std::uint64_t index, double scale) {
  std::mt19937_64 rng(derive_seed(seed, kValueStream, index));
  std::normal_distribution<double> normal(0.0, scale);
  Vectord v(n);
  for (int i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

SoftmaxPolicyd random_logits(int n_states, int n_actions, std::uint64_t seed, std::uint64_t index) {
  std::mt19937_64 rng(derive_seed(seed, kValueStream, 1000 + index));
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrixd logits(n_states, n_actions);
  for (int x = 0; x < n_states; ++x)
    for (int a = 0; a < n_actions; ++a) logits(x, a) = normal(rng);
  return SoftmaxPolicyd(logits);
}

/// Random behavior mixed half-and-half with uniform, which keeps rho moderate.
TabularPolicyd moderate_behavior(int n_states, int n_actions, std::uint64_t seed) {
  const Matrixd uniform = Matrixd::Constant(n_states, n_actions, 1.0 / n_actions);
  return TabularPolicyd(0.5 * random_policy(n_states, n_actions, seed, 1).probs() + 0.5 * uniform);
}

std::vector<TraceSpec> operator_specs() {
  return {TraceSpec::vtrace(0.0), TraceSpec::vtrace(0.5), TraceSpec::vtrace(1.0), TraceSpec::vtrace(10.0),
          TraceSpec::tree_backup(), TraceSpec::q_lambda(0.7)};
}

double relative_error(const Matrixd& analytic, const Matrixd& reference) {
  const double scale = std::max(reference.cwiseAbs().maxCoeff(), 1e-8);
  return (analytic - reference).cwiseAbs().maxCoeff() / scale;
}

Mdpd small_mdp(const AuditSettings& s, std::uint64_t seed) { return gen_random_mdp(3, 2, s.alpha, s.gamma, seed); }

}  // namespace

TabularPolicyd random_policy(int n_states, int n_actions, std::uint64_t seed, std::uint64_t index) {
  std::mt19937_64 rng(derive_seed(seed, kPolicyStream, index));
  Matrixd probs(n_states, n_actions);
  for (int x = 0; x < n_states; ++x) probs.row(x) = sample_dirichlet(n_actions, 1.0, rng).transpose();
  return TabularPolicyd(probs);
}

Mdpd audit_mdp(const AuditSettings& s, std::uint64_t seed) {
  return gen_random_mdp(s.n_states, s.n_actions, s.alpha, s.gamma, seed);
}

std::vector<AuditCase> audit_fixed_point(const AuditSettings& s, std::uint64_t seed) {
  const Mdpd mdp = audit_mdp(s, seed);
  const TabularPolicyd pi = random_policy(s.n_states, s.n_actions, seed, 0);
  const TabularPolicyd mu = random_policy(s.n_states, s.n_actions, seed, 1);
  const Vectord v_pi = exact_value(mdp, pi);
  std::vector<AuditCase> out;
  for (const TraceSpec& spec : operator_specs()) {
    const double gap = (apply_operator(mdp, pi, mu, spec, v_pi) - v_pi).cwiseAbs().maxCoeff();
    out.push_back(make_case("fixed_point", seed, spec, gap, kFixedPointTol));
  }
  return out;
}

std::vector<AuditCase> audit_contraction(const AuditSettings& s, std::uint64_t seed) {
  const Mdpd mdp = audit_mdp(s, seed);
  const TabularPolicyd pi = random_policy(s.n_states, s.n_actions, seed, 0);
  const TabularPolicyd mu = random_policy(s.n_states, s.n_actions, seed, 1);
  std::vector<AuditCase> out;
  for (const TraceSpec& spec : operator_specs()) {
    const double eta = contraction_rate(mdp, pi, mu, spec).eta;
    double worst = -kInfinity;
    for (std::uint64_t k = 0; k < 10; ++k) {
      const Vectord v1 = random_values(s.n_states, seed, 2 * k, 10.0);
      const Vectord v2 = random_values(s.n_states, seed, 2 * k + 1, 10.0);
      const double lhs = (apply_operator(mdp, pi, mu, spec, v1) - apply_operator(mdp, pi, mu, spec, v2))
                             .cwiseAbs()
                             .maxCoeff();
      worst = std::max(worst, lhs - eta * (v1 - v2).cwiseAbs().maxCoeff());
    }
    out.push_back(make_case("contraction", seed, spec, worst, kContractionTol));
  }
  return out;
}

std::vector<AuditCase> audit_rate_below_gamma(const AuditSettings& s, std::uint64_t seed, bool include_q_lambda) {
  const Mdpd mdp = audit_mdp(s, seed);
  const TabularPolicyd pi = random_policy(s.n_states, s.n_actions, seed, 0);
  const TabularPolicyd mu = random_policy(s.n_states, s.n_actions, seed, 1);
  std::vector<AuditCase> out;
  for (const TraceSpec& spec : operator_specs()) {
    if (spec.kind == TraceKind::QLambda && !include_q_lambda) continue;
    const double eta = contraction_rate(mdp, pi, mu, spec).eta;
    out.push_back(make_case("rate_below_gamma", seed, spec, eta - s.gamma, kRateTol));
  }
  return out;
}

std::vector<AuditCase> audit_reductions(const AuditSettings& s, std::uint64_t seed) {
  const Mdpd mdp = audit_mdp(s, seed);
  const TabularPolicyd pi = random_policy(s.n_states, s.n_actions, seed, 0);
  const TabularPolicyd mu = random_policy(s.n_states, s.n_actions, seed, 1);
  const Vectord v = random_values(s.n_states, seed, 0, 10.0);
  const TraceSpec zero = TraceSpec::vtrace(0.0);
  const TraceSpec uncapped = TraceSpec::vtrace(1e9);
  std::vector<AuditCase> out;
  out.push_back(make_case("reduction_backup", seed, zero,
                          (apply_operator(mdp, pi, mu, zero, v) - bellman_backup(mdp, pi.probs(), v))
                              .cwiseAbs()
                              .maxCoeff(),
                          kBackupTol));
  out.push_back(make_case("reduction_rate_gamma", seed, zero,
                          std::abs(contraction_rate(mdp, pi, mu, zero).eta - s.gamma), 0.0));
  out.push_back(make_case("reduction_value", seed, uncapped,
                          (apply_operator(mdp, pi, mu, uncapped, v) - exact_value(mdp, pi)).cwiseAbs().maxCoeff(),
                          kUncappedTol));
  out.push_back(
      make_case("reduction_rate_zero", seed, uncapped, contraction_rate(mdp, pi, mu, uncapped).eta, kUncappedRateTol));
  return out;
}

std::vector<AuditCase> audit_gradient_bound(const AuditSettings& s, std::uint64_t seed) {
  const Mdpd mdp = audit_mdp(s, seed);
  const SoftmaxPolicyd theta = random_logits(s.n_states, s.n_actions, seed, 0);
  const TabularPolicyd mu = random_policy(s.n_states, s.n_actions, seed, 1);
  std::vector<AuditCase> out;
  for (double c : {0.0, 0.5, 1.0, 10.0}) {
    const TraceSpec spec = TraceSpec::vtrace(c);
    const auto check = gradient_bound_check(mdp, theta, mu, spec);
    out.push_back(make_case("gradient_bound", seed, spec, (check.lhs - check.rhs).maxCoeff(), kGradientBoundTol));
  }
  return out;
}

std::vector<AuditCase> audit_gradient_fd(const AuditSettings& s, std::uint64_t seed) {
  const Mdpd mdp = audit_mdp(s, seed);
  const SoftmaxPolicyd theta = random_logits(s.n_states, s.n_actions, seed, 0);
  const TabularPolicyd mu = moderate_behavior(s.n_states, s.n_actions, seed);
  const Vectord v = random_values(s.n_states, seed, 0, 10.0);
  std::vector<AuditCase> out;

  const Matrixd pg_fd = oracle::finite_difference([&](const SoftmaxPolicyd& th) { return exact_value(mdp, th.policy()); },
                                                  theta);
  out.push_back(make_case("policy_gradient_fd", seed, TraceSpec::vtrace(kInfinity),
                          relative_error(exact_policy_gradient(mdp, theta).matrix(), pg_fd), kFdRelTol));

  for (double c : {0.0, 1.0, 10.0}) {
    const TraceSpec spec = TraceSpec::vtrace(c);
    const Matrixd fd = oracle::finite_difference(
        [&](const SoftmaxPolicyd& th) { return apply_operator(mdp, th.policy(), mu, spec, v); }, theta);
    out.push_back(make_case("operator_gradient_fd", seed, spec,
                            relative_error(exact_operator_gradient(mdp, theta, mu, spec, v).matrix(), fd), kFdRelTol));
  }

  const TrajectorySampler sampler(mdp, mu);
  for (double c : {0.0, 1.0, 10.0}) {
    const TraceSpec spec = TraceSpec::vtrace(c);
    double worst = 0.0;
    for (std::uint64_t k = 0; k < 20; ++k) {
      std::mt19937_64 rng(derive_seed(seed, kTrajectoryStream, k));
      const Trajectory traj = sampler.sample(static_cast<int>(k % s.n_states), s.horizon, rng);
      const Matrixd fd = oracle::finite_difference(
          [&](const SoftmaxPolicyd& th) {
            Vectord out1(1);
            out1(0) = stochastic_target(traj, th.policy(), mu, spec, v, mdp.gamma());
            return out1;
          },
          theta);
      const Matrixd analytic = stochastic_gradient(traj, theta, mu, spec, v, mdp.gamma(), s.clip);
      const Matrixd flat = Eigen::Map<const Matrixd>(fd.data(), 1, fd.size());
      Matrixd analytic_flat(1, analytic.size());
      for (int x = 0; x < analytic.rows(); ++x)
        for (int a = 0; a < analytic.cols(); ++a) analytic_flat(0, x * analytic.cols() + a) = analytic(x, a);
      worst = std::max(worst, relative_error(analytic_flat, flat));
    }
    out.push_back(make_case("stochastic_gradient_fd", seed, spec, worst, kFdRelTol));
  }
  return out;
}

std::vector<AuditCase> audit_unbiasedness(const AuditSettings& s, std::uint64_t seed) {
  const Mdpd mdp = audit_mdp(s, seed);
  const SoftmaxPolicyd theta = random_logits(s.n_states, s.n_actions, seed, 0);
  const TabularPolicyd pi = theta.policy();
  const TabularPolicyd mu = moderate_behavior(s.n_states, s.n_actions, seed);
  const Vectord v = random_values(s.n_states, seed, 0, 1.0);
  const std::vector<double> grid = {0.0, 1.0, 10.0};
  const int start = 0;
  const int S = s.n_states;
  const int A = s.n_actions;

  std::vector<double> t_sum(grid.size(), 0.0), t_sq(grid.size(), 0.0);
  std::vector<Matrixd> g_sum(grid.size(), Matrixd::Zero(S, A)), g_sq(grid.size(), Matrixd::Zero(S, A));
  const TrajectorySampler sampler(mdp, mu);
  for (int n = 0; n < s.samples; ++n) {
    std::mt19937_64 rng(derive_seed(seed, kTrajectoryStream, static_cast<std::uint64_t>(n)));
    const Trajectory traj = sampler.sample(start, s.horizon, rng);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const TraceSpec spec = TraceSpec::vtrace(grid[k]);
      const double t = stochastic_target(traj, pi, mu, spec, v, mdp.gamma());
      t_sum[k] += t;
      t_sq[k] += t * t;
      const Matrixd g = stochastic_gradient(traj, theta, mu, spec, v, mdp.gamma(), s.clip);
      g_sum[k] += g;
      g_sq[k] += g.cwiseProduct(g);
    }
  }
  const double n = s.samples;
  auto z_score = [n](double sum, double sq, double exact) {
    const double mean = sum / n;
    const double var = std::max(0.0, (sq - n * mean * mean) / (n - 1.0));
    const double se = std::sqrt(var / n);
    const double diff = std::abs(mean - exact);
    if (se < 1e-12) return diff < 1e-9 ? 0.0 : kInfinity;
    return diff / se;
  };
  std::vector<AuditCase> out;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const TraceSpec spec = TraceSpec::vtrace(grid[k]);
    const double exact_target = apply_truncated(mdp, pi, mu, spec, v, s.horizon)(start);
    out.push_back(make_case("unbiased_target", seed, spec, z_score(t_sum[k], t_sq[k], exact_target), kZTol));
    const Matrixd exact_grad = truncated_operator_gradient(mdp, theta, mu, spec, v, s.horizon).at_state(start);
    double worst = 0.0;
    for (int x = 0; x < S; ++x)
      for (int a = 0; a < A; ++a) worst = std::max(worst, z_score(g_sum[k](x, a), g_sq[k](x, a), exact_grad(x, a)));
    out.push_back(make_case("unbiased_gradient", seed, spec, worst, kZTol));
  }
  return out;
}

std::vector<AuditCase> audit_dr_identity(const AuditSettings& s, std::uint64_t seed) {
  const Mdpd mdp = audit_mdp(s, seed);
  const SoftmaxPolicyd theta = random_logits(s.n_states, s.n_actions, seed, 0);
  const TabularPolicyd mu = moderate_behavior(s.n_states, s.n_actions, seed);
  const Vectord v = random_values(s.n_states, seed, 0, 1.0);
  const TraceSpec spec = TraceSpec::vtrace(kInfinity);
  const TrajectorySampler sampler(mdp, mu);
  double worst = 0.0;
  for (int k = 0; k < s.identity_trajectories; ++k) {
    std::mt19937_64 rng(derive_seed(seed, kTrajectoryStream, static_cast<std::uint64_t>(k)));
    const Trajectory traj = sampler.sample(k % s.n_states, s.horizon, rng);
    const Matrixd lhs = stochastic_gradient(traj, theta, mu, spec, v, mdp.gamma());
    const Matrixd rhs = dr_score_gradient(traj, theta, mu, v, mdp.gamma());
    worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff());
  }
  return {make_case("dr_identity", seed, spec, worst, kIdentityTol)};
}

std::vector<AuditCase> audit_convergence_bound(const AuditSettings& s, std::uint64_t seed) {
  const Mdpd mdp = audit_mdp(s, seed);
  std::vector<AuditCase> out;
  for (double c : {0.0, 0.5, 1.0, 10.0}) {
    const TraceSpec spec = TraceSpec::vtrace(c);
    const IterationTrace t = run_domo_vi(mdp, Behavior::mixed_previous(s.behavior_epsilon), spec, s.iterations,
                                         InnerAscentConfig::exact());
    const auto env = convergence_envelope(t, mdp.reward_bound(), mdp.gamma());
    double worst = -kInfinity;
    for (std::size_t i = 0; i < env.size(); ++i) worst = std::max(worst, t.errors_inf[i] - env[i]);
    out.push_back(make_case("convergence_bound", seed, spec, worst, kEnvelopeTol));
  }
  return out;
}

std::vector<AuditCase> audit_lambda_rate(const AuditSettings& s, std::uint64_t seed) {
  const Mdpd mdp = audit_mdp(s, seed);
  const double g = mdp.gamma();
  const double scale = 4.0 * mdp.reward_bound() / ((1.0 - g) * (1.0 - g));
  std::vector<AuditCase> out;
  for (double lambda : {0.5, 0.9}) {
    const IterationTrace t = run_lambda_pi(mdp, lambda, s.iterations, InnerAscentConfig::exact());
    const double rate = g * (1.0 - lambda) / (1.0 - g * lambda);
    double worst = -kInfinity;
    for (int i = 0; i < t.iterations(); ++i)
      worst = std::max(worst, t.errors_inf[static_cast<std::size_t>(i)] - std::pow(rate, i) * scale);
    out.push_back(make_case("lambda_rate", seed, TraceSpec::td_lambda(lambda), worst, kEnvelopeTol));
  }
  return out;
}

std::vector<AuditCase> audit_peng_greedy(const AuditSettings& s, std::uint64_t seed) {
  const Mdpd mdp = small_mdp(s, seed);
  const TabularPolicyd mu = random_policy(3, 2, seed, 1);
  const Vectord v = random_values(3, seed, 0, 1.0);
  const TabularPolicyd greedy = greedy_policy(mdp, v);
  InnerAscentConfig cfg = InnerAscentConfig::converge();
  cfg.init_mode = InitMode::Uniform;
  std::vector<AuditCase> out;
  for (double lambda : {0.5, 0.9}) {
    const TraceSpec spec = TraceSpec::peng_lambda(lambda);
    const auto res = inner_maximize(mdp, mu, spec, v, SoftmaxPolicyd::uniform(3, 2), cfg);
    const TabularPolicyd found = res.theta.policy();
    int mismatched = 0;
    for (int x = 0; x < 3; ++x)
      if (found.mode(x) != greedy.mode(x)) ++mismatched;
    out.push_back(make_case("peng_greedy", seed, spec, mismatched / 3.0, kPengMismatchTol));
  }
  return out;
}

std::vector<AuditCase> audit_joint_maximizer(const AuditSettings& s, std::uint64_t seed) {
  const Mdpd mdp = small_mdp(s, seed);
  const TabularPolicyd mu = random_policy(3, 2, seed, 1);
  const Vectord v = random_values(3, seed, 0, 1.0);
  std::vector<AuditCase> out;
  for (double c : {0.5, 1.0, 10.0}) {
    const TraceSpec spec = TraceSpec::vtrace(c);
    const Vectord joint = exact_improvement(mdp, mu, spec, v).value;
    const Vectord separate = oracle::per_state_maxima(mdp, mu, spec, v);
    out.push_back(make_case("joint_maximizer", seed, spec, (joint - separate).cwiseAbs().maxCoeff(), kJointTol));
  }
  return out;
}

std::vector<AuditCase> audit_all(const AuditSettings& s, std::uint64_t seed) {
  std::vector<AuditCase> out;
  auto append = [&out](std::vector<AuditCase> cases) {
    out.insert(out.end(), std::make_move_iterator(cases.begin()), std::make_move_iterator(cases.end()));
  };
  append(audit_fixed_point(s, seed));
  append(audit_contraction(s, seed));
  append(audit_rate_below_gamma(s, seed, false));
  append(audit_reductions(s, seed));
  append(audit_gradient_bound(s, seed));
  append(audit_gradient_fd(s, seed));
  append(audit_unbiasedness(s, seed));
  append(audit_dr_identity(s, seed));
  append(audit_convergence_bound(s, seed));
  append(audit_lambda_rate(s, seed));
  append(audit_peng_greedy(s, seed));
  append(audit_joint_maximizer(s, seed));
  return out;
}

}  // namespace domo
