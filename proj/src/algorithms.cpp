#include "domo/algorithms.hpp"

#include "domo/gradients.hpp"
#include "domo/operators.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <sstream>

namespace domo {

void InnerAscentConfig::validate() const {
  if (mode == AscentMode::Fixed && n_steps < 1) throw ParameterError("n_steps must be >= 1");
  if (mode == AscentMode::Converge && !(tol > 0.0)) throw ParameterError("tol must be > 0");
  if (max_steps < 1) throw ParameterError("max_steps must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ParameterError("learning_rate must be >= 0");
  if (!(greedy_log_eps > 0.0)) throw ParameterError("greedy_log_eps must be > 0");
}

TabularPolicyd Behavior::at(const TabularPolicyd& previous) const {
  if (mode == Mode::Fixed) return *fixed;
  const Matrixd uniform = Matrixd::Constant(previous.n_states(), previous.n_actions(), 1.0 / previous.n_actions());
  return TabularPolicyd((1.0 - epsilon) * previous.probs() + epsilon * uniform);
}

std::string Behavior::describe() const {
  if (mode == Mode::MixedPrevious) {
    std::ostringstream os;
    os << "previous_mixed(eps=" << epsilon << ")";
    return os.str();
  }
  const Matrixd& p = fixed->probs();
  if (((p.array() - 1.0 / p.cols()).abs() < 1e-15).all()) return "uniform";
  return "fixed";
}

namespace {

double inf_norm(const Matrixd& m) { return m.cwiseAbs().maxCoeff(); }

SoftmaxPolicyd initial_logits(const Mdpd& mdp, const Vectord& v, const SoftmaxPolicyd& warm,
                              const InnerAscentConfig& cfg) {
  switch (cfg.init_mode) {
    case InitMode::GreedyLog:
      return SoftmaxPolicyd::log_of(greedy_policy(mdp, v), cfg.greedy_log_eps);
    case InitMode::WarmStart:
      return warm;
    case InitMode::Uniform:
      break;
  }
  return SoftmaxPolicyd::uniform(mdp.n_states(), mdp.n_actions());
}

}  // namespace

InnerAscentResult inner_maximize(const Mdpd& mdp, const TabularPolicyd& mu, const TraceSpec& spec, const Vectord& v,
                                 const SoftmaxPolicyd& init_theta, const InnerAscentConfig& cfg) {
  cfg.validate();
  if (cfg.mode == AscentMode::Exact) throw ParameterError("exact mode has no ascent; use exact_improvement");
  const Vectord weights = Vectord::Constant(mdp.n_states(), 1.0 / mdp.n_states());
  SoftmaxPolicyd theta = initial_logits(mdp, v, init_theta, cfg);
  auto evaluate = [&](const SoftmaxPolicyd& th, int step) {
    auto og = operator_objective_gradient(mdp, th, mu, spec, v, weights);
    if (!std::isfinite(og.objective) || !og.gradient.allFinite())
      throw NumericError("inner ascent: non-finite objective at step " + std::to_string(step));
    return og;
  };

  InnerAscentResult result{theta, 0, 0.0, 0.0};
  auto og = evaluate(theta, 0);
  if (cfg.mode == AscentMode::Fixed) {
    for (int step = 1; step <= cfg.n_steps; ++step) {
      theta.logits() += cfg.learning_rate * og.gradient;
      og = evaluate(theta, step);
    }
    result.steps = cfg.n_steps;
  } else {
    double step_size = cfg.learning_rate > 0.0 ? cfg.learning_rate : 1.0;
    int step = 0;
    while (step < cfg.max_steps && inf_norm(og.gradient) >= cfg.tol) {
      ++step;
      SoftmaxPolicyd candidate(theta.logits() + step_size * og.gradient);
      auto oc = evaluate(candidate, step);
      if (oc.objective >= og.objective) {
        theta = std::move(candidate);
        og = std::move(oc);
        step_size = std::min(step_size * 2.0, 1e12);
      } else {
        step_size *= 0.5;
        if (step_size < 1e-14) break;
      }
    }
    result.steps = step;
  }
  result.theta = std::move(theta);
  result.objective = og.objective;
  result.grad_inf = inf_norm(og.gradient);
  return result;
}

namespace {

double trace_weight(const TraceSpec& spec, double pi_a, double mu_a) {
  switch (spec.kind) {
    case TraceKind::VTrace: return std::min(spec.c_bar() * mu_a, pi_a);
    case TraceKind::TreeBackup: return mu_a * pi_a;
    case TraceKind::QLambda: return spec.lambda() * mu_a;
    case TraceKind::TdLambda: return spec.lambda() * pi_a;
    case TraceKind::PengLambda: break;
  }
  throw DomainError("Peng's Q(lambda) has no trace weight");
}

/// Vertices of the simplex cut by the per-action breakpoints of the weight.
std::vector<Vectord> candidate_rows(const TraceSpec& spec, const Eigen::RowVectorXd& mu) {
  const int A = static_cast<int>(mu.size());
  std::vector<std::vector<double>> levels(static_cast<std::size_t>(A));
  for (int a = 0; a < A; ++a) {
    levels[static_cast<std::size_t>(a)].push_back(0.0);
    if (spec.kind == TraceKind::VTrace) {
      const double b = spec.c_bar() * mu(a);
      if (b > 0.0 && b < 1.0) levels[static_cast<std::size_t>(a)].push_back(b);
    }
  }
  std::vector<Vectord> out;
  for (int free = 0; free < A; ++free) {
    std::vector<std::size_t> pick(static_cast<std::size_t>(A), 0);
    for (;;) {
      Vectord p = Vectord::Zero(A);
      double used = 0.0;
      for (int a = 0; a < A; ++a)
        if (a != free) {
          p(a) = levels[static_cast<std::size_t>(a)][pick[static_cast<std::size_t>(a)]];
          used += p(a);
        }
      if (used <= 1.0) {
        p(free) = 1.0 - used;
        out.push_back(p);
      }
      int a = A - 1;
      for (; a >= 0; --a) {
        if (a == free) continue;
        if (++pick[static_cast<std::size_t>(a)] < levels[static_cast<std::size_t>(a)].size()) break;
        pick[static_cast<std::size_t>(a)] = 0;
      }
      if (a < 0) break;
    }
  }
  return out;
}

}  // namespace

ExactImprovement exact_improvement(const Mdpd& mdp, const TabularPolicyd& mu, const TraceSpec& spec, const Vectord& v,
                                   double tol) {
  spec.validate();
  if (!(tol > 0.0)) throw ParameterError("tol must be > 0");
  if (spec.kind != TraceKind::TdLambda) require_full_support(mu);
  const int S = mdp.n_states();
  const int A = mdp.n_actions();
  const double g = mdp.gamma();
  const Matrixd q = backup_q(mdp, v);
  if (spec.kind == TraceKind::PengLambda) {
    TabularPolicyd greedy = greedy_policy(mdp, v);
    Vectord value = apply_operator(mdp, greedy, mu, spec, v);
    return {std::move(greedy), std::move(value), 1};
  }
  std::vector<std::vector<Vectord>> candidates;
  for (int x = 0; x < S; ++x) candidates.push_back(candidate_rows(spec, mu.probs().row(x)));

  Matrixd best_rows = Matrixd::Zero(S, A);
  Vectord u = v;
  int sweeps = 0;
  for (; sweeps < 100000; ++sweeps) {
    const Matrixd d = expected_next(mdp, u - v);
    Vectord next(S);
    for (int x = 0; x < S; ++x) {
      double best = -kInfinity;
      for (const Vectord& p : candidates[static_cast<std::size_t>(x)]) {
        double value = 0.0;
        for (int a = 0; a < A; ++a) value += p(a) * q(x, a) + g * trace_weight(spec, p(a), mu(x, a)) * d(x, a);
        if (value > best) {
          best = value;
          best_rows.row(x) = p.transpose();
        }
      }
      next(x) = best;
    }
    const double change = (next - u).lpNorm<Eigen::Infinity>();
    u = std::move(next);
    if (change < tol) break;
  }
  for (int x = 0; x < S; ++x) best_rows.row(x) /= best_rows.row(x).sum();
  return {TabularPolicyd(best_rows), std::move(u), sweeps + 1};
}

Reference reference_optimum(const Mdpd& mdp) {
  auto oc = optimal_control(mdp, 1e-10);
  return {std::move(oc.value), std::move(oc.policy)};
}

namespace {

using Improve = std::function<TabularPolicyd(const Vectord& v, const TabularPolicyd& mu)>;
using Evaluate = std::function<Vectord(const TabularPolicyd& pi, const TabularPolicyd& mu, const Vectord& v)>;

IterationTrace run_recursion(const Mdpd& mdp, std::string name, const TraceSpec& spec, int iters,
                             const Behavior& behavior, const Improve& improve, const Evaluate& evaluate,
                             bool track_eta) {
  if (iters < 1) throw ParameterError("iters must be >= 1");
  const Reference ref = reference_optimum(mdp);
  IterationTrace trace;
  trace.algorithm = std::move(name);
  trace.spec = spec;
  trace.config = "behavior=" + behavior.describe();
  Vectord v = Vectord::Zero(mdp.n_states());
  TabularPolicyd previous = TabularPolicyd::uniform(mdp.n_states(), mdp.n_actions());
  TabularPolicyd mu = behavior.at(previous);
  for (int i = 0; i < iters; ++i) {
    mu = behavior.at(previous);
    TabularPolicyd pi = improve(v, mu);
    v = evaluate(pi, mu, v);
    if (!v.allFinite()) throw NumericError(trace.algorithm + ": non-finite iterate at iteration " + std::to_string(i + 1));
    const Vectord gap = exact_value(mdp, pi) - ref.v_star;
    trace.errors_l2.push_back(gap.norm());
    trace.errors_inf.push_back(gap.lpNorm<Eigen::Infinity>());
    if (track_eta) trace.eta_seq.push_back(contraction_rate(mdp, pi, mu, spec).eta);
    previous = std::move(pi);
  }
  if (track_eta) trace.eta_star = contraction_rate(mdp, ref.pi_star, mu, spec).eta;
  return trace;
}

Improve greedy_improvement(const Mdpd& mdp) {
  return [&mdp](const Vectord& v, const TabularPolicyd&) { return greedy_policy(mdp, v); };
}

Improve ascent_improvement(const Mdpd& mdp, const TraceSpec& spec, const InnerAscentConfig& cfg) {
  auto warm = std::make_shared<SoftmaxPolicyd>(SoftmaxPolicyd::uniform(mdp.n_states(), mdp.n_actions()));
  return [&mdp, spec, cfg, warm](const Vectord& v, const TabularPolicyd& mu) {
    if (cfg.mode == AscentMode::Exact) return exact_improvement(mdp, mu, spec, v).policy;
    InnerAscentResult r = inner_maximize(mdp, mu, spec, v, *warm, cfg);
    *warm = r.theta;
    return r.theta.policy();
  };
}

Evaluate one_step_evaluation(const Mdpd& mdp) {
  return [&mdp](const TabularPolicyd& pi, const TabularPolicyd&, const Vectord& v) {
    return bellman_backup(mdp, pi.probs(), v);
  };
}

Evaluate multi_step_evaluation(const Mdpd& mdp, const TraceSpec& spec) {
  return [&mdp, spec](const TabularPolicyd& pi, const TabularPolicyd& mu, const Vectord& v) {
    return apply_operator(mdp, pi, mu, spec, v);
  };
}

std::string spec_label(const TraceSpec& spec) {
  std::ostringstream os;
  os << to_string(spec.kind) << "(" << spec.param << ")";
  return os.str();
}

}  // namespace

IterationTrace run_vi(const Mdpd& mdp, int iters) {
  const TraceSpec one_step = TraceSpec::vtrace(0.0);
  const Behavior uniform(TabularPolicyd::uniform(mdp.n_states(), mdp.n_actions()));
  return run_recursion(mdp, "vi", one_step, iters, uniform, greedy_improvement(mdp), one_step_evaluation(mdp), true);
}

IterationTrace run_multistep_pe(const Mdpd& mdp, const Behavior& mu, const TraceSpec& spec, int iters) {
  return run_recursion(mdp, "multistep_pe", spec, iters, mu, greedy_improvement(mdp),
                       multi_step_evaluation(mdp, spec), true);
}

IterationTrace run_multistep_pi(const Mdpd& mdp, const Behavior& mu, const TraceSpec& spec, int iters,
                                const InnerAscentConfig& cfg) {
  return run_recursion(mdp, "multistep_pi", spec, iters, mu, ascent_improvement(mdp, spec, cfg),
                       one_step_evaluation(mdp), true);
}

IterationTrace run_domo_vi(const Mdpd& mdp, const Behavior& mu, const TraceSpec& spec, int iters,
                           const InnerAscentConfig& cfg) {
  return run_recursion(mdp, "domo_vi", spec, iters, mu, ascent_improvement(mdp, spec, cfg),
                       multi_step_evaluation(mdp, spec), true);
}

IterationTrace run_domo_ac_tabular(const Mdpd& mdp, const Behavior& mu, const TraceSpec& spec, int iters,
                                   const InnerAscentConfig& cfg) {
  InnerAscentConfig c = cfg;
  c.init_mode = InitMode::GreedyLog;
  const std::string name =
      c.mode == AscentMode::Fixed ? "domo_ac_n" + std::to_string(c.n_steps) : std::string("domo_ac_converged");
  IterationTrace t = run_recursion(mdp, name, spec, iters, mu, ascent_improvement(mdp, spec, c),
                                   multi_step_evaluation(mdp, spec), true);
  t.config += " lr=" + std::to_string(c.learning_rate);
  return t;
}

IterationTrace run_lambda_pi(const Mdpd& mdp, double lambda, int iters, const InnerAscentConfig& cfg) {
  if (!(lambda >= 0.0 && lambda < 1.0)) throw ParameterError("lambda must lie in [0, 1)");
  const TraceSpec spec = TraceSpec::td_lambda(lambda);
  const Behavior unused(TabularPolicyd::uniform(mdp.n_states(), mdp.n_actions()));
  Evaluate exact = [&mdp](const TabularPolicyd& pi, const TabularPolicyd&, const Vectord&) {
    return exact_value(mdp, pi);
  };
  IterationTrace t = run_recursion(mdp, "lambda_pi", spec, iters, unused, ascent_improvement(mdp, spec, cfg), exact, true);
  t.config = spec_label(spec);
  return t;
}

void OnlineAcConfig::validate() const {
  if (!(polyak_tau > 0.0 && polyak_tau <= 1.0)) throw ParameterError("polyak_tau must lie in (0, 1]");
  if (segment_length < 1) throw ParameterError("segment_length must be >= 1");
  if (total_iterations < 1) throw ParameterError("total_iterations must be >= 1");
  if (!(actor_lr >= 0.0) || !(critic_lr >= 0.0)) throw ParameterError("learning rates must be >= 0");
}

IterationTrace run_domo_ac_online(const Mdpd& mdp, const TraceSpec& spec, const OnlineAcConfig& cfg,
                                  std::uint64_t seed) {
  cfg.validate();
  spec.validate();
  constexpr std::uint64_t kOnlineStream = 0x4f4e4c;  // "ONL"
  const int S = mdp.n_states();
  const int A = mdp.n_actions();
  const int T = cfg.segment_length;
  const double gamma = mdp.gamma();
  const Reference ref = reference_optimum(mdp);
  std::mt19937_64 rng(derive_seed(seed, kOnlineStream));

  SoftmaxPolicyd theta = SoftmaxPolicyd::uniform(S, A);
  Vectord critic = Vectord::Zero(S);
  Vectord target = Vectord::Zero(S);
  int state = static_cast<int>(uniform01(rng) * S);

  IterationTrace trace;
  trace.algorithm = "domo_ac_online";
  trace.spec = spec;
  std::ostringstream os;
  os << "actor_lr=" << cfg.actor_lr << " critic_lr=" << cfg.critic_lr << " tau=" << cfg.polyak_tau
     << " T=" << T << " iterations=" << cfg.total_iterations;
  trace.config = os.str();

  auto record = [&](const TabularPolicyd& pi) {
    const Vectord gap = exact_value(mdp, pi) - ref.v_star;
    trace.errors_l2.push_back(gap.norm());
    trace.errors_inf.push_back(gap.lpNorm<Eigen::Infinity>());
  };
  const TabularPolicyd initial_policy = theta.policy();
  const double initial_error = (exact_value(mdp, initial_policy) - ref.v_star).norm();

  for (int it = 0; it < cfg.total_iterations; ++it) {
    const TabularPolicyd mu = theta.policy();
    const Trajectory segment = TrajectorySampler(mdp, mu).sample(state, T, rng);
    state = segment.final_state();

    // Actor: average of per-start-point gradient estimates over the segment.
    Matrixd actor_grad = Matrixd::Zero(S, A);
    for (int t = 0; t < T; ++t) {
      Trajectory suffix;
      suffix.steps.assign(segment.steps.begin() + t, segment.steps.end());
      actor_grad += stochastic_gradient(suffix, theta, mu, spec, critic, gamma);
    }
    theta.logits() += cfg.actor_lr * actor_grad / T;

    // Critic: squared-loss step toward targets built from the target table.
    const TabularPolicyd pi_next = theta.policy();
    const Vectord targets = recursive_targets(segment, pi_next, mu, spec, target, gamma);
    Vectord critic_grad = Vectord::Zero(S);
    for (int t = 0; t < T; ++t) {
      const int x = segment.steps[static_cast<std::size_t>(t)].state;
      critic_grad(x) += -2.0 * (targets(t) - critic(x));
    }
    critic -= cfg.critic_lr * critic_grad / T;
    target = (1.0 - cfg.polyak_tau) * target + cfg.polyak_tau * critic;

    if (!theta.logits().allFinite() || !critic.allFinite())
      throw NumericError("online actor-critic diverged to non-finite values at iteration " + std::to_string(it + 1));
    record(pi_next);
    if (!trace.diverged_at && trace.errors_l2.back() > 10.0 * initial_error) trace.diverged_at = it + 1;
  }
  return trace;
}

std::vector<double> convergence_envelope(const IterationTrace& trace, double reward_bound, double gamma) {
  const double scale = 4.0 * reward_bound / ((1.0 - gamma) * (1.0 - gamma));
  const double eta_star = trace.eta_star.value_or(gamma);
  std::vector<double> out;
  double product = 1.0;
  double power = 1.0;
  for (int i = 0; i < trace.iterations(); ++i) {
    if (i > 0) {
      product *= trace.eta_seq.at(static_cast<std::size_t>(i - 1));
      power *= eta_star;
    }
    out.push_back(std::max(power, product) * scale);
  }
  return out;
}

}  // namespace domo
