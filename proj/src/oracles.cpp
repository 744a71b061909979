#include "domo/oracles.hpp"

#include "domo/operators.hpp"

#include <algorithm>
#include <cmath>

namespace domo::oracle {

Matrixd finite_difference(const std::function<Vectord(const SoftmaxPolicyd&)>& f, const SoftmaxPolicyd& theta,
                          double h) {
  const int S = theta.n_states();
  const int A = theta.n_actions();
  Matrixd out;
  for (int x = 0; x < S; ++x)
    for (int a = 0; a < A; ++a) {
      SoftmaxPolicyd plus = theta;
      SoftmaxPolicyd minus = theta;
      plus.logits()(x, a) += h;
      minus.logits()(x, a) -= h;
      const Vectord diff = (f(plus) - f(minus)) / (2.0 * h);
      if (out.size() == 0) out.resize(diff.size(), S * A);
      out.col(x * A + a) = diff;
    }
  return out;
}

Vectord power_iteration_value(const Mdpd& mdp, const TabularPolicyd& pi, int sweeps) {
  const int S = mdp.n_states();
  const int A = mdp.n_actions();
  Vectord v = Vectord::Zero(S);
  for (int k = 0; k < sweeps; ++k) {
    Vectord next = Vectord::Zero(S);
    for (int x = 0; x < S; ++x)
      for (int a = 0; a < A; ++a) {
        double backup = mdp.reward(x, a);
        for (int y = 0; y < S; ++y) backup += mdp.gamma() * mdp.transition(x, a, y) * v(y);
        next(x) += pi(x, a) * backup;
      }
    v = std::move(next);
  }
  return v;
}

std::vector<std::vector<int>> deterministic_policies(int n_states, int n_actions) {
  std::vector<std::vector<int>> out;
  std::vector<int> actions(static_cast<std::size_t>(n_states), 0);
  for (;;) {
    out.push_back(actions);
    int x = n_states - 1;
    while (x >= 0 && ++actions[static_cast<std::size_t>(x)] == n_actions) actions[static_cast<std::size_t>(x--)] = 0;
    if (x < 0) break;
  }
  return out;
}

Enumeration enumerate_deterministic(const Mdpd& mdp) {
  Enumeration e;
  double best_total = -kInfinity;
  for (const auto& actions : deterministic_policies(mdp.n_states(), mdp.n_actions())) {
    const Vectord v = exact_value(mdp, TabularPolicyd::deterministic(actions, mdp.n_actions()));
    if (e.best_value.size() == 0) e.best_value = v;
    e.best_value = e.best_value.cwiseMax(v);
    if (v.sum() > best_total) {
      best_total = v.sum();
      e.best_actions = actions;
    }
    ++e.n_policies;
  }
  return e;
}

Vectord contraction_series(const Mdpd& mdp, const TabularPolicyd& pi, const TabularPolicyd& mu,
                           const TraceSpec& spec, int n_terms) {
  const int S = mdp.n_states();
  const int A = mdp.n_actions();
  Matrixd c(S, A);
  for (int x = 0; x < S; ++x)
    for (int a = 0; a < A; ++a) {
      const double rho = pi(x, a) / mu(x, a);
      switch (spec.kind) {
        case TraceKind::VTrace: c(x, a) = std::min(spec.c_bar(), rho); break;
        case TraceKind::TreeBackup: c(x, a) = pi(x, a); break;
        case TraceKind::QLambda: c(x, a) = spec.lambda(); break;
        default: throw DomainError("series oracle needs an off-policy corrected family");
      }
    }
  // prod(x) = E[c_{0:t-1} | X_0 = x], advanced one step at a time.
  auto advance = [&](const Vectord& m) {
    Vectord out = Vectord::Zero(S);
    for (int x = 0; x < S; ++x)
      for (int a = 0; a < A; ++a)
        for (int y = 0; y < S; ++y) out(x) += mu(x, a) * c(x, a) * mdp.transition(x, a, y) * m(y);
    return out;
  };
  Vectord eta = Vectord::Zero(S);
  Vectord before = Vectord::Ones(S);
  double discount = 1.0;
  for (int t = 1; t <= n_terms; ++t) {
    discount *= mdp.gamma();
    const Vectord after = advance(before);
    eta += discount * (before - after);
    before = after;
  }
  return eta;
}

TabularPolicyd lambda_greedy(const Mdpd& mdp, double lambda, const Vectord& v) {
  const Matrixd reward = mdp.reward() + mdp.gamma() * (1.0 - lambda) * expected_next(mdp, v);
  const Mdpd surrogate(mdp.transition(), reward, mdp.gamma() * lambda);
  return optimal_control(surrogate, 1e-12).policy;
}

Vectord per_state_maxima(const Mdpd& mdp, const TabularPolicyd& mu, const TraceSpec& spec, const Vectord& v,
                         int grid) {
  if (mdp.n_actions() != 2) throw ParameterError("per-state brute force supports two actions only");
  if (grid < 2) throw ParameterError("grid must have at least two points");
  const int S = mdp.n_states();
  auto evaluate = [&](const Vectord& p) {
    Matrixd probs(S, 2);
    probs.col(0) = p;
    probs.col(1) = Vectord::Ones(S) - p;
    return apply_operator(mdp, TabularPolicyd(probs), mu, spec, v);
  };
  Vectord best = Vectord::Constant(S, -kInfinity);
  std::vector<Vectord> argbest(static_cast<std::size_t>(S), Vectord::Zero(S));
  std::vector<int> idx(static_cast<std::size_t>(S), 0);
  for (;;) {
    Vectord p(S);
    for (int y = 0; y < S; ++y) p(y) = static_cast<double>(idx[static_cast<std::size_t>(y)]) / (grid - 1);
    const Vectord out = evaluate(p);
    for (int x = 0; x < S; ++x)
      if (out(x) > best(x)) {
        best(x) = out(x);
        argbest[static_cast<std::size_t>(x)] = p;
      }
    int y = S - 1;
    while (y >= 0 && ++idx[static_cast<std::size_t>(y)] == grid) idx[static_cast<std::size_t>(y--)] = 0;
    if (y < 0) break;
  }
  for (int x = 0; x < S; ++x) {
    Vectord p = argbest[static_cast<std::size_t>(x)];
    double value = best(x);
    for (double step = 1.0 / (grid - 1); step > 1e-10; step *= 0.5) {
      bool moved = true;
      while (moved) {
        moved = false;
        for (int y = 0; y < S; ++y)
          for (double dir : {-1.0, 1.0}) {
            Vectord trial = p;
            trial(y) = std::clamp(trial(y) + dir * step, 0.0, 1.0);
            const double t = evaluate(trial)(x);
            if (t > value + 1e-15) {
              value = t;
              p = trial;
              moved = true;
            }
          }
      }
    }
    best(x) = value;
  }
  return best;
}

std::pair<double, double> monte_carlo_q(const Mdpd& mdp, const TabularPolicyd& pi, int x, int a, int episodes,
                                        int horizon, std::uint64_t seed) {
  constexpr std::uint64_t kMonteCarloStream = 0x4d4351;  // "MCQ"
  const TrajectorySampler sampler(mdp, pi);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (int e = 0; e < episodes; ++e) {
    std::mt19937_64 rng(derive_seed(seed, kMonteCarloStream, static_cast<std::uint64_t>(e)));
    double ret = mdp.reward(x, a);
    double discount = mdp.gamma();
    int state = sampler.sample_next(x, a, rng);
    for (int t = 1; t < horizon; ++t) {
      const int action = sampler.sample_action(state, rng);
      ret += discount * mdp.reward(state, action);
      discount *= mdp.gamma();
      state = sampler.sample_next(state, action, rng);
    }
    sum += ret;
    sum_sq += ret * ret;
  }
  const double mean = sum / episodes;
  const double var = std::max(0.0, sum_sq / episodes - mean * mean) * episodes / std::max(1, episodes - 1);
  return {mean, std::sqrt(var / episodes)};
}

Vectord state_marginal(const Mdpd& mdp, const TabularPolicyd& mu, int start, int t) {
  Eigen::RowVectorXd d = Eigen::RowVectorXd::Zero(mdp.n_states());
  d(start) = 1.0;
  const Matrixd p = policy_kernel(mdp, mu.probs());
  for (int k = 0; k < t; ++k) d = d * p;
  return d.transpose();
}

}  // namespace domo::oracle
