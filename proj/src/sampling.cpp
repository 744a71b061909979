#include "domo/sampling.hpp"

#include "domo/gradients.hpp"

#include <algorithm>
#include <cmath>

namespace domo {

namespace {

constexpr std::uint64_t kTrajectoryStream = 0x545241;  // "TRA"
constexpr std::uint64_t kSweepStream = 0x425653;       // "BVS"

int sample_cdf_row(const Matrixd& cdf, Eigen::Index row, double u) {
  const Eigen::Index n = cdf.cols();
  for (Eigen::Index i = 0; i + 1 < n; ++i)
    if (u < cdf(row, i)) return static_cast<int>(i);
  return static_cast<int>(n - 1);
}

Matrixd cumulative_rows(const Matrixd& p) {
  Matrixd c(p.rows(), p.cols());
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < p.cols(); ++i) {
      acc += p(r, i);
      c(r, i) = acc;
    }
  }
  return c;
}

struct StepTrace {
  double rho;
  double c;
  bool c_has_slope;  // d c = c * grad log pi when true, 0 otherwise
};

StepTrace step_trace(const TraceSpec& spec, double pi_a, double mu_a, ClipSubgradient clip) {
  if (!(mu_a > 0.0)) throw DomainError("trajectory action has zero behavior probability");
  const double rho = pi_a / mu_a;
  switch (spec.kind) {
    case TraceKind::VTrace:
      if (rho < spec.c_bar()) return {rho, rho, true};
      return {rho, spec.c_bar(), clip == ClipSubgradient::One};
    case TraceKind::TreeBackup:
      return {rho, pi_a, true};
    case TraceKind::QLambda:
      return {rho, spec.lambda(), false};
    case TraceKind::PengLambda:
    case TraceKind::TdLambda:
      break;
  }
  throw DomainError("sampled estimators need an off-policy corrected trace family");
}

double td_error(const Step& s, const Vectord& v, double gamma) {
  return s.reward + gamma * v(s.next_state) - v(s.state);
}

/// Adds `weight * grad log pi(a | x)` to the logit gradient.
void add_score(Matrixd& grad, const Matrixd& pi, int x, int a, double weight) {
  grad.row(x) -= weight * pi.row(x);
  grad(x, a) += weight;
}

}  // namespace

TrajectorySampler::TrajectorySampler(const Mdpd& mdp, const TabularPolicyd& mu)
    : mdp_(mdp), action_cdf_(cumulative_rows(mu.probs())), transition_cdf_(cumulative_rows(mdp.transition())) {
  require_same_shape(mdp, mu.probs(), "behavior policy");
}

int TrajectorySampler::sample_action(int x, std::mt19937_64& rng) const {
  return sample_cdf_row(action_cdf_, x, uniform01(rng) * action_cdf_(x, action_cdf_.cols() - 1));
}

int TrajectorySampler::sample_next(int x, int a, std::mt19937_64& rng) const {
  const Eigen::Index r = mdp_.row(x, a);
  return sample_cdf_row(transition_cdf_, r, uniform01(rng) * transition_cdf_(r, transition_cdf_.cols() - 1));
}

Trajectory TrajectorySampler::sample(int start_state, int horizon, std::mt19937_64& rng) const {
  if (horizon < 1) throw ParameterError("horizon must be >= 1");
  if (start_state < 0 || start_state >= mdp_.n_states()) throw ParameterError("start state out of range");
  if (mdp_.horizon_cap()) horizon = std::min(horizon, *mdp_.horizon_cap());
  Trajectory traj;
  traj.steps.reserve(static_cast<std::size_t>(horizon));
  int x = start_state;
  for (int t = 0; t < horizon; ++t) {
    const int a = sample_action(x, rng);
    const int y = sample_next(x, a, rng);
    traj.steps.push_back({x, a, mdp_.reward(x, a), y});
    x = y;
  }
  return traj;
}

Trajectory sample_trajectory(const Mdpd& mdp, const TabularPolicyd& mu, int start_state, int horizon,
                             std::uint64_t seed) {
  require_full_support(mu);
  std::mt19937_64 rng(derive_seed(seed, kTrajectoryStream));
  return TrajectorySampler(mdp, mu).sample(start_state, horizon, rng);
}

double stochastic_target(const Trajectory& traj, const TabularPolicyd& pi, const TabularPolicyd& mu,
                         const TraceSpec& spec, const Vectord& v, double gamma) {
  double out = v(traj.start_state());
  double discount = 1.0;
  double traces = 1.0;  // c_{0:t-1}
  for (const Step& s : traj.steps) {
    const StepTrace st = step_trace(spec, pi(s.state, s.action), mu(s.state, s.action), ClipSubgradient::Zero);
    out += discount * traces * st.rho * td_error(s, v, gamma);
    traces *= st.c;
    discount *= gamma;
  }
  return out;
}

Matrixd stochastic_gradient(const Trajectory& traj, const SoftmaxPolicyd& theta, const TabularPolicyd& mu,
                            const TraceSpec& spec, const Vectord& v, double gamma, ClipSubgradient clip) {
  const Matrixd pi = theta.probs();
  const int n = traj.length();
  // a_t = gamma^t c_{0:t-1} rho_t delta_t; the derivative of the weight is
  // a_t (grad log pi_t + sum_{k<t, c_k has slope} grad log pi_k).
  std::vector<double> term(static_cast<std::size_t>(n));
  std::vector<char> slope(static_cast<std::size_t>(n));
  double discount = 1.0;
  double traces = 1.0;
  for (int t = 0; t < n; ++t) {
    const Step& s = traj.steps[static_cast<std::size_t>(t)];
    const StepTrace st = step_trace(spec, pi(s.state, s.action), mu(s.state, s.action), clip);
    term[static_cast<std::size_t>(t)] = discount * traces * st.rho * td_error(s, v, gamma);
    slope[static_cast<std::size_t>(t)] = st.c_has_slope ? 1 : 0;
    traces *= st.c;
    discount *= gamma;
  }
  Matrixd grad = Matrixd::Zero(pi.rows(), pi.cols());
  double suffix = 0.0;  // sum_{t > k} a_t
  for (int k = n - 1; k >= 0; --k) {
    const Step& s = traj.steps[static_cast<std::size_t>(k)];
    const double w = term[static_cast<std::size_t>(k)] + (slope[static_cast<std::size_t>(k)] ? suffix : 0.0);
    add_score(grad, pi, s.state, s.action, w);
    suffix += term[static_cast<std::size_t>(k)];
  }
  return grad;
}

Vectord doubly_robust_values(const Trajectory& traj, const TabularPolicyd& pi, const TabularPolicyd& mu,
                             const Vectord& v, double gamma) {
  const int n = traj.length();
  Vectord out(n + 1);
  out(n) = v(traj.final_state());
  for (int t = n - 1; t >= 0; --t) {
    const Step& s = traj.steps[static_cast<std::size_t>(t)];
    if (!(mu(s.state, s.action) > 0.0)) throw DomainError("trajectory action has zero behavior probability");
    const double rho = pi(s.state, s.action) / mu(s.state, s.action);
    out(t) = v(s.state) + rho * (s.reward + gamma * out(t + 1) - v(s.state));
  }
  return out;
}

Matrixd dr_score_gradient(const Trajectory& traj, const SoftmaxPolicyd& theta, const TabularPolicyd& mu,
                          const Vectord& v, double gamma) {
  const TabularPolicyd pi = theta.policy();
  const Matrixd probs = theta.probs();
  const Vectord v_hat = doubly_robust_values(traj, pi, mu, v, gamma);
  Matrixd grad = Matrixd::Zero(probs.rows(), probs.cols());
  double discount = 1.0;
  double ratios = 1.0;
  for (int t = 0; t < traj.length(); ++t) {
    const Step& s = traj.steps[static_cast<std::size_t>(t)];
    ratios *= pi(s.state, s.action) / mu(s.state, s.action);
    const double advantage = s.reward + gamma * v_hat(t + 1) - v(s.state);
    add_score(grad, probs, s.state, s.action, discount * ratios * advantage);
    discount *= gamma;
  }
  return grad;
}

Vectord recursive_targets(const Trajectory& traj, const TabularPolicyd& pi, const TabularPolicyd& mu,
                          const TraceSpec& spec, const Vectord& v, double gamma, TargetBootstrap bootstrap) {
  const int n = traj.length();
  Vectord out(n + 1);
  out(n) = v(traj.final_state());
  const double rho_bar = spec.rho_bar.value_or(kInfinity);
  for (int t = n - 1; t >= 0; --t) {
    const Step& s = traj.steps[static_cast<std::size_t>(t)];
    const StepTrace st = step_trace(spec, pi(s.state, s.action), mu(s.state, s.action), ClipSubgradient::Zero);
    const double rho_tilde = std::min(rho_bar, st.rho);
    const double anchor = bootstrap == TargetBootstrap::NextState ? v(s.next_state) : v(s.state);
    out(t) = v(s.state) + rho_tilde * td_error(s, v, gamma) + gamma * st.c * (out(t + 1) - anchor);
  }
  return out;
}

std::vector<EstimatorStats> bias_variance_sweep(const Mdpd& mdp, const SoftmaxPolicyd& theta,
                                                const TabularPolicyd& mu, const Vectord& v,
                                                const BiasVarianceSetup& setup, std::uint64_t seed) {
  if (setup.c_bar_grid.empty()) throw ParameterError("c_bar grid must not be empty");
  if (setup.n_traj < 1 || setup.n_rep < 1) throw ParameterError("n_traj and n_rep must be >= 1");
  require_full_support(mu);
  const std::size_t n_grid = setup.c_bar_grid.size();
  std::vector<TraceSpec> specs;
  for (double c : setup.c_bar_grid) specs.push_back(TraceSpec::vtrace(c));

  const Matrixd exact = exact_policy_gradient(mdp, theta).state_average();
  const TrajectorySampler sampler(mdp, mu);
  std::vector<std::vector<Matrixd>> estimates(n_grid);
  for (int rep = 0; rep < setup.n_rep; ++rep) {
    std::vector<Matrixd> sums(n_grid, Matrixd::Zero(exact.rows(), exact.cols()));
    for (int j = 0; j < setup.n_traj; ++j) {
      std::mt19937_64 rng(derive_seed(seed, kSweepStream,
                                      static_cast<std::uint64_t>(rep) * static_cast<std::uint64_t>(setup.n_traj) +
                                          static_cast<std::uint64_t>(j)));
      const int start = static_cast<int>(uniform01(rng) * mdp.n_states());
      const Trajectory traj = sampler.sample(start, setup.horizon, rng);
      for (std::size_t g = 0; g < n_grid; ++g)
        sums[g] += stochastic_gradient(traj, theta, mu, specs[g], v, mdp.gamma());
    }
    for (std::size_t g = 0; g < n_grid; ++g) estimates[g].push_back(sums[g] / setup.n_traj);
  }

  std::vector<EstimatorStats> out;
  for (std::size_t g = 0; g < n_grid; ++g) {
    Matrixd mean = Matrixd::Zero(exact.rows(), exact.cols());
    for (const Matrixd& e : estimates[g]) mean += e;
    mean /= setup.n_rep;
    double variance = 0.0;
    double mse = 0.0;
    for (const Matrixd& e : estimates[g]) {
      variance += (e - mean).squaredNorm();
      mse += (e - exact).squaredNorm();
    }
    EstimatorStats st;
    st.c_bar = setup.c_bar_grid[g];
    st.bias_sq = (mean - exact).squaredNorm();
    st.variance = variance / setup.n_rep;
    st.mse = mse / setup.n_rep;
    st.n_trajectories = setup.n_traj;
    st.n_repetitions = setup.n_rep;
    out.push_back(st);
  }
  return out;
}

}  // namespace domo
