#pragma once

#include "domo/types.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace domo {

/// How a randomly generated model was produced; carried through serialization.
struct MdpProvenance {
  std::uint64_t seed = 0;
  double alpha = 0.0;
};

/// Finite discounted MDP with expected-reward table.
///
/// Transitions are stored as an (n_states * n_actions) x n_states matrix whose
/// row `x * n_actions + a` is P(. | x, a).
template <typename Scalar>
class Mdp {
 public:
  Mdp(Matrix<Scalar> transition, Matrix<Scalar> reward, Scalar gamma,
      std::optional<int> horizon_cap = std::nullopt,
      std::optional<MdpProvenance> provenance = std::nullopt)
      : transition_(std::move(transition)),
        reward_(std::move(reward)),
        gamma_(gamma),
        horizon_cap_(horizon_cap),
        provenance_(provenance) {
    validate();
  }

  int n_states() const { return static_cast<int>(reward_.rows()); }
  int n_actions() const { return static_cast<int>(reward_.cols()); }
  Scalar gamma() const { return gamma_; }
  std::optional<int> horizon_cap() const { return horizon_cap_; }
  const std::optional<MdpProvenance>& provenance() const { return provenance_; }

  const Matrix<Scalar>& transition() const { return transition_; }
  const Matrix<Scalar>& reward() const { return reward_; }

  Scalar transition(int x, int a, int y) const { return transition_(row(x, a), y); }
  Scalar reward(int x, int a) const { return reward_(x, a); }
  int row(int x, int a) const { return x * n_actions() + a; }

  /// max |r(x, a)|
  Scalar reward_bound() const { return reward_.cwiseAbs().maxCoeff(); }

  template <typename Other>
  Mdp<Other> cast() const {
    return Mdp<Other>(transition_.template cast<Other>(), reward_.template cast<Other>(),
                      static_cast<Other>(gamma_), horizon_cap_, provenance_);
  }

 private:
  void validate() const {
    const auto S = reward_.rows();
    const auto A = reward_.cols();
    if (S < 1 || A < 1) throw ParameterError("Mdp needs at least one state and one action");
    if (transition_.rows() != S * A || transition_.cols() != S)
      throw ParameterError("transition must be (n_states * n_actions) x n_states");
    if (!(gamma_ >= Scalar(0) && gamma_ < Scalar(1))) throw ParameterError("gamma must lie in [0, 1)");
    if (!reward_.allFinite()) throw ParameterError("rewards must be finite");
    if (!transition_.allFinite() || (transition_.array() < Scalar(0)).any())
      throw ParameterError("transition probabilities must be finite and non-negative");
    const Vector<Scalar> sums = transition_.rowwise().sum();
    if (((sums.array() - Scalar(1)).abs() > Scalar(1e-12)).any())
      throw ParameterError("every transition row must sum to 1");
    if (horizon_cap_ && *horizon_cap_ < 1) throw ParameterError("horizon_cap must be positive");
  }

  Matrix<Scalar> transition_;
  Matrix<Scalar> reward_;
  Scalar gamma_;
  std::optional<int> horizon_cap_;
  std::optional<MdpProvenance> provenance_;
};

using Mdpd = Mdp<double>;

/// Row-stochastic table pi(a | x).
template <typename Scalar>
class TabularPolicy {
 public:
  explicit TabularPolicy(Matrix<Scalar> probs) : probs_(std::move(probs)) {
    if (probs_.rows() < 1 || probs_.cols() < 1) throw ParameterError("empty policy table");
    if (!probs_.allFinite() || (probs_.array() < Scalar(0)).any())
      throw ParameterError("policy probabilities must be finite and non-negative");
    const Vector<Scalar> sums = probs_.rowwise().sum();
    if (((sums.array() - Scalar(1)).abs() > Scalar(1e-12)).any())
      throw ParameterError("every policy row must sum to 1");
  }

  static TabularPolicy uniform(int n_states, int n_actions) {
    return TabularPolicy(Matrix<Scalar>::Constant(n_states, n_actions, Scalar(1) / n_actions));
  }

  static TabularPolicy deterministic(const std::vector<int>& actions, int n_actions) {
    Matrix<Scalar> p = Matrix<Scalar>::Zero(static_cast<Eigen::Index>(actions.size()), n_actions);
    for (std::size_t x = 0; x < actions.size(); ++x) {
      if (actions[x] < 0 || actions[x] >= n_actions) throw ParameterError("action index out of range");
      p(static_cast<Eigen::Index>(x), actions[x]) = Scalar(1);
    }
    return TabularPolicy(std::move(p));
  }

  int n_states() const { return static_cast<int>(probs_.rows()); }
  int n_actions() const { return static_cast<int>(probs_.cols()); }
  const Matrix<Scalar>& probs() const { return probs_; }
  Scalar operator()(int x, int a) const { return probs_(x, a); }

  bool has_full_support() const { return (probs_.array() > Scalar(0)).all(); }

  /// Index of the most probable action at x (lowest index on ties).
  int mode(int x) const {
    int best = 0;
    for (int a = 1; a < n_actions(); ++a)
      if (probs_(x, a) > probs_(x, best)) best = a;
    return best;
  }

 private:
  Matrix<Scalar> probs_;
};

using TabularPolicyd = TabularPolicy<double>;

/// Row-wise softmax of a logit table; rows are shifted by their max first.
template <typename Derived>
Matrix<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> p(logits.rows(), logits.cols());
  for (Eigen::Index x = 0; x < logits.rows(); ++x) {
    const Scalar m = logits.row(x).maxCoeff();
    p.row(x) = (logits.row(x).array() - m).exp();
    p.row(x) /= p.row(x).sum();
  }
  return p;
}

/// Softmax-parameterized policy pi_theta(a|x) = exp(theta(x,a)) / sum_b exp(theta(x,b)).
template <typename Scalar>
class SoftmaxPolicy {
 public:
  explicit SoftmaxPolicy(Matrix<Scalar> logits) : logits_(std::move(logits)) {
    if (logits_.rows() < 1 || logits_.cols() < 1) throw ParameterError("empty logit table");
    if (!logits_.allFinite()) throw NumericError("non-finite logits");
  }

  static SoftmaxPolicy uniform(int n_states, int n_actions) {
    return SoftmaxPolicy(Matrix<Scalar>::Zero(n_states, n_actions));
  }

  /// theta = log(pi + eps); eps keeps every action reachable.
  static SoftmaxPolicy log_of(const TabularPolicy<Scalar>& pi, Scalar eps) {
    return SoftmaxPolicy((pi.probs().array() + eps).log().matrix());
  }

  int n_states() const { return static_cast<int>(logits_.rows()); }
  int n_actions() const { return static_cast<int>(logits_.cols()); }
  const Matrix<Scalar>& logits() const { return logits_; }
  Matrix<Scalar>& logits() { return logits_; }

  Matrix<Scalar> probs() const { return softmax_rows(logits_); }
  TabularPolicy<Scalar> policy() const { return TabularPolicy<Scalar>(renormalized(probs())); }

 private:
  static Matrix<Scalar> renormalized(Matrix<Scalar> p) {
    for (Eigen::Index x = 0; x < p.rows(); ++x) p.row(x) /= p.row(x).sum();
    return p;
  }
  Matrix<Scalar> logits_;
};

using SoftmaxPolicyd = SoftmaxPolicy<double>;

// ---------------------------------------------------------------------------
// Policy-contracted quantities

/// K(x, y) = sum_a w(x, a) P(y | x, a) for an arbitrary non-negative weight table.
template <typename Scalar, typename Derived>
Matrix<Scalar> weighted_kernel(const Mdp<Scalar>& mdp, const Eigen::MatrixBase<Derived>& weights) {
  const int S = mdp.n_states();
  const int A = mdp.n_actions();
  Matrix<Scalar> k = Matrix<Scalar>::Zero(S, S);
  for (int x = 0; x < S; ++x)
    for (int a = 0; a < A; ++a) {
      const Scalar w = weights(x, a);
      if (w != Scalar(0)) k.row(x) += w * mdp.transition().row(mdp.row(x, a));
    }
  return k;
}

/// P^pi
template <typename Scalar>
Matrix<Scalar> policy_kernel(const Mdp<Scalar>& mdp, const Matrix<Scalar>& probs) {
  return weighted_kernel(mdp, probs);
}

/// r^pi(x) = sum_a pi(a|x) r(x, a)
template <typename Scalar>
Vector<Scalar> policy_reward(const Mdp<Scalar>& mdp, const Matrix<Scalar>& probs) {
  return mdp.reward().cwiseProduct(probs).rowwise().sum();
}

/// (P v)(x, a) as an n_states x n_actions table.
template <typename Scalar, typename Derived>
Matrix<Scalar> expected_next(const Mdp<Scalar>& mdp, const Eigen::MatrixBase<Derived>& v) {
  const Vector<Scalar> flat = mdp.transition() * v;
  return Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      flat.data(), mdp.n_states(), mdp.n_actions());
}

/// q(x, a) = r(x, a) + gamma (P v)(x, a)
template <typename Scalar, typename Derived>
Matrix<Scalar> backup_q(const Mdp<Scalar>& mdp, const Eigen::MatrixBase<Derived>& v) {
  return mdp.reward() + mdp.gamma() * expected_next(mdp, v);
}

/// One-step Bellman backup T^pi v.
template <typename Scalar>
Vector<Scalar> bellman_backup(const Mdp<Scalar>& mdp, const Matrix<Scalar>& probs,
                              const Vector<Scalar>& v) {
  return backup_q(mdp, v).cwiseProduct(probs).rowwise().sum();
}

/// Solves (I - gamma K) u = b. Throws NumericError on a non-finite or
/// inaccurate solution.
template <typename Scalar>
Vector<Scalar> solve_resolvent(const Matrix<Scalar>& kernel, Scalar gamma, const Vector<Scalar>& b) {
  const Eigen::Index n = kernel.rows();
  const Matrix<Scalar> a = Matrix<Scalar>::Identity(n, n) - gamma * kernel;
  const Vector<Scalar> u = a.partialPivLu().solve(b);
  const Scalar residual = (a * u - b).template lpNorm<Eigen::Infinity>();
  const Scalar scale = Scalar(1) + b.template lpNorm<Eigen::Infinity>();
  if (!u.allFinite() || !(residual <= Scalar(1e-10) * scale))
    throw NumericError("linear solve failed (residual " + std::to_string(double(residual)) + ")");
  return u;
}

// ---------------------------------------------------------------------------
// Exact evaluation and control

/// V^pi from (I - gamma P^pi) v = r^pi.
template <typename Scalar>
ValueFunction<Scalar> exact_value(const Mdp<Scalar>& mdp, const TabularPolicy<Scalar>& policy) {
  return solve_resolvent(policy_kernel(mdp, policy.probs()), mdp.gamma(),
                         policy_reward(mdp, policy.probs()));
}

/// Q^pi(x, a) = r(x, a) + gamma sum_y P(y|x,a) V^pi(y).
template <typename Scalar>
QFunction<Scalar> exact_q(const Mdp<Scalar>& mdp, const TabularPolicy<Scalar>& policy) {
  return backup_q(mdp, exact_value(mdp, policy));
}

/// Deterministic greedy policy w.r.t. the one-step backup of v; ties go to the lowest action.
template <typename Scalar>
TabularPolicy<Scalar> greedy_policy(const Mdp<Scalar>& mdp, const ValueFunction<Scalar>& v) {
  const Matrix<Scalar> q = backup_q(mdp, v);
  std::vector<int> actions(static_cast<std::size_t>(mdp.n_states()));
  for (int x = 0; x < mdp.n_states(); ++x) {
    int best = 0;
    for (int a = 1; a < mdp.n_actions(); ++a)
      if (q(x, a) > q(x, best)) best = a;
    actions[static_cast<std::size_t>(x)] = best;
  }
  return TabularPolicy<Scalar>::deterministic(actions, mdp.n_actions());
}

template <typename Scalar>
struct OptimalControl {
  ValueFunction<Scalar> value;
  TabularPolicy<Scalar> policy;
  int sweeps = 0;
};

/// Value iteration to an ||.||_inf update below tol (1 - gamma) / (2 gamma),
/// then policy-iteration polishing of the greedy policy until it is stable.
/// The returned value is the exact value of the returned deterministic policy.
template <typename Scalar>
OptimalControl<Scalar> optimal_control(const Mdp<Scalar>& mdp, Scalar tol) {
  if (!(tol > Scalar(0))) throw ParameterError("tol must be positive");
  const Scalar gamma = mdp.gamma();
  ValueFunction<Scalar> v = ValueFunction<Scalar>::Zero(mdp.n_states());
  const Scalar threshold = gamma > Scalar(0) ? tol * (Scalar(1) - gamma) / (Scalar(2) * gamma)
                                             : std::numeric_limits<Scalar>::infinity();
  int sweeps = 0;
  for (;;) {
    ValueFunction<Scalar> next = backup_q(mdp, v).rowwise().maxCoeff();
    ++sweeps;
    const Scalar change = (next - v).template lpNorm<Eigen::Infinity>();
    v = std::move(next);
    if (change < threshold) break;
    if (sweeps > 1000000) throw NumericError("value iteration did not converge");
  }
  TabularPolicy<Scalar> policy = greedy_policy(mdp, v);
  ValueFunction<Scalar> value = exact_value(mdp, policy);
  for (int guard = 0; guard < 10000; ++guard) {
    const Matrix<Scalar> q = backup_q(mdp, value);
    std::vector<int> actions(static_cast<std::size_t>(mdp.n_states()));
    bool changed = false;
    for (int x = 0; x < mdp.n_states(); ++x) {
      int current = policy.mode(x);
      int best = current;
      for (int a = 0; a < mdp.n_actions(); ++a)
        // strict improvement margin keeps ties from cycling
        if (q(x, a) > q(x, best) + Scalar(1e-12) * (Scalar(1) + std::abs(q(x, best)))) best = a;
      changed = changed || best != current;
      actions[static_cast<std::size_t>(x)] = best;
    }
    if (!changed) break;
    policy = TabularPolicy<Scalar>::deterministic(actions, mdp.n_actions());
    value = exact_value(mdp, policy);
  }
  return {std::move(value), std::move(policy), sweeps};
}

// ---------------------------------------------------------------------------
// Random instances

/// splitmix64 finalizer; used to derive independent sub-seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Sub-seed for stream `tag`, index `index` under `seed`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t index = 0) {
  return splitmix64(splitmix64(splitmix64(seed) ^ tag) ^ index);
}

/// Uniform double in [0, 1) from the top 53 bits of a 64-bit draw.
template <typename Engine>
double uniform01(Engine& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Dirichlet(alpha, ..., alpha) sample of dimension n, computed in log space so
/// that very small alpha does not underflow every coordinate.
template <typename Engine>
Vectord sample_dirichlet(int n, double alpha, Engine& rng) {
  // Gamma(alpha) = Gamma(alpha + 1) * U^(1/alpha)
  std::gamma_distribution<double> gamma(alpha + 1.0, 1.0);
  Vectord logs(n);
  for (int i = 0; i < n; ++i) {
    double u = uniform01(rng);
    while (u == 0.0) u = uniform01(rng);
    logs(i) = std::log(gamma(rng)) + std::log(u) / alpha;
  }
  Vectord p = (logs.array() - logs.maxCoeff()).exp();
  return p / p.sum();
}

namespace stream {
inline constexpr std::uint64_t kMdp = 0x4d4450;  // "MDP"
}

/// Random tabular MDP: Dirichlet(alpha) transition rows, N(0, 1) rewards frozen at generation.
inline Mdpd gen_random_mdp(int n_states, int n_actions, double alpha, double gamma, std::uint64_t seed) {
  if (n_states < 2) throw ParameterError("n_states must be >= 2");
  if (n_actions < 1) throw ParameterError("n_actions must be >= 1");
  if (!(alpha > 0.0)) throw ParameterError("alpha must be > 0");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ParameterError("gamma must lie in [0, 1)");
  std::mt19937_64 rng(derive_seed(seed, stream::kMdp));
  Matrixd transition(n_states * n_actions, n_states);
  for (int r = 0; r < n_states * n_actions; ++r)
    transition.row(r) = sample_dirichlet(n_states, alpha, rng).transpose();
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrixd reward(n_states, n_actions);
  for (int x = 0; x < n_states; ++x)
    for (int a = 0; a < n_actions; ++a) reward(x, a) = normal(rng);
  return Mdpd(std::move(transition), std::move(reward), gamma, std::nullopt,
              MdpProvenance{seed, alpha});
}

}  // namespace domo
