#pragma once

#include "domo/mdp.hpp"
#include "domo/operators.hpp"
#include "domo/types.hpp"

#include <vector>

namespace domo {

/// d(value at out_state) / d theta(param_state, param_action), stored as an
/// n_states x (n_states * n_actions) matrix with column index
/// param_state * n_actions + param_action.
template <typename Scalar>
class PolicyGradient {
 public:
  PolicyGradient(Matrix<Scalar> grad, int n_actions) : grad_(std::move(grad)), n_actions_(n_actions) {}

  int n_states() const { return static_cast<int>(grad_.rows()); }
  int n_actions() const { return n_actions_; }
  int n_params() const { return static_cast<int>(grad_.cols()); }

  Scalar operator()(int out_state, int param_state, int param_action) const {
    return grad_(out_state, param_state * n_actions_ + param_action);
  }
  const Matrix<Scalar>& matrix() const { return grad_; }

  /// Gradient of the state-averaged value (uniform start weighting), as an
  /// n_states x n_actions table over logits.
  Matrix<Scalar> state_average() const {
    const Vector<Scalar> mean = grad_.colwise().mean().transpose();
    return Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        mean.data(), grad_.rows(), n_actions_);
  }

  /// Flattened gradient of the value at one start state, laid out like the logits.
  Matrix<Scalar> at_state(int out_state) const {
    const Vector<Scalar> row = grad_.row(out_state).transpose();
    return Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        row.data(), grad_.rows(), n_actions_);
  }

 private:
  Matrix<Scalar> grad_;
  int n_actions_;
};

using PolicyGradientd = PolicyGradient<double>;

/// Softmax vector-Jacobian product per state:
/// out(x, b) = sum_a g(x, a) d pi(a|x) / d theta(x, b) = pi(b|x) (g(x, b) - sum_a pi(a|x) g(x, a)).
template <typename Scalar>
Matrix<Scalar> softmax_pullback(const Matrix<Scalar>& probs, const Matrix<Scalar>& g) {
  const Vector<Scalar> mean = probs.cwiseProduct(g).rowwise().sum();
  return probs.cwiseProduct(g - mean.replicate(1, g.cols()));
}

namespace detail {

/// G(out, x * A + b) = left(out, x) * local(x, b)
template <typename Scalar>
Matrix<Scalar> separable_gradient(const Matrix<Scalar>& left, const Matrix<Scalar>& local) {
  const Eigen::Index S = left.rows();
  const Eigen::Index A = local.cols();
  Matrix<Scalar> g(S, left.cols() * A);
  for (Eigen::Index x = 0; x < left.cols(); ++x)
    for (Eigen::Index b = 0; b < A; ++b) g.col(x * A + b) = left.col(x) * local(x, b);
  return g;
}

/// Pieces shared by the operator output and its logit gradient:
/// d(R v) / d theta(x, b) = resolvent(:, x) * local(x, b).
template <typename Scalar>
struct OperatorLinearization {
  Vector<Scalar> output;
  Matrix<Scalar> system;  // resolvent = system^{-1}
  Scalar scale = Scalar(1);
  Matrix<Scalar> local;
};

template <typename Scalar>
OperatorLinearization<Scalar> linearize_operator(const Mdp<Scalar>& mdp, const Matrix<Scalar>& pi,
                                                 const TabularPolicy<Scalar>& mu, const TraceSpec& spec,
                                                 const Vector<Scalar>& v) {
  spec.validate();
  const Scalar g = mdp.gamma();
  const Eigen::Index S = mdp.n_states();
  const Matrix<Scalar> q = backup_q(mdp, v);
  OperatorLinearization<Scalar> lin;
  if (spec.kind == TraceKind::PengLambda) {
    require_full_support(mu);
    const Scalar lambda = static_cast<Scalar>(spec.lambda());
    lin.system = Matrix<Scalar>::Identity(S, S) - lambda * g * policy_kernel(mdp, mu.probs());
    const Vector<Scalar> rhs = lambda * policy_reward(mdp, mu.probs()) +
                               (Scalar(1) - lambda) * q.cwiseProduct(pi).rowwise().sum();
    lin.output = lin.system.partialPivLu().solve(rhs);
    lin.scale = Scalar(1) - lambda;
    lin.local = softmax_pullback(pi, q);
    return lin;
  }
  if (spec.kind != TraceKind::TdLambda) require_full_support(mu);
  const TraceWeights<Scalar> tw = trace_weights(pi, mu.probs(), spec);
  const Matrix<Scalar> k = weighted_kernel(mdp, tw.weights);
  lin.system = Matrix<Scalar>::Identity(S, S) - g * k;
  const Vector<Scalar> rhs = q.cwiseProduct(pi).rowwise().sum() - g * k * v;
  lin.output = lin.system.partialPivLu().solve(rhs);
  const Vector<Scalar> ahead = lin.output - v;
  const Matrix<Scalar> local = q + g * tw.slope.cwiseProduct(expected_next(mdp, ahead));
  lin.local = softmax_pullback(pi, local);
  return lin;
}

}  // namespace detail

/// Exact gradient of V^{pi_theta} in the logits:
/// (I - gamma P^pi)^{-1} applied to x -> sum_a Q^pi(x, a) grad pi(a|x).
template <typename Scalar>
PolicyGradient<Scalar> exact_policy_gradient(const Mdp<Scalar>& mdp, const SoftmaxPolicy<Scalar>& theta) {
  const Matrix<Scalar> pi = theta.probs();
  const Eigen::Index S = mdp.n_states();
  const Matrix<Scalar> a = Matrix<Scalar>::Identity(S, S) - mdp.gamma() * policy_kernel(mdp, pi);
  const auto lu = a.partialPivLu();
  const Vector<Scalar> v = lu.solve(policy_reward(mdp, pi));
  if (!v.allFinite()) throw NumericError("policy evaluation produced non-finite values");
  const Matrix<Scalar> q = backup_q(mdp, v);
  const Matrix<Scalar> resolvent = lu.inverse();
  return PolicyGradient<Scalar>(detail::separable_gradient(resolvent, softmax_pullback(pi, q)),
                                mdp.n_actions());
}

/// Exact gradient of apply_operator(mdp, pi_theta, mu, spec, v) in the logits,
/// with v held fixed. The clipped branch of min(c_bar, rho) has zero derivative.
template <typename Scalar>
PolicyGradient<Scalar> exact_operator_gradient(const Mdp<Scalar>& mdp, const SoftmaxPolicy<Scalar>& theta,
                                               const TabularPolicy<Scalar>& mu, const TraceSpec& spec,
                                               const ValueFunction<Scalar>& v) {
  const auto lin = detail::linearize_operator(mdp, theta.probs(), mu, spec, v);
  const Matrix<Scalar> resolvent = lin.scale * lin.system.partialPivLu().inverse();
  return PolicyGradient<Scalar>(detail::separable_gradient(resolvent, lin.local), mdp.n_actions());
}

template <typename Scalar>
struct ObjectiveGradient {
  Scalar objective;
  Vector<Scalar> output;   // R v per state
  Matrix<Scalar> gradient; // n_states x n_actions over logits
};

/// L(theta) = sum_x weights(x) R v(x) and its logit gradient, with one
/// transposed solve instead of the full resolvent.
template <typename Scalar>
ObjectiveGradient<Scalar> operator_objective_gradient(const Mdp<Scalar>& mdp, const SoftmaxPolicy<Scalar>& theta,
                                                      const TabularPolicy<Scalar>& mu, const TraceSpec& spec,
                                                      const ValueFunction<Scalar>& v,
                                                      const Vector<Scalar>& weights) {
  const auto lin = detail::linearize_operator(mdp, theta.probs(), mu, spec, v);
  const Vector<Scalar> d = lin.scale * lin.system.transpose().partialPivLu().solve(weights);
  if (!lin.output.allFinite() || !d.allFinite()) throw NumericError("non-finite operator output");
  return {weights.dot(lin.output), lin.output, d.asDiagonal() * lin.local};
}

/// Exact gradient of apply_truncated(mdp, pi_theta, mu, spec, v, t_max): the
/// expectation of the per-trajectory gradient over horizon-t_max trajectories.
template <typename Scalar>
PolicyGradient<Scalar> truncated_operator_gradient(const Mdp<Scalar>& mdp, const SoftmaxPolicy<Scalar>& theta,
                                                   const TabularPolicy<Scalar>& mu, const TraceSpec& spec,
                                                   const ValueFunction<Scalar>& v, int t_max) {
  if (t_max < 1) throw ParameterError("t_max must be >= 1");
  if (spec.kind == TraceKind::PengLambda || spec.kind == TraceKind::TdLambda)
    throw DomainError("truncated gradient needs an off-policy corrected family");
  spec.validate();
  require_full_support(mu);
  const Matrix<Scalar> pi = theta.probs();
  const Eigen::Index S = mdp.n_states();
  const Scalar g = mdp.gamma();
  const TraceWeights<Scalar> tw = trace_weights(pi, mu.probs(), spec);
  const Matrix<Scalar> gk = g * weighted_kernel(mdp, tw.weights);

  // h_t = (gamma K)^t (T^pi v - v); source_t(x, b) is the local derivative
  // injected at step t, propagated by partial sums of (gamma K)^k.
  std::vector<Matrix<Scalar>> sources;
  sources.reserve(static_cast<std::size_t>(t_max));
  sources.push_back(softmax_pullback(pi, backup_q(mdp, v)));
  Vector<Scalar> h = bellman_backup(mdp, pi, v) - v;
  for (int t = 1; t < t_max; ++t) {
    sources.push_back(g * softmax_pullback(pi, Matrix<Scalar>(tw.slope.cwiseProduct(expected_next(mdp, h)))));
    h = gk * h;
  }
  Matrix<Scalar> partial = Matrix<Scalar>::Identity(S, S);  // sum_{k <= t_max - 1 - s} (gamma K)^k
  Matrix<Scalar> grad = Matrix<Scalar>::Zero(S, S * mdp.n_actions());
  for (int s = t_max - 1; s >= 0; --s) {
    grad += detail::separable_gradient(partial, sources[static_cast<std::size_t>(s)]);
    partial = Matrix<Scalar>::Identity(S, S) + gk * partial;
  }
  return PolicyGradient<Scalar>(std::move(grad), mdp.n_actions());
}

template <typename Scalar>
struct GradientBoundCheck {
  Vector<Scalar> lhs;  // ||grad_j R V - grad_j V^pi||_inf per parameter
  Vector<Scalar> rhs;  // eta ||grad_j V^pi||_inf per parameter
  Scalar eta;
};

/// Per-parameter comparison of the operator gradient at V = V^{pi_theta}
/// against eta times the exact policy gradient.
template <typename Scalar>
GradientBoundCheck<Scalar> gradient_bound_check(const Mdp<Scalar>& mdp, const SoftmaxPolicy<Scalar>& theta,
                                          const TabularPolicy<Scalar>& mu, const TraceSpec& spec) {
  const TabularPolicy<Scalar> pi = theta.policy();
  const ValueFunction<Scalar> v = exact_value(mdp, pi);
  const Matrix<Scalar> op = exact_operator_gradient(mdp, theta, mu, spec, v).matrix();
  const Matrix<Scalar> pg = exact_policy_gradient(mdp, theta).matrix();
  const Scalar eta = contraction_rate(mdp, pi, mu, spec).eta;
  GradientBoundCheck<Scalar> out{(op - pg).cwiseAbs().colwise().maxCoeff().transpose(),
                                 eta * pg.cwiseAbs().colwise().maxCoeff().transpose(), eta};
  return out;
}

}  // namespace domo
