#pragma once

#include "domo/mdp.hpp"
#include "domo/types.hpp"

namespace domo {

/// Trace-weighted kernel of an off-policy evaluation operator.
///
/// `pi_weights(x, a)` is the expected trace mass mu(a|x) c(x, a), e.g.
/// mu * min(c_bar, pi / mu) for V-trace; `kernel` contracts it with P.
template <typename Scalar>
struct CorrectedKernel {
  Matrix<Scalar> pi_weights;
  Matrix<Scalar> kernel;
};

/// Trace weights and their derivative d w(x,a) / d pi(a|x). Every supported
/// family's weight at (x, a) depends on the target only through pi(a|x).
template <typename Scalar>
struct TraceWeights {
  Matrix<Scalar> weights;
  Matrix<Scalar> slope;
};

template <typename Scalar>
void require_full_support(const TabularPolicy<Scalar>& mu) {
  if (!mu.has_full_support()) throw DomainError("behavior policy must have full support");
}

template <typename Scalar>
void require_same_shape(const Mdp<Scalar>& mdp, const Matrix<Scalar>& probs, const char* what) {
  if (probs.rows() != mdp.n_states() || probs.cols() != mdp.n_actions())
    throw ParameterError(std::string(what) + " shape does not match the Mdp");
}

template <typename Scalar>
TraceWeights<Scalar> trace_weights(const Matrix<Scalar>& pi, const Matrix<Scalar>& mu,
                                   const TraceSpec& spec) {
  const Scalar p = static_cast<Scalar>(spec.param);
  TraceWeights<Scalar> tw{Matrix<Scalar>(pi.rows(), pi.cols()),
                          Matrix<Scalar>::Zero(pi.rows(), pi.cols())};
  switch (spec.kind) {
    case TraceKind::VTrace:
      for (Eigen::Index x = 0; x < pi.rows(); ++x)
        for (Eigen::Index a = 0; a < pi.cols(); ++a) {
          // rho < c_bar  <=>  pi < c_bar mu; equality takes the clipped branch
          const Scalar cap = std::isinf(spec.param) ? std::numeric_limits<Scalar>::infinity()
                                                    : p * mu(x, a);
          if (pi(x, a) < cap) {
            tw.weights(x, a) = pi(x, a);
            tw.slope(x, a) = Scalar(1);
          } else {
            tw.weights(x, a) = cap;
          }
        }
      break;
    case TraceKind::TreeBackup:
      tw.weights = mu.cwiseProduct(pi);
      tw.slope = mu;
      break;
    case TraceKind::QLambda:
      tw.weights = p * mu;
      break;
    case TraceKind::TdLambda:
      tw.weights = p * pi;
      tw.slope.setConstant(p);
      break;
    case TraceKind::PengLambda:
      throw DomainError("Peng's Q(lambda) has no corrected kernel");
  }
  return tw;
}

/// Pi-weighted transition P^{c mu ^ pi} of the operator family.
template <typename Scalar>
CorrectedKernel<Scalar> corrected_kernel(const Mdp<Scalar>& mdp, const TabularPolicy<Scalar>& pi,
                                         const TabularPolicy<Scalar>& mu, const TraceSpec& spec) {
  spec.validate();
  require_same_shape(mdp, pi.probs(), "target policy");
  if (spec.kind != TraceKind::TdLambda) {
    require_same_shape(mdp, mu.probs(), "behavior policy");
    require_full_support(mu);
  }
  TraceWeights<Scalar> tw = trace_weights(pi.probs(), mu.probs(), spec);
  Matrix<Scalar> k = weighted_kernel(mdp, tw.weights);
  return {std::move(tw.weights), std::move(k)};
}

namespace detail {

/// (I - lambda gamma P^mu)^{-1} (lambda r^mu + (1 - lambda) T^pi v)
template <typename Scalar>
Vector<Scalar> apply_peng(const Mdp<Scalar>& mdp, const TabularPolicy<Scalar>& pi,
                          const TabularPolicy<Scalar>& mu, Scalar lambda, const Vector<Scalar>& v) {
  const Vector<Scalar> rhs = lambda * policy_reward(mdp, mu.probs()) +
                             (Scalar(1) - lambda) * bellman_backup(mdp, pi.probs(), v);
  return solve_resolvent(policy_kernel(mdp, mu.probs()), Scalar(lambda * mdp.gamma()), rhs);
}

}  // namespace detail

/// Exact expected value of the multi-step operator applied to v:
/// (I - gamma K)^{-1} (r^pi + gamma (P^pi - K) v).
template <typename Scalar>
ValueFunction<Scalar> apply_operator(const Mdp<Scalar>& mdp, const TabularPolicy<Scalar>& pi,
                                     const TabularPolicy<Scalar>& mu, const TraceSpec& spec,
                                     const ValueFunction<Scalar>& v) {
  if (v.size() != mdp.n_states()) throw ParameterError("value function size mismatch");
  if (spec.kind == TraceKind::PengLambda) {
    spec.validate();
    require_full_support(mu);
    return detail::apply_peng(mdp, pi, mu, static_cast<Scalar>(spec.lambda()), v);
  }
  const CorrectedKernel<Scalar> ck = corrected_kernel(mdp, pi, mu, spec);
  const Scalar g = mdp.gamma();
  const Vector<Scalar> rhs =
      policy_reward(mdp, pi.probs()) + g * (policy_kernel(mdp, pi.probs()) - ck.kernel) * v;
  return solve_resolvent(ck.kernel, g, rhs);
}

/// Operator truncated after t_max steps:
/// v + sum_{t < t_max} (gamma K)^t (T^pi v - v).
template <typename Scalar>
ValueFunction<Scalar> apply_truncated(const Mdp<Scalar>& mdp, const TabularPolicy<Scalar>& pi,
                                      const TabularPolicy<Scalar>& mu, const TraceSpec& spec,
                                      const ValueFunction<Scalar>& v, int t_max) {
  if (t_max < 1) throw ParameterError("t_max must be >= 1");
  if (spec.kind == TraceKind::PengLambda) throw DomainError("no truncated form for Peng's Q(lambda)");
  const CorrectedKernel<Scalar> ck = corrected_kernel(mdp, pi, mu, spec);
  const Matrix<Scalar> gk = mdp.gamma() * ck.kernel;
  Vector<Scalar> term = bellman_backup(mdp, pi.probs(), v) - v;
  Vector<Scalar> out = v + term;
  for (int t = 1; t < t_max; ++t) {
    term = gk * term;
    out += term;
  }
  return out;
}

/// m-fold composition of apply_operator.
template <typename Scalar>
ValueFunction<Scalar> apply_m_fold(const Mdp<Scalar>& mdp, const TabularPolicy<Scalar>& pi,
                                   const TabularPolicy<Scalar>& mu, const TraceSpec& spec,
                                   const ValueFunction<Scalar>& v, int m) {
  if (m < 1) throw ParameterError("m must be >= 1");
  ValueFunction<Scalar> out = v;
  for (int i = 0; i < m; ++i) out = apply_operator(mdp, pi, mu, spec, out);
  return out;
}

template <typename Scalar>
struct ContractionRate {
  Scalar eta;
  /// sum_y |Gamma(x, y)|; equals Gamma e whenever Gamma >= 0.
  Vector<Scalar> per_state;
  Matrix<Scalar> gamma_matrix;
};

/// Linear part Gamma of the operator, R v1 - R v2 = Gamma (v1 - v2), and its
/// infinity-norm modulus.
template <typename Scalar>
ContractionRate<Scalar> contraction_rate(const Mdp<Scalar>& mdp, const TabularPolicy<Scalar>& pi,
                                         const TabularPolicy<Scalar>& mu, const TraceSpec& spec) {
  const Scalar g = mdp.gamma();
  const Eigen::Index S = mdp.n_states();
  Matrix<Scalar> gm;
  if (spec.kind == TraceKind::PengLambda) {
    spec.validate();
    require_full_support(mu);
    const Scalar lambda = static_cast<Scalar>(spec.lambda());
    const Matrix<Scalar> a = Matrix<Scalar>::Identity(S, S) - lambda * g * policy_kernel(mdp, mu.probs());
    gm = (Scalar(1) - lambda) * g * a.partialPivLu().solve(policy_kernel(mdp, pi.probs()));
  } else {
    const CorrectedKernel<Scalar> ck = corrected_kernel(mdp, pi, mu, spec);
    const auto lu = (Matrix<Scalar>::Identity(S, S) - g * ck.kernel).partialPivLu();
    gm = g * lu.solve(policy_kernel(mdp, pi.probs()) - ck.kernel);
    // With w <= pi, Gamma is nonnegative and its row sums are gamma (I - gamma K)^{-1} (1 - sum_a w),
    // which avoids the rounding in the stochastic rows of P^pi.
    if ((ck.pi_weights.array() <= pi.probs().array()).all()) {
      const Vector<Scalar> leak = Vector<Scalar>::Ones(S) - ck.pi_weights.rowwise().sum();
      Vector<Scalar> per_state = g * lu.solve(leak);
      const Scalar eta = per_state.maxCoeff();
      return {eta, std::move(per_state), std::move(gm)};
    }
  }
  Vector<Scalar> per_state = gm.cwiseAbs().rowwise().sum();
  const Scalar eta = per_state.maxCoeff();
  return {eta, std::move(per_state), std::move(gm)};
}

}  // namespace domo
