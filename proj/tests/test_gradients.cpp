#include "helpers.hpp"

#include "domo/gradients.hpp"
#include "domo/operators.hpp"
#include "domo/oracles.hpp"

#include <doctest.h>

using namespace domo;

namespace {

double relative_error(const Matrixd& analytic, const Matrixd& reference) {
  return test::max_abs(analytic - reference) / std::max(test::max_abs(reference), 1e-8);
}

/// Projection of each logit row onto the simplex tangent space (zero row sum).
Matrixd tangent(const Matrixd& flat, int n_actions) {
  Matrixd out = flat;
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    for (Eigen::Index c = 0; c < out.cols(); c += n_actions) {
      const double mean = out.row(r).segment(c, n_actions).mean();
      out.row(r).segment(c, n_actions).array() -= mean;
    }
  return out;
}

}  // namespace

TEST_CASE("bandit softmax gradient") {
  const Mdpd mdp = test::bandit({1.0, 0.0}, 0.0);
  const SoftmaxPolicyd theta = SoftmaxPolicyd::uniform(1, 2);
  const PolicyGradientd g = exact_policy_gradient(mdp, theta);
  CHECK(g(0, 0, 0) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(g(0, 0, 1) == doctest::Approx(-0.25).epsilon(1e-14));
}

TEST_CASE("identical actions give a zero gradient") {
  Matrixd p(6, 3);
  p << 0.2, 0.3, 0.5, 0.2, 0.3, 0.5, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.0, 0.5, 0.5;
  Matrixd r(3, 2);
  r << 1.0, 1.0, -2.0, -2.0, 0.5, 0.5;
  const Mdpd mdp(p, r, 0.9);
  const SoftmaxPolicyd theta = test::random_logits(3, 2, 4);
  CHECK(test::max_abs(exact_policy_gradient(mdp, theta).matrix()) < 1e-12);
}

TEST_CASE("exact policy gradient matches central differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Mdpd mdp = test::random_mdp(seed);
    const SoftmaxPolicyd theta = test::random_logits(20, 5, seed);
    const Matrixd fd =
        oracle::finite_difference([&](const SoftmaxPolicyd& th) { return exact_value(mdp, th.policy()); }, theta);
    CHECK(relative_error(exact_policy_gradient(mdp, theta).matrix(), fd) <= 1e-5);
  }
}

TEST_CASE("operator gradient matches central differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Mdpd mdp = test::random_mdp(seed);
    const SoftmaxPolicyd theta = test::random_logits(20, 5, seed);
    const TabularPolicyd mu = random_policy(20, 5, seed, 1);
    const Vectord v = test::random_vector(20, seed, 5.0);
    for (const TraceSpec& spec : {TraceSpec::vtrace(0.0), TraceSpec::vtrace(1.0), TraceSpec::vtrace(10.0),
                                  TraceSpec::tree_backup(), TraceSpec::q_lambda(0.7), TraceSpec::peng_lambda(0.5)}) {
      const Matrixd fd = oracle::finite_difference(
          [&](const SoftmaxPolicyd& th) { return apply_operator(mdp, th.policy(), mu, spec, v); }, theta);
      CAPTURE(to_string(spec.kind));
      CHECK(relative_error(exact_operator_gradient(mdp, theta, mu, spec, v).matrix(), fd) <= 1e-5);
    }
  }
}

TEST_CASE("truncated operator gradient matches central differences") {
  const Mdpd mdp = test::random_mdp(2, 8, 3);
  const SoftmaxPolicyd theta = test::random_logits(8, 3, 2);
  const TabularPolicyd mu = random_policy(8, 3, 2, 1);
  const Vectord v = test::random_vector(8, 2);
  for (int t_max : {1, 3, 10}) {
    const TraceSpec spec = TraceSpec::vtrace(1.0);
    const Matrixd fd = oracle::finite_difference(
        [&](const SoftmaxPolicyd& th) { return apply_truncated(mdp, th.policy(), mu, spec, v, t_max); }, theta);
    CHECK(relative_error(truncated_operator_gradient(mdp, theta, mu, spec, v, t_max).matrix(), fd) <= 1e-5);
  }
}

TEST_CASE("operator gradient reductions") {
  const Mdpd mdp = test::random_mdp(9);
  const SoftmaxPolicyd theta = test::random_logits(20, 5, 9);
  const TabularPolicyd pi = theta.policy();
  const TabularPolicyd mu = random_policy(20, 5, 9, 1);
  const Vectord v = exact_value(mdp, pi);
  SUBCASE("c_bar = 0 keeps only the first term") {
    const Matrixd q = exact_q(mdp, pi);
    const Matrixd local = softmax_pullback(pi.probs(), q);
    const Matrixd g = exact_operator_gradient(mdp, theta, mu, TraceSpec::vtrace(0.0), v).matrix();
    for (int x = 0; x < 20; ++x)
      for (int y = 0; y < 20; ++y)
        for (int a = 0; a < 5; ++a) CHECK(g(x, y * 5 + a) == doctest::Approx(x == y ? local(x, a) : 0.0).epsilon(1e-10).scale(1.0));
  }
  SUBCASE("c_bar beyond every ratio is the policy gradient") {
    CHECK(test::max_abs(exact_operator_gradient(mdp, theta, mu, TraceSpec::vtrace(1e9), v).matrix() -
                        exact_policy_gradient(mdp, theta).matrix()) <= 1e-7);
  }
}

TEST_CASE("gradient gap bound") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Mdpd mdp = test::random_mdp(seed);
    const SoftmaxPolicyd theta = test::random_logits(20, 5, seed);
    const TabularPolicyd mu = random_policy(20, 5, seed, 1);
    for (double c : {0.0, 0.5, 1.0, 10.0}) {
      const auto check = gradient_bound_check(mdp, theta, mu, TraceSpec::vtrace(c));
      CHECK((check.lhs - check.rhs).maxCoeff() <= 1e-8);
    }
    const auto uncapped = gradient_bound_check(mdp, theta, mu, TraceSpec::vtrace(1e9));
    CHECK(uncapped.lhs.maxCoeff() <= 1e-7);
  }
}

TEST_CASE("shift invariance of the logit gradients") {
  const Mdpd mdp = test::random_mdp(4, 6, 3);
  const SoftmaxPolicyd theta = test::random_logits(6, 3, 4);
  SoftmaxPolicyd shifted = theta;
  shifted.logits().row(2).array() += 3.0;
  const TabularPolicyd mu = random_policy(6, 3, 4, 1);
  const Vectord v = test::random_vector(6, 4);
  const TraceSpec spec = TraceSpec::vtrace(1.0);
  const Matrixd a = exact_operator_gradient(mdp, theta, mu, spec, v).matrix();
  const Matrixd b = exact_operator_gradient(mdp, shifted, mu, spec, v).matrix();
  CHECK(test::max_abs(tangent(a, 3) - tangent(b, 3)) < 1e-9);
  // the softmax Jacobian annihilates constant row shifts
  const Matrixd g = exact_policy_gradient(mdp, theta).matrix();
  CHECK(test::max_abs(g - tangent(g, 3)) < 1e-9);
}

TEST_CASE("operator gradient is continuous in c_bar away from clip boundaries") {
  const Mdpd mdp = test::random_mdp(11);
  const SoftmaxPolicyd theta = test::random_logits(20, 5, 11);
  const TabularPolicyd mu = random_policy(20, 5, 11, 1);
  const Vectord v = test::random_vector(20, 11);
  const Matrixd a = exact_operator_gradient(mdp, theta, mu, TraceSpec::vtrace(1.0), v).matrix();
  const Matrixd b = exact_operator_gradient(mdp, theta, mu, TraceSpec::vtrace(1.0 + 1e-9), v).matrix();
  CHECK(test::max_abs(a - b) <= 1e-6);
}

TEST_CASE("objective gradient is the weighted operator gradient") {
  const Mdpd mdp = test::random_mdp(12, 7, 3);
  const SoftmaxPolicyd theta = test::random_logits(7, 3, 12);
  const TabularPolicyd mu = random_policy(7, 3, 12, 1);
  const Vectord v = test::random_vector(7, 12);
  const Vectord w = Vectord::Constant(7, 1.0 / 7);
  const TraceSpec spec = TraceSpec::vtrace(2.0);
  const auto og = operator_objective_gradient(mdp, theta, mu, spec, v, w);
  const PolicyGradientd full = exact_operator_gradient(mdp, theta, mu, spec, v);
  CHECK(test::max_abs(og.gradient - full.state_average()) < 1e-12);
  CHECK(og.objective == doctest::Approx(w.dot(apply_operator(mdp, theta.policy(), mu, spec, v))).epsilon(1e-12));
}
