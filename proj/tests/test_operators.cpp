#include "helpers.hpp"

#include "domo/operators.hpp"
#include "domo/oracles.hpp"

#include <doctest.h>

using namespace domo;

namespace {

struct Instance {
  Mdpd mdp;
  TabularPolicyd pi;
  TabularPolicyd mu;
};

Instance instance(std::uint64_t seed, int states = 20, int actions = 5) {
  return {test::random_mdp(seed, states, actions), random_policy(states, actions, seed, 0),
          random_policy(states, actions, seed, 1)};
}

std::vector<TraceSpec> families() {
  return {TraceSpec::vtrace(0.0), TraceSpec::vtrace(0.5), TraceSpec::vtrace(1.0),
          TraceSpec::vtrace(10.0), TraceSpec::tree_backup(), TraceSpec::q_lambda(0.7)};
}

}  // namespace

TEST_CASE("trace spec validation") {
  CHECK_THROWS_AS(TraceSpec::vtrace(-1.0), ParameterError);
  CHECK_THROWS_AS(TraceSpec::q_lambda(1.5), ParameterError);
  CHECK_THROWS_AS(TraceSpec::vtrace(2.0, 1.0), ParameterError);
  CHECK(trace_kind_from_string(to_string(TraceKind::TreeBackup)) == TraceKind::TreeBackup);
  CHECK_THROWS_AS(trace_kind_from_string("retrace"), ParameterError);
}

TEST_CASE("value of the target policy is the fixed point of every family") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto [mdp, pi, mu] = instance(seed);
    const Vectord v = exact_value(mdp, pi);
    for (const TraceSpec& spec : families()) {
      CAPTURE(to_string(spec.kind));
      CAPTURE(spec.param);
      CHECK(test::max_abs(apply_operator(mdp, pi, mu, spec, v) - v) <= 1e-8);
    }
  }
}

TEST_CASE("contraction inequality holds with the computed modulus") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto [mdp, pi, mu] = instance(seed);
    for (const TraceSpec& spec : families()) {
      const double eta = contraction_rate(mdp, pi, mu, spec).eta;
      for (std::uint64_t k = 0; k < 5; ++k) {
        const Vectord v1 = test::random_vector(20, 2 * k, 10.0);
        const Vectord v2 = test::random_vector(20, 2 * k + 1, 10.0);
        const double lhs = test::max_abs(apply_operator(mdp, pi, mu, spec, v1) - apply_operator(mdp, pi, mu, spec, v2));
        CHECK(lhs <= eta * test::max_abs(v1 - v2) + 1e-9);
      }
      if (spec.kind != TraceKind::QLambda) CHECK(eta <= mdp.gamma() + 1e-12);
    }
  }
}

TEST_CASE("uncorrected Q(lambda) can expand beyond gamma far off-policy") {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto [mdp, pi, mu] = instance(seed);
    worst = std::max(worst, contraction_rate(mdp, pi, mu, TraceSpec::q_lambda(0.7)).eta);
  }
  CHECK(worst > 0.9);
}

TEST_CASE("V-trace reductions at the ends of the clip range") {
  const auto [mdp, pi, mu] = instance(3);
  const Vectord v = test::random_vector(20, 4, 10.0);
  SUBCASE("c_bar = 0 is the one-step backup with rate gamma") {
    const TraceSpec spec = TraceSpec::vtrace(0.0);
    CHECK(test::max_abs(apply_operator(mdp, pi, mu, spec, v) - bellman_backup(mdp, pi.probs(), v)) <= 1e-12);
    CHECK(contraction_rate(mdp, pi, mu, spec).eta == mdp.gamma());
  }
  SUBCASE("c_bar above every ratio returns the value with rate zero") {
    const TraceSpec spec = TraceSpec::vtrace(1e9);
    CHECK(test::max_abs(apply_operator(mdp, pi, mu, spec, v) - exact_value(mdp, pi)) <= 1e-8);
    CHECK(contraction_rate(mdp, pi, mu, spec).eta <= 1e-10);
  }
  SUBCASE("on-policy with c_bar >= 1 is full evaluation") {
    const TraceSpec spec = TraceSpec::vtrace(1.0);
    CHECK(test::max_abs(apply_operator(mdp, pi, pi, spec, v) - exact_value(mdp, pi)) <= 1e-8);
  }
}

TEST_CASE("rate matches its series form") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto [mdp, pi, mu] = instance(seed, 6, 3);
    for (const TraceSpec& spec : {TraceSpec::vtrace(0.5), TraceSpec::vtrace(2.0), TraceSpec::tree_backup()}) {
      const Vectord series = oracle::contraction_series(mdp, pi, mu, spec, 2000);
      CHECK(test::max_abs(contraction_rate(mdp, pi, mu, spec).per_state - series) < 1e-10);
    }
  }
}

TEST_CASE("gamma = 0 collapses every rate") {
  const Mdpd mdp = test::random_mdp(1, 5, 3, 0.0);
  const TabularPolicyd pi = random_policy(5, 3, 1, 0);
  const TabularPolicyd mu = random_policy(5, 3, 1, 1);
  for (const TraceSpec& spec : families()) CHECK(contraction_rate(mdp, pi, mu, spec).eta == 0.0);
}

TEST_CASE("truncated operator converges to the full operator") {
  const auto [mdp, pi, mu] = instance(5);
  const Vectord v = test::random_vector(20, 1);
  for (const TraceSpec& spec : {TraceSpec::vtrace(1.0), TraceSpec::tree_backup()}) {
    const Vectord full = apply_operator(mdp, pi, mu, spec, v);
    CHECK(test::max_abs(apply_truncated(mdp, pi, mu, spec, v, 1) - bellman_backup(mdp, pi.probs(), v)) < 1e-12);
    CHECK(test::max_abs(apply_truncated(mdp, pi, mu, spec, v, 400) - full) < 1e-10);
  }
  CHECK_THROWS_AS(apply_truncated(mdp, pi, mu, TraceSpec::vtrace(1.0), v, 0), ParameterError);
}

TEST_CASE("m-fold application approaches the fixed point") {
  const auto [mdp, pi, mu] = instance(6);
  const Vectord v = test::random_vector(20, 2);
  const TraceSpec spec = TraceSpec::vtrace(1.0);
  const Vectord once = apply_m_fold(mdp, pi, mu, spec, v, 1);
  CHECK(test::max_abs(once - apply_operator(mdp, pi, mu, spec, v)) == 0.0);
  const Vectord many = apply_m_fold(mdp, pi, mu, spec, v, 300);
  CHECK(test::max_abs(many - exact_value(mdp, pi)) < 1e-8);
}

TEST_CASE("Peng's operator") {
  const auto [mdp, pi, mu] = instance(8);
  const Vectord v = test::random_vector(20, 3);
  SUBCASE("lambda = 0 is the one-step backup") {
    CHECK(test::max_abs(apply_operator(mdp, pi, mu, TraceSpec::peng_lambda(0.0), v) -
                        bellman_backup(mdp, pi.probs(), v)) < 1e-12);
  }
  SUBCASE("closed form against its series") {
    const double lambda = 0.6;
    const double g = mdp.gamma();
    const Matrixd pmu = policy_kernel(mdp, mu.probs());
    const Vectord tail = (1.0 - lambda) * bellman_backup(mdp, pi.probs(), v) + lambda * policy_reward(mdp, mu.probs());
    Vectord series = Vectord::Zero(20);
    Vectord term = tail;
    for (int k = 0; k < 600; ++k) {
      series += term;
      term = lambda * g * pmu * term;
    }
    CHECK(test::max_abs(apply_operator(mdp, pi, mu, TraceSpec::peng_lambda(lambda), v) - series) < 1e-10);
  }
  SUBCASE("rate is (1 - lambda) gamma / (1 - lambda gamma)") {
    const double lambda = 0.5;
    const double g = mdp.gamma();
    CHECK(contraction_rate(mdp, pi, mu, TraceSpec::peng_lambda(lambda)).eta ==
          doctest::Approx((1.0 - lambda) * g / (1.0 - lambda * g)).epsilon(1e-12));
  }
}

TEST_CASE("behavior without full support is rejected") {
  const Mdpd mdp = test::random_mdp(1, 3, 2);
  const TabularPolicyd pi = TabularPolicyd::uniform(3, 2);
  const TabularPolicyd mu = TabularPolicyd::deterministic({0, 1, 0}, 2);
  CHECK_THROWS_AS(apply_operator(mdp, pi, mu, TraceSpec::vtrace(1.0), Vectord(Vectord::Zero(3))), DomainError);
}
