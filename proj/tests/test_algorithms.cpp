#include "helpers.hpp"

#include "domo/algorithms.hpp"
#include "domo/experiments.hpp"
#include "domo/operators.hpp"
#include "domo/oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace domo;

TEST_CASE("behavior policies") {
  const TabularPolicyd prev = TabularPolicyd::deterministic({0, 2}, 3);
  const TabularPolicyd mixed = Behavior::mixed_previous(0.3).at(prev);
  CHECK(mixed(0, 0) == doctest::Approx(0.7 + 0.1));
  CHECK(mixed(0, 1) == doctest::Approx(0.1));
  CHECK(mixed.has_full_support());
  const Behavior fixed(TabularPolicyd::uniform(2, 3));
  CHECK(fixed.describe() == "uniform");
  CHECK(test::max_abs(fixed.at(prev).probs() - TabularPolicyd::uniform(2, 3).probs()) == 0.0);
}

TEST_CASE("inner ascent") {
  const Mdpd mdp = test::random_mdp(1, 6, 3);
  const TabularPolicyd mu = random_policy(6, 3, 1, 1);
  const Vectord v = test::random_vector(6, 1);
  const TraceSpec spec = TraceSpec::vtrace(1.0);
  const SoftmaxPolicyd start = SoftmaxPolicyd::uniform(6, 3);
  SUBCASE("fixed mode takes exactly n steps") {
    const auto res = inner_maximize(mdp, mu, spec, v, start, InnerAscentConfig::fixed(7, 0.5));
    CHECK(res.steps == 7);
  }
  SUBCASE("converged ascent does not lose to its starting point") {
    InnerAscentConfig cfg = InnerAscentConfig::converge();
    const auto res = inner_maximize(mdp, mu, spec, v, start, cfg);
    const double init = apply_operator(mdp, SoftmaxPolicyd::log_of(greedy_policy(mdp, v), 1e-5).policy(), mu, spec, v).mean();
    CHECK(res.objective >= init - 1e-12);
    CHECK(res.objective <= exact_improvement(mdp, mu, spec, v).value.mean() + 1e-9);
  }
  SUBCASE("exact mode is not an ascent") {
    CHECK_THROWS_AS(inner_maximize(mdp, mu, spec, v, start, InnerAscentConfig::exact()), ParameterError);
  }
  SUBCASE("invalid settings") {
    InnerAscentConfig cfg = InnerAscentConfig::fixed(0);
    CHECK_THROWS_AS(cfg.validate(), ParameterError);
  }
}

TEST_CASE("exact improvement attains every per-state maximum") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Mdpd mdp = gen_random_mdp(3, 2, 0.01, 0.9, seed);
    const TabularPolicyd mu = random_policy(3, 2, seed, 1);
    const Vectord v = test::random_vector(3, seed);
    for (const TraceSpec& spec : {TraceSpec::vtrace(0.5), TraceSpec::vtrace(1.0), TraceSpec::vtrace(10.0),
                                  TraceSpec::tree_backup(), TraceSpec::q_lambda(0.7)}) {
      const ExactImprovement ex = exact_improvement(mdp, mu, spec, v);
      CHECK(test::max_abs(ex.value - apply_operator(mdp, ex.policy, mu, spec, v)) < 1e-10);
      CHECK(test::max_abs(ex.value - oracle::per_state_maxima(mdp, mu, spec, v)) <= 1e-3);
    }
  }
}

TEST_CASE("Peng improvement is the one-step greedy policy") {
  const Mdpd mdp = test::random_mdp(3, 6, 3);
  const TabularPolicyd mu = random_policy(6, 3, 3, 1);
  const Vectord v = test::random_vector(6, 3);
  const ExactImprovement ex = exact_improvement(mdp, mu, TraceSpec::peng_lambda(0.5), v);
  CHECK(test::max_abs(ex.policy.probs() - greedy_policy(mdp, v).probs()) == 0.0);
}

TEST_CASE("lambda-greedy against the surrogate-MDP oracle") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Mdpd mdp = test::random_mdp(seed, 8, 3);
    const Vectord v = test::random_vector(8, seed);
    for (double lambda : {0.0, 0.5, 0.9}) {
      const ExactImprovement ex = exact_improvement(mdp, TabularPolicyd::uniform(8, 3), TraceSpec::td_lambda(lambda), v);
      const TabularPolicyd oracle_policy = oracle::lambda_greedy(mdp, lambda, v);
      const TraceSpec spec = TraceSpec::td_lambda(lambda);
      const TabularPolicyd uniform = TabularPolicyd::uniform(8, 3);
      CHECK(test::max_abs(ex.value - apply_operator(mdp, oracle_policy, uniform, spec, v)) < 1e-9);
    }
  }
}

TEST_CASE("control recursions") {
  const Mdpd mdp = test::random_mdp(4);
  const Behavior mu = Behavior::mixed_previous(0.1);
  const TraceSpec spec = TraceSpec::vtrace(10.0);
  const int iters = 15;
  SUBCASE("value iteration error contracts") {
    const IterationTrace t = run_vi(mdp, iters);
    REQUIRE(t.iterations() == iters);
    CHECK(t.errors_inf.back() < t.errors_inf.front());
    CHECK(t.algorithm == "vi");
  }
  SUBCASE("exact DoMo-VI obeys its envelope") {
    const IterationTrace t = run_domo_vi(mdp, mu, spec, iters, InnerAscentConfig::exact());
    const auto env = convergence_envelope(t, mdp.reward_bound(), mdp.gamma());
    REQUIRE(env.size() == static_cast<std::size_t>(iters));
    CHECK(env.front() == doctest::Approx(4.0 * mdp.reward_bound() / 0.01));
    for (int i = 0; i < iters; ++i) CHECK(t.errors_inf[static_cast<std::size_t>(i)] <= env[static_cast<std::size_t>(i)] + 1e-6);
    CHECK(t.eta_seq.size() == static_cast<std::size_t>(iters));
    CHECK(t.eta_star.has_value());
  }
  SUBCASE("lambda-PI follows its rate") {
    for (double lambda : {0.5, 0.9}) {
      const IterationTrace t = run_lambda_pi(mdp, lambda, iters, InnerAscentConfig::exact());
      const double rate = 0.9 * (1.0 - lambda) / (1.0 - 0.9 * lambda);
      const double scale = 4.0 * mdp.reward_bound() / 0.01;
      for (int i = 0; i < iters; ++i)
        CHECK(t.errors_inf[static_cast<std::size_t>(i)] <= std::pow(rate, i) * scale + 1e-6);
    }
  }
  SUBCASE("DoMo-AC with more steps ends closer") {
    const IterationTrace few = run_domo_ac_tabular(mdp, mu, spec, iters, InnerAscentConfig::fixed(1));
    const IterationTrace many = run_domo_ac_tabular(mdp, mu, spec, iters, InnerAscentConfig::fixed(100));
    CHECK(few.algorithm == "domo_ac_n1");
    CHECK(many.errors_l2.back() <= few.errors_l2.back() + 1e-9);
  }
}

TEST_CASE("online actor-critic on the two-state chain") {
  const Mdpd chain = two_state_chain(0.9);
  CHECK(exact_value(chain, greedy_policy(chain, optimal_control(chain, 1e-12).value))(1) == doctest::Approx(10.0));
  OnlineAcConfig cfg;
  cfg.total_iterations = 2000;
  const IterationTrace t = run_domo_ac_online(chain, TraceSpec::vtrace(1.0, 1.0), cfg, 0);
  REQUIRE(t.iterations() == 2000);
  CHECK_FALSE(t.diverged_at.has_value());
  CHECK(t.errors_l2.back() < 0.05 * t.errors_l2.front());
  const IterationTrace again = run_domo_ac_online(chain, TraceSpec::vtrace(1.0, 1.0), cfg, 0);
  CHECK(again.errors_l2 == t.errors_l2);
}
