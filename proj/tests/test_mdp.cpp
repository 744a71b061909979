#include "helpers.hpp"

#include "domo/oracles.hpp"

#include <doctest.h>

using namespace domo;

TEST_CASE("mdp validation rejects malformed models") {
  const Matrixd p = Matrixd::Constant(2, 2, 0.5);
  const Matrixd r = Matrixd::Zero(2, 1);
  CHECK_NOTHROW(Mdpd(p, r, 0.9));
  CHECK_THROWS_AS(Mdpd(p, r, 1.0), ParameterError);
  CHECK_THROWS_AS(Mdpd(p, r, -0.1), ParameterError);
  Matrixd bad = p;
  bad(0, 0) = 0.6;
  CHECK_THROWS_AS(Mdpd(bad, r, 0.9), ParameterError);
  CHECK_THROWS_AS(Mdpd(Matrixd::Constant(3, 2, 0.5), r, 0.9), ParameterError);
  CHECK_THROWS_AS(Mdpd(p, r, 0.9, 0), ParameterError);
}

TEST_CASE("random mdp generation") {
  const Mdpd a = test::random_mdp(7);
  const Mdpd b = test::random_mdp(7);
  const Mdpd c = test::random_mdp(8);
  CHECK(a.transition() == b.transition());
  CHECK(a.reward() == b.reward());
  CHECK(a.transition() != c.transition());
  CHECK(a.n_states() == 20);
  CHECK(a.n_actions() == 5);
  CHECK(((a.transition().rowwise().sum().array() - 1.0).abs() <= 1e-12).all());
  // alpha = 0.01 concentrates rows on few successors
  const double mean_max = a.transition().rowwise().maxCoeff().mean();
  CHECK(mean_max > 0.8);
  CHECK_THROWS_AS(gen_random_mdp(1, 2, 0.01, 0.9, 0), ParameterError);
  CHECK_THROWS_AS(gen_random_mdp(3, 2, 0.0, 0.9, 0), ParameterError);
}

TEST_CASE("policies") {
  CHECK_THROWS_AS(TabularPolicyd(Matrixd::Constant(2, 2, 0.6)), ParameterError);
  const TabularPolicyd det = TabularPolicyd::deterministic({1, 0}, 3);
  CHECK(det(0, 1) == 1.0);
  CHECK(det.mode(1) == 0);
  CHECK_FALSE(det.has_full_support());
  CHECK(TabularPolicyd::uniform(2, 3).has_full_support());
  const SoftmaxPolicyd theta = test::random_logits(4, 3, 1);
  CHECK((theta.probs().rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-15);
  SoftmaxPolicyd shifted = theta;
  shifted.logits().array() += 1000.0;
  CHECK(test::max_abs(shifted.probs() - theta.probs()) < 1e-12);
  const SoftmaxPolicyd near = SoftmaxPolicyd::log_of(det, 1e-5);
  CHECK(near.probs()(0, 1) > 1.0 - 3e-5);
}

TEST_CASE("exact value matches power iteration") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Mdpd mdp = test::random_mdp(seed);
    const TabularPolicyd pi = random_policy(20, 5, seed, 0);
    const Vectord exact = exact_value(mdp, pi);
    const Vectord iterated = oracle::power_iteration_value(mdp, pi, 400);
    CHECK(test::max_abs(exact - iterated) < 1e-9);
  }
}

TEST_CASE("one-state bandit value") {
  const Mdpd mdp = test::bandit({1.0, 0.0}, 0.5);
  const Vectord v = exact_value(mdp, TabularPolicyd::deterministic({0}, 2));
  CHECK(v(0) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("optimal control matches enumeration of deterministic policies") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Mdpd mdp = test::random_mdp(seed, 4, 3);
    const auto best = oracle::enumerate_deterministic(mdp);
    const auto opt = optimal_control(mdp, 1e-12);
    CHECK(best.n_policies == 81);
    CHECK(test::max_abs(opt.value - best.best_value) < 1e-9);
  }
}

TEST_CASE("seed derivation") {
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 2, 4));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(2, 2, 3));
  // splitmix64 reference output for input 0
  CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double u = uniform01(rng);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}
