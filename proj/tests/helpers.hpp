#pragma once

#include "domo/audit.hpp"
#include "domo/mdp.hpp"

namespace test {

inline domo::Mdpd random_mdp(std::uint64_t seed, int states = 20, int actions = 5, double gamma = 0.9) {
  return domo::gen_random_mdp(states, actions, 0.01, gamma, seed);
}

inline domo::SoftmaxPolicyd random_logits(int states, int actions, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(domo::derive_seed(seed, 0x54455354));
  std::normal_distribution<double> normal(0.0, scale);
  domo::Matrixd logits(states, actions);
  for (int x = 0; x < states; ++x)
    for (int a = 0; a < actions; ++a) logits(x, a) = normal(rng);
  return domo::SoftmaxPolicyd(logits);
}

inline domo::Vectord random_vector(int n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(domo::derive_seed(seed, 0x56454354));
  std::normal_distribution<double> normal(0.0, scale);
  domo::Vectord v(n);
  for (int i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

/// Single state with self-loops under every action.
inline domo::Mdpd bandit(const std::vector<double>& rewards, double gamma) {
  const int A = static_cast<int>(rewards.size());
  domo::Matrixd r(1, A);
  for (int a = 0; a < A; ++a) r(0, a) = rewards[static_cast<std::size_t>(a)];
  return domo::Mdpd(domo::Matrixd::Ones(A, 1), r, gamma);
}

inline double max_abs(const domo::Matrixd& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace test
