#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "sfb/envs.hpp"
#include "sfb/rng.hpp"
#include "sfb/solvers.hpp"

using namespace sfb;

namespace {

StochasticPolicy random_policy(const TabularMdp& mdp, std::uint64_t seed) {
  Rng rng(seed);
  StochasticPolicy pi = uniform_policy(mdp);
  for (int s = 0; s < mdp.n_states; ++s)
    pi.probs.row(s) = rng.dirichlet(mdp.n_actions).transpose();
  return pi;
}

RewardVector random_reward(const TabularMdp& mdp, std::uint64_t seed) {
  Rng rng(seed);
  RewardVector r;
  r.support = RewardSupport::state_action;
  r.values = Eigen::VectorXd::NullaryExpr(
      mdp.n_pairs(), [&rng](Eigen::Index) { return rng.uniform(-1.0, 1.0); });
  return r;
}

}  // namespace

TEST_CASE("log_sum_exp is shift-stable") {
  Eigen::VectorXd v(2);
  v << 1000.0, 1000.0;
  CHECK(log_sum_exp(v) == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-12));
  v << -1000.0, -1001.0;
  CHECK(log_sum_exp(v) ==
        doctest::Approx(-1000.0 + std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));
  Eigen::VectorXd one(1);
  one << 3.5;
  CHECK(log_sum_exp(one) == doctest::Approx(3.5).epsilon(1e-15));
}

TEST_CASE("softmax matches its definition and ignores shifts") {
  Rng rng(5);
  const Eigen::VectorXd v = rng.gaussian_vector(6);
  const Eigen::VectorXd p = softmax(v);
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
  const double lse = log_sum_exp(v);
  for (int i = 0; i < 6; ++i)
    CHECK(p[i] == doctest::Approx(std::exp(v[i] - lse)).epsilon(1e-12));
  const Eigen::VectorXd shifted = softmax(v.array() + 123.0);
  CHECK((p - shifted).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("soft value iteration on the coin flip gives q = log 2") {
  // Zero reward, one state, two actions, gamma 1/2: V = log 2 + V/2, so
  // V = 2 log 2 and Q = V/2 = log 2; the policy is uniform.
  const CounterexampleEnv env = make_counterexample(0.5);
  RewardVector zero;
  zero.support = RewardSupport::state_action;
  zero.values = Eigen::VectorXd::Zero(2);
  const SolveResult sol = soft_value_iteration(env.mdp, zero);
  CHECK(sol.q[0] == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  CHECK(sol.q[1] == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  CHECK(sol.policy.probs(0, 0) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("soft value iteration satisfies its Bellman fixed point") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const TabularMdp mdp = make_random_mdp(5, 3, 0.9, 40 + seed);
    const RewardVector r = random_reward(mdp, 50 + seed);
    const SolveResult sol = soft_value_iteration(mdp, r);
    Eigen::VectorXd v(mdp.n_states);
    for (int s = 0; s < mdp.n_states; ++s)
      v[s] = log_sum_exp(sol.q.segment(s * mdp.n_actions, mdp.n_actions));
    const Eigen::VectorXd bellman = r.over_pairs(mdp) + mdp.discount * (mdp.transition * v);
    CHECK((sol.q - bellman).cwiseAbs().maxCoeff() < 1e-8);
    // policy is the softmax of q per state
    for (int s = 0; s < mdp.n_states; ++s) {
      const Eigen::VectorXd row = softmax(sol.q.segment(s * mdp.n_actions, mdp.n_actions));
      CHECK((sol.policy.probs.row(s).transpose() - row).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("soft value iteration recovers a policy from its own log probabilities") {
  // With R(s,a) = log pi(a|s), the entropy-regularised optimum is pi itself:
  // the certification route used throughout the interpolation suites.
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const TabularMdp mdp = make_random_mdp(4, 3, 0.85, 70 + seed);
    const StochasticPolicy pi = random_policy(mdp, 80 + seed);
    RewardVector r;
    r.support = RewardSupport::state_action;
    r.values.resize(mdp.n_pairs());
    for (int s = 0; s < mdp.n_states; ++s)
      for (int a = 0; a < mdp.n_actions; ++a)
        r.values[mdp.sa_index(s, a)] = std::log(pi.probs(s, a));
    const SolveResult sol = soft_value_iteration(mdp, r);
    CHECK(policy_total_variation(sol.policy, pi) <= 1e-6);
  }
}

TEST_CASE("hard value iteration satisfies Bellman optimality with low-index ties") {
  const TabularMdp mdp = make_random_mdp(5, 3, 0.9, 90);
  const RewardVector r = random_reward(mdp, 91);
  const SolveResult sol = hard_value_iteration(mdp, r);
  Eigen::VectorXd v(mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s)
    v[s] = sol.q.segment(s * mdp.n_actions, mdp.n_actions).maxCoeff();
  const Eigen::VectorXd bellman = r.over_pairs(mdp) + mdp.discount * (mdp.transition * v);
  CHECK((sol.q - bellman).cwiseAbs().maxCoeff() < 1e-8);
  for (int s = 0; s < mdp.n_states; ++s) {
    int argmax = 0;
    sol.q.segment(s * mdp.n_actions, mdp.n_actions).maxCoeff(&argmax);
    CHECK(sol.policy.probs(s, argmax) == 1.0);
  }

  // Ties break to the lowest action: symmetric coin flip.
  const CounterexampleEnv env = make_counterexample(0.5);
  RewardVector zero;
  zero.support = RewardSupport::state_action;
  zero.values = Eigen::VectorXd::Zero(2);
  const SolveResult tie = hard_value_iteration(env.mdp, zero);
  CHECK(tie.policy.probs(0, 0) == 1.0);
  CHECK(tie.policy.probs(0, 1) == 0.0);
}

TEST_CASE("entropy critic solves its defining recursion") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const TabularMdp mdp = make_random_mdp(4, 3, 0.8, 110 + seed);
    const StochasticPolicy pi = random_policy(mdp, 120 + seed);
    const Eigen::VectorXd qh = entropy_critic(mdp, pi);
    REQUIRE(qh.size() == mdp.n_pairs());
    Eigen::VectorXd h(mdp.n_states), vh(mdp.n_states);
    for (int s = 0; s < mdp.n_states; ++s) {
      h[s] = 0.0;
      vh[s] = 0.0;
      for (int a = 0; a < mdp.n_actions; ++a) {
        const double p = pi.probs(s, a);
        if (p > 0.0) h[s] -= p * std::log(p);
        vh[s] += p * qh[mdp.sa_index(s, a)];
      }
    }
    const Eigen::VectorXd rhs = mdp.discount * (mdp.transition * (h + vh));
    CHECK((qh - rhs).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("entropy critic of the uniform coin flip is log 2") {
  // Qh = g (log 2 + Qh) with g = 1/2 gives Qh = log 2 for both pairs.
  const CounterexampleEnv env = make_counterexample(0.5);
  const Eigen::VectorXd qh = entropy_critic(env.mdp, uniform_policy(env.mdp));
  CHECK(qh[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(qh[1] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("policy total variation is half the worst-state L1 gap") {
  const TabularMdp mdp = make_random_mdp(2, 2, 0.9, 130);
  StochasticPolicy a = uniform_policy(mdp);
  StochasticPolicy b = uniform_policy(mdp);
  CHECK(policy_total_variation(a, b) == 0.0);
  b.probs(1, 0) = 0.9;
  b.probs(1, 1) = 0.1;
  CHECK(policy_total_variation(a, b) == doctest::Approx(0.4).epsilon(1e-12));
}
