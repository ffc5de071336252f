#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "sfb/envs.hpp"
#include "sfb/mdp.hpp"
#include "sfb/rng.hpp"
#include "sfb/solvers.hpp"

using namespace sfb;

namespace {

// Independent route to the normalized successor measure: truncated power
// series (1-g) sum_t g^t (P_pi)^t over the pair chain, run to a horizon where
// the discarded tail is below 1e-8.
Eigen::MatrixXd power_series_successor(const TabularMdp& mdp, const StochasticPolicy& pi) {
  const Eigen::MatrixXd chain = sa_chain(mdp, pi);
  const int n = mdp.n_pairs();
  const int horizon =
      static_cast<int>(std::ceil(std::log(1e-8) / std::log(mdp.discount)));
  Eigen::MatrixXd acc = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd pt = Eigen::MatrixXd::Identity(n, n);
  for (int t = 1; t <= horizon; ++t) {
    pt = pt * chain;
    acc += std::pow(mdp.discount, t) * pt;
  }
  return (1.0 - mdp.discount) * acc;
}

StochasticPolicy random_policy(const TabularMdp& mdp, std::uint64_t seed) {
  Rng rng(seed);
  StochasticPolicy pi = uniform_policy(mdp);
  for (int s = 0; s < mdp.n_states; ++s)
    pi.probs.row(s) = rng.dirichlet(mdp.n_actions).transpose();
  return pi;
}

}  // namespace

TEST_CASE("mdp validation rejects malformed inputs") {
  TabularMdp mdp = make_random_mdp(3, 2, 0.9, 0);
  CHECK_NOTHROW(mdp.validate());
  CHECK(mdp.n_pairs() == 6);
  CHECK(mdp.sa_index(2, 1) == 5);

  TabularMdp bad = mdp;
  bad.transition(0, 0) += 0.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = mdp;
  bad.transition(1, 0) = -0.1;
  bad.transition(1, 1) += 0.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = mdp;
  bad.discount = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = mdp;
  bad.initial_dist = Eigen::VectorXd::Ones(2);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("reward vectors expand state support over pairs") {
  const TabularMdp mdp = make_random_mdp(3, 2, 0.9, 1);
  RewardVector r;
  r.support = RewardSupport::state;
  r.values = Eigen::Vector3d(1.0, 2.0, 3.0);
  r.validate();
  const Eigen::VectorXd pairs = r.over_pairs(mdp);
  REQUIRE(pairs.size() == 6);
  for (int s = 0; s < 3; ++s)
    for (int a = 0; a < 2; ++a) CHECK(pairs[mdp.sa_index(s, a)] == r.values[s]);

  RewardVector bad = r;
  bad.values = Eigen::Vector2d(1.0, 2.0);
  CHECK_THROWS_AS(bad.over_pairs(mdp), std::invalid_argument);
}

TEST_CASE("pair chain composes the transition kernel with the policy") {
  const TabularMdp mdp = make_random_mdp(4, 3, 0.8, 2);
  const StochasticPolicy pi = random_policy(mdp, 7);
  const Eigen::MatrixXd chain = sa_chain(mdp, pi);
  REQUIRE(chain.rows() == 12);
  REQUIRE(chain.cols() == 12);
  for (int r = 0; r < chain.rows(); ++r) CHECK(chain.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
  for (int s = 0; s < 4; ++s)
    for (int a = 0; a < 3; ++a)
      for (int sp = 0; sp < 4; ++sp)
        for (int ap = 0; ap < 3; ++ap)
          CHECK(chain(mdp.sa_index(s, a), mdp.sa_index(sp, ap)) ==
                doctest::Approx(mdp.transition(mdp.sa_index(s, a), sp) * pi.probs(sp, ap))
                    .epsilon(1e-12));
}

TEST_CASE("successor measure matches the truncated power series") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const TabularMdp mdp = make_random_mdp(4, 3, 0.85, 100 + seed);
    const StochasticPolicy pi = random_policy(mdp, 200 + seed);
    const SuccessorMeasure m = successor_measure(mdp, pi);
    const Eigen::MatrixXd oracle = power_series_successor(mdp, pi);
    CHECK((m.sa_matrix - oracle).cwiseAbs().maxCoeff() < 1e-6);

    // marginals: mu0 lifted by pi, pushed through the pair-level matrix
    Eigen::VectorXd mu0_pairs(mdp.n_pairs());
    for (int s = 0; s < mdp.n_states; ++s)
      for (int a = 0; a < mdp.n_actions; ++a)
        mu0_pairs[mdp.sa_index(s, a)] = mdp.initial_dist[s] * pi.probs(s, a);
    const Eigen::VectorXd marg = oracle.transpose() * mu0_pairs;
    CHECK((m.marginal - marg).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(m.marginal.sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(m.state_marginal.sum() == doctest::Approx(1.0).epsilon(1e-9));
    for (int s = 0; s < mdp.n_states; ++s) {
      double mass = 0.0;
      for (int a = 0; a < mdp.n_actions; ++a) mass += m.marginal[mdp.sa_index(s, a)];
      CHECK(m.state_marginal[s] == doctest::Approx(mass).epsilon(1e-10));
    }
  }
}

TEST_CASE("occupancy marginals agree with the dense pair solve") {
  const TabularMdp mdp = make_random_mdp(5, 3, 0.9, 11);
  const StochasticPolicy pi = random_policy(mdp, 12);
  const SuccessorMeasure dense = successor_measure(mdp, pi);
  const SuccessorMeasure light = occupancy_marginals(mdp, pi);
  CHECK(light.sa_matrix.size() == 0);
  CHECK((light.marginal - dense.marginal).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((light.state_marginal - dense.state_marginal).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("state occupancy solves its defining linear system") {
  const TabularMdp mdp = make_random_mdp(4, 2, 0.7, 3);
  const StochasticPolicy pi = random_policy(mdp, 4);
  const Eigen::VectorXd occ = state_occupancy(mdp, pi);
  // (I - g P_pi^T) occ = (1-g) mu0 with P_pi the state chain under pi
  Eigen::MatrixXd p_pi = Eigen::MatrixXd::Zero(4, 4);
  for (int s = 0; s < 4; ++s)
    for (int a = 0; a < 2; ++a)
      p_pi.row(s) += pi.probs(s, a) * mdp.transition.row(mdp.sa_index(s, a));
  const Eigen::VectorXd residual =
      (Eigen::MatrixXd::Identity(4, 4) - mdp.discount * p_pi.transpose()) * occ -
      (1.0 - mdp.discount) * mdp.initial_dist;
  CHECK(residual.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("dense pair solve refuses oversized models, marginals do not") {
  const GridDidacticEnv grid = make_grid_env(9, 0.5);
  REQUIRE(grid.mdp.n_pairs() == 6561);
  const StochasticPolicy pi = uniform_policy(grid.mdp);
  CHECK_THROWS_AS(successor_measure(grid.mdp, pi), std::invalid_argument);
  const SuccessorMeasure m = occupancy_marginals(grid.mdp, pi);
  CHECK(m.marginal.sum() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("maxent return of the soft-optimal policy equals its value") {
  // For the entropy-regularised optimum, <M, R + H> = (1-g) E_mu0[V*] with
  // V* = logsumexp_a Q*, an identity that crosses the solver and the
  // occupancy routes.
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const TabularMdp mdp = make_random_mdp(4, 3, 0.9, 500 + seed);
    Rng rng(600 + seed);
    RewardVector reward;
    reward.support = RewardSupport::state_action;
    reward.values = Eigen::VectorXd::NullaryExpr(
        mdp.n_pairs(), [&rng](Eigen::Index) { return rng.uniform(-1.0, 1.0); });
    const SolveResult sol = soft_value_iteration(mdp, reward);
    Eigen::VectorXd v(mdp.n_states);
    for (int s = 0; s < mdp.n_states; ++s)
      v[s] = log_sum_exp(sol.q.segment(s * mdp.n_actions, mdp.n_actions));
    const double lhs = maxent_return(mdp, sol.policy, reward);
    const double rhs = (1.0 - mdp.discount) * mdp.initial_dist.dot(v);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-7));
  }
}

TEST_CASE("maxent return of the uniform coin flip is log 2") {
  const CounterexampleEnv env = make_counterexample(0.5);
  RewardVector zero;
  zero.support = RewardSupport::state_action;
  zero.values = Eigen::VectorXd::Zero(2);
  const double ret = maxent_return(env.mdp, uniform_policy(env.mdp), zero);
  CHECK(ret == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("policy interpolation is the stated convex combination") {
  const TabularMdp mdp = make_random_mdp(3, 3, 0.9, 21);
  const StochasticPolicy base = random_policy(mdp, 22);
  CHECK(policy_total_variation(interpolate_policy(base, 0.0), base) == 0.0);
  const StochasticPolicy mixed = interpolate_policy(base, 0.4);
  for (int s = 0; s < 3; ++s)
    for (int a = 0; a < 3; ++a)
      CHECK(mixed.probs(s, a) ==
            doctest::Approx(0.6 * base.probs(s, a) + 0.4 / 3.0).epsilon(1e-12));
  const StochasticPolicy all = interpolate_policy(base, 1.0);
  CHECK(policy_total_variation(all, uniform_policy(mdp)) < 1e-12);
  CHECK_THROWS_AS(interpolate_policy(base, 1.5), std::invalid_argument);
}

TEST_CASE("mdp json round trip preserves every field") {
  const TabularMdp mdp = make_random_mdp(4, 2, 0.75, 31);
  const TabularMdp back = mdp_from_json(mdp_to_json(mdp));
  CHECK(back.n_states == mdp.n_states);
  CHECK(back.n_actions == mdp.n_actions);
  CHECK(back.discount == mdp.discount);
  CHECK((back.transition - mdp.transition).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.initial_dist - mdp.initial_dist).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(mdp_from_json("{\"n_states\": 2}"), std::invalid_argument);
}
