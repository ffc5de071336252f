#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "sfb/envs.hpp"
#include "sfb/mdp.hpp"

using namespace sfb;

TEST_CASE("counterexample env shape and closed forms") {
  const CounterexampleEnv env = make_counterexample(0.5);
  CHECK(env.mdp.n_states == 1);
  CHECK(env.mdp.n_actions == 2);
  CHECK(env.mdp.discount == 0.5);
  CHECK(env.visit_constant == doctest::Approx(0.25).epsilon(1e-15));

  const Eigen::Matrix2d m0 = env.closed_form_successor(0);
  CHECK(std::abs(m0(0, 0) - 1.0) <= 1e-12);
  CHECK(std::abs(m0(0, 1) - 0.0) <= 1e-12);
  CHECK(std::abs(m0(1, 0) - 0.75) <= 1e-12);
  CHECK(std::abs(m0(1, 1) - 0.25) <= 1e-12);

  const Eigen::Matrix2d m1 = env.closed_form_successor(1);
  CHECK(std::abs(m1(0, 0) - 0.25) <= 1e-12);
  CHECK(std::abs(m1(0, 1) - 0.75) <= 1e-12);
  CHECK(std::abs(m1(1, 0) - 0.0) <= 1e-12);
  CHECK(std::abs(m1(1, 1) - 1.0) <= 1e-12);
}

TEST_CASE("counterexample chain measure differs from the closed-form family") {
  // The closed forms credit (1-g)g of self-visitation to the off-policy start
  // pair; the chain's own normalized measure gives that pair its full (1-g)
  // initial weight instead. Both are pinned here so the discrepancy stays
  // visible.
  const CounterexampleEnv env = make_counterexample(0.5);
  StochasticPolicy always_a0 = uniform_policy(env.mdp);
  always_a0.probs << 1.0, 0.0;
  const SuccessorMeasure m = successor_measure(env.mdp, always_a0);
  CHECK(m.sa_matrix(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.sa_matrix(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(m.sa_matrix(1, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(m.sa_matrix(1, 1) == doctest::Approx(0.5).epsilon(1e-12));

  const Eigen::Matrix2d closed = env.closed_form_successor(0);
  CHECK(std::abs(m.sa_matrix(1, 0) - closed(1, 0)) ==
        doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("counterexample discount is configurable") {
  const CounterexampleEnv env = make_counterexample(0.9);
  CHECK(env.visit_constant == doctest::Approx(0.1 * 0.9).epsilon(1e-15));
  const Eigen::Matrix2d m0 = env.closed_form_successor(0);
  CHECK(m0(1, 1) == doctest::Approx(0.09).epsilon(1e-12));
  CHECK(m0(1, 0) == doctest::Approx(0.91).epsilon(1e-12));
  CHECK_THROWS_AS(make_counterexample(1.0), std::invalid_argument);
}

TEST_CASE("grid env geometry and dynamics") {
  const GridDidacticEnv env = make_grid_env(3, 0.5);
  CHECK(env.side == 3);
  CHECK(env.mdp.n_states == 9);
  CHECK(env.mdp.n_actions == 9);
  CHECK(env.center == 4);
  CHECK(env.cell_width == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(env.mdp.initial_dist[4] == 1.0);

  // From the center, action a teleports to cell a; elsewhere everything
  // self-loops.
  for (int a = 0; a < 9; ++a) {
    CHECK(env.mdp.transition(env.mdp.sa_index(4, a), a) == 1.0);
    CHECK(env.mdp.transition(env.mdp.sa_index(0, a), 0) == 1.0);
    CHECK(env.mdp.transition(env.mdp.sa_index(7, a), 7) == 1.0);
  }

  // Coordinate lift is a bijection between cells and centers.
  for (int c = 0; c < 9; ++c) {
    const Eigen::Vector2d xy = env.cell_center(c);
    CHECK(env.cell_at(xy[0], xy[1]) == c);
    CHECK(xy.cwiseAbs().maxCoeff() <= 1.0);
  }
  CHECK(env.cell_center(4)[0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(env.cell_center(4)[1] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(env.cell_at(-5.0, 7.0) >= 0);  // clamped, never out of range
  CHECK(env.cell_at(-5.0, 7.0) < 9);

  CHECK_THROWS_AS(make_grid_env(4, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(make_grid_env(1, 0.5), std::invalid_argument);
}

TEST_CASE("grid occupancy concentrates on the chosen cell") {
  // Deterministic policy "always pick cell g": state marginal at g is
  // gamma + (1-gamma) [g = center].
  const GridDidacticEnv env = make_grid_env(3, 0.5);
  for (const int g : {0, 4, 7}) {
    StochasticPolicy pi = uniform_policy(env.mdp);
    pi.probs.setZero();
    pi.probs.col(g).setOnes();
    const SuccessorMeasure m = occupancy_marginals(env.mdp, pi);
    const double expected = 0.5 + (g == env.center ? 0.5 : 0.0);
    CHECK(m.state_marginal[g] == doctest::Approx(expected).epsilon(1e-12));
    if (g != env.center)
      CHECK(m.state_marginal[env.center] == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("random mdp generator is seeded and valid") {
  const TabularMdp a = make_random_mdp(5, 3, 0.9, 42);
  const TabularMdp b = make_random_mdp(5, 3, 0.9, 42);
  CHECK((a.transition - b.transition).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.initial_dist - b.initial_dist).cwiseAbs().maxCoeff() == 0.0);
  const TabularMdp c = make_random_mdp(5, 3, 0.9, 43);
  CHECK((a.transition - c.transition).cwiseAbs().maxCoeff() > 0.0);

  for (std::uint64_t seed = 0; seed < 1000; ++seed)
    CHECK_NOTHROW(make_random_mdp(3, 2, 0.9, seed).validate());
}

TEST_CASE("environment names resolve") {
  const TabularMdp counter = env_by_name("counterexample");
  CHECK(counter.n_states == 1);
  CHECK(counter.n_actions == 2);

  const TabularMdp grid = env_by_name("grid3");
  CHECK(grid.n_states == 9);

  const TabularMdp rand = env_by_name("random:42");
  const TabularMdp direct = make_random_mdp(5, 3, 0.9, 42);
  CHECK(rand.n_states == 5);
  CHECK(rand.n_actions == 3);
  CHECK(rand.discount == 0.9);
  CHECK((rand.transition - direct.transition).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(env_by_name("nope"), std::invalid_argument);
  CHECK_THROWS_AS(env_by_name("grid"), std::invalid_argument);
  CHECK_THROWS_AS(env_by_name("grid4"), std::invalid_argument);
  CHECK_THROWS_AS(env_by_name("random:"), std::invalid_argument);
}
