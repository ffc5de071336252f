#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "sfb/mdp.hpp"

namespace sfb {

/// Single-state, two-action MDP used as the workbench's analytic touchstone.
///
/// Both actions self-loop, so every policy is a coin flip over the two pairs
/// and all of its occupancy structure is computable by hand.
struct CounterexampleEnv {
  TabularMdp mdp;
  /// Self-credit assigned to the off-policy start pair by the closed-form
  /// family below: (1-gamma)*gamma.
  double visit_constant = 0.0;

  /// Closed-form 2x2 successor matrix of the deterministic policy that always
  /// plays `action`. Row i is the start pair, column j the visited pair; the
  /// start pair that disagrees with the policy credits visit_constant to
  /// itself and the remainder to the policy's pair.
  Eigen::Matrix2d closed_form_successor(int action) const;
};

CounterexampleEnv make_counterexample(double gamma = 0.5);

/// Square grid over [-1,1]^2 whose actions name target cells. From the
/// center the chosen action teleports there; everywhere else every action
/// self-loops, so a trajectory is "one decision, then stay put".
struct GridDidacticEnv {
  int side = 0;
  TabularMdp mdp;
  int center = 0;
  double cell_width = 0.0;

  /// Continuous coordinates of a cell's midpoint.
  Eigen::Vector2d cell_center(int cell) const;
  /// Cell containing the point (x, y); coordinates are clamped to the grid.
  int cell_at(double x, double y) const;
};

GridDidacticEnv make_grid_env(int grid_side = 9, double gamma = 0.5);

/// Seeded generator with Dirichlet(1) transition rows and initial
/// distribution. Identical seeds give identical MDPs.
TabularMdp make_random_mdp(int n_states, int n_actions, double gamma, std::uint64_t seed);

/// Resolves a CLI environment name: "counterexample", "grid<odd side>"
/// (e.g. "grid9"), or "random:<seed>" (5 states, 3 actions, gamma 0.9).
/// Unknown names are an invalid-argument error.
TabularMdp env_by_name(const std::string& name);

}  // namespace sfb
