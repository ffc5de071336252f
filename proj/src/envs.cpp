#include "sfb/envs.hpp"

#include <cmath>
#include <stdexcept>

#include "sfb/rng.hpp"

namespace sfb {

Eigen::Matrix2d CounterexampleEnv::closed_form_successor(int action) const {
  if (action != 0 && action != 1)
    throw std::invalid_argument("closed_form_successor: action must be 0 or 1");
  const double c = visit_constant;
  Eigen::Matrix2d m;
  if (action == 0)
    m << 1.0, 0.0, 1.0 - c, c;
  else
    m << c, 1.0 - c, 0.0, 1.0;
  return m;
}

CounterexampleEnv make_counterexample(double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::invalid_argument("make_counterexample: gamma must lie in (0,1)");
  CounterexampleEnv env;
  env.mdp.n_states = 1;
  env.mdp.n_actions = 2;
  env.mdp.transition = Eigen::MatrixXd::Ones(2, 1);
  env.mdp.initial_dist = Eigen::VectorXd::Ones(1);
  env.mdp.discount = gamma;
  env.visit_constant = (1.0 - gamma) * gamma;
  env.mdp.validate();
  return env;
}

Eigen::Vector2d GridDidacticEnv::cell_center(int cell) const {
  if (cell < 0 || cell >= side * side)
    throw std::invalid_argument("cell_center: cell index out of range");
  const int row = cell / side;
  const int col = cell % side;
  const double denom = static_cast<double>(side);
  return {-1.0 + (2.0 * col + 1.0) / denom, -1.0 + (2.0 * row + 1.0) / denom};
}

int GridDidacticEnv::cell_at(double x, double y) const {
  const auto clamp_index = [&](double v) {
    const int i = static_cast<int>(std::floor((v + 1.0) * 0.5 * side));
    return std::min(std::max(i, 0), side - 1);
  };
  return clamp_index(y) * side + clamp_index(x);
}

GridDidacticEnv make_grid_env(int grid_side, double gamma) {
  if (grid_side < 3 || grid_side % 2 == 0)
    throw std::invalid_argument("make_grid_env: grid_side must be odd and >= 3");
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::invalid_argument("make_grid_env: gamma must lie in (0,1)");
  GridDidacticEnv env;
  env.side = grid_side;
  const int n = grid_side * grid_side;
  env.center = (n - 1) / 2;
  env.cell_width = 2.0 / grid_side;
  env.mdp.n_states = n;
  env.mdp.n_actions = n;
  env.mdp.discount = gamma;
  env.mdp.initial_dist = Eigen::VectorXd::Zero(n);
  env.mdp.initial_dist[env.center] = 1.0;
  env.mdp.transition = Eigen::MatrixXd::Zero(n * n, n);
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < n; ++a)
      env.mdp.transition(env.mdp.sa_index(s, a), s == env.center ? a : s) = 1.0;
  env.mdp.validate();
  return env;
}

TabularMdp make_random_mdp(int n_states, int n_actions, double gamma, std::uint64_t seed) {
  if (n_states < 1 || n_actions < 1)
    throw std::invalid_argument("make_random_mdp: sizes must be positive");
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::invalid_argument("make_random_mdp: gamma must lie in (0,1)");
  Rng rng(seed);
  TabularMdp mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.discount = gamma;
  mdp.transition.resize(n_states * n_actions, n_states);
  for (int row = 0; row < mdp.transition.rows(); ++row)
    mdp.transition.row(row) = rng.dirichlet(n_states).transpose();
  mdp.initial_dist = rng.dirichlet(n_states);
  mdp.validate();
  return mdp;
}

TabularMdp env_by_name(const std::string& name) {
  if (name == "counterexample") return make_counterexample().mdp;
  if (name.rfind("grid", 0) == 0) {
    const std::string digits = name.substr(4);
    if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos)
      throw std::invalid_argument("env_by_name: malformed grid size in '" + name + "'");
    return make_grid_env(std::stoi(digits)).mdp;
  }
  if (name.rfind("random:", 0) == 0) {
    const std::string digits = name.substr(7);
    if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos)
      throw std::invalid_argument("env_by_name: malformed seed in '" + name + "'");
    return make_random_mdp(5, 3, 0.9, std::stoull(digits));
  }
  throw std::invalid_argument("env_by_name: unknown environment '" + name + "'");
}

}  // namespace sfb
