#include "sfb/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

#include "sfb/knn.hpp"
#include "sfb/rng.hpp"

namespace sfb {

namespace {

constexpr double kExpertSmoothing = 1e-9;

double entropy_of(const Eigen::VectorXd& m) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < m.size(); ++i)
    if (m[i] > 0.0) h -= m[i] * std::log(m[i]);
  return h;
}

double kl_against_expert(const Eigen::VectorXd& m, const Eigen::VectorXd& expert,
                         bool smooth) {
  Eigen::VectorXd q = expert;
  if (smooth) {
    q.array() += kExpertSmoothing;
    q /= q.sum();
  }
  double d = 0.0;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (m[i] <= 0.0) continue;
    if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
    d += m[i] * std::log(m[i] / q[i]);
  }
  return d;
}

int support_size(const UtilityObjective& obj) {
  return obj.support == RewardSupport::state ? obj.n_states : obj.n_states * obj.n_actions;
}

// Columns of the KNN lift for this objective's support.
int lift_dim(const UtilityObjective& obj) {
  return obj.support == RewardSupport::state ? 2 : 4;
}

Eigen::MatrixXd lift_samples(const UtilityObjective& obj,
                             const std::vector<MeasureSample>& samples) {
  const int dim = lift_dim(obj);
  Eigen::MatrixXd mat(samples.size(), dim);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const MeasureSample& s = samples[i];
    if (!s.has_coords)
      throw std::invalid_argument("sample_eval: objective '" + obj.name +
                                  "' needs coordinate-lifted samples");
    mat(i, 0) = s.state_xy.x();
    mat(i, 1) = s.state_xy.y();
    if (dim == 4) {
      mat(i, 2) = s.action_xy.x();
      mat(i, 3) = s.action_xy.y();
    }
  }
  return mat;
}

double mean_reward(const UtilityObjective& obj, const Eigen::VectorXd& reward,
                   const std::vector<MeasureSample>& samples) {
  double total = 0.0;
  for (const MeasureSample& s : samples)
    total += reward[obj.support == RewardSupport::state ? s.s : s.s * obj.n_actions + s.a];
  return total / static_cast<double>(samples.size());
}

double constrained_score(const UtilityObjective& obj, double base, double constraint) {
  const double violation = constraint - obj.threshold;
  if (obj.strict_constraint) return violation > 0.0 ? obj.strict_floor : base;
  return base - obj.penalty * std::max(0.0, violation);
}

}  // namespace

void UtilityObjective::validate() const {
  if (n_states < 1 || n_actions < 1)
    throw std::invalid_argument("UtilityObjective: missing shape");
  const int size = support_size(*this);
  switch (kind) {
    case Kind::linear:
    case Kind::goal:
      if (reward.size() != size)
        throw std::invalid_argument("UtilityObjective: reward size mismatch");
      break;
    case Kind::robust_min:
      if (reward.size() != size || reward_alt.size() != size)
        throw std::invalid_argument("UtilityObjective: robust arms size mismatch");
      break;
    case Kind::constrained:
      if (reward.size() != size || reward_alt.size() != size)
        throw std::invalid_argument("UtilityObjective: constrained rewards size mismatch");
      break;
    case Kind::kl_to_expert:
      if (expert_marginal.size() != size)
        throw std::invalid_argument("UtilityObjective: expert marginal size mismatch");
      break;
    case Kind::entropy:
      break;
  }
}

double normalize(const ScoreNormalizer& norm, double raw) {
  if (!(norm.max_score > norm.min_score))
    throw std::invalid_argument("normalize: max_score must exceed min_score");
  return std::clamp((raw - norm.min_score) / (norm.max_score - norm.min_score), 0.0, 1.0);
}

double exact_eval(const UtilityObjective& obj, const Eigen::VectorXd& state_marginal,
                  const Eigen::VectorXd& sa_marginal) {
  obj.validate();
  if (state_marginal.size() != obj.n_states ||
      sa_marginal.size() != static_cast<Eigen::Index>(obj.n_states) * obj.n_actions)
    throw std::invalid_argument("exact_eval: marginal size mismatch");
  const Eigen::VectorXd& m =
      obj.support == RewardSupport::state ? state_marginal : sa_marginal;
  switch (obj.kind) {
    case UtilityObjective::Kind::linear:
    case UtilityObjective::Kind::goal:
      return obj.reward.dot(m);
    case UtilityObjective::Kind::entropy:
      return entropy_of(m);
    case UtilityObjective::Kind::kl_to_expert:
      return kl_against_expert(m, obj.expert_marginal, obj.smooth_expert);
    case UtilityObjective::Kind::robust_min:
      return std::min(obj.reward.dot(m), obj.reward_alt.dot(m));
    case UtilityObjective::Kind::constrained:
      return constrained_score(obj, obj.reward.dot(m), obj.reward_alt.dot(m));
  }
  throw std::logic_error("exact_eval: unknown kind");
}

double exact_eval(const UtilityObjective& obj, const MeasureEstimate& est) {
  return exact_eval(obj, est.state_marginal, est.sa_marginal);
}

double exact_eval(const UtilityObjective& obj, const SuccessorMeasure& measure) {
  return exact_eval(obj, measure.state_marginal, measure.marginal);
}

double sample_eval(const UtilityObjective& obj, const std::vector<MeasureSample>& samples) {
  obj.validate();
  if (samples.empty()) throw std::invalid_argument("sample_eval: no samples");
  switch (obj.kind) {
    case UtilityObjective::Kind::linear:
    case UtilityObjective::Kind::goal:
      return mean_reward(obj, obj.reward, samples);
    case UtilityObjective::Kind::robust_min:
      return std::min(mean_reward(obj, obj.reward, samples),
                      mean_reward(obj, obj.reward_alt, samples));
    case UtilityObjective::Kind::constrained:
      return constrained_score(obj, mean_reward(obj, obj.reward, samples),
                               mean_reward(obj, obj.reward_alt, samples));
    case UtilityObjective::Kind::entropy: {
      if (!(obj.cell_width > 0.0))
        throw std::invalid_argument("sample_eval: entropy needs the cell width");
      const double h = knn_entropy(lift_samples(obj, samples));
      return h - lift_dim(obj) * std::log(obj.cell_width);
    }
    case UtilityObjective::Kind::kl_to_expert: {
      if (obj.expert_coords.rows() == 0)
        throw std::invalid_argument("sample_eval: KL needs expert samples");
      if (obj.expert_coords.cols() != lift_dim(obj))
        throw std::invalid_argument("sample_eval: expert sample dimension mismatch");
      return knn_kl_divergence(lift_samples(obj, samples), obj.expert_coords);
    }
  }
  throw std::logic_error("sample_eval: unknown kind");
}

// ─── Brute force ─────────────────────────────────────────────────────────────

namespace {

// All action distributions with entries on the grid {0, 1/(r-1), ..., 1}.
std::vector<Eigen::VectorXd> simplex_grid_rows(int n_actions, int resolution) {
  const int ticks = resolution - 1;
  std::vector<Eigen::VectorXd> rows;
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(n_actions);
  const std::function<void(int, int)> recurse = [&](int idx, int remaining) {
    if (idx == n_actions - 1) {
      counts[idx] = remaining;
      rows.push_back(counts.cast<double>() / ticks);
      return;
    }
    for (int c = remaining; c >= 0; --c) {
      counts[idx] = c;
      recurse(idx + 1, remaining - c);
    }
  };
  recurse(0, ticks);
  return rows;
}

double binomial(int n, int k) {
  double v = 1.0;
  for (int i = 1; i <= k; ++i) v *= static_cast<double>(n - k + i) / i;
  return v;
}

}  // namespace

BruteForceResult brute_force_optimum(const UtilityObjective& obj, const TabularMdp& mdp,
                                     int grid_resolution) {
  obj.validate();
  if (grid_resolution < 2)
    throw std::invalid_argument("brute_force_optimum: grid_resolution must be >= 2");
  if (obj.n_states != mdp.n_states || obj.n_actions != mdp.n_actions)
    throw std::invalid_argument("brute_force_optimum: objective/MDP shape mismatch");
  const double n_rows_est =
      binomial(grid_resolution - 1 + mdp.n_actions - 1, mdp.n_actions - 1);
  const double total_est = std::pow(n_rows_est, mdp.n_states);
  if (total_est > 1e7)
    throw std::invalid_argument("brute_force_optimum: grid too large (about " +
                                std::to_string(total_est) + " policies; cap 1e7)");

  const std::vector<Eigen::VectorXd> rows = simplex_grid_rows(mdp.n_actions, grid_resolution);
  const int n_rows = static_cast<int>(rows.size());
  std::vector<int> digits(mdp.n_states, 0);
  StochasticPolicy pi;
  pi.probs.resize(mdp.n_states, mdp.n_actions);
  BruteForceResult best;
  best.value = -std::numeric_limits<double>::infinity();
  bool done = false;
  while (!done) {
    for (int s = 0; s < mdp.n_states; ++s) pi.probs.row(s) = rows[digits[s]].transpose();
    const SuccessorMeasure m = occupancy_marginals(mdp, pi);
    const double value = objective_score(obj, exact_eval(obj, m));
    if (value > best.value) {
      best.value = value;
      best.policy = pi;
    }
    done = true;
    for (int s = 0; s < mdp.n_states; ++s) {
      if (++digits[s] < n_rows) {
        done = false;
        break;
      }
      digits[s] = 0;
    }
  }
  if (!std::isfinite(best.value) && best.policy.probs.size() == 0)
    throw std::runtime_error("brute_force_optimum: no finite-valued policy on the grid");
  return best;
}

// ─── Named objective library ─────────────────────────────────────────────────

UtilityObjective make_entropy_objective(RewardSupport support, int n_states, int n_actions) {
  UtilityObjective obj;
  obj.kind = UtilityObjective::Kind::entropy;
  obj.support = support;
  obj.name = "entropy";
  obj.n_states = n_states;
  obj.n_actions = n_actions;
  return obj;
}

UtilityObjective make_linear_objective(const std::string& name, const Eigen::VectorXd& reward,
                                       RewardSupport support, int n_states, int n_actions) {
  UtilityObjective obj;
  obj.kind = UtilityObjective::Kind::linear;
  obj.support = support;
  obj.name = name;
  obj.n_states = n_states;
  obj.n_actions = n_actions;
  obj.reward = reward;
  obj.validate();
  return obj;
}

UtilityObjective make_goal_objective(const GridDidacticEnv& env,
                                     const Eigen::Vector2d& center, double radius) {
  UtilityObjective obj;
  obj.kind = UtilityObjective::Kind::goal;
  obj.support = RewardSupport::state;
  obj.name = "goal";
  obj.n_states = env.mdp.n_states;
  obj.n_actions = env.mdp.n_actions;
  obj.goal_center = center;
  obj.goal_radius = radius;
  obj.cell_width = env.cell_width;
  obj.reward = Eigen::VectorXd::Zero(env.mdp.n_states);
  for (int s = 0; s < env.mdp.n_states; ++s)
    if ((env.cell_center(s) - center).norm() <= radius) obj.reward[s] = 1.0;
  return obj;
}

UtilityObjective make_ring_objective(const GridDidacticEnv& env) {
  UtilityObjective obj;
  obj.kind = UtilityObjective::Kind::linear;
  obj.support = RewardSupport::state;
  obj.name = "ring";
  obj.n_states = env.mdp.n_states;
  obj.n_actions = env.mdp.n_actions;
  obj.cell_width = env.cell_width;
  obj.reward.resize(env.mdp.n_states);
  for (int s = 0; s < env.mdp.n_states; ++s)
    obj.reward[s] = 1.0 - env.cell_center(s).squaredNorm();
  return obj;
}

UtilityObjective make_line_imitation_objective(const GridDidacticEnv& env,
                                               int n_expert_samples, std::uint64_t seed) {
  if (n_expert_samples < 4)
    throw std::invalid_argument("make_line_imitation_objective: need at least 4 samples");
  UtilityObjective obj;
  obj.kind = UtilityObjective::Kind::kl_to_expert;
  obj.support = RewardSupport::state;
  obj.name = "line";
  obj.n_states = env.mdp.n_states;
  obj.n_actions = env.mdp.n_actions;
  obj.cell_width = env.cell_width;
  std::vector<int> line_cells;
  for (int s = 0; s < env.mdp.n_states; ++s) {
    const Eigen::Vector2d c = env.cell_center(s);
    if (std::abs(c.y()) < 1e-12 && std::abs(c.x()) <= 0.5) line_cells.push_back(s);
  }
  obj.expert_marginal = Eigen::VectorXd::Zero(env.mdp.n_states);
  for (int s : line_cells) obj.expert_marginal[s] = 1.0 / line_cells.size();
  const double hw = env.cell_width / 2.0;
  Rng rng(seed);
  obj.expert_coords.resize(n_expert_samples, 2);
  for (int i = 0; i < n_expert_samples; ++i) {
    const int s = line_cells[rng.uniform_int(static_cast<int>(line_cells.size()))];
    const Eigen::Vector2d c = env.cell_center(s);
    obj.expert_coords(i, 0) = c.x() + rng.uniform(-hw, hw);
    obj.expert_coords(i, 1) = c.y() + rng.uniform(-hw, hw);
  }
  return obj;
}

UtilityObjective make_robust_objective(const std::string& name, const Eigen::VectorXd& r1,
                                       const Eigen::VectorXd& r2, RewardSupport support,
                                       int n_states, int n_actions) {
  UtilityObjective obj;
  obj.kind = UtilityObjective::Kind::robust_min;
  obj.support = support;
  obj.name = name;
  obj.n_states = n_states;
  obj.n_actions = n_actions;
  obj.reward = r1;
  obj.reward_alt = r2;
  obj.validate();
  return obj;
}

UtilityObjective make_constrained_objective(const std::string& name,
                                            const Eigen::VectorXd& reward,
                                            const Eigen::VectorXd& constraint_reward,
                                            double threshold, RewardSupport support,
                                            int n_states, int n_actions) {
  UtilityObjective obj;
  obj.kind = UtilityObjective::Kind::constrained;
  obj.support = support;
  obj.name = name;
  obj.n_states = n_states;
  obj.n_actions = n_actions;
  obj.reward = reward;
  obj.reward_alt = constraint_reward;
  obj.threshold = threshold;
  obj.validate();
  return obj;
}

UtilityObjective objective_by_name(const std::string& name, const TabularMdp& mdp,
                                   const GridDidacticEnv* grid) {
  if (name == "entropy") {
    // Single-state environments carry all structure in the action marginal.
    const RewardSupport support =
        grid != nullptr ? RewardSupport::state : RewardSupport::state_action;
    UtilityObjective obj = make_entropy_objective(support, mdp.n_states, mdp.n_actions);
    if (grid != nullptr) obj.cell_width = grid->cell_width;  // KNN route needs the jitter box
    return obj;
  }
  if (name == "robust") {
    if (mdp.n_states != 1 || mdp.n_actions != 2)
      throw std::invalid_argument("objective 'robust' is defined on the counterexample");
    Eigen::VectorXd r1 = Eigen::VectorXd::Zero(2), r2 = Eigen::VectorXd::Zero(2);
    r1[0] = 1.0;
    r2[1] = 1.0;
    return make_robust_objective("robust", r1, r2, RewardSupport::state_action, 1, 2);
  }
  if (name == "constrained") {
    if (mdp.n_states != 1 || mdp.n_actions != 2)
      throw std::invalid_argument("objective 'constrained' is defined on the counterexample");
    Eigen::VectorXd r = Eigen::VectorXd::Zero(2);
    r[0] = 1.0;
    return make_constrained_objective("constrained", r, r, 0.9, RewardSupport::state_action,
                                      1, 2);
  }
  if (grid == nullptr)
    throw std::invalid_argument("objective '" + name + "' needs a grid environment");
  if (name == "goal") return make_goal_objective(*grid, Eigen::Vector2d(0.0, 0.5), 0.2);
  if (name == "ring") return make_ring_objective(*grid);
  if (name == "line") return make_line_imitation_objective(*grid, 2048, 7777);
  throw std::invalid_argument("unknown objective '" + name + "'");
}

ScoreNormalizer normalizer_for(const UtilityObjective& obj, const TabularMdp& mdp) {
  if (obj.name == "entropy") {
    if (obj.support == RewardSupport::state_action)
      return {0.0, std::log(static_cast<double>(mdp.n_states) * mdp.n_actions)};
    // Best state spread: initial mass stays put, the rest splits uniformly
    // over the remaining cells.
    const double g = mdp.discount;
    return {0.0, -(1.0 - g) * std::log(1.0 - g) - g * std::log(g) +
                     g * std::log(static_cast<double>(mdp.n_states - 1))};
  }
  if (obj.name == "robust") return {0.0, 0.5};
  if (obj.name == "constrained") return {0.0, obj.threshold};
  if (obj.name == "line") return {-15.0, 0.0};
  return {0.0, 1.0};  // goal, ring, generic linear
}

double objective_score(const UtilityObjective& obj, double raw_eval) {
  return obj.kind == UtilityObjective::Kind::kl_to_expert ? -raw_eval : raw_eval;
}

}  // namespace sfb
