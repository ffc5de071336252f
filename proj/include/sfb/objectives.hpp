#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sfb/envs.hpp"
#include "sfb/mdp.hpp"
#include "sfb/measures.hpp"

namespace sfb {

/// A scalar utility of the occupancy measure. Every kind evaluates exactly on
/// marginals and approximately on coordinate-lifted samples; the non-linear
/// kinds (entropy, KL) use KNN estimators on the sample route.
struct UtilityObjective {
  enum class Kind { linear, goal, kl_to_expert, entropy, robust_min, constrained };

  Kind kind = Kind::linear;
  RewardSupport support = RewardSupport::state;
  std::string name;
  int n_states = 0;
  int n_actions = 0;

  Eigen::VectorXd reward;      // linear/goal/constrained objective reward
  Eigen::VectorXd reward_alt;  // robust_min second arm, constrained constraint reward
  double threshold = 0.0;      // constrained bound on <M, reward_alt>
  double penalty = 10.0;       // constrained violation weight
  bool strict_constraint = false;
  double strict_floor = 0.0;  // value reported on violation in strict mode

  Eigen::VectorXd expert_marginal;  // kl_to_expert target over the support
  Eigen::MatrixXd expert_coords;    // lifted expert draws for the sample route
  bool smooth_expert = true;

  // Geometry bookkeeping for emitted metadata and the sample route.
  Eigen::Vector2d goal_center = Eigen::Vector2d::Zero();
  double goal_radius = 0.0;
  double cell_width = 0.0;  // jitter box edge; needed to de-jitter entropies

  void validate() const;
};

struct ScoreNormalizer {
  double min_score = 0.0;
  double max_score = 1.0;
};

/// (raw - min)/(max - min), clipped to [0,1].
double normalize(const ScoreNormalizer& norm, double raw);

/// Utility of exact marginals. KL against an unsmoothed expert with
/// mismatched support returns +infinity.
double exact_eval(const UtilityObjective& obj, const Eigen::VectorXd& state_marginal,
                  const Eigen::VectorXd& sa_marginal);
double exact_eval(const UtilityObjective& obj, const MeasureEstimate& est);
double exact_eval(const UtilityObjective& obj, const SuccessorMeasure& measure);

/// Utility from measure draws: Monte-Carlo means for the linear kinds, KNN
/// estimators on the coordinate lift for entropy and KL (the entropy estimate
/// is corrected back to the discrete distribution by the jitter volume).
double sample_eval(const UtilityObjective& obj, const std::vector<MeasureSample>& samples);

struct BruteForceResult {
  double value = 0.0;
  StochasticPolicy policy;
};

/// Exhaustive search over all Markov policies whose rows lie on a simplex
/// grid with `grid_resolution` points per edge. Throws when the policy count
/// would exceed 1e7 (message carries the estimate).
BruteForceResult brute_force_optimum(const UtilityObjective& obj, const TabularMdp& mdp,
                                     int grid_resolution);

// ─── Named objective library ─────────────────────────────────────────────────

UtilityObjective make_entropy_objective(RewardSupport support, int n_states, int n_actions);
UtilityObjective make_linear_objective(const std::string& name, const Eigen::VectorXd& reward,
                                       RewardSupport support, int n_states, int n_actions);
UtilityObjective make_goal_objective(const GridDidacticEnv& env,
                                     const Eigen::Vector2d& center, double radius);
UtilityObjective make_ring_objective(const GridDidacticEnv& env);
UtilityObjective make_line_imitation_objective(const GridDidacticEnv& env,
                                               int n_expert_samples, std::uint64_t seed);
UtilityObjective make_robust_objective(const std::string& name, const Eigen::VectorXd& r1,
                                       const Eigen::VectorXd& r2, RewardSupport support,
                                       int n_states, int n_actions);
UtilityObjective make_constrained_objective(const std::string& name,
                                            const Eigen::VectorXd& reward,
                                            const Eigen::VectorXd& constraint_reward,
                                            double threshold, RewardSupport support,
                                            int n_states, int n_actions);

/// Resolves a CLI objective name for an environment: "entropy" everywhere;
/// "robust" and "constrained" on the counterexample; "goal", "ring", "line"
/// on grid environments (which need the geometry).
UtilityObjective objective_by_name(const std::string& name, const TabularMdp& mdp,
                                   const GridDidacticEnv* grid);

/// Score range used for table normalization of the named objectives.
ScoreNormalizer normalizer_for(const UtilityObjective& obj, const TabularMdp& mdp);

/// Signed utility from an evaluator result: divergences are better when
/// smaller, everything else when larger. Searches maximize this.
double objective_score(const UtilityObjective& obj, double raw_eval);

}  // namespace sfb
