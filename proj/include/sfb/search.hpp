#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "sfb/envs.hpp"
#include "sfb/fb_exact.hpp"
#include "sfb/fb_model.hpp"
#include "sfb/measures.hpp"
#include "sfb/objectives.hpp"

namespace sfb {

struct SearchConfig {
  enum class Sampler { ball, sphere };
  enum class Method { shooting, cem };

  int n_candidates = 1024;  // shooting budget; CEM uses population * iters
  Sampler sampler = Sampler::ball;
  Method method = Method::shooting;
  int cem_population = 128;
  double cem_elite_frac = 0.1;
  int cem_iters = 8;
  double cem_init_std = 0.5;
  int n_measure_samples = 2048;
  std::uint64_t seed = 0;

  void validate() const;
  int cem_elite_count() const;
};

struct CandidateRow {
  int index = 0;
  Eigen::VectorXd z;
  double offline_score = 0.0;
  double ground_truth = 0.0;
  bool has_ground_truth = false;
};

struct SearchResult {
  Eigen::VectorXd z_best;
  double offline_score = 0.0;
  int best_index = 0;
  std::vector<CandidateRow> table;
};

// ─── Closed-form task embeddings ─────────────────────────────────────────────

/// z* = B R / ||B R||. Throws "reward not representable" when the embedding
/// vanishes. The learned overload embeds state rewards (its backward map is
/// over states).
Eigen::VectorXd infer_linear(const ExactFbModel& model, const RewardVector& reward);
Eigen::VectorXd infer_linear(const FbModel& model, const TabularMdp& mdp,
                             const RewardVector& reward);

/// Maxent rescaling of the linear solution: with c the initial-distribution
/// expectation of F(s,a,z_raw)^T z_raw under the model's own policy at the
/// unnormalized embedding z_raw = B R, returns (c/(c+1)) z_raw/||z_raw||
/// (nonpositive statistics and vanishing embeddings give z = 0).
Eigen::VectorXd infer_maxent(const ExactFbModel& model, const RewardVector& reward);
Eigen::VectorXd infer_maxent(const FbModel& model, const TabularMdp& mdp,
                             const RewardVector& reward);

// ─── Ground truth and zero-order search ──────────────────────────────────────

/// Exact utility of the policy the model deploys at z.
double evaluate_ground_truth(const TabularMdp& mdp, const ExactFbModel& model,
                             const Eigen::VectorXd& z, const UtilityObjective& obj);
double evaluate_ground_truth(const TabularMdp& mdp, const FbModel& model,
                             const Eigen::VectorXd& z, const UtilityObjective& obj);

/// Search over embeddings with exact evaluation (offline score and ground
/// truth coincide by construction). Deterministic per seed; argmax ties go to
/// the lowest candidate index.
SearchResult zero_order_search(const ExactFbModel& model, const UtilityObjective& obj,
                               const SearchConfig& cfg);

/// Search over embeddings scored through a measure estimate: exact kind uses
/// exact marginals of the deployed policy, implicit/explicit kinds sample
/// their estimates and use the sample evaluators. `explicit_model` is
/// required for the explicit kind; `grid` attaches the coordinate lift.
/// Candidates whose estimates degenerate or diverge score -infinity; if all
/// do, throws "objective unsatisfiable under estimates".
SearchResult zero_order_search(const FbModel& model, const TabularMdp& mdp,
                               const UtilityObjective& obj, MeasureEstimate::Kind kind,
                               const SearchConfig& cfg,
                               const ExplicitMeasureModel* explicit_model = nullptr,
                               const GridDidacticEnv* grid = nullptr,
                               bool with_ground_truth = false);

}  // namespace sfb
