#pragma once

#include <Eigen/Dense>

#include "sfb/mdp.hpp"
#include "sfb/solvers.hpp"

namespace sfb {

enum class PolicyMode { soft, hard };

/// Embedding norms strictly inside the unit ball index soft instances; below
/// this temperature floor the policy degenerates to a hard argmax.
inline constexpr double kTemperatureFloor = 1e-6;

/// z' = z/(||z||+1): maps any raw embedding into the open unit ball.
Eigen::VectorXd reparameterize(const Eigen::VectorXd& z_raw);

/// z = z'/(1-||z'||): exact inverse of reparameterize for ||z'|| < 1.
Eigen::VectorXd reparameterize_inverse(const Eigen::VectorXd& z_ball);

/// Moore-Penrose pseudoinverse via SVD with the given singular-value cutoff.
Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& m, double cutoff = 1e-10);

/// One embedding's worth of the exact regime: the forward map, its policy,
/// and that policy's exact successor measure.
struct ExactSlice {
  Eigen::MatrixXd forward;  ///< d x |S||A|, column per pair; forward^T = M B^+
  StochasticPolicy policy;
  SuccessorMeasure measure;
  int iters = 0;
  bool approximate = false;  ///< d < |S||A|, so the factorization is lossy
};

struct FixedPointOptions {
  double tol = 1e-9;
  int max_iters = 500;
  PolicyMode mode = PolicyMode::soft;
};

/// Alternating fixed-point solve: policy -> exact successor measure -> forward
/// map -> softmax (or greedy) policy, repeated until the policy stops moving
/// (total variation <= tol). With d = |S||A| and invertible backward map, the
/// soft-mode fixed point equals soft_value_iteration's policy for the reward
/// decoded from z.
ExactSlice exact_fixed_point(const TabularMdp& mdp, const Eigen::MatrixXd& backward,
                             const Eigen::VectorXd& z, const FixedPointOptions& opts = {});

/// Exact-regime model: a pair-level backward map whose policies are produced
/// by value iteration on the decoded reward. This is the fast route used by
/// inference; exact_fixed_point is the standalone iterative certificate and
/// the two are tested to agree.
struct ExactFbModel {
  TabularMdp mdp;
  Eigen::MatrixXd backward;       // d x |S||A|
  Eigen::MatrixXd backward_pinv;  // |S||A| x d
  PolicyMode mode = PolicyMode::soft;

  int dim() const { return static_cast<int>(backward.rows()); }

  /// Policy of a ball embedding. Soft mode solves the maxent instance for the
  /// decoded reward scaled by 1/(1-||z||); at the temperature floor (and
  /// always in hard mode) it is the greedy policy, flagged on the result.
  StochasticPolicy policy(const Eigen::VectorXd& z) const;

  /// Exact occupancy marginals of policy(z) (no pair cap).
  SuccessorMeasure measure(const Eigen::VectorXd& z) const;

  /// Forward map at z: row (s,a) holds F(s,a,z). Requires the dense pair
  /// solve, so it is capped like successor_measure.
  Eigen::MatrixXd forward_at(const Eigen::VectorXd& z) const;

  /// B R over pairs (state-support rewards are expanded first).
  Eigen::VectorXd embed_reward(const RewardVector& reward) const;
};

/// Validates rank (all singular values of backward > 1e-8) and precomputes
/// the pseudoinverse.
ExactFbModel make_exact_model(const TabularMdp& mdp, const Eigen::MatrixXd& backward,
                              PolicyMode mode = PolicyMode::soft);

/// Identity backward map of size |S||A|; skips the SVD, which matters when
/// the pair count is in the thousands.
ExactFbModel make_exact_identity_model(const TabularMdp& mdp,
                                       PolicyMode mode = PolicyMode::soft);

}  // namespace sfb
