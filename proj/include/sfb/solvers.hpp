#pragma once

#include <Eigen/Dense>

#include "sfb/mdp.hpp"

namespace sfb {

struct SolveOptions {
  double tol = 1e-10;
  int max_iters = 100000;
};

/// Result of a dynamic-programming solve over state-action values.
struct SolveResult {
  Eigen::VectorXd q;  ///< one value per (s,a) pair, indexed by sa_index
  StochasticPolicy policy;
  int iters = 0;
};

/// Entropy-regularised optimal control at unit temperature.
///
/// Iterates Q <- r + gamma * P * logsumexp_a(Q) to the soft fixed point and
/// returns the softmax policy. Convergence is declared when the sup-norm
/// update falls below tol; exceeding max_iters is an error.
SolveResult soft_value_iteration(const TabularMdp& mdp, const RewardVector& reward,
                                 const SolveOptions& opts = {});

/// Standard (hard-max) value iteration. Ties in the greedy policy are broken
/// towards the lowest action index so results are reproducible.
SolveResult hard_value_iteration(const TabularMdp& mdp, const RewardVector& reward,
                                 const SolveOptions& opts = {});

/// Log-sum-exp over a vector, shifted by the max for stability.
double log_sum_exp(const Eigen::VectorXd& v);

/// Softmax of a vector, computed against the shifted exponentials.
Eigen::VectorXd softmax(const Eigen::VectorXd& v);

/// Discounted entropy critic for a fixed policy: the unique solution of
///   Qh(s,a) = gamma * sum_s' P(s'|s,a) [ H(pi(.|s')) + sum_a' pi(a'|s') Qh(s',a') ].
/// This is the tail entropy collected from step 1 onwards, so it excludes the
/// entropy of the action taken at (s,a) itself.
Eigen::VectorXd entropy_critic(const TabularMdp& mdp, const StochasticPolicy& pi);

/// Total variation distance between two policies: max over states of half the
/// L1 distance between action distributions.
double policy_total_variation(const StochasticPolicy& a, const StochasticPolicy& b);

}  // namespace sfb
