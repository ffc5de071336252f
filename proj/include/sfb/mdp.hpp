#pragma once

#include <string>

#include <Eigen/Dense>

namespace sfb {

// ─── Core tabular types ──────────────────────────────────────────────────────

/// Finite reward-free MDP (S, A, P, mu0, gamma). Transition rows and mu0 are
/// probability distributions (checked by validate() to 1e-12).
struct TabularMdp {
  int n_states = 0;
  int n_actions = 0;
  Eigen::MatrixXd transition;    // (|S||A|) x |S|; row s*|A|+a is P(.|s,a)
  Eigen::VectorXd initial_dist;  // |S|
  double discount = 0.0;

  int n_pairs() const { return n_states * n_actions; }
  int sa_index(int s, int a) const { return s * n_actions + a; }

  void validate() const;
};

/// State-conditional action distribution pi[s][a].
struct StochasticPolicy {
  Eigen::MatrixXd probs;  // |S| x |A|

  /// Metadata: set when the policy was produced at the temperature floor
  /// (embedding norm within 1e-6 of the sphere surface).
  bool temperature_clamped = false;

  void validate() const;

  /// Per-state Shannon entropies in nats, with 0*log 0 = 0.
  Eigen::VectorXd row_entropies() const;
};

enum class RewardSupport { state, state_action };

/// Reward vector over states or over (s,a) pairs.
struct RewardVector {
  Eigen::VectorXd values;
  RewardSupport support = RewardSupport::state_action;

  void validate() const;

  /// Expansion to (s,a) pairs: state-support rewards repeat across actions.
  Eigen::VectorXd over_pairs(const TabularMdp& mdp) const;
};

/// Exact discounted occupancy of a policy, (1-gamma)-normalized so that every
/// row and both marginals are probability distributions.
struct SuccessorMeasure {
  Eigen::MatrixXd sa_matrix;       // (|S||A|) x (|S||A|): row (s0,a0) -> mass over pairs
  Eigen::VectorXd marginal;        // over (s,a), start pair drawn from mu0 x pi
  Eigen::VectorXd state_marginal;  // over states
};

// ─── Operations ──────────────────────────────────────────────────────────────

StochasticPolicy uniform_policy(const TabularMdp& mdp);

/// State-action chain of a policy: P^pi[(s,a)][(s',a')] = P(s'|s,a) pi(a'|s').
Eigen::MatrixXd sa_chain(const TabularMdp& mdp, const StochasticPolicy& pi);

/// M = (1-gamma)(I - gamma P^pi)^{-1} by dense LU solve. Exact up to floating
/// point; sizes capped at |S||A| <= 4096 (use the occupancy functions below for
/// marginals of larger models).
SuccessorMeasure successor_measure(const TabularMdp& mdp, const StochasticPolicy& pi);

/// Marginal state occupancy (1-gamma) sum_t gamma^t Pr(s_t = .) starting from
/// mu0 under pi. Solves the |S| x |S| system, so it has no pair-count cap.
Eigen::VectorXd state_occupancy(const TabularMdp& mdp, const StochasticPolicy& pi);

/// Marginal (s,a) occupancy: the state occupancy lifted by pi(a|s).
Eigen::VectorXd sa_occupancy(const TabularMdp& mdp, const StochasticPolicy& pi);

/// Marginals-only variant of successor_measure: fills marginal and
/// state_marginal via the |S|-sized solve and leaves sa_matrix empty. No pair
/// cap, so it serves models too large for the dense pair solve.
SuccessorMeasure occupancy_marginals(const TabularMdp& mdp, const StochasticPolicy& pi);

/// <M, R + H^pi>: expected discounted reward plus discounted policy entropy,
/// both under the normalized occupancy.
double maxent_return(const TabularMdp& mdp, const StochasticPolicy& pi,
                     const RewardVector& reward);

/// pi_alpha = (1-alpha) * optimal + alpha * uniform. alpha in [0,1].
StochasticPolicy interpolate_policy(const StochasticPolicy& optimal, double alpha);

// ─── Serialization ───────────────────────────────────────────────────────────

/// JSON document with keys n_states, n_actions, transition (nested [s][a][s']),
/// initial_dist, discount. Doubles round-trip bit-exactly.
std::string mdp_to_json(const TabularMdp& mdp);
TabularMdp mdp_from_json(const std::string& text);

}  // namespace sfb
