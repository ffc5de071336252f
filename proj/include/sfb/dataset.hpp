#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sfb/mdp.hpp"

namespace sfb {

/// Offline replay buffer of (s, a, s') triplets plus the empirical state
/// distribution rho counted over both endpoints of every transition.
struct TransitionDataset {
  struct Transition {
    int s = 0;
    int a = 0;
    int s_next = 0;
  };

  std::vector<Transition> transitions;
  Eigen::VectorXd empirical_state_dist;  // rho, sums to 1
  std::uint64_t source_seed = 0;
  int n_states = 0;
  int n_actions = 0;

  int size() const { return static_cast<int>(transitions.size()); }
  void validate() const;
};

/// Rolls out the behavior policy from mu0, resetting every episode_len steps,
/// until n_steps transitions are recorded. Deterministic per seed.
TransitionDataset collect_dataset(const TabularMdp& mdp, const StochasticPolicy& behavior,
                                  int n_steps, int episode_len, std::uint64_t seed);

/// CSV with a comment header (env id, seed, n_steps) and columns s,a,s_next.
std::string dataset_to_csv(const TransitionDataset& data, const std::string& env_id);
TransitionDataset dataset_from_csv(const std::string& text, int n_states, int n_actions);

}  // namespace sfb
