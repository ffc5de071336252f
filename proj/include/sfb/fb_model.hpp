#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sfb/dataset.hpp"
#include "sfb/fb_exact.hpp"
#include "sfb/features.hpp"
#include "sfb/mdp.hpp"
#include "sfb/rng.hpp"

namespace sfb {

/// Learned-regime parameter block. All heads are linear in seeded features of
/// z: forward holds one d x nfeat slab per (s,a) pair (stacked along rows),
/// critic one nfeat row per pair, backward one d-column per state.
struct FbParams {
  Eigen::MatrixXd forward;   // (n_pairs * d) x nfeat
  Eigen::MatrixXd backward;  // d x n_states
  Eigen::MatrixXd critic;    // n_pairs x nfeat
};

/// Trained forward-backward model over a discrete MDP's shape. The backward
/// map is over states; forward inner products against it are densities with
/// respect to data_dist, following the convention that F^T B(.,u) rho(u)
/// estimates the discounted occupancy of u counted from the step after the
/// conditioning pair.
struct FbModel {
  int n_states = 0;
  int n_actions = 0;
  int d = 0;
  double discount = 0.0;
  FeatureMap features;
  FbParams params;   // live parameters
  FbParams target;   // Polyak-averaged copy used inside TD targets
  Eigen::VectorXd data_dist;  // rho over states
  PolicyMode mode = PolicyMode::soft;

  int n_pairs() const { return n_states * n_actions; }
  int sa_index(int s, int a) const { return s * n_actions + a; }
  int n_features() const { return features.dim(); }

  /// F(s,a,z) for precomputed psi = features(z).
  Eigen::VectorXd forward_vec(const FbParams& p, int sa, const Eigen::VectorXd& psi) const {
    return p.forward.middleRows(static_cast<Eigen::Index>(sa) * d, d) * psi;
  }

  double critic_value(const FbParams& p, int sa, const Eigen::VectorXd& psi) const {
    return p.critic.row(sa).dot(psi);
  }
};

/// Zero-weight model (uniform policies) with a seeded feature bank and a
/// small random backward map so the orthonormalization loss has a nonzero
/// gradient from the start.
FbModel make_fb_model(int n_states, int n_actions, int d, double discount,
                      const Eigen::VectorXd& data_dist, int n_waves, double lengthscale,
                      std::uint64_t seed, PolicyMode mode = PolicyMode::soft);

/// Closed-form policy of the family: softmax((F^T z + (1-||z||) Q_H)/(1-||z||))
/// per state in soft mode, argmax of F^T z in hard mode. Below the temperature
/// floor the soft branch degenerates to the hard one and the result is
/// flagged. `use_target` switches every parameter read to the target copy.
StochasticPolicy soft_policy(const FbModel& model, const Eigen::VectorXd& z,
                             bool use_target = false);

/// Action distribution of soft_policy at a single state (cheap row form).
Eigen::VectorXd soft_policy_row(const FbModel& model, int s, const Eigen::VectorXd& z,
                                const Eigen::VectorXd& psi, bool use_target);

// ─── Losses ──────────────────────────────────────────────────────────────────

/// Mini-batch of dataset transitions with next actions pre-sampled from the
/// target-copy policy at each item's embedding. Freezing a_next and the log
/// probability here keeps every loss an analytic function of live parameters.
struct TransitionBatch {
  std::vector<int> s, a, s_next, a_next;
  std::vector<double> log_pi_next;  // log pi_target(a_next|s_next), floored at 1e-8

  int size() const { return static_cast<int>(s.size()); }
};

/// Draws a_next ~ target policy per item. indices select dataset transitions;
/// z_batch must be one ball embedding per index.
TransitionBatch assemble_batch(const FbModel& model, const TransitionDataset& data,
                               const std::vector<int>& indices,
                               const std::vector<Eigen::VectorXd>& z_batch, Rng& rng);

struct FbLossResult {
  double loss = 0.0;
  /// Completed-square Bellman residual of the measure recursion; zero when
  /// F^T B rho is exactly the discounted next-state occupancy.
  double diagnostic = 0.0;
  Eigen::MatrixXd forward_grad;
  Eigen::MatrixXd backward_grad;
};

/// Measure-matching TD loss: per item, sum_u rho(u) (F^T B_u - gamma
/// Ftgt^T Btgt_u)^2 - 2 F^T B_{s'}, averaged over the batch. Gradients are the
/// exact derivatives with target copies held constant.
FbLossResult fb_loss(const FbModel& model, const TransitionBatch& batch,
                     const std::vector<Eigen::VectorXd>& z_batch);

struct OrthoLossResult {
  double loss = 0.0;
  Eigen::MatrixXd backward_grad;
};

/// || E_rho[B B^T] - I ||_F^2 with its analytic gradient 4 (C - I) B diag(rho).
OrthoLossResult ortho_loss(const FbModel& model);

struct CriticLossResult {
  double loss = 0.0;
  Eigen::MatrixXd critic_grad;
};

/// TD loss of the discounted-entropy critic: (Q_H - gamma (Qtgt_H' -
/// log pi(a'|s')))^2 averaged over the batch, log term from the batch.
CriticLossResult entropy_critic_loss(const FbModel& model, const TransitionBatch& batch,
                                     const std::vector<Eigen::VectorXd>& z_batch);

// ─── Training ────────────────────────────────────────────────────────────────

struct TrainConfig {
  int n_steps = 50000;
  int batch_size = 32;
  double lr = 1e-3;
  double momentum = 0.9;
  double polyak = 0.01;
  double ortho_coeff = 1.0;
  int d = 8;
  int n_waves = 64;
  double lengthscale = 0.75;
  std::uint64_t seed = 0;
  int log_every = 500;
  PolicyMode mode = PolicyMode::soft;

  void validate() const;
};

struct TrainLogRow {
  int step = 0;
  double fb = 0.0;
  double ortho = 0.0;
  double critic = 0.0;
};

struct TrainResult {
  FbModel model;
  std::vector<TrainLogRow> log;
};

/// Seeded SGD-with-momentum loop over the three losses with Polyak targets.
/// Mutates a copy of the given model and returns it with the loss log. Any
/// non-finite loss aborts with the step index and loss breakdown.
TrainResult train(const FbModel& model, const TransitionDataset& data, const TrainConfig& cfg);

// ─── Checkpoints ─────────────────────────────────────────────────────────────

/// Versioned binary checkpoint (dims, feature bank, both parameter copies,
/// rho). Round-trips bit-exactly.
void save_fb_model(const FbModel& model, const std::string& path);
FbModel load_fb_model(const std::string& path);

}  // namespace sfb
