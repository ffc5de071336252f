#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "sfb/dataset.hpp"
#include "sfb/envs.hpp"
#include "sfb/fb_exact.hpp"
#include "sfb/fb_model.hpp"
#include "sfb/mdp.hpp"

namespace sfb {

/// A z-conditional occupancy estimate in marginal form, optionally carrying a
/// planar lift (cell centers plus jitter width) so it can be sampled as
/// continuous coordinates for the KNN evaluators.
struct MeasureEstimate {
  enum class Kind { implicit, explicit_model, exact };

  Kind kind = Kind::exact;
  int n_states = 0;
  int n_actions = 0;
  Eigen::VectorXd state_marginal;  // n_states, sums to 1
  Eigen::VectorXd sa_marginal;     // n_states * n_actions, sums to 1

  // Empty unless the environment declares cell geometry.
  Eigen::MatrixXd state_coords;   // n_states x 2 cell centers
  Eigen::MatrixXd action_coords;  // n_actions x 2 target-cell centers
  double jitter_half_width = 0.0;

  void validate() const;
};

/// One draw from an estimate. Coordinates are filled only when the estimate
/// carries a lift; they are jittered uniformly within the cell.
struct MeasureSample {
  int s = 0;
  int a = 0;
  Eigen::Vector2d state_xy = Eigen::Vector2d::Zero();
  Eigen::Vector2d action_xy = Eigen::Vector2d::Zero();
  bool has_coords = false;
};

/// Ground-truth occupancy of a policy, as an estimate of kind exact.
MeasureEstimate exact_measure(const TabularMdp& mdp, const StochasticPolicy& policy);

/// Copies the grid's cell geometry onto an estimate so samples get coordinates.
void attach_grid_coordinates(MeasureEstimate& est, const GridDidacticEnv& env);

/// Importance-weight route on the exact model: pair weights are the averaged
/// forward embedding against the backward map, clamped at zero and
/// renormalized. With an invertible backward map this reproduces the exact
/// occupancy, which is what the equivalence tests pin down.
MeasureEstimate implicit_measure(const ExactFbModel& model, const Eigen::VectorXd& z);

/// Importance-weight route on a learned model: state weights w(u) =
/// E_{mu0, pi_z}[F]^T B(.,u) rho(u), clamped and renormalized, then mixed as
/// (1-gamma) mu0 + gamma w and lifted to pairs by pi_z. Throws when every
/// weight clamps to zero.
MeasureEstimate implicit_measure(const FbModel& model, const Eigen::VectorXd& z,
                                 const TabularMdp& mdp);

/// Action distribution at a state for an embedding; the hook the explicit
/// measure machinery uses so it works with either model family.
using PolicyRowFamily = std::function<Eigen::VectorXd(int state, const Eigen::VectorXd& z)>;

/// Tabular conditional measure model: per (s,a) pair a linear head over
/// low-dimensional features of z whose clamped, renormalized output is
/// m(.|s,a,z), the distribution of states visited from the step after (s,a).
struct ExplicitMeasureModel {
  int n_states = 0;
  int n_actions = 0;
  int d = 0;
  double discount = 0.0;
  FeatureMap features;
  Eigen::MatrixXd weights;  // (n_pairs * n_states) x nfeat, one slab per pair

  int n_pairs() const { return n_states * n_actions; }
  int sa_index(int s, int a) const { return s * n_actions + a; }

  /// Raw (unclamped) head output for precomputed psi = features(z).
  Eigen::VectorXd raw_conditional(int sa, const Eigen::VectorXd& psi) const;
  /// Clamped, renormalized distribution; uniform when everything clamps away.
  Eigen::VectorXd conditional(int sa, const Eigen::VectorXd& psi) const;
};

struct ExplicitTrainConfig {
  int n_steps = 30000;
  int batch_size = 32;
  double lr = 0.25;
  int target_sync = 250;  // steps between hard target refreshes
  int d = 8;
  int n_waves = 8;
  double lengthscale = 0.75;
  std::uint64_t seed = 0;
  int log_every = 500;

  void validate() const;
};

struct ExplicitTrainResult {
  ExplicitMeasureModel model;
  std::vector<std::pair<int, double>> log;  // (step, batch TD loss)
};

/// TD regression of the conditional measure on dataset transitions: per item
/// the target is (1-gamma) delta_{s'} + gamma mtgt(.|s', a') with a' drawn
/// from the supplied policy family at the item's embedding. Seeded and
/// deterministic; non-finite losses abort with the step index.
ExplicitTrainResult explicit_measure_train(int n_states, int n_actions, double discount,
                                           const TransitionDataset& data,
                                           const PolicyRowFamily& policy,
                                           const ExplicitTrainConfig& cfg);

/// Reconstruction from the explicit model: state marginal (1-gamma) mu0 +
/// gamma sum_{s0,a0} mu0(s0) pi_z(a0|s0) m(.|s0,a0,z), lifted to pairs by
/// pi_z.
MeasureEstimate explicit_measure(const ExplicitMeasureModel& model, const Eigen::VectorXd& z,
                                 const TabularMdp& mdp, const PolicyRowFamily& policy);

/// n i.i.d. draws from the estimate's pair marginal, with the coordinate lift
/// applied when present. Deterministic per seed.
std::vector<MeasureSample> sample_measure(const MeasureEstimate& est, int n, std::uint64_t seed);

}  // namespace sfb
