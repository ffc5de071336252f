#include "sfb/fb_exact.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace sfb {

Eigen::VectorXd reparameterize(const Eigen::VectorXd& z_raw) {
  if (!z_raw.allFinite()) throw std::invalid_argument("reparameterize: non-finite embedding");
  return z_raw / (z_raw.norm() + 1.0);
}

Eigen::VectorXd reparameterize_inverse(const Eigen::VectorXd& z_ball) {
  const double n = z_ball.norm();
  if (n >= 1.0) throw std::invalid_argument("reparameterize_inverse: norm must be < 1");
  return z_ball / (1.0 - n);
}

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& m, double cutoff) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::VectorXd inv_sigma = svd.singularValues();
  for (int i = 0; i < inv_sigma.size(); ++i)
    inv_sigma[i] = inv_sigma[i] > cutoff ? 1.0 / inv_sigma[i] : 0.0;
  return svd.matrixV() * inv_sigma.asDiagonal() * svd.matrixU().transpose();
}

namespace {

void check_backward_rank(const Eigen::MatrixXd& backward) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(backward);
  const Eigen::VectorXd sv = svd.singularValues();
  if (sv.size() == 0 || sv.minCoeff() <= 1e-8)
    throw std::invalid_argument("backward map is rank deficient (singular value <= 1e-8)");
}

StochasticPolicy greedy_rows(const TabularMdp& mdp, const Eigen::VectorXd& scores) {
  StochasticPolicy pi;
  pi.probs = Eigen::MatrixXd::Zero(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s) {
    int best = 0;
    for (int a = 1; a < mdp.n_actions; ++a)
      if (scores[mdp.sa_index(s, a)] > scores[mdp.sa_index(s, best)]) best = a;
    pi.probs(s, best) = 1.0;
  }
  return pi;
}

}  // namespace

ExactSlice exact_fixed_point(const TabularMdp& mdp, const Eigen::MatrixXd& backward,
                             const Eigen::VectorXd& z, const FixedPointOptions& opts) {
  mdp.validate();
  const int n = mdp.n_pairs();
  if (backward.cols() != n)
    throw std::invalid_argument("exact_fixed_point: backward map must have |S||A| columns");
  if (z.size() != backward.rows())
    throw std::invalid_argument("exact_fixed_point: embedding/backward dimension mismatch");
  check_backward_rank(backward);

  const double norm = z.norm();
  bool clamped = false;
  PolicyMode mode = opts.mode;
  double temperature = 1.0;
  if (mode == PolicyMode::soft) {
    temperature = 1.0 - norm;
    if (temperature <= kTemperatureFloor) {
      mode = PolicyMode::hard;
      clamped = true;
    }
  }

  const Eigen::MatrixXd pinv = pseudo_inverse(backward);
  const double g = mdp.discount;
  StochasticPolicy pi = uniform_policy(mdp);
  double residual = 0.0;
  ExactSlice out;
  for (int it = 0; it < opts.max_iters; ++it) {
    const SuccessorMeasure m = successor_measure(mdp, pi);
    const Eigen::VectorXd reward_scores = m.sa_matrix * (pinv * z);
    StochasticPolicy next;
    if (mode == PolicyMode::hard) {
      next = greedy_rows(mdp, reward_scores);
    } else {
      // softmax of the soft Q-values: the reward term is rescaled out of the
      // normalized measure by 1/(1-gamma), and the embedding norm sets the
      // entropy temperature via the 1/(1-||z||) reward scale.
      Eigen::VectorXd entropies(n);
      const Eigen::VectorXd h = pi.row_entropies();
      for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) entropies[mdp.sa_index(s, a)] = h[s];
      const Eigen::VectorXd q =
          (reward_scores / temperature + m.sa_matrix * entropies) / (1.0 - g);
      next.probs.resize(mdp.n_states, mdp.n_actions);
      for (int s = 0; s < mdp.n_states; ++s)
        next.probs.row(s) = softmax(q.segment(mdp.sa_index(s, 0), mdp.n_actions)).transpose();
    }
    residual = policy_total_variation(next, pi);
    pi = next;
    if (residual <= opts.tol) {
      out.iters = it + 1;
      out.policy = pi;
      out.policy.temperature_clamped = clamped;
      out.measure = successor_measure(mdp, pi);
      out.forward = (out.measure.sa_matrix * pinv).transpose();
      out.approximate = backward.rows() < n;
      return out;
    }
  }
  throw std::runtime_error("exact_fixed_point: no convergence in " +
                           std::to_string(opts.max_iters) +
                           " iterations (last policy change " + std::to_string(residual) + ")");
}

StochasticPolicy ExactFbModel::policy(const Eigen::VectorXd& z) const {
  if (z.size() != dim())
    throw std::invalid_argument("ExactFbModel::policy: embedding dimension mismatch");
  const double norm = z.norm();
  const Eigen::VectorXd decoded = backward_pinv * z;
  const double temperature = 1.0 - norm;
  if (mode == PolicyMode::hard || temperature <= kTemperatureFloor) {
    RewardVector r{decoded, RewardSupport::state_action};
    StochasticPolicy pi = hard_value_iteration(mdp, r).policy;
    pi.temperature_clamped = mode == PolicyMode::soft;
    return pi;
  }
  RewardVector r{Eigen::VectorXd(decoded / temperature), RewardSupport::state_action};
  return soft_value_iteration(mdp, r).policy;
}

SuccessorMeasure ExactFbModel::measure(const Eigen::VectorXd& z) const {
  return occupancy_marginals(mdp, policy(z));
}

Eigen::MatrixXd ExactFbModel::forward_at(const Eigen::VectorXd& z) const {
  const SuccessorMeasure m = successor_measure(mdp, policy(z));
  return m.sa_matrix * backward_pinv;
}

Eigen::VectorXd ExactFbModel::embed_reward(const RewardVector& reward) const {
  return backward * reward.over_pairs(mdp);
}

ExactFbModel make_exact_model(const TabularMdp& mdp, const Eigen::MatrixXd& backward,
                              PolicyMode mode) {
  mdp.validate();
  if (backward.cols() != mdp.n_pairs())
    throw std::invalid_argument("make_exact_model: backward map must have |S||A| columns");
  check_backward_rank(backward);
  ExactFbModel model;
  model.mdp = mdp;
  model.backward = backward;
  model.backward_pinv = pseudo_inverse(backward);
  model.mode = mode;
  return model;
}

ExactFbModel make_exact_identity_model(const TabularMdp& mdp, PolicyMode mode) {
  mdp.validate();
  ExactFbModel model;
  model.mdp = mdp;
  model.backward = Eigen::MatrixXd::Identity(mdp.n_pairs(), mdp.n_pairs());
  model.backward_pinv = model.backward;
  model.mode = mode;
  return model;
}

}  // namespace sfb
