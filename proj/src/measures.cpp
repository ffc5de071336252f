#include "sfb/measures.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace sfb {

namespace {

// Clamps negatives to zero and normalizes; returns false when nothing is left.
bool clamp_normalize(Eigen::VectorXd& v) {
  v = v.cwiseMax(0.0);
  const double total = v.sum();
  if (!(total > 0.0) || !std::isfinite(total)) return false;
  v /= total;
  return true;
}

Eigen::VectorXd lift_by_policy(const Eigen::VectorXd& state_marginal,
                               const Eigen::MatrixXd& policy_probs) {
  const int ns = static_cast<int>(policy_probs.rows());
  const int na = static_cast<int>(policy_probs.cols());
  Eigen::VectorXd sa(ns * na);
  for (int s = 0; s < ns; ++s)
    for (int a = 0; a < na; ++a) sa[s * na + a] = state_marginal[s] * policy_probs(s, a);
  return sa;
}

}  // namespace

void MeasureEstimate::validate() const {
  if (n_states < 1 || n_actions < 1)
    throw std::invalid_argument("MeasureEstimate: empty shape");
  if (state_marginal.size() != n_states ||
      sa_marginal.size() != static_cast<Eigen::Index>(n_states) * n_actions)
    throw std::invalid_argument("MeasureEstimate: marginal size mismatch");
  if (state_marginal.minCoeff() < -1e-9 || sa_marginal.minCoeff() < -1e-9)
    throw std::invalid_argument("MeasureEstimate: negative marginal mass");
  if (std::abs(state_marginal.sum() - 1.0) > 1e-9 || std::abs(sa_marginal.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("MeasureEstimate: marginals must sum to 1");
  if (state_coords.rows() > 0 &&
      (state_coords.rows() != n_states || state_coords.cols() != 2 ||
       action_coords.rows() != n_actions || action_coords.cols() != 2))
    throw std::invalid_argument("MeasureEstimate: malformed coordinate lift");
}

MeasureEstimate exact_measure(const TabularMdp& mdp, const StochasticPolicy& policy) {
  const SuccessorMeasure m = occupancy_marginals(mdp, policy);
  MeasureEstimate est;
  est.kind = MeasureEstimate::Kind::exact;
  est.n_states = mdp.n_states;
  est.n_actions = mdp.n_actions;
  est.state_marginal = m.state_marginal;
  est.sa_marginal = m.marginal;
  return est;
}

void attach_grid_coordinates(MeasureEstimate& est, const GridDidacticEnv& env) {
  if (est.n_states != env.mdp.n_states || est.n_actions != env.mdp.n_actions)
    throw std::invalid_argument("attach_grid_coordinates: estimate does not match the grid");
  est.state_coords.resize(est.n_states, 2);
  for (int s = 0; s < est.n_states; ++s)
    est.state_coords.row(s) = env.cell_center(s).transpose();
  est.action_coords.resize(est.n_actions, 2);
  for (int a = 0; a < est.n_actions; ++a)
    est.action_coords.row(a) = env.cell_center(a).transpose();
  est.jitter_half_width = env.cell_width / 2.0;
}

MeasureEstimate implicit_measure(const ExactFbModel& model, const Eigen::VectorXd& z) {
  const TabularMdp& mdp = model.mdp;
  const StochasticPolicy pi = model.policy(z);
  const Eigen::MatrixXd fwd = model.forward_at(z);  // n_pairs x d
  Eigen::VectorXd avg = Eigen::VectorXd::Zero(model.dim());
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      avg += mdp.initial_dist[s] * pi.probs(s, a) * fwd.row(mdp.sa_index(s, a)).transpose();
  // With an invertible backward map these weights are the occupancy itself,
  // initial step included, so no further mixing is needed.
  Eigen::VectorXd w = model.backward.transpose() * avg;
  if (!clamp_normalize(w)) throw std::runtime_error("degenerate implicit measure");
  MeasureEstimate est;
  est.kind = MeasureEstimate::Kind::implicit;
  est.n_states = mdp.n_states;
  est.n_actions = mdp.n_actions;
  est.sa_marginal = w;
  est.state_marginal = Eigen::VectorXd::Zero(mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      est.state_marginal[s] += w[mdp.sa_index(s, a)];
  return est;
}

MeasureEstimate implicit_measure(const FbModel& model, const Eigen::VectorXd& z,
                                 const TabularMdp& mdp) {
  if (mdp.n_states != model.n_states || mdp.n_actions != model.n_actions)
    throw std::invalid_argument("implicit_measure: model/MDP shape mismatch");
  const StochasticPolicy pi = soft_policy(model, z);
  const Eigen::VectorXd psi = model.features(z);
  Eigen::VectorXd avg = Eigen::VectorXd::Zero(model.d);
  for (int s = 0; s < mdp.n_states; ++s) {
    if (mdp.initial_dist[s] == 0.0) continue;
    for (int a = 0; a < mdp.n_actions; ++a)
      avg += mdp.initial_dist[s] * pi.probs(s, a) *
             model.forward_vec(model.params, model.sa_index(s, a), psi);
  }
  Eigen::VectorXd w =
      (model.params.backward.transpose() * avg).cwiseProduct(model.data_dist);
  if (!clamp_normalize(w)) throw std::runtime_error("degenerate implicit measure");
  MeasureEstimate est;
  est.kind = MeasureEstimate::Kind::implicit;
  est.n_states = mdp.n_states;
  est.n_actions = mdp.n_actions;
  est.state_marginal =
      (1.0 - mdp.discount) * mdp.initial_dist + mdp.discount * w;
  est.sa_marginal = lift_by_policy(est.state_marginal, pi.probs);
  return est;
}

Eigen::VectorXd ExplicitMeasureModel::raw_conditional(int sa, const Eigen::VectorXd& psi) const {
  return weights.middleRows(static_cast<Eigen::Index>(sa) * n_states, n_states) * psi;
}

Eigen::VectorXd ExplicitMeasureModel::conditional(int sa, const Eigen::VectorXd& psi) const {
  Eigen::VectorXd m = raw_conditional(sa, psi);
  if (!clamp_normalize(m)) return Eigen::VectorXd::Constant(n_states, 1.0 / n_states);
  return m;
}

void ExplicitTrainConfig::validate() const {
  if (n_steps < 0) throw std::invalid_argument("ExplicitTrainConfig: n_steps must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("ExplicitTrainConfig: batch_size must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("ExplicitTrainConfig: lr must be positive");
  if (target_sync < 1)
    throw std::invalid_argument("ExplicitTrainConfig: target_sync must be >= 1");
  if (d < 1 || n_waves < 1) throw std::invalid_argument("ExplicitTrainConfig: bad dimensions");
  if (!(lengthscale > 0.0)) throw std::invalid_argument("ExplicitTrainConfig: bad lengthscale");
  if (log_every < 1) throw std::invalid_argument("ExplicitTrainConfig: log_every must be >= 1");
}

ExplicitTrainResult explicit_measure_train(int n_states, int n_actions, double discount,
                                           const TransitionDataset& data,
                                           const PolicyRowFamily& policy,
                                           const ExplicitTrainConfig& cfg) {
  cfg.validate();
  data.validate();
  if (n_states != data.n_states || n_actions != data.n_actions)
    throw std::invalid_argument("explicit_measure_train: dataset/shape mismatch");
  if (!(discount > 0.0 && discount < 1.0))
    throw std::invalid_argument("explicit_measure_train: discount must lie in (0,1)");
  if (!policy) throw std::invalid_argument("explicit_measure_train: missing policy family");

  ExplicitTrainResult out;
  ExplicitMeasureModel& m = out.model;
  m.n_states = n_states;
  m.n_actions = n_actions;
  m.d = cfg.d;
  m.discount = discount;
  m.features = make_fourier_features(cfg.d, cfg.n_waves, cfg.lengthscale, cfg.seed);
  const int nfeat = m.features.dim();
  m.weights = Eigen::MatrixXd::Zero(
      static_cast<Eigen::Index>(m.n_pairs()) * n_states, nfeat);
  if (cfg.n_steps == 0) return out;

  ExplicitMeasureModel target = m;
  Rng rng_idx = Rng::stream(cfg.seed, 1);
  Rng rng_z = Rng::stream(cfg.seed, 2);
  Rng rng_act = Rng::stream(cfg.seed, 3);

  const int n = cfg.batch_size;
  const double inv_n = 1.0 / n;
  for (int step = 1; step <= cfg.n_steps; ++step) {
    if ((step - 1) % cfg.target_sync == 0) target.weights = m.weights;

    std::vector<int> sas(n);
    std::vector<Eigen::VectorXd> residuals(n), psis(n);
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto& t = data.transitions[rng_idx.uniform_int(data.size())];
      const Eigen::VectorXd z = rng_z.ball_uniform(cfg.d);
      const Eigen::VectorXd psi = m.features(z);
      const Eigen::VectorXd row = policy(t.s_next, z);
      const int a_next = rng_act.categorical(row);
      Eigen::VectorXd y =
          discount * target.conditional(m.sa_index(t.s_next, a_next), psi);
      y[t.s_next] += 1.0 - discount;
      const Eigen::VectorXd raw = m.raw_conditional(m.sa_index(t.s, t.a), psi);
      sas[i] = m.sa_index(t.s, t.a);
      residuals[i] = raw - y;
      psis[i] = psi;
      loss += inv_n * residuals[i].squaredNorm();
    }
    if (!std::isfinite(loss))
      throw std::runtime_error("explicit_measure_train: non-finite loss at step " +
                               std::to_string(step));

    std::vector<int> touched = sas;
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
    std::vector<Eigen::MatrixXd> grads(touched.size(),
                                       Eigen::MatrixXd::Zero(n_states, nfeat));
    for (int i = 0; i < n; ++i) {
      const int slot = static_cast<int>(
          std::lower_bound(touched.begin(), touched.end(), sas[i]) - touched.begin());
      grads[slot].noalias() += (2.0 * inv_n) * residuals[i] * psis[i].transpose();
    }
    for (std::size_t j = 0; j < touched.size(); ++j)
      m.weights.middleRows(static_cast<Eigen::Index>(touched[j]) * n_states, n_states)
          .noalias() -= cfg.lr * grads[j];

    if (step % cfg.log_every == 0 || step == cfg.n_steps)
      out.log.emplace_back(step, loss);
  }
  return out;
}

MeasureEstimate explicit_measure(const ExplicitMeasureModel& model, const Eigen::VectorXd& z,
                                 const TabularMdp& mdp, const PolicyRowFamily& policy) {
  if (mdp.n_states != model.n_states || mdp.n_actions != model.n_actions)
    throw std::invalid_argument("explicit_measure: model/MDP shape mismatch");
  if (!policy) throw std::invalid_argument("explicit_measure: missing policy family");
  const Eigen::VectorXd psi = model.features(z);
  Eigen::MatrixXd policy_probs(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s) policy_probs.row(s) = policy(s, z).transpose();
  Eigen::VectorXd state_marginal = (1.0 - mdp.discount) * mdp.initial_dist;
  for (int s = 0; s < mdp.n_states; ++s) {
    if (mdp.initial_dist[s] == 0.0) continue;
    for (int a = 0; a < mdp.n_actions; ++a) {
      const double weight = mdp.initial_dist[s] * policy_probs(s, a);
      if (weight == 0.0) continue;
      state_marginal +=
          mdp.discount * weight * model.conditional(model.sa_index(s, a), psi);
    }
  }
  MeasureEstimate est;
  est.kind = MeasureEstimate::Kind::explicit_model;
  est.n_states = mdp.n_states;
  est.n_actions = mdp.n_actions;
  est.state_marginal = state_marginal;
  est.sa_marginal = lift_by_policy(state_marginal, policy_probs);
  return est;
}

std::vector<MeasureSample> sample_measure(const MeasureEstimate& est, int n,
                                          std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_measure: n must be >= 1");
  est.validate();
  Rng rng(seed);
  const bool coords = est.state_coords.rows() > 0;
  const double hw = est.jitter_half_width;
  std::vector<MeasureSample> out(n);
  for (int i = 0; i < n; ++i) {
    const int sa = rng.categorical(est.sa_marginal);
    MeasureSample& smp = out[i];
    smp.s = sa / est.n_actions;
    smp.a = sa % est.n_actions;
    smp.has_coords = coords;
    if (coords) {
      smp.state_xy = est.state_coords.row(smp.s).transpose();
      smp.state_xy.x() += rng.uniform(-hw, hw);
      smp.state_xy.y() += rng.uniform(-hw, hw);
      smp.action_xy = est.action_coords.row(smp.a).transpose();
      smp.action_xy.x() += rng.uniform(-hw, hw);
      smp.action_xy.y() += rng.uniform(-hw, hw);
    }
  }
  return out;
}

}  // namespace sfb
