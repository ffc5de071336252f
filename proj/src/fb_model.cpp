#include "sfb/fb_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "sfb/solvers.hpp"

namespace sfb {

namespace {

constexpr double kPolicyFloor = 1e-8;

Eigen::VectorXd policy_row_from_scores(const Eigen::VectorXd& reward_scores,
                                       const Eigen::VectorXd& critic_scores, double temperature,
                                       bool hard) {
  const int na = static_cast<int>(reward_scores.size());
  if (hard) {
    int best = 0;
    for (int a = 1; a < na; ++a)
      if (reward_scores[a] > reward_scores[best]) best = a;
    Eigen::VectorXd row = Eigen::VectorXd::Zero(na);
    row[best] = 1.0;
    return row;
  }
  return softmax((reward_scores + temperature * critic_scores) / temperature);
}

}  // namespace

FbModel make_fb_model(int n_states, int n_actions, int d, double discount,
                      const Eigen::VectorXd& data_dist, int n_waves, double lengthscale,
                      std::uint64_t seed, PolicyMode mode) {
  if (n_states < 1 || n_actions < 1 || d < 1)
    throw std::invalid_argument("make_fb_model: dimensions must be positive");
  if (!(discount > 0.0 && discount < 1.0))
    throw std::invalid_argument("make_fb_model: discount must lie in (0,1)");
  if (data_dist.size() != n_states)
    throw std::invalid_argument("make_fb_model: data_dist size mismatch");
  FbModel m;
  m.n_states = n_states;
  m.n_actions = n_actions;
  m.d = d;
  m.discount = discount;
  m.data_dist = data_dist;
  m.mode = mode;
  m.features = make_fourier_features(d, n_waves, lengthscale, seed);
  const int nfeat = m.n_features();
  m.params.forward = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m.n_pairs()) * d, nfeat);
  m.params.critic = Eigen::MatrixXd::Zero(m.n_pairs(), nfeat);
  Rng rng = Rng::stream(seed, 0xb0);
  m.params.backward.resize(d, n_states);
  for (int c = 0; c < n_states; ++c)
    m.params.backward.col(c) = rng.gaussian_vector(d);
  m.target = m.params;
  return m;
}

Eigen::VectorXd soft_policy_row(const FbModel& model, int s, const Eigen::VectorXd& z,
                                const Eigen::VectorXd& psi, bool use_target) {
  const FbParams& p = use_target ? model.target : model.params;
  const int na = model.n_actions;
  Eigen::VectorXd reward_scores(na);
  Eigen::VectorXd critic_scores(na);
  for (int a = 0; a < na; ++a) {
    const int sa = model.sa_index(s, a);
    reward_scores[a] = model.forward_vec(p, sa, psi).dot(z);
    critic_scores[a] = model.critic_value(p, sa, psi);
  }
  const double temperature = 1.0 - z.norm();
  const bool hard = model.mode == PolicyMode::hard || temperature <= kTemperatureFloor;
  return policy_row_from_scores(reward_scores, critic_scores, temperature, hard);
}

StochasticPolicy soft_policy(const FbModel& model, const Eigen::VectorXd& z, bool use_target) {
  if (z.size() != model.d)
    throw std::invalid_argument("soft_policy: embedding dimension mismatch");
  if (!z.allFinite()) throw std::invalid_argument("soft_policy: non-finite embedding");
  const Eigen::VectorXd psi = model.features(z);
  StochasticPolicy pi;
  pi.probs.resize(model.n_states, model.n_actions);
  for (int s = 0; s < model.n_states; ++s)
    pi.probs.row(s) = soft_policy_row(model, s, z, psi, use_target).transpose();
  const double temperature = 1.0 - z.norm();
  pi.temperature_clamped = model.mode == PolicyMode::soft && temperature <= kTemperatureFloor;
  return pi;
}

TransitionBatch assemble_batch(const FbModel& model, const TransitionDataset& data,
                               const std::vector<int>& indices,
                               const std::vector<Eigen::VectorXd>& z_batch, Rng& rng) {
  if (indices.empty()) throw std::invalid_argument("assemble_batch: empty index list");
  if (indices.size() != z_batch.size())
    throw std::invalid_argument("assemble_batch: one embedding per index required");
  TransitionBatch b;
  const int n = static_cast<int>(indices.size());
  b.s.resize(n);
  b.a.resize(n);
  b.s_next.resize(n);
  b.a_next.resize(n);
  b.log_pi_next.resize(n);
  for (int i = 0; i < n; ++i) {
    const auto& t = data.transitions.at(indices[i]);
    b.s[i] = t.s;
    b.a[i] = t.a;
    b.s_next[i] = t.s_next;
    const Eigen::VectorXd psi = model.features(z_batch[i]);
    const Eigen::VectorXd row = soft_policy_row(model, t.s_next, z_batch[i], psi, true);
    b.a_next[i] = rng.categorical(row);
    b.log_pi_next[i] = std::log(std::max(row[b.a_next[i]], kPolicyFloor));
  }
  return b;
}

FbLossResult fb_loss(const FbModel& model, const TransitionBatch& batch,
                     const std::vector<Eigen::VectorXd>& z_batch) {
  const int n = batch.size();
  if (n == 0) throw std::invalid_argument("fb_loss: empty batch");
  if (static_cast<int>(z_batch.size()) != n)
    throw std::invalid_argument("fb_loss: one embedding per transition required");
  const double g = model.discount;
  const Eigen::VectorXd& rho = model.data_dist;
  FbLossResult out;
  out.forward_grad = Eigen::MatrixXd::Zero(model.params.forward.rows(),
                                           model.params.forward.cols());
  out.backward_grad = Eigen::MatrixXd::Zero(model.d, model.n_states);
  const double inv_n = 1.0 / n;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd psi = model.features(z_batch[i]);
    const int sa = model.sa_index(batch.s[i], batch.a[i]);
    const int sa_next = model.sa_index(batch.s_next[i], batch.a_next[i]);
    const Eigen::VectorXd f = model.forward_vec(model.params, sa, psi);
    const Eigen::VectorXd f_tgt = model.forward_vec(model.target, sa_next, psi);
    const Eigen::VectorXd r = model.params.backward.transpose() * f -
                              g * (model.target.backward.transpose() * f_tgt);
    const Eigen::VectorXd weighted = rho.cwiseProduct(r);
    const int sp = batch.s_next[i];
    out.loss += inv_n * (r.dot(weighted) - 2.0 * f.dot(model.params.backward.col(sp)));
    out.diagnostic += inv_n * (r.dot(weighted) - 2.0 * r[sp] + 1.0 / rho[sp]);
    Eigen::VectorXd coeff = 2.0 * (model.params.backward * weighted) -
                            2.0 * model.params.backward.col(sp);
    out.forward_grad.middleRows(static_cast<Eigen::Index>(sa) * model.d, model.d).noalias() +=
        inv_n * coeff * psi.transpose();
    out.backward_grad.noalias() += (2.0 * inv_n) * f * weighted.transpose();
    out.backward_grad.col(sp).noalias() -= (2.0 * inv_n) * f;
  }
  return out;
}

OrthoLossResult ortho_loss(const FbModel& model) {
  const Eigen::MatrixXd& b = model.params.backward;
  const Eigen::MatrixXd cov =
      b * model.data_dist.asDiagonal() * b.transpose() -
      Eigen::MatrixXd::Identity(model.d, model.d);
  OrthoLossResult out;
  out.loss = cov.squaredNorm();
  out.backward_grad = 4.0 * cov * b * model.data_dist.asDiagonal();
  return out;
}

CriticLossResult entropy_critic_loss(const FbModel& model, const TransitionBatch& batch,
                                     const std::vector<Eigen::VectorXd>& z_batch) {
  const int n = batch.size();
  if (n == 0) throw std::invalid_argument("entropy_critic_loss: empty batch");
  if (static_cast<int>(z_batch.size()) != n)
    throw std::invalid_argument("entropy_critic_loss: one embedding per transition required");
  const double g = model.discount;
  CriticLossResult out;
  out.critic_grad = Eigen::MatrixXd::Zero(model.n_pairs(), model.n_features());
  const double inv_n = 1.0 / n;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd psi = model.features(z_batch[i]);
    const int sa = model.sa_index(batch.s[i], batch.a[i]);
    const int sa_next = model.sa_index(batch.s_next[i], batch.a_next[i]);
    const double q = model.critic_value(model.params, sa, psi);
    const double target = g * (model.critic_value(model.target, sa_next, psi) -
                               batch.log_pi_next[i]);
    const double delta = q - target;
    out.loss += inv_n * delta * delta;
    out.critic_grad.row(sa).noalias() += (2.0 * inv_n * delta) * psi.transpose();
  }
  return out;
}

void TrainConfig::validate() const {
  if (n_steps < 0) throw std::invalid_argument("TrainConfig: n_steps must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw std::invalid_argument("TrainConfig: momentum must lie in [0,1)");
  if (!(polyak > 0.0 && polyak <= 1.0))
    throw std::invalid_argument("TrainConfig: polyak must lie in (0,1]");
  if (ortho_coeff < 0.0) throw std::invalid_argument("TrainConfig: ortho_coeff must be >= 0");
  if (d < 1 || n_waves < 1) throw std::invalid_argument("TrainConfig: bad dimensions");
  if (!(lengthscale > 0.0)) throw std::invalid_argument("TrainConfig: bad lengthscale");
  if (log_every < 1) throw std::invalid_argument("TrainConfig: log_every must be >= 1");
}

// The training loop applies momentum and Polyak averaging to forward/critic
// rows lazily: a row's momentum decays by beta^k and its target interpolates
// by (1-tau)^k in closed form when next touched, instead of every row being
// rewritten every step. Live parameters move only on touch, which makes the
// closed forms exact for this (sparse-momentum) optimizer. The backward map
// is small and is updated densely every step.
TrainResult train(const FbModel& model, const TransitionDataset& data, const TrainConfig& cfg) {
  cfg.validate();
  data.validate();
  if (data.n_states != model.n_states || data.n_actions != model.n_actions)
    throw std::invalid_argument("train: dataset/model shape mismatch");
  TrainResult out;
  out.model = model;
  if (cfg.n_steps == 0) return out;
  FbModel& m = out.model;

  const int d = m.d;
  const int na = m.n_actions;
  const int nfeat = m.n_features();
  const double g = m.discount;
  const double beta = cfg.momentum;
  const double tau = cfg.polyak;
  const Eigen::VectorXd& rho = m.data_dist;

  Eigen::MatrixXd mom_f = Eigen::MatrixXd::Zero(m.params.forward.rows(), nfeat);
  Eigen::MatrixXd mom_b = Eigen::MatrixXd::Zero(d, m.n_states);
  Eigen::MatrixXd mom_c = Eigen::MatrixXd::Zero(m.n_pairs(), nfeat);
  std::vector<int> sync_f(m.n_pairs(), 0);  // steps fully applied to forward row
  std::vector<int> sync_c(m.n_pairs(), 0);

  Rng rng_idx = Rng::stream(cfg.seed, 1);
  Rng rng_z = Rng::stream(cfg.seed, 2);
  Rng rng_act = Rng::stream(cfg.seed, 3);

  // Materialized target reads as of the end of step now-1, without write-back.
  const auto forward_tgt_vec = [&](int sa, const Eigen::VectorXd& psi, int now) {
    const double w = std::pow(1.0 - tau, static_cast<double>(now - 1 - sync_f[sa]));
    const auto rows = Eigen::seqN(static_cast<Eigen::Index>(sa) * d, d);
    return (w * (m.target.forward(rows, Eigen::all) * psi) +
            (1.0 - w) * (m.params.forward(rows, Eigen::all) * psi))
        .eval();
  };
  const auto critic_tgt_val = [&](int sa, const Eigen::VectorXd& psi, int now) {
    const double w = std::pow(1.0 - tau, static_cast<double>(now - 1 - sync_c[sa]));
    return w * m.target.critic.row(sa).dot(psi) + (1.0 - w) * m.params.critic.row(sa).dot(psi);
  };

  const int n = cfg.batch_size;
  std::vector<Eigen::VectorXd> z_batch(n), psis(n);
  std::vector<int> bs(n), ba(n), bsp(n), bap(n);
  std::vector<double> blog(n);

  for (int step = 1; step <= cfg.n_steps; ++step) {
    // batch assembly: transitions, embeddings, next actions from target policy
    for (int i = 0; i < n; ++i) {
      const auto& t = data.transitions[rng_idx.uniform_int(data.size())];
      bs[i] = t.s;
      ba[i] = t.a;
      bsp[i] = t.s_next;
      z_batch[i] = rng_z.ball_uniform(d);
      psis[i] = m.features(z_batch[i]);
      Eigen::VectorXd reward_scores(na), critic_scores(na);
      for (int a = 0; a < na; ++a) {
        const int sa = m.sa_index(t.s_next, a);
        reward_scores[a] = forward_tgt_vec(sa, psis[i], step).dot(z_batch[i]);
        critic_scores[a] = critic_tgt_val(sa, psis[i], step);
      }
      const double temperature = 1.0 - z_batch[i].norm();
      const bool hard = m.mode == PolicyMode::hard || temperature <= kTemperatureFloor;
      const Eigen::VectorXd row =
          policy_row_from_scores(reward_scores, critic_scores, temperature, hard);
      bap[i] = rng_act.categorical(row);
      blog[i] = std::log(std::max(row[bap[i]], kPolicyFloor));
    }

    // losses and sparse gradients
    double fb_loss_acc = 0.0, critic_loss_acc = 0.0;
    Eigen::MatrixXd grad_b = Eigen::MatrixXd::Zero(d, m.n_states);
    std::vector<int> touched;
    touched.reserve(2 * n);
    for (int i = 0; i < n; ++i) {
      touched.push_back(m.sa_index(bs[i], ba[i]));
    }
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
    std::vector<Eigen::MatrixXd> grad_f(touched.size(),
                                        Eigen::MatrixXd::Zero(d, nfeat));
    std::vector<Eigen::VectorXd> grad_c(touched.size(), Eigen::VectorXd::Zero(nfeat));
    const auto slot_of = [&](int sa) {
      return static_cast<int>(std::lower_bound(touched.begin(), touched.end(), sa) -
                              touched.begin());
    };
    const double inv_n = 1.0 / n;
    for (int i = 0; i < n; ++i) {
      const int sa = m.sa_index(bs[i], ba[i]);
      const int sa_next = m.sa_index(bsp[i], bap[i]);
      const int sp = bsp[i];
      const Eigen::VectorXd& psi = psis[i];
      const Eigen::VectorXd f = m.forward_vec(m.params, sa, psi);
      const Eigen::VectorXd f_tgt = forward_tgt_vec(sa_next, psi, step);
      const Eigen::VectorXd r = m.params.backward.transpose() * f -
                                g * (m.target.backward.transpose() * f_tgt);
      const Eigen::VectorXd weighted = rho.cwiseProduct(r);
      fb_loss_acc += inv_n * (r.dot(weighted) - 2.0 * f.dot(m.params.backward.col(sp)));
      Eigen::VectorXd coeff =
          2.0 * (m.params.backward * weighted) - 2.0 * m.params.backward.col(sp);
      const int slot = slot_of(sa);
      grad_f[slot].noalias() += inv_n * coeff * psi.transpose();
      grad_b.noalias() += (2.0 * inv_n) * f * weighted.transpose();
      grad_b.col(sp).noalias() -= (2.0 * inv_n) * f;

      const double q = m.params.critic.row(sa).dot(psi);
      const double target = g * (critic_tgt_val(sa_next, psi, step) - blog[i]);
      const double delta = q - target;
      critic_loss_acc += inv_n * delta * delta;
      grad_c[slot].noalias() += (2.0 * inv_n * delta) * psi;
    }
    const Eigen::MatrixXd cov =
        m.params.backward * rho.asDiagonal() * m.params.backward.transpose() -
        Eigen::MatrixXd::Identity(d, d);
    const double ortho_loss_acc = cov.squaredNorm();
    grad_b.noalias() +=
        cfg.ortho_coeff * 4.0 * cov * m.params.backward * rho.asDiagonal();

    if (!std::isfinite(fb_loss_acc) || !std::isfinite(ortho_loss_acc) ||
        !std::isfinite(critic_loss_acc))
      throw std::runtime_error(
          "train: non-finite loss at step " + std::to_string(step) + " (fb=" +
          std::to_string(fb_loss_acc) + ", ortho=" + std::to_string(ortho_loss_acc) +
          ", critic=" + std::to_string(critic_loss_acc) + ")");

    // parameter updates: lazy rows, then this step's touch, then its Polyak move
    for (std::size_t j = 0; j < touched.size(); ++j) {
      const int sa = touched[j];
      const auto rows = Eigen::seqN(static_cast<Eigen::Index>(sa) * d, d);
      const int kf = step - 1 - sync_f[sa];
      if (kf > 0) {
        const double w = std::pow(1.0 - tau, static_cast<double>(kf));
        mom_f(rows, Eigen::all) *= std::pow(beta, static_cast<double>(kf));
        m.target.forward(rows, Eigen::all) =
            w * m.target.forward(rows, Eigen::all) + (1.0 - w) * m.params.forward(rows, Eigen::all);
      }
      mom_f(rows, Eigen::all) = beta * mom_f(rows, Eigen::all) - cfg.lr * grad_f[j];
      m.params.forward(rows, Eigen::all) += mom_f(rows, Eigen::all);
      m.target.forward(rows, Eigen::all) =
          (1.0 - tau) * m.target.forward(rows, Eigen::all) + tau * m.params.forward(rows, Eigen::all);
      sync_f[sa] = step;

      const int kc = step - 1 - sync_c[sa];
      if (kc > 0) {
        const double w = std::pow(1.0 - tau, static_cast<double>(kc));
        mom_c.row(sa) *= std::pow(beta, static_cast<double>(kc));
        m.target.critic.row(sa) =
            w * m.target.critic.row(sa) + (1.0 - w) * m.params.critic.row(sa);
      }
      mom_c.row(sa) = beta * mom_c.row(sa) - cfg.lr * grad_c[j].transpose();
      m.params.critic.row(sa) += mom_c.row(sa);
      m.target.critic.row(sa) =
          (1.0 - tau) * m.target.critic.row(sa) + tau * m.params.critic.row(sa);
      sync_c[sa] = step;
    }
    mom_b = beta * mom_b - cfg.lr * grad_b;
    m.params.backward += mom_b;
    m.target.backward = (1.0 - tau) * m.target.backward + tau * m.params.backward;

    if (step % cfg.log_every == 0 || step == cfg.n_steps)
      out.log.push_back({step, fb_loss_acc, ortho_loss_acc, critic_loss_acc});
  }

  // flush pending Polyak interpolation so stored targets are current
  for (int sa = 0; sa < m.n_pairs(); ++sa) {
    const auto rows = Eigen::seqN(static_cast<Eigen::Index>(sa) * d, d);
    const int kf = cfg.n_steps - sync_f[sa];
    if (kf > 0) {
      const double w = std::pow(1.0 - tau, static_cast<double>(kf));
      m.target.forward(rows, Eigen::all) =
          w * m.target.forward(rows, Eigen::all) + (1.0 - w) * m.params.forward(rows, Eigen::all);
    }
    const int kc = cfg.n_steps - sync_c[sa];
    if (kc > 0) {
      const double w = std::pow(1.0 - tau, static_cast<double>(kc));
      m.target.critic.row(sa) =
          w * m.target.critic.row(sa) + (1.0 - w) * m.params.critic.row(sa);
    }
  }
  return out;
}

// ─── Checkpoints ─────────────────────────────────────────────────────────────

namespace {

constexpr char kCheckpointMagic[8] = {'S', 'F', 'B', 'M', 'O', 'D', 'L', '1'};

void write_bytes(std::ofstream& out, const void* p, std::size_t nbytes) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(nbytes));
}

void read_bytes(std::ifstream& in, void* p, std::size_t nbytes) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(nbytes));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
}

void write_matrix(std::ofstream& out, const Eigen::MatrixXd& mat) {
  const std::int64_t rows = mat.rows(), cols = mat.cols();
  write_bytes(out, &rows, sizeof rows);
  write_bytes(out, &cols, sizeof cols);
  write_bytes(out, mat.data(), sizeof(double) * static_cast<std::size_t>(rows * cols));
}

Eigen::MatrixXd read_matrix(std::ifstream& in) {
  std::int64_t rows = 0, cols = 0;
  read_bytes(in, &rows, sizeof rows);
  read_bytes(in, &cols, sizeof cols);
  if (rows < 0 || cols < 0 || rows * cols > (1LL << 28))
    throw std::runtime_error("checkpoint: implausible matrix shape");
  Eigen::MatrixXd mat(rows, cols);
  read_bytes(in, mat.data(), sizeof(double) * static_cast<std::size_t>(rows * cols));
  return mat;
}

void write_params(std::ofstream& out, const FbParams& p) {
  write_matrix(out, p.forward);
  write_matrix(out, p.backward);
  write_matrix(out, p.critic);
}

FbParams read_params(std::ifstream& in) {
  FbParams p;
  p.forward = read_matrix(in);
  p.backward = read_matrix(in);
  p.critic = read_matrix(in);
  return p;
}

}  // namespace

void save_fb_model(const FbModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_fb_model: cannot open '" + path + "'");
  write_bytes(out, kCheckpointMagic, sizeof kCheckpointMagic);
  const std::int32_t header[6] = {model.n_states, model.n_actions, model.d,
                                  model.mode == PolicyMode::hard ? 1 : 0,
                                  model.features.kind == FeatureMap::Kind::anchor ? 1 : 0,
                                  model.features.in_dim};
  write_bytes(out, header, sizeof header);
  const double scalars[3] = {model.discount, model.features.amplitude,
                             model.features.lengthscale};
  write_bytes(out, scalars, sizeof scalars);
  write_bytes(out, &model.features.seed, sizeof model.features.seed);
  write_matrix(out, model.features.wave);
  write_matrix(out, model.features.phase);
  write_matrix(out, model.features.anchors);
  write_params(out, model.params);
  write_params(out, model.target);
  write_matrix(out, model.data_dist);
  if (!out) throw std::runtime_error("save_fb_model: write failed for '" + path + "'");
}

FbModel load_fb_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_fb_model: cannot open '" + path + "'");
  char magic[8];
  read_bytes(in, magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw std::runtime_error("load_fb_model: bad magic in '" + path + "'");
  std::int32_t header[6];
  read_bytes(in, header, sizeof header);
  double scalars[3];
  read_bytes(in, scalars, sizeof scalars);
  FbModel m;
  m.n_states = header[0];
  m.n_actions = header[1];
  m.d = header[2];
  m.mode = header[3] == 1 ? PolicyMode::hard : PolicyMode::soft;
  m.discount = scalars[0];
  m.features.kind = header[4] == 1 ? FeatureMap::Kind::anchor : FeatureMap::Kind::fourier;
  m.features.in_dim = header[5];
  m.features.amplitude = scalars[1];
  m.features.lengthscale = scalars[2];
  read_bytes(in, &m.features.seed, sizeof m.features.seed);
  m.features.wave = read_matrix(in);
  m.features.phase = read_matrix(in);
  m.features.anchors = read_matrix(in);
  m.params = read_params(in);
  m.target = read_params(in);
  m.data_dist = read_matrix(in);
  return m;
}

}  // namespace sfb
