#include "sfb/solvers.hpp"

#include <cmath>
#include <stdexcept>

namespace sfb {

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (int i = 0; i < v.size(); ++i) acc += std::exp(v[i] - m);
  return m + std::log(acc);
}

Eigen::VectorXd softmax(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  Eigen::VectorXd e(v.size());
  double acc = 0.0;
  for (int i = 0; i < v.size(); ++i) {
    e[i] = std::exp(v[i] - m);
    acc += e[i];
  }
  return e / acc;
}

namespace {

enum class Backup { soft, hard };

SolveResult value_iteration(const TabularMdp& mdp, const RewardVector& reward,
                            const SolveOptions& opts, Backup backup) {
  mdp.validate();
  const Eigen::VectorXd r = reward.over_pairs(mdp);
  const int ns = mdp.n_states;
  const int na = mdp.n_actions;
  const double g = mdp.discount;
  Eigen::VectorXd q = Eigen::VectorXd::Zero(mdp.n_pairs());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(ns);
  SolveResult out;
  for (out.iters = 0; out.iters < opts.max_iters; ++out.iters) {
    for (int s = 0; s < ns; ++s) {
      const auto block = q.segment(mdp.sa_index(s, 0), na);
      v[s] = backup == Backup::soft ? log_sum_exp(block) : block.maxCoeff();
    }
    const Eigen::VectorXd next = r + g * (mdp.transition * v);
    const double delta = (next - q).cwiseAbs().maxCoeff();
    q = next;
    if (delta <= opts.tol) break;
  }
  if (out.iters >= opts.max_iters)
    throw std::runtime_error("value iteration failed to converge within max_iters");
  out.q = q;
  out.policy.probs.resize(ns, na);
  for (int s = 0; s < ns; ++s) {
    const auto block = q.segment(mdp.sa_index(s, 0), na);
    if (backup == Backup::soft) {
      out.policy.probs.row(s) = softmax(block).transpose();
    } else {
      int best = 0;
      for (int a = 1; a < na; ++a)
        if (block[a] > block[best]) best = a;
      out.policy.probs.row(s).setZero();
      out.policy.probs(s, best) = 1.0;
    }
  }
  return out;
}

}  // namespace

SolveResult soft_value_iteration(const TabularMdp& mdp, const RewardVector& reward,
                                 const SolveOptions& opts) {
  return value_iteration(mdp, reward, opts, Backup::soft);
}

SolveResult hard_value_iteration(const TabularMdp& mdp, const RewardVector& reward,
                                 const SolveOptions& opts) {
  return value_iteration(mdp, reward, opts, Backup::hard);
}

Eigen::VectorXd entropy_critic(const TabularMdp& mdp, const StochasticPolicy& pi) {
  // Linear system over pairs: Qh = gamma P (h + Pi Qh) where h holds the
  // per-state policy entropies and Pi averages pair values under pi.
  const int n = mdp.n_pairs();
  const Eigen::VectorXd h = pi.row_entropies();
  const Eigen::MatrixXd chain = sa_chain(mdp, pi);
  const double g = mdp.discount;
  Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - g * chain;
  const Eigen::VectorXd rhs = g * (mdp.transition * h);
  return system.partialPivLu().solve(rhs);
}

double policy_total_variation(const StochasticPolicy& a, const StochasticPolicy& b) {
  if (a.probs.rows() != b.probs.rows() || a.probs.cols() != b.probs.cols())
    throw std::invalid_argument("policy_total_variation: shape mismatch");
  double worst = 0.0;
  for (int s = 0; s < a.probs.rows(); ++s) {
    const double d = 0.5 * (a.probs.row(s) - b.probs.row(s)).cwiseAbs().sum();
    if (d > worst) worst = d;
  }
  return worst;
}

}  // namespace sfb
