#include "sfb/mdp.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace sfb {

namespace {

constexpr double kRowTol = 1e-12;
constexpr int kMaxPairsForDenseSolve = 4096;

void check_distribution_rows(const Eigen::MatrixXd& m, const char* what) {
  for (int r = 0; r < m.rows(); ++r) {
    double sum = 0.0;
    for (int c = 0; c < m.cols(); ++c) {
      if (m(r, c) < 0.0) throw std::invalid_argument(std::string(what) + ": negative entry");
      sum += m(r, c);
    }
    if (std::abs(sum - 1.0) > kRowTol)
      throw std::invalid_argument(std::string(what) + ": row does not sum to 1");
  }
}

}  // namespace

void TabularMdp::validate() const {
  if (n_states <= 0 || n_actions <= 0)
    throw std::invalid_argument("TabularMdp: state/action counts must be positive");
  if (transition.rows() != n_pairs() || transition.cols() != n_states)
    throw std::invalid_argument("TabularMdp: transition shape mismatch");
  if (initial_dist.size() != n_states)
    throw std::invalid_argument("TabularMdp: initial_dist shape mismatch");
  if (!(discount > 0.0 && discount < 1.0))
    throw std::invalid_argument("TabularMdp: discount must lie in (0,1)");
  check_distribution_rows(transition, "TabularMdp transition");
  check_distribution_rows(initial_dist.transpose(), "TabularMdp initial_dist");
}

void StochasticPolicy::validate() const {
  check_distribution_rows(probs, "StochasticPolicy");
}

Eigen::VectorXd StochasticPolicy::row_entropies() const {
  Eigen::VectorXd h(probs.rows());
  for (int s = 0; s < probs.rows(); ++s) {
    double acc = 0.0;
    for (int a = 0; a < probs.cols(); ++a) {
      const double p = probs(s, a);
      if (p > 0.0) acc -= p * std::log(p);
    }
    h[s] = acc;
  }
  return h;
}

void RewardVector::validate() const {
  if (!values.allFinite()) throw std::invalid_argument("RewardVector: non-finite entry");
}

Eigen::VectorXd RewardVector::over_pairs(const TabularMdp& mdp) const {
  if (support == RewardSupport::state_action) {
    if (values.size() != mdp.n_pairs())
      throw std::invalid_argument("RewardVector: pair-support size mismatch");
    return values;
  }
  if (values.size() != mdp.n_states)
    throw std::invalid_argument("RewardVector: state-support size mismatch");
  Eigen::VectorXd r(mdp.n_pairs());
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) r[mdp.sa_index(s, a)] = values[s];
  return r;
}

StochasticPolicy uniform_policy(const TabularMdp& mdp) {
  StochasticPolicy pi;
  pi.probs = Eigen::MatrixXd::Constant(mdp.n_states, mdp.n_actions,
                                       1.0 / static_cast<double>(mdp.n_actions));
  return pi;
}

Eigen::MatrixXd sa_chain(const TabularMdp& mdp, const StochasticPolicy& pi) {
  if (pi.probs.rows() != mdp.n_states || pi.probs.cols() != mdp.n_actions)
    throw std::invalid_argument("sa_chain: policy/mdp dimension mismatch");
  const int n = mdp.n_pairs();
  Eigen::MatrixXd chain = Eigen::MatrixXd::Zero(n, n);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) {
      const int row = mdp.sa_index(s, a);
      for (int s2 = 0; s2 < mdp.n_states; ++s2) {
        const double p = mdp.transition(row, s2);
        if (p == 0.0) continue;
        for (int a2 = 0; a2 < mdp.n_actions; ++a2)
          chain(row, mdp.sa_index(s2, a2)) = p * pi.probs(s2, a2);
      }
    }
  return chain;
}

SuccessorMeasure successor_measure(const TabularMdp& mdp, const StochasticPolicy& pi) {
  const int n = mdp.n_pairs();
  if (n > kMaxPairsForDenseSolve)
    throw std::invalid_argument("successor_measure: |S||A| exceeds the dense-solve cap");
  const Eigen::MatrixXd chain = sa_chain(mdp, pi);
  const double g = mdp.discount;
  Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - g * chain;
  SuccessorMeasure m;
  // (I - gamma P) is strictly diagonally dominant in the row-sum sense for
  // gamma < 1, so the LU solve cannot encounter a singular matrix.
  m.sa_matrix = (1.0 - g) * system.partialPivLu().solve(Eigen::MatrixXd::Identity(n, n));
  Eigen::VectorXd init(n);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      init[mdp.sa_index(s, a)] = mdp.initial_dist[s] * pi.probs(s, a);
  m.marginal = m.sa_matrix.transpose() * init;
  m.state_marginal = Eigen::VectorXd::Zero(mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      m.state_marginal[s] += m.marginal[mdp.sa_index(s, a)];
  return m;
}

Eigen::VectorXd state_occupancy(const TabularMdp& mdp, const StochasticPolicy& pi) {
  if (pi.probs.rows() != mdp.n_states || pi.probs.cols() != mdp.n_actions)
    throw std::invalid_argument("state_occupancy: policy/mdp dimension mismatch");
  const int ns = mdp.n_states;
  Eigen::MatrixXd step = Eigen::MatrixXd::Zero(ns, ns);  // step(s,s') = P_pi(s'|s)
  for (int s = 0; s < ns; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) {
      const double pa = pi.probs(s, a);
      if (pa == 0.0) continue;
      step.row(s) += pa * mdp.transition.row(mdp.sa_index(s, a));
    }
  const double g = mdp.discount;
  Eigen::MatrixXd system = Eigen::MatrixXd::Identity(ns, ns) - g * step.transpose();
  return system.partialPivLu().solve((1.0 - g) * mdp.initial_dist);
}

Eigen::VectorXd sa_occupancy(const TabularMdp& mdp, const StochasticPolicy& pi) {
  const Eigen::VectorXd occ = state_occupancy(mdp, pi);
  Eigen::VectorXd out(mdp.n_pairs());
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      out[mdp.sa_index(s, a)] = occ[s] * pi.probs(s, a);
  return out;
}

SuccessorMeasure occupancy_marginals(const TabularMdp& mdp, const StochasticPolicy& pi) {
  SuccessorMeasure m;
  m.state_marginal = state_occupancy(mdp, pi);
  m.marginal.resize(mdp.n_pairs());
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      m.marginal[mdp.sa_index(s, a)] = m.state_marginal[s] * pi.probs(s, a);
  return m;
}

double maxent_return(const TabularMdp& mdp, const StochasticPolicy& pi,
                     const RewardVector& reward) {
  const Eigen::VectorXd r = reward.over_pairs(mdp);
  const Eigen::VectorXd occ_sa = sa_occupancy(mdp, pi);
  const Eigen::VectorXd occ_s = state_occupancy(mdp, pi);
  return occ_sa.dot(r) + occ_s.dot(pi.row_entropies());
}

StochasticPolicy interpolate_policy(const StochasticPolicy& optimal, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("interpolate_policy: alpha outside [0,1]");
  StochasticPolicy out;
  const double u = 1.0 / static_cast<double>(optimal.probs.cols());
  out.probs = (1.0 - alpha) * optimal.probs +
              alpha * Eigen::MatrixXd::Constant(optimal.probs.rows(), optimal.probs.cols(), u);
  return out;
}

std::string mdp_to_json(const TabularMdp& mdp) {
  nlohmann::json j;
  j["n_states"] = mdp.n_states;
  j["n_actions"] = mdp.n_actions;
  j["discount"] = mdp.discount;
  j["initial_dist"] = std::vector<double>(mdp.initial_dist.begin(), mdp.initial_dist.end());
  auto transition = nlohmann::json::array();
  for (int s = 0; s < mdp.n_states; ++s) {
    auto per_state = nlohmann::json::array();
    for (int a = 0; a < mdp.n_actions; ++a) {
      const auto row = mdp.transition.row(mdp.sa_index(s, a));
      per_state.push_back(std::vector<double>(row.begin(), row.end()));
    }
    transition.push_back(std::move(per_state));
  }
  j["transition"] = std::move(transition);
  return j.dump(2);
}

TabularMdp mdp_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("mdp_from_json: ") + e.what());
  }
  TabularMdp mdp;
  try {
    mdp.n_states = j.at("n_states").get<int>();
    mdp.n_actions = j.at("n_actions").get<int>();
    mdp.discount = j.at("discount").get<double>();
    const auto init = j.at("initial_dist").get<std::vector<double>>();
    mdp.initial_dist = Eigen::Map<const Eigen::VectorXd>(init.data(), init.size());
    if (mdp.n_states <= 0 || mdp.n_actions <= 0)
      throw std::invalid_argument("mdp_from_json: bad dimensions");
    mdp.transition.resize(mdp.n_states * mdp.n_actions, mdp.n_states);
    const auto& transition = j.at("transition");
    if (static_cast<int>(transition.size()) != mdp.n_states)
      throw std::invalid_argument("mdp_from_json: transition state count mismatch");
    for (int s = 0; s < mdp.n_states; ++s) {
      if (static_cast<int>(transition[s].size()) != mdp.n_actions)
        throw std::invalid_argument("mdp_from_json: transition action count mismatch");
      for (int a = 0; a < mdp.n_actions; ++a) {
        const auto row = transition[s][a].get<std::vector<double>>();
        if (static_cast<int>(row.size()) != mdp.n_states)
          throw std::invalid_argument("mdp_from_json: transition row length mismatch");
        for (int s2 = 0; s2 < mdp.n_states; ++s2)
          mdp.transition(mdp.sa_index(s, a), s2) = row[s2];
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("mdp_from_json: ") + e.what());
  }
  mdp.validate();
  return mdp;
}

}  // namespace sfb
