#include "sfb/search.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

#include "sfb/rng.hpp"

namespace sfb {

void SearchConfig::validate() const {
  if (n_candidates < 1) throw std::invalid_argument("SearchConfig: n_candidates must be >= 1");
  if (cem_population < 2)
    throw std::invalid_argument("SearchConfig: cem_population must be >= 2");
  if (!(cem_elite_frac > 0.0 && cem_elite_frac <= 1.0))
    throw std::invalid_argument("SearchConfig: cem_elite_frac must lie in (0,1]");
  if (cem_iters < 1) throw std::invalid_argument("SearchConfig: cem_iters must be >= 1");
  if (!(cem_init_std > 0.0))
    throw std::invalid_argument("SearchConfig: cem_init_std must be positive");
  if (n_measure_samples < 4)
    throw std::invalid_argument("SearchConfig: n_measure_samples must be >= 4");
}

int SearchConfig::cem_elite_count() const {
  return std::max(1, static_cast<int>(std::ceil(cem_elite_frac * cem_population)));
}

namespace {

constexpr double kBallClip = 1.0 - 1e-6;
const double kNegInf = -std::numeric_limits<double>::infinity();

Eigen::VectorXd draw_candidate(Rng& rng, SearchConfig::Sampler sampler, int d) {
  return sampler == SearchConfig::Sampler::ball ? rng.ball_uniform(d) : rng.sphere_uniform(d);
}

// CEM proposals live in R^d; pull them back onto the search domain.
Eigen::VectorXd project_candidate(SearchConfig::Sampler sampler, Eigen::VectorXd x) {
  const double norm = x.norm();
  if (sampler == SearchConfig::Sampler::sphere) {
    if (norm < 1e-12) {
      x.setZero();
      x[0] = 1.0;
      return x;
    }
    return x / norm;
  }
  if (norm > kBallClip) x *= kBallClip / norm;
  return x;
}

using Evaluator = std::function<double(int, const Eigen::VectorXd&)>;

SearchResult run_search(int d, const SearchConfig& cfg, const Evaluator& evaluate) {
  cfg.validate();
  SearchResult result;
  const auto consider = [&](const Eigen::VectorXd& z) {
    CandidateRow row;
    row.index = static_cast<int>(result.table.size());
    row.z = z;
    double score = evaluate(row.index, z);
    if (std::isnan(score)) score = kNegInf;
    row.offline_score = score;
    result.table.push_back(std::move(row));
    return score;
  };

  if (cfg.method == SearchConfig::Method::shooting) {
    Rng rng = Rng::stream(cfg.seed, 10);
    for (int i = 0; i < cfg.n_candidates; ++i) consider(draw_candidate(rng, cfg.sampler, d));
  } else {
    Rng rng = Rng::stream(cfg.seed, 20);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd sd = Eigen::VectorXd::Constant(d, cfg.cem_init_std);
    const int elites = cfg.cem_elite_count();
    for (int iter = 0; iter < cfg.cem_iters; ++iter) {
      std::vector<std::pair<double, int>> scored;
      scored.reserve(cfg.cem_population);
      for (int p = 0; p < cfg.cem_population; ++p) {
        Eigen::VectorXd x = mean + sd.cwiseProduct(rng.gaussian_vector(d));
        x = project_candidate(cfg.sampler, std::move(x));
        const int idx = static_cast<int>(result.table.size());
        scored.emplace_back(consider(x), idx);
      }
      std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      });
      Eigen::VectorXd new_mean = Eigen::VectorXd::Zero(d);
      for (int e = 0; e < elites; ++e) new_mean += result.table[scored[e].second].z;
      new_mean /= elites;
      Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
      for (int e = 0; e < elites; ++e)
        var += (result.table[scored[e].second].z - new_mean).cwiseAbs2();
      mean = new_mean;
      sd = (var / elites).cwiseSqrt().cwiseMax(1e-6);
    }
  }

  result.best_index = -1;
  double best = kNegInf;
  for (const CandidateRow& row : result.table) {
    if (row.offline_score > best) {
      best = row.offline_score;
      result.best_index = row.index;
    }
  }
  if (result.best_index < 0)
    throw std::runtime_error("zero_order_search: objective unsatisfiable under estimates");
  result.z_best = result.table[result.best_index].z;
  result.offline_score = best;
  return result;
}

std::uint64_t candidate_seed(std::uint64_t seed, int idx) {
  return seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(idx + 1));
}

}  // namespace

// ─── Closed-form embeddings ──────────────────────────────────────────────────

Eigen::VectorXd infer_linear(const ExactFbModel& model, const RewardVector& reward) {
  const Eigen::VectorXd embedded = model.embed_reward(reward);
  const double norm = embedded.norm();
  if (norm <= 1e-12) throw std::runtime_error("infer_linear: reward not representable");
  return embedded / norm;
}

Eigen::VectorXd infer_linear(const FbModel& model, const TabularMdp& mdp,
                             const RewardVector& reward) {
  reward.validate();
  if (reward.support != RewardSupport::state)
    throw std::invalid_argument("infer_linear: learned models embed state rewards");
  if (reward.values.size() != model.n_states || mdp.n_states != model.n_states)
    throw std::invalid_argument("infer_linear: reward/model size mismatch");
  const Eigen::VectorXd embedded = model.params.backward * reward.values;
  const double norm = embedded.norm();
  if (norm <= 1e-12) throw std::runtime_error("infer_linear: reward not representable");
  return embedded / norm;
}

namespace {

Eigen::VectorXd maxent_rescale(const Eigen::VectorXd& z_raw, double statistic) {
  const double c = std::max(statistic, 0.0);
  return (c / (c + 1.0)) * z_raw / z_raw.norm();
}

}  // namespace

Eigen::VectorXd infer_maxent(const ExactFbModel& model, const RewardVector& reward) {
  const Eigen::VectorXd z_raw = model.embed_reward(reward);
  if (z_raw.norm() <= 1e-12) return Eigen::VectorXd::Zero(model.dim());
  const StochasticPolicy pi = model.policy(z_raw);
  const Eigen::MatrixXd fwd = model.forward_at(z_raw);
  double stat = 0.0;
  for (int s = 0; s < model.mdp.n_states; ++s)
    for (int a = 0; a < model.mdp.n_actions; ++a)
      stat += model.mdp.initial_dist[s] * pi.probs(s, a) *
              fwd.row(model.mdp.sa_index(s, a)).dot(z_raw);
  return maxent_rescale(z_raw, stat);
}

Eigen::VectorXd infer_maxent(const FbModel& model, const TabularMdp& mdp,
                             const RewardVector& reward) {
  reward.validate();
  if (reward.support != RewardSupport::state)
    throw std::invalid_argument("infer_maxent: learned models embed state rewards");
  if (reward.values.size() != model.n_states || mdp.n_states != model.n_states)
    throw std::invalid_argument("infer_maxent: reward/model size mismatch");
  const Eigen::VectorXd z_raw = model.params.backward * reward.values;
  if (z_raw.norm() <= 1e-12) return Eigen::VectorXd::Zero(model.d);
  const StochasticPolicy pi = soft_policy(model, z_raw);
  const Eigen::VectorXd psi = model.features(z_raw);
  Eigen::VectorXd avg = Eigen::VectorXd::Zero(model.d);
  for (int s = 0; s < mdp.n_states; ++s) {
    if (mdp.initial_dist[s] == 0.0) continue;
    for (int a = 0; a < mdp.n_actions; ++a)
      avg += mdp.initial_dist[s] * pi.probs(s, a) *
             model.forward_vec(model.params, model.sa_index(s, a), psi);
  }
  return maxent_rescale(z_raw, avg.dot(z_raw));
}

// ─── Ground truth and zero-order search ──────────────────────────────────────

double evaluate_ground_truth(const TabularMdp& mdp, const ExactFbModel& model,
                             const Eigen::VectorXd& z, const UtilityObjective& obj) {
  return objective_score(obj, exact_eval(obj, exact_measure(mdp, model.policy(z))));
}

double evaluate_ground_truth(const TabularMdp& mdp, const FbModel& model,
                             const Eigen::VectorXd& z, const UtilityObjective& obj) {
  return objective_score(obj, exact_eval(obj, exact_measure(mdp, soft_policy(model, z))));
}

SearchResult zero_order_search(const ExactFbModel& model, const UtilityObjective& obj,
                               const SearchConfig& cfg) {
  obj.validate();
  SearchResult result = run_search(
      model.dim(), cfg, [&](int, const Eigen::VectorXd& z) {
        return objective_score(obj, exact_eval(obj, model.measure(z)));
      });
  for (CandidateRow& row : result.table) {
    row.ground_truth = row.offline_score;  // exact evaluation is the ground truth
    row.has_ground_truth = true;
  }
  return result;
}

SearchResult zero_order_search(const FbModel& model, const TabularMdp& mdp,
                               const UtilityObjective& obj, MeasureEstimate::Kind kind,
                               const SearchConfig& cfg,
                               const ExplicitMeasureModel* explicit_model,
                               const GridDidacticEnv* grid, bool with_ground_truth) {
  obj.validate();
  if (kind == MeasureEstimate::Kind::explicit_model && explicit_model == nullptr)
    throw std::invalid_argument("zero_order_search: explicit kind needs an explicit model");
  const PolicyRowFamily family = [&model](int s, const Eigen::VectorXd& z) {
    return soft_policy_row(model, s, z, model.features(z), false);
  };
  const Evaluator evaluate = [&](int idx, const Eigen::VectorXd& z) {
    if (kind == MeasureEstimate::Kind::exact)
      return objective_score(obj, exact_eval(obj, exact_measure(mdp, soft_policy(model, z))));
    MeasureEstimate est;
    try {
      est = kind == MeasureEstimate::Kind::implicit
                ? implicit_measure(model, z, mdp)
                : explicit_measure(*explicit_model, z, mdp, family);
    } catch (const std::runtime_error&) {
      return kNegInf;  // degenerate estimate: this candidate is unusable
    }
    if (grid != nullptr) attach_grid_coordinates(est, *grid);
    const auto samples =
        sample_measure(est, cfg.n_measure_samples, candidate_seed(cfg.seed, idx));
    return objective_score(obj, sample_eval(obj, samples));
  };
  SearchResult result = run_search(model.d, cfg, evaluate);
  if (kind == MeasureEstimate::Kind::exact) {
    for (CandidateRow& row : result.table) {
      row.ground_truth = row.offline_score;
      row.has_ground_truth = true;
    }
  } else if (with_ground_truth) {
    for (CandidateRow& row : result.table) {
      row.ground_truth = evaluate_ground_truth(mdp, model, row.z, obj);
      row.has_ground_truth = true;
    }
  }
  return result;
}

}  // namespace sfb
