// Command-line front end: dataset collection, model training, closed-form
// inference, single-task evaluation, config-driven sweeps, the one-shot
// counterexample demo, and a quick invariant selfcheck.
//
// Exit codes: 0 success, 1 bad arguments or config validation, 2 runtime
// failure.

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sfb/dataset.hpp"
#include "sfb/envs.hpp"
#include "sfb/experiment.hpp"
#include "sfb/fb_exact.hpp"
#include "sfb/fb_model.hpp"
#include "sfb/measures.hpp"
#include "sfb/objectives.hpp"
#include "sfb/rng.hpp"
#include "sfb/search.hpp"
#include "sfb/stats.hpp"

namespace {

using namespace sfb;

struct ResolvedEnv {
  TabularMdp mdp;
  std::optional<GridDidacticEnv> grid;
};

ResolvedEnv resolve_env(const std::string& name) {
  ResolvedEnv env;
  if (name.rfind("grid", 0) == 0) {
    const std::string digits = name.substr(4);
    if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos)
      throw std::invalid_argument("bad grid env name '" + name + "'");
    env.grid = make_grid_env(std::stoi(digits), 0.5);
    env.mdp = env.grid->mdp;
  } else {
    env.mdp = env_by_name(name);
  }
  return env;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string join_row(const Eigen::VectorXd& v) {
  std::string out;
  for (int i = 0; i < v.size(); ++i) {
    if (i > 0) out += ' ';
    out += format_double(v[i]);
  }
  return out;
}

Eigen::VectorXd parse_vector(const std::string& text, int expected) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) values.push_back(std::stod(cell));
  if (static_cast<int>(values.size()) != expected)
    throw std::invalid_argument("--z needs " + std::to_string(expected) +
                                " comma-separated components");
  return Eigen::Map<Eigen::VectorXd>(values.data(), values.size());
}

// ─── Verbs ───────────────────────────────────────────────────────────────────

int do_collect(const std::string& env_name, std::uint64_t seed, const std::string& out_path,
               int steps, int episode_len) {
  const ResolvedEnv env = resolve_env(env_name);
  const TransitionDataset data =
      collect_dataset(env.mdp, uniform_policy(env.mdp), steps, episode_len, seed);
  write_text_atomic(out_path, dataset_to_csv(data, env_name));
  std::cout << "collected " << data.size() << " transitions from " << env_name << " into "
            << out_path << "\n";
  return 0;
}

int do_train(const std::string& env_name, std::uint64_t seed, const std::string& out_path,
             const std::string& data_path, int collect_steps, int episode_len,
             const TrainConfig& base, bool hard) {
  const ResolvedEnv env = resolve_env(env_name);
  const TransitionDataset data =
      data_path.empty()
          ? collect_dataset(env.mdp, uniform_policy(env.mdp), collect_steps, episode_len,
                            seed)
          : dataset_from_csv(read_file(data_path), env.mdp.n_states, env.mdp.n_actions);
  TrainConfig cfg = base;
  cfg.seed = seed;
  cfg.mode = hard ? PolicyMode::hard : PolicyMode::soft;
  const FbModel blank =
      make_fb_model(env.mdp.n_states, env.mdp.n_actions, cfg.d, env.mdp.discount,
                    data.empirical_state_dist, cfg.n_waves, cfg.lengthscale, seed, cfg.mode);
  const TrainResult result = train(blank, data, cfg);
  save_fb_model(result.model, out_path);
  if (!result.log.empty()) {
    const TrainLogRow& last = result.log.back();
    std::cout << "final losses at step " << last.step << ": fb "
              << format_double(last.fb) << ", ortho " << format_double(last.ortho)
              << ", critic " << format_double(last.critic) << "\n";
  }
  std::cout << "saved checkpoint to " << out_path << "\n";
  return 0;
}

int do_infer(const std::string& env_name, const std::string& objective,
             const std::string& checkpoint) {
  const ResolvedEnv env = resolve_env(env_name);
  const UtilityObjective obj =
      objective_by_name(objective, env.mdp, env.grid ? &*env.grid : nullptr);
  if (obj.kind != UtilityObjective::Kind::linear &&
      obj.kind != UtilityObjective::Kind::goal)
    throw std::invalid_argument("infer needs an objective with an explicit reward "
                                "(linear or goal)");
  RewardVector reward;
  reward.values = obj.reward;
  reward.support = obj.support;
  Eigen::VectorXd z_linear, z_maxent;
  if (checkpoint.empty()) {
    const ExactFbModel model = make_exact_identity_model(env.mdp);
    z_linear = infer_linear(model, reward);
    z_maxent = infer_maxent(model, reward);
  } else {
    const FbModel model = load_fb_model(checkpoint);
    z_linear = infer_linear(model, env.mdp, reward);
    z_maxent = infer_maxent(model, env.mdp, reward);
  }
  std::cout << "z_linear: " << join_row(z_linear) << "\n";
  std::cout << "z_linear_norm: " << format_double(z_linear.norm()) << "\n";
  std::cout << "z_maxent: " << join_row(z_maxent) << "\n";
  std::cout << "z_maxent_norm: " << format_double(z_maxent.norm()) << "\n";
  return 0;
}

int do_eval(const std::string& env_name, const std::string& objective,
            const std::string& z_text, bool hard) {
  const ResolvedEnv env = resolve_env(env_name);
  const UtilityObjective obj =
      objective_by_name(objective, env.mdp, env.grid ? &*env.grid : nullptr);
  const ExactFbModel model =
      make_exact_identity_model(env.mdp, hard ? PolicyMode::hard : PolicyMode::soft);
  const Eigen::VectorXd z = z_text.empty()
                                ? Eigen::VectorXd::Zero(env.mdp.n_pairs())
                                : parse_vector(z_text, env.mdp.n_pairs());
  MeasureEstimate est = exact_measure(env.mdp, model.policy(z));
  if (env.grid) attach_grid_coordinates(est, *env.grid);
  const double raw = exact_eval(obj, est);
  const double score = objective_score(obj, raw);
  std::cout << "objective: " << obj.name << "\n";
  std::cout << "raw: " << format_double(raw) << "\n";
  std::cout << "score: " << format_double(score) << "\n";
  std::cout << "normalized: "
            << format_double(normalize(normalizer_for(obj, env.mdp), score)) << "\n";
  return 0;
}

int do_sweep(const std::string& config_path, const std::string& out_override) {
  ExperimentConfig cfg = config_from_json(nlohmann::json::parse(read_file(config_path)));
  if (!out_override.empty()) cfg.out_dir = out_override;
  const ExperimentOutput output = run_experiment(cfg);
  for (const ResultRow& row : output.rows)
    std::cout << row.objective << " seed=" << row.seed << " status=" << row.status
              << " normalized=" << format_double(row.normalized_score) << "\n";
  std::cout << "wrote " << cfg.out_dir << "/results.csv\n";
  return output.failed ? 2 : 0;
}

int do_counterexample() {
  const CounterexampleEnv env = make_counterexample(0.5);
  const Eigen::Matrix2d m0 = env.closed_form_successor(0);
  const Eigen::Matrix2d m1 = env.closed_form_successor(1);
  std::cout << "counterexample gamma=" << format_double(env.mdp.discount) << "\n";
  std::cout << "visit_constant: " << format_double(env.visit_constant) << "\n";
  std::cout << "closed_form_a0: " << format_double(m0(0, 0)) << " "
            << format_double(m0(0, 1)) << " " << format_double(m0(1, 0)) << " "
            << format_double(m0(1, 1)) << "\n";
  std::cout << "closed_form_a1: " << format_double(m1(0, 0)) << " "
            << format_double(m1(0, 1)) << " " << format_double(m1(1, 0)) << " "
            << format_double(m1(1, 1)) << "\n";

  // The chain's own normalized measures, for contrast with the closed-form
  // visitation family above.
  for (int a = 0; a < 2; ++a) {
    StochasticPolicy pi = uniform_policy(env.mdp);
    pi.probs.setZero();
    pi.probs(0, a) = 1.0;
    const SuccessorMeasure m = successor_measure(env.mdp, pi);
    std::cout << "pair_measure_a" << a << ": " << join_row(m.sa_matrix.row(0)) << " "
              << join_row(m.sa_matrix.row(1)) << "\n";
  }

  const UtilityObjective entropy = objective_by_name("entropy", env.mdp, nullptr);
  const ExactFbModel hard = make_exact_identity_model(env.mdp, PolicyMode::hard);
  double hard_max = -std::numeric_limits<double>::infinity();
  std::vector<Eigen::VectorXd> zs;
  zs.push_back(Eigen::VectorXd::Zero(2));
  for (int k = 0; k < 16; ++k) {
    const double angle = 2.0 * M_PI * k / 16.0;
    const Eigen::Vector2d dir(std::cos(angle), std::sin(angle));
    for (const double r : {0.25, 0.5, 0.75, 1.0}) zs.push_back(r * dir);
  }
  for (const Eigen::VectorXd& z : zs)
    hard_max = std::max(hard_max, exact_eval(entropy, exact_measure(env.mdp, hard.policy(z))));
  std::cout << "hard_entropy_max: " << format_double(hard_max) << "\n";

  const ExactFbModel soft = make_exact_identity_model(env.mdp, PolicyMode::soft);
  const double soft_entropy =
      exact_eval(entropy, exact_measure(env.mdp, soft.policy(Eigen::VectorXd::Zero(2))));
  std::cout << "soft_entropy_z0: " << format_double(soft_entropy) << "\n";
  std::cout << "log2: " << format_double(std::log(2.0)) << "\n";
  return 0;
}

int do_selfcheck(std::uint64_t seed) {
  int failures = 0;
  const auto report = [&failures](const std::string& name, bool ok,
                                  const std::string& detail) {
    std::cout << (ok ? "[ok] " : "[fail] ") << name;
    if (!detail.empty()) std::cout << " (" << detail << ")";
    std::cout << "\n";
    if (!ok) ++failures;
  };

  {
    const TabularMdp mdp = make_random_mdp(3, 2, 0.9, seed);
    const ExactFbModel model = make_exact_identity_model(mdp);
    Rng rng = Rng::stream(seed, 1);
    double worst = 0.0;
    for (int i = 0; i < 5; ++i) {
      const Eigen::VectorXd z = 0.8 * rng.ball_uniform(mdp.n_pairs());
      const StochasticPolicy a = model.policy(z);
      FixedPointOptions opts;
      const ExactSlice slice = exact_fixed_point(mdp, model.backward, z, opts);
      worst = std::max(worst, policy_total_variation(a, slice.policy));
    }
    report("fixed point agrees with the value-iteration route", worst <= 1e-7,
           "max policy TV " + format_double(worst));
  }

  {
    int violations = 0;
    double worst_gap = -1.0;
    for (int i = 0; i < 20; ++i) {
      const TabularMdp mdp = make_random_mdp(4, 3, 0.9, seed + 100 + i);
      Rng rng = Rng::stream(seed, 2 + i);
      RewardVector reward;
      reward.support = RewardSupport::state_action;
      reward.values = Eigen::VectorXd::NullaryExpr(
          mdp.n_pairs(), [&rng](Eigen::Index) { return rng.uniform(-1.0, 1.0); });
      const StochasticPolicy best = soft_value_iteration(mdp, reward).policy;
      for (const double alpha : {0.05, 0.2}) {
        const StochasticPolicy mixed = interpolate_policy(best, alpha);
        const double lhs = (successor_measure(mdp, best).marginal -
                            successor_measure(mdp, mixed).marginal)
                               .lpNorm<1>();
        const double bound = 2.0 * alpha / (1.0 - mdp.discount);
        if (lhs > bound + 1e-12) ++violations;
        worst_gap = std::max(worst_gap, lhs - bound);
      }
    }
    report("occupancy perturbation bound holds", violations == 0,
           "worst slack " + format_double(-worst_gap));
  }

  {
    const TabularMdp mdp = make_random_mdp(2, 2, 0.5, seed + 7);
    const TransitionDataset data =
        collect_dataset(mdp, uniform_policy(mdp), 200, 4, seed);
    const FbModel model = make_fb_model(2, 2, 3, mdp.discount, data.empirical_state_dist,
                                        8, 0.75, seed, PolicyMode::soft);
    Rng rng = Rng::stream(seed, 3);
    std::vector<int> indices(8);
    for (int& idx : indices) idx = rng.uniform_int(data.size());
    std::vector<Eigen::VectorXd> z_batch(indices.size(), 0.5 * rng.ball_uniform(3));
    Rng batch_rng = Rng::stream(seed, 4);
    const TransitionBatch batch = assemble_batch(model, data, indices, z_batch, batch_rng);
    const FbLossResult base = fb_loss(model, batch, z_batch);
    FbModel bumped = model;
    const double h = 1e-5;
    bumped.params.forward(0, 0) += h;
    const double up = fb_loss(bumped, batch, z_batch).loss;
    bumped.params.forward(0, 0) -= 2 * h;
    const double down = fb_loss(bumped, batch, z_batch).loss;
    const double fd = (up - down) / (2 * h);
    const double analytic = base.forward_grad(0, 0);
    const double rel = std::abs(fd - analytic) /
                       std::max({std::abs(fd), std::abs(analytic), 1e-6});
    report("analytic gradient matches finite differences", rel <= 1e-4,
           "relative error " + format_double(rel));
  }

  {
    const TabularMdp mdp = make_random_mdp(3, 2, 0.9, seed + 11);
    const std::string a =
        dataset_to_csv(collect_dataset(mdp, uniform_policy(mdp), 500, 4, seed), "random");
    const std::string b =
        dataset_to_csv(collect_dataset(mdp, uniform_policy(mdp), 500, 4, seed), "random");
    report("collection is deterministic per seed", a == b, "");
  }

  if (failures > 0) throw std::runtime_error("selfcheck failed");
  std::cout << "selfcheck passed\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"soft forward-backward workbench"};
  app.require_subcommand(1);

  std::string env_name = "counterexample";
  std::uint64_t seed = 0;
  std::string out_path;
  std::string objective = "entropy";
  std::string config_path;
  std::string data_path;
  std::string checkpoint;
  std::string z_text;
  int steps = 20000;
  int episode_len = 4;
  bool hard = false;
  TrainConfig train_cfg;

  int rc = 0;

  CLI::App* collect = app.add_subcommand("collect", "roll out a behavior dataset");
  collect->add_option("--env", env_name, "environment name");
  collect->add_option("--seed", seed, "rng seed");
  collect->add_option("--out", out_path, "output csv path")->required();
  collect->add_option("--steps", steps, "transitions to record");
  collect->add_option("--episode-len", episode_len, "reset period");
  collect->callback(
      [&] { rc = do_collect(env_name, seed, out_path, steps, episode_len); });

  CLI::App* train_cmd = app.add_subcommand("train", "train a forward-backward model");
  train_cmd->add_option("--env", env_name, "environment name");
  train_cmd->add_option("--seed", seed, "rng seed");
  train_cmd->add_option("--out", out_path, "checkpoint path")->required();
  train_cmd->add_option("--data", data_path, "dataset csv (collects fresh when absent)");
  train_cmd->add_option("--steps", steps, "transitions to collect when no dataset");
  train_cmd->add_option("--episode-len", episode_len, "reset period for collection");
  train_cmd->add_option("--train-steps", train_cfg.n_steps, "sgd steps");
  train_cmd->add_option("--d", train_cfg.d, "embedding dimension");
  train_cmd->add_option("--n-waves", train_cfg.n_waves, "feature waves");
  train_cmd->add_option("--lengthscale", train_cfg.lengthscale, "feature lengthscale");
  train_cmd->add_option("--lr", train_cfg.lr, "learning rate");
  train_cmd->add_option("--log-every", train_cfg.log_every, "loss log period");
  train_cmd->add_flag("--hard", hard, "hard (argmax) policies");
  train_cmd->callback([&] {
    rc = do_train(env_name, seed, out_path, data_path, steps, episode_len, train_cfg,
                  hard);
  });

  CLI::App* infer = app.add_subcommand("infer", "closed-form task embeddings");
  infer->add_option("--env", env_name, "environment name");
  infer->add_option("--objective", objective, "objective name");
  infer->add_option("--checkpoint", checkpoint, "learned model (exact model when absent)");
  infer->callback([&] { rc = do_infer(env_name, objective, checkpoint); });

  CLI::App* eval = app.add_subcommand("eval", "exact utility of one embedding");
  eval->add_option("--env", env_name, "environment name");
  eval->add_option("--objective", objective, "objective name");
  eval->add_option("--z", z_text, "comma-separated embedding (default zeros)");
  eval->add_flag("--hard", hard, "hard (argmax) policies");
  eval->callback([&] { rc = do_eval(env_name, objective, z_text, hard); });

  CLI::App* sweep = app.add_subcommand("sweep", "run an experiment config");
  sweep->add_option("--config", config_path, "json config file")->required();
  sweep->add_option("--out", out_path, "override the config's output directory");
  sweep->callback([&] { rc = do_sweep(config_path, out_path); });

  CLI::App* counter = app.add_subcommand("counterexample", "one-shot visitation demo");
  counter->callback([&] { rc = do_counterexample(); });

  CLI::App* selfcheck = app.add_subcommand("selfcheck", "quick invariant suites");
  selfcheck->add_option("--seed", seed, "rng seed");
  selfcheck->callback([&] { rc = do_selfcheck(seed); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return rc;
}
