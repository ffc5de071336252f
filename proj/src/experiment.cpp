#include "sfb/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>

#include "sfb/envs.hpp"
#include "sfb/objectives.hpp"

namespace sfb {

namespace {

bool is_grid_name(const std::string& env) { return env.rfind("grid", 0) == 0; }

const std::set<std::string> kAlgorithms = {"sfb_soft", "fb_hard"};
const std::set<std::string> kRegimes = {"exact", "learned"};
const std::set<std::string> kMeasureKinds = {"implicit", "explicit", "exact"};

}  // namespace

namespace {

bool is_known_env(const std::string& env) {
  if (env == "counterexample") return true;
  const auto all_digits = [](const std::string& s) {
    return !s.empty() && s.find_first_not_of("0123456789") == std::string::npos;
  };
  if (env.rfind("grid", 0) == 0) return all_digits(env.substr(4));
  if (env.rfind("random:", 0) == 0) return all_digits(env.substr(7));
  return false;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (!is_known_env(env))
    throw std::invalid_argument("ExperimentConfig: unknown env '" + env + "'");
  if (kAlgorithms.count(algorithm) == 0)
    throw std::invalid_argument("ExperimentConfig: unknown algorithm '" + algorithm + "'");
  if (kRegimes.count(regime) == 0)
    throw std::invalid_argument("ExperimentConfig: unknown regime '" + regime + "'");
  if (kMeasureKinds.count(measure_kind) == 0)
    throw std::invalid_argument("ExperimentConfig: unknown measure kind '" + measure_kind +
                                "'");
  if (regime == "exact" && measure_kind != "exact")
    throw std::invalid_argument("ExperimentConfig: the exact regime evaluates exactly; set "
                                "measure_kind to 'exact'");
  if (objectives.empty())
    throw std::invalid_argument("ExperimentConfig: objectives must be nonempty");
  if (seeds.empty()) throw std::invalid_argument("ExperimentConfig: seeds must be nonempty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw std::invalid_argument("ExperimentConfig: seeds must be distinct");
  if (dataset_steps < 1)
    throw std::invalid_argument("ExperimentConfig: dataset_steps must be >= 1");
  if (episode_len < 1)
    throw std::invalid_argument("ExperimentConfig: episode_len must be >= 1");
  search.validate();
  train.validate();
  explicit_train.validate();
}

PolicyMode ExperimentConfig::policy_mode() const {
  return algorithm == "fb_hard" ? PolicyMode::hard : PolicyMode::soft;
}

SearchConfig::Sampler ExperimentConfig::sampler() const {
  return algorithm == "fb_hard" ? SearchConfig::Sampler::sphere
                                : SearchConfig::Sampler::ball;
}

MeasureEstimate::Kind ExperimentConfig::kind() const {
  if (measure_kind == "implicit") return MeasureEstimate::Kind::implicit;
  if (measure_kind == "explicit") return MeasureEstimate::Kind::explicit_model;
  return MeasureEstimate::Kind::exact;
}

// ─── Config serialization ────────────────────────────────────────────────────

namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                const std::string& where) {
  for (const auto& item : j.items())
    if (allowed.count(item.key()) == 0)
      throw std::invalid_argument("config: unknown key '" + item.key() + "' in " + where);
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
  check_keys(j,
             {"env", "algorithm", "regime", "objectives", "measure_kind", "search", "seeds",
              "out_dir", "emit_candidates", "dataset_steps", "episode_len", "train",
              "explicit_train"},
             "top level");
  ExperimentConfig cfg;
  cfg.env = j.value("env", cfg.env);
  cfg.algorithm = j.value("algorithm", cfg.algorithm);
  cfg.regime = j.value("regime", cfg.regime);
  if (j.contains("objectives"))
    cfg.objectives = j.at("objectives").get<std::vector<std::string>>();
  cfg.measure_kind = j.value("measure_kind", cfg.measure_kind);
  if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  cfg.emit_candidates = j.value("emit_candidates", cfg.emit_candidates);
  cfg.dataset_steps = j.value("dataset_steps", cfg.dataset_steps);
  cfg.episode_len = j.value("episode_len", cfg.episode_len);
  if (j.contains("search")) {
    const nlohmann::json& s = j.at("search");
    check_keys(s,
               {"n_candidates", "sampler", "method", "cem_population", "cem_elite_frac",
                "cem_iters", "cem_init_std", "n_measure_samples"},
               "search");
    cfg.search.n_candidates = s.value("n_candidates", cfg.search.n_candidates);
    const std::string sampler = s.value("sampler", std::string("ball"));
    if (sampler != "ball" && sampler != "sphere")
      throw std::invalid_argument("config: search.sampler must be ball or sphere");
    cfg.search.sampler = sampler == "ball" ? SearchConfig::Sampler::ball
                                           : SearchConfig::Sampler::sphere;
    const std::string method = s.value("method", std::string("shooting"));
    if (method != "shooting" && method != "cem")
      throw std::invalid_argument("config: search.method must be shooting or cem");
    cfg.search.method = method == "shooting" ? SearchConfig::Method::shooting
                                             : SearchConfig::Method::cem;
    cfg.search.cem_population = s.value("cem_population", cfg.search.cem_population);
    cfg.search.cem_elite_frac = s.value("cem_elite_frac", cfg.search.cem_elite_frac);
    cfg.search.cem_iters = s.value("cem_iters", cfg.search.cem_iters);
    cfg.search.cem_init_std = s.value("cem_init_std", cfg.search.cem_init_std);
    cfg.search.n_measure_samples =
        s.value("n_measure_samples", cfg.search.n_measure_samples);
  }
  if (j.contains("train")) {
    const nlohmann::json& t = j.at("train");
    check_keys(t,
               {"n_steps", "batch_size", "lr", "momentum", "polyak", "ortho_coeff", "d",
                "n_waves", "lengthscale", "log_every"},
               "train");
    cfg.train.n_steps = t.value("n_steps", cfg.train.n_steps);
    cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
    cfg.train.lr = t.value("lr", cfg.train.lr);
    cfg.train.momentum = t.value("momentum", cfg.train.momentum);
    cfg.train.polyak = t.value("polyak", cfg.train.polyak);
    cfg.train.ortho_coeff = t.value("ortho_coeff", cfg.train.ortho_coeff);
    cfg.train.d = t.value("d", cfg.train.d);
    cfg.train.n_waves = t.value("n_waves", cfg.train.n_waves);
    cfg.train.lengthscale = t.value("lengthscale", cfg.train.lengthscale);
    cfg.train.log_every = t.value("log_every", cfg.train.log_every);
  }
  if (j.contains("explicit_train")) {
    const nlohmann::json& t = j.at("explicit_train");
    check_keys(t,
               {"n_steps", "batch_size", "lr", "target_sync", "n_waves", "lengthscale",
                "log_every"},
               "explicit_train");
    cfg.explicit_train.n_steps = t.value("n_steps", cfg.explicit_train.n_steps);
    cfg.explicit_train.batch_size = t.value("batch_size", cfg.explicit_train.batch_size);
    cfg.explicit_train.lr = t.value("lr", cfg.explicit_train.lr);
    cfg.explicit_train.target_sync = t.value("target_sync", cfg.explicit_train.target_sync);
    cfg.explicit_train.n_waves = t.value("n_waves", cfg.explicit_train.n_waves);
    cfg.explicit_train.lengthscale = t.value("lengthscale", cfg.explicit_train.lengthscale);
    cfg.explicit_train.log_every = t.value("log_every", cfg.explicit_train.log_every);
  }
  return cfg;
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["env"] = cfg.env;
  j["algorithm"] = cfg.algorithm;
  j["regime"] = cfg.regime;
  j["objectives"] = cfg.objectives;
  j["measure_kind"] = cfg.measure_kind;
  j["seeds"] = cfg.seeds;
  j["out_dir"] = cfg.out_dir;
  j["emit_candidates"] = cfg.emit_candidates;
  j["dataset_steps"] = cfg.dataset_steps;
  j["episode_len"] = cfg.episode_len;
  j["search"] = {
      {"n_candidates", cfg.search.n_candidates},
      {"sampler", cfg.search.sampler == SearchConfig::Sampler::ball ? "ball" : "sphere"},
      {"method",
       cfg.search.method == SearchConfig::Method::shooting ? "shooting" : "cem"},
      {"cem_population", cfg.search.cem_population},
      {"cem_elite_frac", cfg.search.cem_elite_frac},
      {"cem_iters", cfg.search.cem_iters},
      {"cem_init_std", cfg.search.cem_init_std},
      {"n_measure_samples", cfg.search.n_measure_samples}};
  j["train"] = {{"n_steps", cfg.train.n_steps},
                {"batch_size", cfg.train.batch_size},
                {"lr", cfg.train.lr},
                {"momentum", cfg.train.momentum},
                {"polyak", cfg.train.polyak},
                {"ortho_coeff", cfg.train.ortho_coeff},
                {"d", cfg.train.d},
                {"n_waves", cfg.train.n_waves},
                {"lengthscale", cfg.train.lengthscale},
                {"log_every", cfg.train.log_every}};
  j["explicit_train"] = {{"n_steps", cfg.explicit_train.n_steps},
                         {"batch_size", cfg.explicit_train.batch_size},
                         {"lr", cfg.explicit_train.lr},
                         {"target_sync", cfg.explicit_train.target_sync},
                         {"n_waves", cfg.explicit_train.n_waves},
                         {"lengthscale", cfg.explicit_train.lengthscale},
                         {"log_every", cfg.explicit_train.log_every}};
  return j;
}

// ─── CSV emission ────────────────────────────────────────────────────────────

std::string rows_to_csv(const std::vector<ResultRow>& rows) {
  std::string csv = csv_line({"env", "algorithm", "objective", "measure_kind", "seed",
                              "offline_best", "ground_truth_of_best", "normalized_score",
                              "spearman_rho", "spearman_degenerate", "status"});
  for (const ResultRow& r : rows)
    csv += csv_line({r.env, r.algorithm, r.objective, r.measure_kind,
                     std::to_string(r.seed), format_double(r.offline_best),
                     format_double(r.ground_truth_of_best),
                     format_double(r.normalized_score), format_double(r.spearman_rho),
                     r.spearman_degenerate ? "1" : "0", r.status});
  return csv;
}

std::vector<AggregateEntry> aggregate(const std::vector<ResultRow>& rows) {
  std::vector<AggregateEntry> entries;
  std::vector<std::vector<double>> scores;
  for (const ResultRow& r : rows) {
    if (r.status != "ok") continue;
    std::size_t idx = 0;
    for (; idx < entries.size(); ++idx)
      if (entries[idx].env == r.env && entries[idx].algorithm == r.algorithm &&
          entries[idx].objective == r.objective)
        break;
    if (idx == entries.size()) {
      entries.push_back({r.env, r.algorithm, r.objective, 0, 0.0, 0.0, false, false});
      scores.emplace_back();
    }
    scores[idx].push_back(r.normalized_score);
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    entries[i].n = static_cast<int>(scores[i].size());
    entries[i].mean = sample_mean(scores[i]);
    entries[i].has_ci = entries[i].n >= 2;
    entries[i].ci_half_width =
        entries[i].has_ci
            ? 1.96 * sample_sd(scores[i]) / std::sqrt(static_cast<double>(entries[i].n))
            : 0.0;
  }
  if (!entries.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < entries.size(); ++i)
      if (entries[i].mean > entries[best].mean) best = i;
    for (AggregateEntry& e : entries)
      e.overlaps_best = std::abs(e.mean - entries[best].mean) <=
                        e.ci_half_width + entries[best].ci_half_width + 1e-15;
  }
  return entries;
}

std::string aggregate_to_csv(const std::vector<AggregateEntry>& entries) {
  std::string csv = csv_line({"env", "algorithm", "objective", "n", "mean_normalized_score",
                              "ci_half_width", "overlaps_best"});
  for (const AggregateEntry& e : entries)
    csv += csv_line({e.env, e.algorithm, e.objective, std::to_string(e.n),
                     format_double(e.mean),
                     e.has_ci ? format_double(e.ci_half_width) : std::string(),
                     e.overlaps_best ? "1" : "0"});
  return csv;
}

std::string candidates_to_csv(const std::vector<CandidateRow>& table) {
  if (table.empty()) return "candidate_index,offline_score,ground_truth\n";
  const int d = static_cast<int>(table.front().z.size());
  std::vector<std::string> header = {"candidate_index"};
  for (int i = 0; i < d; ++i) header.push_back("z" + std::to_string(i));
  header.push_back("offline_score");
  header.push_back("ground_truth");
  std::string csv = csv_line(header);
  for (const CandidateRow& row : table) {
    std::vector<std::string> cells = {std::to_string(row.index)};
    for (int i = 0; i < d; ++i) cells.push_back(format_double(row.z[i]));
    cells.push_back(format_double(row.offline_score));
    cells.push_back(row.has_ground_truth ? format_double(row.ground_truth) : std::string());
    csv += csv_line(cells);
  }
  return csv;
}

void write_text_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp + "' for writing");
    out << content;
    if (!out) throw std::runtime_error("write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("cannot move '" + tmp + "' into place");
}

// ─── Pipeline ────────────────────────────────────────────────────────────────

namespace {

struct LearnedArtifacts {
  TransitionDataset data;
  FbModel model;
  std::optional<ExplicitMeasureModel> explicit_model;
};

LearnedArtifacts build_learned(const ExperimentConfig& cfg, const TabularMdp& mdp,
                               std::uint64_t seed) {
  LearnedArtifacts art;
  art.data = collect_dataset(mdp, uniform_policy(mdp), cfg.dataset_steps, cfg.episode_len,
                             seed);
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  tc.mode = cfg.policy_mode();
  const FbModel blank =
      make_fb_model(mdp.n_states, mdp.n_actions, tc.d, mdp.discount,
                    art.data.empirical_state_dist, tc.n_waves, tc.lengthscale, seed,
                    tc.mode);
  art.model = train(blank, art.data, tc).model;
  if (cfg.kind() == MeasureEstimate::Kind::explicit_model) {
    ExplicitTrainConfig ec = cfg.explicit_train;
    ec.seed = seed;
    ec.d = tc.d;
    const FbModel& trained = art.model;
    const PolicyRowFamily family = [&trained](int s, const Eigen::VectorXd& z) {
      return soft_policy_row(trained, s, z, trained.features(z), false);
    };
    art.explicit_model =
        explicit_measure_train(mdp.n_states, mdp.n_actions, mdp.discount, art.data, family,
                               ec)
            .model;
  }
  return art;
}

std::string sanitize_component(const std::string& s) {
  std::string out;
  for (char c : s)
    out += (std::isalnum(static_cast<unsigned char>(c)) != 0 ? c : '_');
  return out;
}

}  // namespace

ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::optional<GridDidacticEnv> grid_env;
  TabularMdp mdp;
  if (is_grid_name(cfg.env)) {
    const std::string digits = cfg.env.substr(4);
    if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos)
      throw std::invalid_argument("run_experiment: bad grid name '" + cfg.env + "'");
    grid_env = make_grid_env(std::stoi(digits), 0.5);
    mdp = grid_env->mdp;
  } else {
    mdp = env_by_name(cfg.env);
  }
  const GridDidacticEnv* grid = grid_env ? &*grid_env : nullptr;

  std::filesystem::create_directories(cfg.out_dir);
  ExperimentOutput out;
  nlohmann::json manifest_rows = nlohmann::json::array();
  std::vector<std::pair<std::string, std::string>> candidate_files;

  for (const std::uint64_t seed : cfg.seeds) {
    std::optional<LearnedArtifacts> learned;
    std::string build_error;
    if (cfg.regime == "learned") {
      try {
        learned = build_learned(cfg, mdp, seed);
      } catch (const std::exception& e) {
        build_error = e.what();
        out.failed = true;
      }
    }
    for (const std::string& objective : cfg.objectives) {
      ResultRow row;
      row.env = cfg.env;
      row.algorithm = cfg.algorithm;
      row.objective = objective;
      row.measure_kind = cfg.measure_kind;
      row.seed = seed;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        if (!build_error.empty()) throw std::runtime_error(build_error);
        const UtilityObjective obj = objective_by_name(objective, mdp, grid);
        SearchConfig scfg = cfg.search;
        scfg.seed = seed;
        scfg.sampler = cfg.sampler();
        SearchResult res;
        if (cfg.regime == "exact") {
          const ExactFbModel model = make_exact_identity_model(mdp, cfg.policy_mode());
          res = zero_order_search(model, obj, scfg);
          row.ground_truth_of_best =
              evaluate_ground_truth(mdp, model, res.z_best, obj);
        } else {
          res = zero_order_search(learned->model, mdp, obj, cfg.kind(), scfg,
                                  learned->explicit_model ? &*learned->explicit_model
                                                          : nullptr,
                                  grid, true);
          row.ground_truth_of_best = res.table[res.best_index].ground_truth;
        }
        row.offline_best = res.offline_score;
        row.normalized_score =
            normalize(normalizer_for(obj, mdp), row.ground_truth_of_best);
        if (res.table.size() >= 2) {
          std::vector<double> offline, truth;
          for (const CandidateRow& c : res.table) {
            offline.push_back(c.offline_score);
            truth.push_back(c.has_ground_truth ? c.ground_truth : c.offline_score);
          }
          const SpearmanResult sp = spearman(offline, truth);
          row.spearman_rho = sp.rho;
          row.spearman_degenerate = sp.degenerate;
        } else {
          row.spearman_degenerate = true;
        }
        if (cfg.emit_candidates) {
          const std::string name = "candidates_" + sanitize_component(objective) + "_" +
                                   std::to_string(seed) + ".csv";
          write_text_atomic((std::filesystem::path(cfg.out_dir) / name).string(),
                            candidates_to_csv(res.table));
          candidate_files.emplace_back(objective, name);
        }
      } catch (const std::exception& e) {
        row.status = std::string("error:") + e.what();
        out.failed = true;
      }
      row.wall_time =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      out.rows.push_back(row);
      nlohmann::json jr;
      jr["env"] = row.env;
      jr["algorithm"] = row.algorithm;
      jr["objective"] = row.objective;
      jr["measure_kind"] = row.measure_kind;
      jr["seed"] = row.seed;
      jr["offline_best"] = row.offline_best;
      jr["ground_truth_of_best"] = row.ground_truth_of_best;
      jr["normalized_score"] = row.normalized_score;
      jr["spearman_rho"] = row.spearman_rho;
      jr["spearman_degenerate"] = row.spearman_degenerate;
      jr["wall_time_seconds"] = row.wall_time;
      jr["status"] = row.status;
      manifest_rows.push_back(jr);
    }
  }

  out.manifest["format_version"] = 1;
  out.manifest["config"] = config_to_json(cfg);
  out.manifest["choices"] = {
      "negative implicit-measure weights are clamped to zero and renormalized",
      "goal indicator uses the norm reading: reward 1 when ||cell - goal|| <= radius",
      "expert marginals get 1e-9 uniform smoothing before exact KL",
      "argmax ties break to the lowest candidate index",
      "fb_hard searches the unit sphere with hard policies; sfb_soft the ball with soft",
      "the config's search sampler is overridden by the algorithm's sampler",
      "results.csv omits wall_time (kept in this manifest) so reruns are byte-identical"};
  out.manifest["rows"] = manifest_rows;
  nlohmann::json outputs;
  outputs["results"] = "results.csv";
  outputs["aggregate"] = "aggregate.csv";
  nlohmann::json cand = nlohmann::json::array();
  for (const auto& [objective, file] : candidate_files)
    cand.push_back({{"objective", objective}, {"file", file}});
  outputs["candidates"] = cand;
  out.manifest["outputs"] = outputs;

  const std::filesystem::path dir(cfg.out_dir);
  write_text_atomic((dir / "results.csv").string(), rows_to_csv(out.rows));
  write_text_atomic((dir / "aggregate.csv").string(),
                    aggregate_to_csv(aggregate(out.rows)));
  write_text_atomic((dir / "manifest.json").string(), out.manifest.dump(2) + "\n");
  return out;
}

}  // namespace sfb
