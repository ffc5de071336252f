#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "sfb/dataset.hpp"
#include "sfb/fb_model.hpp"
#include "sfb/measures.hpp"
#include "sfb/search.hpp"
#include "sfb/stats.hpp"

namespace sfb {

/// Everything one experiment needs: environment, algorithm flavor, regime,
/// objectives, measure route, search settings, seeds, output directory, and
/// the learned-regime training knobs.
struct ExperimentConfig {
  std::string env = "counterexample";
  std::string algorithm = "sfb_soft";  // sfb_soft | fb_hard
  std::string regime = "exact";        // exact | learned
  std::vector<std::string> objectives = {"entropy"};
  std::string measure_kind = "exact";  // implicit | explicit | exact
  SearchConfig search;
  std::vector<std::uint64_t> seeds = {0};
  std::string out_dir = ".";
  bool emit_candidates = true;

  int dataset_steps = 20000;
  int episode_len = 4;
  TrainConfig train;
  ExplicitTrainConfig explicit_train;

  void validate() const;
  PolicyMode policy_mode() const;
  SearchConfig::Sampler sampler() const;  // fb_hard searches the sphere
  MeasureEstimate::Kind kind() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

/// One (objective, seed) outcome. wall_time is reported in the JSON manifest
/// only; the CSV stays byte-stable across reruns.
struct ResultRow {
  std::string env;
  std::string algorithm;
  std::string objective;
  std::string measure_kind;
  std::uint64_t seed = 0;
  double offline_best = 0.0;
  double ground_truth_of_best = 0.0;
  double normalized_score = 0.0;
  double spearman_rho = 0.0;
  bool spearman_degenerate = false;
  double wall_time = 0.0;
  std::string status = "ok";  // or error:<reason>
};

std::string rows_to_csv(const std::vector<ResultRow>& rows);

struct AggregateEntry {
  std::string env;
  std::string algorithm;
  std::string objective;
  int n = 0;
  double mean = 0.0;
  double ci_half_width = 0.0;
  bool has_ci = false;
  bool overlaps_best = false;
};

/// Per-(env, algorithm, objective) mean of normalized scores with a normal
/// 95% interval; entries whose interval touches the best entry's interval are
/// flagged (the best entry always is). Error rows are skipped.
std::vector<AggregateEntry> aggregate(const std::vector<ResultRow>& rows);
std::string aggregate_to_csv(const std::vector<AggregateEntry>& entries);

/// Per-candidate search table as CSV (index, z components, offline score,
/// ground truth when computed).
std::string candidates_to_csv(const std::vector<CandidateRow>& table);

/// Writes content to path via a temporary file and rename.
void write_text_atomic(const std::string& path, const std::string& content);

struct ExperimentOutput {
  std::vector<ResultRow> rows;
  nlohmann::json manifest;
  bool failed = false;  // some row errored; partial results were still written
};

/// Full pipeline: resolve env -> (exact fit | collect + train) -> search per
/// (objective, seed) -> ground truth -> normalize -> write results.csv,
/// aggregate.csv, manifest.json (and per-search candidate tables) to
/// cfg.out_dir. Deterministic per seed; a failing stage yields an error row
/// instead of aborting the sweep.
ExperimentOutput run_experiment(const ExperimentConfig& cfg);

}  // namespace sfb
