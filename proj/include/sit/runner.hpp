#pragma once
// Experiment orchestration: dataset -> reward decomposition -> prioritized
// replay -> policy learning, per seed, with all artifacts written under the
// run directory:
//
//   dataset.jsonl              shared behavior dataset (generated or reused)
//   ardnem_seed{n}.ckpt        stage-I ensemble (sit-family methods)
//   dper_seed{n}.ckpt          stage-II trajectories + priorities
//   policy_seed{n}.ckpt        trained actors (+ critics for sit-family)
//   metrics_seed{n}.csv        loss/eval curves
//   plots/decomp_curve_seed{n}.csv   stage-I training curve data
//   report.json                deterministic summary (no timing)
//   timing.json                wall-clock per stage (excluded from determinism)
//
// Variant methods change exactly one mechanism relative to `sit`; the applied
// config delta is recorded in the report:
//   sit_no_priority   stage2.alpha = 1e6 (uniform trajectory sampling)
//   sit_no_attention  stage1.use_attention = false (every lambda fixed to 1)
//   sit_no_ensemble   stage1.members = 1, stage2.unit_uncertainty = true
//   sit_no_gat        stage3.use_gat = false (uniform neighbor mean)

#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "sit/config.hpp"

namespace sit {

struct PriorityHistogram {
  Vec edges;                // n_bins + 1 boundaries over [min p, max p]
  std::vector<int> counts;  // one per bin; sums to the trajectory count
};

PriorityHistogram make_histogram(const Vec& values, int bins);

struct SeedRecord {
  int seed = 0;
  bool ok = true;
  bool diverged = false;
  std::string error;
  double eval_mean = 0.0;
  double eval_std = 0.0;
  int eval_episodes = 0;
  Vec mean_r_hat;  // per-agent mean decomposed reward (sit-family only)
  std::map<std::string, PriorityHistogram> priority_hist;  // per agent type
};

struct RunReport {
  std::string method;
  std::map<std::string, std::string> config_echo;     // effective settings
  std::map<std::string, std::string> ablation_diff;   // key -> "base -> used"
  double behavior_mean = 0.0;  // mean episode return of the dataset itself
  std::vector<SeedRecord> records;
  int n_ok = 0;
  double aggregate_mean = 0.0;  // across successful seeds' eval means
  double aggregate_std = 0.0;

  bool any_failure() const;
  bool any_divergence() const;
};

// The config with the method's mechanism overrides applied.
ExperimentConfig effective_config(const ExperimentConfig& cfg);

// Flat-key differences between the plain `sit` settings and the effective
// settings of cfg.method (empty for sit/bc/icq).
std::map<std::string, std::string> ablation_diff(const ExperimentConfig& cfg);

// Full pipeline over all seeds. Divergent seeds are recorded as failures and
// the remaining seeds still run; everything else propagates.
RunReport run(const ExperimentConfig& cfg);

nlohmann::json report_to_json(const RunReport& report);
void write_report_json(const std::string& path, const RunReport& report);

// Re-runs the config once per parameter value (param in {alpha, beta, eta}),
// each into <out>/<param>_<value>/, and writes <out>/sweep_<param>.csv.
struct SweepResult {
  std::string param;
  std::vector<double> values;
  std::vector<RunReport> reports;
};
SweepResult sweep(const ExperimentConfig& cfg, const std::string& param,
                  const std::vector<double>& values);

// Derives plot-data CSVs from a finished run directory: return curves from the
// metrics files and per-type priority histograms from the report. Stage-I
// decomposition curves are written by run() itself (the data only exists
// during training).
void emit_plots(const std::string& run_dir);

}  // namespace sit
