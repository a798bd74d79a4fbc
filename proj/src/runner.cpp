#include "sit/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include "sit/ardnem.hpp"
#include "sit/dper.hpp"
#include "sit/policy.hpp"

namespace sit {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string seed_file(const std::string& dir, const std::string& stem, int seed,
                      const std::string& ext) {
  return dir + "/" + stem + "_seed" + std::to_string(seed) + ext;
}

bool is_sit_family(const std::string& method) { return method.rfind("sit", 0) == 0; }

std::uint64_t dataset_seed(const ExperimentConfig& cfg) {
  return static_cast<std::uint64_t>(cfg.seeds.front());
}

// Loads an existing dataset file if present (so every method compared in one
// directory shares the exact same data); otherwise generates and saves one.
JointDataset obtain_dataset(const ExperimentConfig& cfg) {
  const std::string path = cfg.out_dir + "/dataset.jsonl";
  if (fs::exists(path)) {
    JointDataset ds = load_dataset(path);
    if (env_id_name(ds.spec.env_id) != env_id_name(cfg.env.env_id) ||
        ds.spec.n_agents != cfg.env.n_agents || ds.spec.n_actions != cfg.env.n_actions ||
        ds.spec.obs_dim != cfg.env.obs_dim || ds.spec.state_dim != cfg.env.state_dim ||
        ds.spec.max_steps != cfg.env.max_steps)
      throw ConfigError("run: existing " + path + " was built for a different environment");
    if (ds.meta.composition != cfg.composition.label() ||
        ds.n_episodes() != cfg.composition.episodes)
      throw ConfigError("run: existing " + path + " was built from a different composition");
    return ds;
  }
  JointDataset ds = generate_dataset(cfg.env, cfg.composition, dataset_seed(cfg));
  save_dataset(ds, path);
  return ds;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "epoch,agent,critic_loss,actor_loss,eval_return_mean,eval_return_std\n";
  for (const MetricsRow& r : rows)
    out << r.epoch << ',' << r.agent << ',' << format_real(r.critic_loss) << ','
        << format_real(r.actor_loss) << ',' << format_real(r.eval_return_mean) << ','
        << format_real(r.eval_return_std) << '\n';
}

// Stage-I training curve: batch loss and the per-agent mean weighted reward on
// the probe slice, one row per logged epoch per ensemble member.
void write_decomp_curve(const std::string& path, const EnsembleRewardModel& model) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "member,epoch,batch_loss";
  for (int i = 0; i < model.spec.n_agents; ++i) out << ",agent" << i << "_mean_r_hat";
  out << '\n';
  for (size_t m = 0; m < model.logs.size(); ++m)
    for (const ArdnemLogPoint& p : model.logs[m]) {
      out << m << ',' << p.epoch << ',' << format_real(p.batch_loss);
      for (double v : p.probe_mean_weighted) out << ',' << format_real(v);
      out << '\n';
    }
}

struct StageTiming {
  int seed = 0;
  double stage1_s = 0.0, stage2_s = 0.0, stage3_s = 0.0;
};

void run_seed(const ExperimentConfig& cfg, std::shared_ptr<const JointDataset> ds, int seed,
              SeedRecord* rec, StageTiming* timing) {
  const std::string& dir = cfg.out_dir;
  const EnvSpec& spec = ds->spec;
  const auto seed_u = static_cast<std::uint64_t>(seed);
  TrainResult result;

  if (is_sit_family(cfg.method)) {
    const auto t1 = Clock::now();
    EnsembleRewardModel model = train_ardnem(*ds, cfg.stage1, seed_u);
    model.save(seed_file(dir, "ardnem", seed, ".ckpt"));
    write_decomp_curve(seed_file(dir + "/plots", "decomp_curve", seed, ".csv"), model);
    timing->stage1_s = seconds_since(t1);

    const auto t2 = Clock::now();
    Dper dper = build_dper(ds, model, cfg.stage2);
    dper.save(seed_file(dir, "dper", seed, ".ckpt"));
    timing->stage2_s = seconds_since(t2);

    // Decomposition diagnostics: per-agent mean r_hat and the per-type
    // distribution of reshaped trajectory priorities.
    Vec sum(static_cast<size_t>(spec.n_agents), 0.0);
    std::vector<int> count(static_cast<size_t>(spec.n_agents), 0);
    for (const std::string& type : dper.types()) {
      const TypeBucket& bucket = dper.bucket(type);
      Vec priorities;
      priorities.reserve(bucket.trajectories.size());
      for (const IndividualTrajectory& traj : bucket.trajectories) {
        priorities.push_back(traj.priority);
        for (const IndividualStep& s : traj.steps) {
          sum[static_cast<size_t>(traj.agent)] += s.r_hat;
          count[static_cast<size_t>(traj.agent)] += 1;
        }
      }
      rec->priority_hist[type] = make_histogram(priorities, 10);
    }
    rec->mean_r_hat.resize(sum.size());
    for (size_t i = 0; i < sum.size(); ++i)
      rec->mean_r_hat[i] = count[i] > 0 ? sum[i] / count[i] : 0.0;

    const auto t3 = Clock::now();
    result = train_sit(dper, cfg.stage3, seed_u);
    timing->stage3_s = seconds_since(t3);
  } else if (cfg.method == "bc") {
    const auto t3 = Clock::now();
    result = train_bc(*ds, cfg.stage3, seed_u);
    timing->stage3_s = seconds_since(t3);
  } else if (cfg.method == "icq") {
    const auto t3 = Clock::now();
    result = train_icq(*ds, cfg.stage3, seed_u);
    timing->stage3_s = seconds_since(t3);
  } else {
    throw ConfigError("run: unknown method '" + cfg.method + "'");
  }

  save_policies(seed_file(dir, "policy", seed, ".ckpt"), spec, result);
  write_metrics_csv(seed_file(dir, "metrics", seed, ".csv"), result.metrics);
  rec->eval_mean = result.final_eval.mean;
  rec->eval_std = result.final_eval.stddev;
  rec->eval_episodes = static_cast<int>(result.final_eval.returns.size());
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

PriorityHistogram make_histogram(const Vec& values, int bins) {
  if (values.empty()) throw std::invalid_argument("make_histogram: no values");
  if (bins < 1) throw std::invalid_argument("make_histogram: bins must be >= 1");
  const double lo = *std::min_element(values.begin(), values.end());
  const double hi = *std::max_element(values.begin(), values.end());
  PriorityHistogram hist;
  hist.edges.resize(static_cast<size_t>(bins) + 1);
  for (int b = 0; b <= bins; ++b)
    hist.edges[static_cast<size_t>(b)] = lo + (hi - lo) * b / bins;
  hist.counts.assign(static_cast<size_t>(bins), 0);
  const double width = (hi - lo) / bins;
  for (double v : values) {
    int idx = width > 0.0 ? static_cast<int>((v - lo) / width) : 0;
    idx = std::clamp(idx, 0, bins - 1);
    hist.counts[static_cast<size_t>(idx)] += 1;
  }
  return hist;
}

bool RunReport::any_failure() const {
  return std::any_of(records.begin(), records.end(), [](const SeedRecord& r) { return !r.ok; });
}

bool RunReport::any_divergence() const {
  return std::any_of(records.begin(), records.end(),
                     [](const SeedRecord& r) { return r.diverged; });
}

ExperimentConfig effective_config(const ExperimentConfig& cfg) {
  ExperimentConfig eff = cfg;
  if (cfg.method == "sit_no_priority") {
    eff.stage2.alpha = 1e6;
  } else if (cfg.method == "sit_no_attention") {
    eff.stage1.use_attention = false;
  } else if (cfg.method == "sit_no_ensemble") {
    eff.stage1.members = 1;
    eff.stage2.unit_uncertainty = true;
  } else if (cfg.method == "sit_no_gat") {
    eff.stage3.use_gat = false;
  }
  return eff;
}

std::map<std::string, std::string> ablation_diff(const ExperimentConfig& cfg) {
  ExperimentConfig base = cfg;
  base.method = "sit";
  const auto base_kv = base.to_kv();
  const auto eff_kv = effective_config(cfg).to_kv();
  std::map<std::string, std::string> diff;
  for (const auto& [key, value] : eff_kv) {
    if (key == "method") continue;
    const auto it = base_kv.find(key);
    if (it != base_kv.end() && it->second != value)
      diff[key] = it->second + " -> " + value;
  }
  return diff;
}

RunReport run(const ExperimentConfig& cfg) {
  cfg.validate();
  const ExperimentConfig eff = effective_config(cfg);
  fs::create_directories(eff.out_dir + "/plots");

  const auto t0 = Clock::now();
  auto ds = std::make_shared<const JointDataset>(obtain_dataset(eff));
  const double dataset_s = seconds_since(t0);

  RunReport report;
  report.method = cfg.method;
  report.config_echo = eff.to_kv();
  report.ablation_diff = ablation_diff(cfg);
  report.behavior_mean = ds->mean_episode_return();

  std::vector<StageTiming> timings;
  for (int seed : cfg.seeds) {
    SeedRecord rec;
    rec.seed = seed;
    StageTiming timing;
    timing.seed = seed;
    try {
      run_seed(eff, ds, seed, &rec, &timing);
    } catch (const DivergenceError& e) {
      rec.ok = false;
      rec.diverged = true;
      rec.error = e.what();
    }
    report.records.push_back(std::move(rec));
    timings.push_back(timing);
  }

  Vec ok_means;
  for (const SeedRecord& r : report.records)
    if (r.ok) ok_means.push_back(r.eval_mean);
  report.n_ok = static_cast<int>(ok_means.size());
  if (!ok_means.empty()) {
    report.aggregate_mean = mean_of(ok_means);
    report.aggregate_std = stddev_of(ok_means);
  }

  write_report_json(eff.out_dir + "/report.json", report);

  nlohmann::json timing_json;
  timing_json["dataset_s"] = dataset_s;
  timing_json["seeds"] = nlohmann::json::array();
  for (const StageTiming& t : timings)
    timing_json["seeds"].push_back({{"seed", t.seed},
                                    {"stage1_s", t.stage1_s},
                                    {"stage2_s", t.stage2_s},
                                    {"stage3_s", t.stage3_s}});
  timing_json["total_s"] = seconds_since(t0);
  std::ofstream tf(eff.out_dir + "/timing.json");
  tf << timing_json.dump(2) << '\n';

  return report;
}

nlohmann::json report_to_json(const RunReport& report) {
  nlohmann::json j;
  j["version"] = 1;
  j["method"] = report.method;
  j["config"] = report.config_echo;
  j["ablation_diff"] = report.ablation_diff;
  j["behavior_mean_return"] = report.behavior_mean;
  j["aggregate"] = {{"eval_mean", report.aggregate_mean},
                    {"eval_std", report.aggregate_std},
                    {"n_ok", report.n_ok},
                    {"n_failed", static_cast<int>(report.records.size()) - report.n_ok}};
  j["records"] = nlohmann::json::array();
  for (const SeedRecord& r : report.records) {
    nlohmann::json rec;
    rec["seed"] = r.seed;
    rec["ok"] = r.ok;
    rec["diverged"] = r.diverged;
    rec["error"] = r.error;
    rec["eval_mean"] = r.eval_mean;
    rec["eval_std"] = r.eval_std;
    rec["eval_episodes"] = r.eval_episodes;
    rec["mean_r_hat"] = r.mean_r_hat;
    nlohmann::json hists = nlohmann::json::object();
    for (const auto& [type, hist] : r.priority_hist)
      hists[type] = {{"edges", hist.edges}, {"counts", hist.counts}};
    rec["priority_histograms"] = hists;
    j["records"].push_back(std::move(rec));
  }
  return j;
}

void write_report_json(const std::string& path, const RunReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << report_to_json(report).dump(2) << '\n';
}

SweepResult sweep(const ExperimentConfig& cfg, const std::string& param,
                  const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("sweep: values must be non-empty");
  if (param != "alpha" && param != "beta" && param != "eta")
    throw ConfigError("sweep: parameter must be one of alpha, beta, eta");
  if (!is_sit_family(cfg.method))
    throw ConfigError("sweep: parameter sweeps only apply to sit-family methods");

  SweepResult result;
  result.param = param;
  result.values = values;
  for (double v : values) {
    ExperimentConfig sub = cfg;
    if (param == "alpha")
      sub.stage2.alpha = v;
    else if (param == "beta")
      sub.stage3.beta = v;
    else
      sub.stage3.eta = v;
    char label[64];
    std::snprintf(label, sizeof(label), "%s_%g", param.c_str(), v);
    sub.out_dir = cfg.out_dir + "/" + label;
    result.reports.push_back(run(sub));
  }

  fs::create_directories(cfg.out_dir);
  const std::string csv_path = cfg.out_dir + "/sweep_" + param + ".csv";
  std::ofstream out(csv_path);
  if (!out) throw std::runtime_error("cannot write " + csv_path);
  out << "param,value,n_ok,mean_return,std_return";
  for (int seed : cfg.seeds) out << ",seed" << seed << "_return";
  out << '\n';
  for (size_t k = 0; k < values.size(); ++k) {
    const RunReport& rep = result.reports[k];
    out << param << ',' << format_real(values[k]) << ',' << rep.n_ok << ','
        << format_real(rep.aggregate_mean) << ',' << format_real(rep.aggregate_std);
    for (const SeedRecord& r : rep.records) out << ',' << (r.ok ? format_real(r.eval_mean) : "");
    out << '\n';
  }
  return result;
}

void emit_plots(const std::string& run_dir) {
  const std::string report_path = run_dir + "/report.json";
  std::ifstream in(report_path);
  if (!in) throw ConfigError("emit_plots: cannot open " + report_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("emit_plots: " + report_path + ": " + e.what());
  }

  const std::string plots = run_dir + "/plots";
  fs::create_directories(plots);

  for (const auto& rec : j.at("records")) {
    if (!rec.at("ok").get<bool>()) continue;
    const int seed = rec.at("seed").get<int>();

    // Return curve: one row per evaluation epoch, deduplicated across the
    // per-agent metric rows (evaluation is shared by all agents).
    const std::string metrics_path = seed_file(run_dir, "metrics", seed, ".csv");
    std::ifstream mf(metrics_path);
    if (!mf) throw ConfigError("emit_plots: cannot open " + metrics_path);
    std::ofstream rc(seed_file(plots, "return_curve", seed, ".csv"));
    rc << "epoch,eval_return_mean,eval_return_std\n";
    std::string line;
    std::getline(mf, line);  // header
    std::string last_epoch;
    while (std::getline(mf, line)) {
      if (line.empty()) continue;
      const std::vector<std::string> cells = split_csv_line(line);
      if (cells.size() != 6)
        throw ConfigError("emit_plots: " + metrics_path + ": malformed row '" + line + "'");
      if (cells[0] == last_epoch) continue;
      last_epoch = cells[0];
      rc << cells[0] << ',' << cells[4] << ',' << cells[5] << '\n';
    }

    const auto& hists = rec.at("priority_histograms");
    if (!hists.empty()) {
      std::ofstream hf(seed_file(plots, "priority_hist", seed, ".csv"));
      hf << "type,bin_lo,bin_hi,count\n";
      for (auto it = hists.begin(); it != hists.end(); ++it) {
        const auto edges = it.value().at("edges").get<Vec>();
        const auto counts = it.value().at("counts").get<std::vector<int>>();
        for (size_t b = 0; b < counts.size(); ++b)
          hf << it.key() << ',' << format_real(edges[b]) << ',' << format_real(edges[b + 1]) << ','
             << counts[b] << '\n';
      }
    }
  }
}

}  // namespace sit
