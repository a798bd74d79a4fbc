#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "sit/runner.hpp"

using namespace sit;
namespace fs = std::filesystem;

namespace {

const char* kTinyConfig = R"(
# two-agent one-shot game, desk-sized settings for fast end-to-end runs
env.id = matrix_game
env.n_agents = 2
dataset.mixture = 0.5[e,e]+0.5[r,r]
dataset.episodes = 30
stage1.members = 2
stage1.hidden = 8
stage1.embed = 4
stage1.epochs = 60
stage1.lr = 1e-3
stage2.alpha = 0.2
stage3.epochs = 60
stage3.batch = 8
stage3.critic_hidden = 8
stage3.actor_hidden = 8
stage3.actor_lr = 2e-3
stage3.critic_lr = 1e-3
stage3.target_interval = 20
stage3.eval_interval = 30
stage3.eval_episodes = 2
stage3.final_eval_episodes = 4
method = sit
seeds = 0
out = harness_runs/base
)";

ExperimentConfig tiny_config(const std::string& out_dir, const std::string& method = "sit") {
  ExperimentConfig cfg = ExperimentConfig::parse_text(kTinyConfig, "tiny");
  cfg.out_dir = out_dir;
  cfg.method = method;
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct DirCleanup {
  std::string root;
  ~DirCleanup() {
    std::error_code ec;
    fs::remove_all(root, ec);
  }
};

}  // namespace

TEST_CASE("config text parses every section with comments and defaults") {
  const ExperimentConfig cfg = ExperimentConfig::parse_text(kTinyConfig, "tiny");
  CHECK(cfg.env.env_id == EnvId::kMatrixGame);
  CHECK(cfg.env.n_agents == 2);
  CHECK(cfg.composition.episodes == 30);
  CHECK(cfg.composition.label() == "0.5[expert,expert]+0.5[random,random]");
  CHECK(cfg.stage1.members == 2);
  CHECK(cfg.stage1.lr == 1e-3);
  CHECK(cfg.stage1.batch == 32);          // untouched default
  CHECK(cfg.stage2.alpha == 0.2);
  CHECK(cfg.stage2.rescale_hi == 20.0);   // untouched default
  CHECK(cfg.stage3.epochs == 60);
  CHECK(cfg.stage3.beta == 0.1);          // untouched default
  CHECK(cfg.method == "sit");
  CHECK(cfg.seeds == std::vector<int>{0});
  CHECK(cfg.out_dir == "harness_runs/base");
  cfg.validate();

  // Trailing comments and blank lines are tolerated.
  const ExperimentConfig trail = ExperimentConfig::parse_text(
      "env.id = matrix_game   # the one-shot game\n"
      "env.n_agents = 2\n\n"
      "dataset.mixture = 1.0[e,e]\n"
      "dataset.episodes = 10\n",
      "trail");
  CHECK(trail.env.n_agents == 2);
  CHECK(trail.method == "sit");            // default
  CHECK(trail.seeds == std::vector<int>{0, 1, 2, 3, 4});

  // Custom payoff tables for the matrix game.
  const ExperimentConfig pay = ExperimentConfig::parse_text(
      "env.id = matrix_game\n"
      "env.n_agents = 2\n"
      "env.payoffs = -1,0,1;-3,0,3\n"
      "dataset.mixture = 1.0[e,e]\n"
      "dataset.episodes = 10\n",
      "pay");
  CHECK(pay.env.payoffs[1] == Vec{-3.0, 0.0, 3.0});

  // Grid settings for the spread environment.
  const ExperimentConfig grid = ExperimentConfig::parse_text(
      "env.id = spread_grid\n"
      "env.n_agents = 3\n"
      "env.grid_size = 8\n"
      "env.max_steps = 12\n"
      "dataset.mixture = 1.0[r,m,e]\n"
      "dataset.episodes = 10\n",
      "grid");
  CHECK(grid.env.grid_size == 8);
  CHECK(grid.env.max_steps == 12);
  CHECK(grid.env.state_dim == 12);
}

TEST_CASE("config parsing fails fast on malformed input") {
  const auto parse = [](const std::string& text) {
    return ExperimentConfig::parse_text(text, "bad");
  };
  const std::string base =
      "env.id = matrix_game\nenv.n_agents = 2\n"
      "dataset.mixture = 1.0[e,e]\ndataset.episodes = 10\n";

  CHECK_THROWS_AS(parse(base + "stage9.lr = 1\n"), ConfigError);            // unknown key
  CHECK_THROWS_AS(parse(base + "method = qmix\n"), ConfigError);            // unknown method
  CHECK_THROWS_AS(parse(base + "seeds = 1,1\n"), ConfigError);              // duplicate seed
  CHECK_THROWS_AS(parse(base + "seeds = -3\n"), ConfigError);               // negative seed
  CHECK_THROWS_AS(parse(base + "stage1.lr = fast\n"), ConfigError);         // not a number
  CHECK_THROWS_AS(parse(base + "env.grid_size = 6\n"), ConfigError);        // wrong env
  CHECK_THROWS_AS(parse("env.id = matrix_game\nenv.n_agents = 2\n"), ConfigError);  // no dataset
  CHECK_THROWS_AS(parse(base + "env.n_agents = 2\n"), ConfigError);         // duplicate key
  CHECK_THROWS_AS(parse(base + "dataset.mixture\n"), ConfigError);          // missing '='
  CHECK_THROWS_AS(ExperimentConfig::parse_file("no_such_config.cfg"), ConfigError);

  // Mixture strings: fractions must sum to one, levels must match n_agents.
  CHECK_THROWS_AS(parse_mixture("0.5[r,r]+0.2[e,e]", 2, 10), ConfigError);
  CHECK_THROWS_AS(parse_mixture("1.0[r,r,r]", 2, 10), ConfigError);
  CHECK_THROWS_AS(parse_mixture("1.0[r,x]", 2, 10), ConfigError);
  CHECK_THROWS_AS(parse_mixture("", 2, 10), ConfigError);
  const DatasetComposition ok = parse_mixture("0.25[random,medium]+0.75[e,r]", 2, 40);
  CHECK(ok.mixture.size() == 2);
  CHECK(ok.mixture[0].levels == std::vector<SkillLevel>{SkillLevel::kRandom, SkillLevel::kMedium});
  CHECK(ok.mixture[1].fraction == 0.75);

  CHECK(parse_seed_list("7") == std::vector<int>{7});
  CHECK(parse_seed_list("0, 2, 5") == std::vector<int>{0, 2, 5});
  CHECK_THROWS_AS(parse_seed_list(""), ConfigError);
  CHECK_THROWS_AS(parse_seed_list("a,b"), ConfigError);
}

TEST_CASE("effective settings round-trip through the parser") {
  const ExperimentConfig cfg = tiny_config("harness_runs/echo");
  const std::map<std::string, std::string> kv = cfg.to_kv();
  std::ostringstream text;
  for (const auto& [k, v] : kv) text << k << " = " << v << "\n";
  const ExperimentConfig back = ExperimentConfig::parse_text(text.str(), "roundtrip");
  CHECK(back.to_kv() == kv);
  CHECK(back.env.payoffs == cfg.env.payoffs);
  CHECK(back.seeds == cfg.seeds);
  CHECK(back.stage3.eval_episodes == cfg.stage3.eval_episodes);
}

TEST_CASE("variant methods override exactly one mechanism") {
  const ExperimentConfig base = tiny_config("harness_runs/abl");

  ExperimentConfig cfg = base;
  cfg.method = "sit_no_priority";
  ExperimentConfig eff = effective_config(cfg);
  CHECK(eff.stage2.alpha == 1e6);
  auto diff = ablation_diff(cfg);
  REQUIRE(diff.size() == 1);
  CHECK(diff.count("stage2.alpha") == 1);

  cfg.method = "sit_no_attention";
  eff = effective_config(cfg);
  CHECK(eff.stage1.use_attention == false);
  diff = ablation_diff(cfg);
  REQUIRE(diff.size() == 1);
  CHECK(diff.count("stage1.use_attention") == 1);

  cfg.method = "sit_no_ensemble";
  eff = effective_config(cfg);
  CHECK(eff.stage1.members == 1);
  CHECK(eff.stage2.unit_uncertainty == true);
  diff = ablation_diff(cfg);
  CHECK(diff.size() == 2);
  CHECK(diff.count("stage1.members") == 1);
  CHECK(diff.count("stage2.unit_uncertainty") == 1);

  cfg.method = "sit_no_gat";
  eff = effective_config(cfg);
  CHECK(eff.stage3.use_gat == false);
  diff = ablation_diff(cfg);
  REQUIRE(diff.size() == 1);
  CHECK(diff.at("stage3.use_gat") == "true -> false");

  for (const char* plain : {"sit", "bc", "icq"}) {
    cfg.method = plain;
    CHECK(ablation_diff(cfg).empty());
  }
}

TEST_CASE("histograms cover the value range and conserve counts") {
  const PriorityHistogram h = make_histogram({0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, 5);
  REQUIRE(h.edges.size() == 6);
  REQUIRE(h.counts.size() == 5);
  CHECK(h.edges.front() == 0.0);
  CHECK(h.edges.back() == 9.0);
  int total = 0;
  for (int c : h.counts) {
    CHECK(c == 2);
    total += c;
  }
  CHECK(total == 10);

  // The maximum value is clamped into the last bin, not dropped.
  const PriorityHistogram top = make_histogram({0.0, 1.0}, 4);
  CHECK(top.counts.back() == 1);

  // Degenerate all-equal inputs collapse into the first bin.
  const PriorityHistogram flat = make_histogram({2.5, 2.5, 2.5}, 4);
  CHECK(flat.counts[0] == 3);
  int flat_total = 0;
  for (int c : flat.counts) flat_total += c;
  CHECK(flat_total == 3);
}

TEST_CASE("a full pipeline run writes every artifact and a faithful report") {
  DirCleanup cleanup{"harness_runs"};
  const ExperimentConfig cfg = tiny_config("harness_runs/full");
  const RunReport report = run(cfg);

  CHECK(report.method == "sit");
  CHECK(report.n_ok == 1);
  CHECK_FALSE(report.any_failure());
  CHECK_FALSE(report.any_divergence());
  REQUIRE(report.records.size() == 1);
  const SeedRecord& rec = report.records[0];
  CHECK(rec.seed == 0);
  CHECK(rec.ok);
  CHECK(rec.eval_episodes == 4);
  CHECK(report.aggregate_mean == rec.eval_mean);
  REQUIRE(rec.mean_r_hat.size() == 2);

  // Behavior mean matches the dataset the run wrote to disk.
  const JointDataset ds = load_dataset("harness_runs/full/dataset.jsonl");
  CHECK(report.behavior_mean == doctest::Approx(ds.mean_episode_return()).epsilon(1e-12));

  // Histogram counts account for every individual trajectory.
  REQUIRE(rec.priority_hist.count("toy") == 1);
  int hist_total = 0;
  for (int c : rec.priority_hist.at("toy").counts) hist_total += c;
  CHECK(hist_total == 30 * 2);  // episodes x agents

  for (const char* name :
       {"ardnem_seed0.ckpt", "dper_seed0.ckpt", "policy_seed0.ckpt", "metrics_seed0.csv",
        "plots/decomp_curve_seed0.csv", "report.json", "timing.json"}) {
    CAPTURE(name);
    CHECK(fs::exists(fs::path("harness_runs/full") / name));
  }

  // The metrics file carries the documented header.
  std::ifstream mf("harness_runs/full/metrics_seed0.csv");
  std::string header;
  std::getline(mf, header);
  CHECK(header == "epoch,agent,critic_loss,actor_loss,eval_return_mean,eval_return_std");

  // Plot derivation from the finished directory.
  emit_plots("harness_runs/full");
  CHECK(fs::exists("harness_runs/full/plots/return_curve_seed0.csv"));
  CHECK(fs::exists("harness_runs/full/plots/priority_hist_seed0.csv"));
  CHECK_THROWS_AS(emit_plots("harness_runs/nowhere"), ConfigError);

  // Saved checkpoints restore runnable policies for the right environment.
  const TrainResult loaded = load_policies("harness_runs/full/policy_seed0.ckpt", cfg.env, cfg.stage3);
  const EvalResult ev = evaluate(loaded.actors, cfg.env, rec.eval_episodes, 0);
  CHECK(ev.returns.size() == 4);
}

TEST_CASE("repeated runs are byte-identical and reuse the stored dataset") {
  DirCleanup cleanup{"harness_runs"};
  const ExperimentConfig cfg = tiny_config("harness_runs/repeat");

  run(cfg);
  const std::string report_once = slurp("harness_runs/repeat/report.json");
  const std::string metrics_once = slurp("harness_runs/repeat/metrics_seed0.csv");
  const std::string dataset_once = slurp("harness_runs/repeat/dataset.jsonl");

  // Second run loads dataset.jsonl instead of regenerating it.
  run(cfg);
  CHECK(slurp("harness_runs/repeat/report.json") == report_once);
  CHECK(slurp("harness_runs/repeat/metrics_seed0.csv") == metrics_once);
  CHECK(slurp("harness_runs/repeat/dataset.jsonl") == dataset_once);

  // A stored dataset for a different composition is rejected, not reused.
  ExperimentConfig other = cfg;
  other.composition = parse_mixture("1.0[m,m]", 2, 30);
  CHECK_THROWS_AS(run(other), ConfigError);
}

TEST_CASE("baseline methods skip the decomposition artifacts") {
  DirCleanup cleanup{"harness_runs"};
  const ExperimentConfig cfg = tiny_config("harness_runs/bc", "bc");
  const RunReport report = run(cfg);
  CHECK(report.n_ok == 1);
  CHECK(fs::exists("harness_runs/bc/policy_seed0.ckpt"));
  CHECK(fs::exists("harness_runs/bc/metrics_seed0.csv"));
  CHECK_FALSE(fs::exists("harness_runs/bc/ardnem_seed0.ckpt"));
  CHECK_FALSE(fs::exists("harness_runs/bc/dper_seed0.ckpt"));
  CHECK(report.records[0].mean_r_hat.empty());
  CHECK(report.records[0].priority_hist.empty());

  // Cloning a half-expert dataset cannot beat cloning pure expert data, but it
  // must land in a sane range around the behavior return.
  CHECK(report.aggregate_mean >= report.behavior_mean - 1.0);
}

TEST_CASE("the no-priority variant equals plain sit with a flat temperature") {
  DirCleanup cleanup{"harness_runs"};
  ExperimentConfig variant = tiny_config("harness_runs/variant", "sit_no_priority");
  const RunReport vr = run(variant);

  ExperimentConfig manual = tiny_config("harness_runs/manual");
  manual.stage2.alpha = 1e6;
  const RunReport mr = run(manual);

  REQUIRE(vr.n_ok == 1);
  REQUIRE(mr.n_ok == 1);
  CHECK(vr.records[0].eval_mean == mr.records[0].eval_mean);
  CHECK(slurp("harness_runs/variant/policy_seed0.ckpt") ==
        slurp("harness_runs/manual/policy_seed0.ckpt"));

  // The variant reports its mechanism override; the manual run does not.
  CHECK(vr.ablation_diff.count("stage2.alpha") == 1);
  CHECK(mr.ablation_diff.empty());
}

TEST_CASE("report json carries the echoed config and per-seed details") {
  DirCleanup cleanup{"harness_runs"};
  const ExperimentConfig cfg = tiny_config("harness_runs/json");
  const RunReport report = run(cfg);
  const nlohmann::json j = report_to_json(report);

  CHECK(j.at("method") == "sit");
  CHECK(j.at("config").at("env.id") == "matrix_game");
  CHECK(j.at("config").at("stage2.alpha") == report.config_echo.at("stage2.alpha"));
  CHECK(parse_real(j.at("config").at("stage2.alpha").get<std::string>(), "echo") == 0.2);
  CHECK(j.at("behavior_mean_return").get<double>() ==
        doctest::Approx(report.behavior_mean).epsilon(1e-12));
  CHECK(j.at("aggregate").at("n_ok") == 1);
  CHECK(j.at("aggregate").at("n_failed") == 0);
  REQUIRE(j.at("records").size() == 1);
  CHECK(j.at("records")[0].at("seed") == 0);
  CHECK(j.at("records")[0].at("eval_mean").get<double>() ==
        doctest::Approx(report.records[0].eval_mean).epsilon(1e-12));
  CHECK(j.at("records")[0].at("priority_histograms").count("toy") == 1);

  // No volatile content: the serialized report has no timing section.
  CHECK(j.count("timing") == 0);
}

TEST_CASE("sweeps fan out over a stage parameter and tabulate the results") {
  DirCleanup cleanup{"harness_runs"};
  ExperimentConfig cfg = tiny_config("harness_runs/sweep");
  const SweepResult sr = sweep(cfg, "alpha", {0.2, 1e6});
  REQUIRE(sr.reports.size() == 2);
  CHECK(sr.param == "alpha");
  CHECK(fs::exists("harness_runs/sweep/alpha_0.2/report.json"));
  CHECK(fs::exists("harness_runs/sweep/alpha_1e+06/report.json"));
  CHECK(fs::exists("harness_runs/sweep/sweep_alpha.csv"));

  std::ifstream csv("harness_runs/sweep/sweep_alpha.csv");
  std::string line;
  int rows = 0;
  while (std::getline(csv, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 3);  // header + one row per value

  CHECK_THROWS_AS(sweep(cfg, "gamma", {0.9}), ConfigError);
  CHECK_THROWS_AS(sweep(cfg, "alpha", {}), ConfigError);
  ExperimentConfig bc = tiny_config("harness_runs/sweep_bc", "bc");
  CHECK_THROWS_AS(sweep(bc, "alpha", {0.2}), ConfigError);
}
