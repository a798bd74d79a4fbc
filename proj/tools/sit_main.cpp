// Command-line front end for the offline multi-agent pipeline:
//   sit gen-data --config exp.cfg --out runs/demo
//   sit train    --config exp.cfg [--method sit] [--out runs/demo]
//   sit sweep    --config exp.cfg --param alpha --values 0.05,0.2,1 [--out D]
//   sit report   --in runs/demo [--plots]
// Exit codes: 0 success, 2 configuration error, 3 training divergence.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sit/config.hpp"
#include "sit/runner.hpp"

namespace {

void print_report(const sit::RunReport& report) {
  std::cout << "method: " << report.method << "\n";
  for (const auto& [key, delta] : report.ablation_diff)
    std::cout << "  override " << key << ": " << delta << "\n";
  std::cout << "behavior mean return: " << report.behavior_mean << "\n";
  for (const sit::SeedRecord& rec : report.records) {
    if (rec.ok)
      std::cout << "  seed " << rec.seed << ": eval " << rec.eval_mean << " +- " << rec.eval_std
                << " (" << rec.eval_episodes << " episodes)\n";
    else
      std::cout << "  seed " << rec.seed << ": FAILED: " << rec.error << "\n";
  }
  std::cout << "aggregate over " << report.n_ok << " seeds: " << report.aggregate_mean << " +- "
            << report.aggregate_std << "\n";
}

int cmd_gen_data(const std::string& config_path, const std::string& out_override) {
  sit::ExperimentConfig cfg = sit::ExperimentConfig::parse_file(config_path);
  if (!out_override.empty()) cfg.out_dir = out_override;
  std::filesystem::create_directories(cfg.out_dir);
  const std::string path = cfg.out_dir + "/dataset.jsonl";
  const sit::JointDataset ds =
      sit::generate_dataset(cfg.env, cfg.composition, static_cast<std::uint64_t>(cfg.seeds.front()));
  sit::save_dataset(ds, path);
  std::cout << "wrote " << path << ": " << ds.n_episodes() << " episodes, "
            << ds.total_steps() << " steps, mean return " << ds.mean_episode_return() << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& method,
              const std::string& out_override) {
  sit::ExperimentConfig cfg = sit::ExperimentConfig::parse_file(config_path);
  if (!method.empty()) {
    cfg.method = method;
    cfg.validate();
  }
  if (!out_override.empty()) cfg.out_dir = out_override;
  const sit::RunReport report = sit::run(cfg);
  print_report(report);
  std::cout << "report: " << cfg.out_dir << "/report.json\n";
  return report.any_divergence() ? 3 : 0;
}

int cmd_sweep(const std::string& config_path, const std::string& param,
              const std::string& values_text, const std::string& out_override) {
  sit::ExperimentConfig cfg = sit::ExperimentConfig::parse_file(config_path);
  if (!out_override.empty()) cfg.out_dir = out_override;
  std::vector<double> values;
  std::string cell;
  std::istringstream vs(values_text);
  while (std::getline(vs, cell, ','))
    values.push_back(sit::parse_real(cell, "sweep values"));
  const sit::SweepResult result = sit::sweep(cfg, param, values);
  bool diverged = false;
  for (size_t k = 0; k < result.values.size(); ++k) {
    const sit::RunReport& rep = result.reports[k];
    std::cout << param << " = " << result.values[k] << ": mean " << rep.aggregate_mean << " +- "
              << rep.aggregate_std << " over " << rep.n_ok << " seeds\n";
    diverged = diverged || rep.any_divergence();
  }
  std::cout << "table: " << cfg.out_dir << "/sweep_" << param << ".csv\n";
  return diverged ? 3 : 0;
}

int cmd_report(const std::string& run_dir, bool plots) {
  const std::string path = run_dir + "/report.json";
  std::ifstream in(path);
  if (!in) throw sit::ConfigError("report: cannot open " + path);
  nlohmann::json j;
  in >> j;
  std::cout << "method: " << j.at("method").get<std::string>() << "\n";
  std::cout << "behavior mean return: " << j.at("behavior_mean_return").get<double>() << "\n";
  for (const auto& rec : j.at("records")) {
    if (rec.at("ok").get<bool>())
      std::cout << "  seed " << rec.at("seed").get<int>() << ": eval "
                << rec.at("eval_mean").get<double>() << " +- " << rec.at("eval_std").get<double>()
                << "\n";
    else
      std::cout << "  seed " << rec.at("seed").get<int>()
                << ": FAILED: " << rec.at("error").get<std::string>() << "\n";
  }
  const auto& agg = j.at("aggregate");
  std::cout << "aggregate over " << agg.at("n_ok").get<int>()
            << " seeds: " << agg.at("eval_mean").get<double>() << " +- "
            << agg.at("eval_std").get<double>() << "\n";
  if (plots) {
    sit::emit_plots(run_dir);
    std::cout << "plot data: " << run_dir << "/plots\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Offline multi-agent RL with decomposed, prioritized trajectories"};
  app.require_subcommand(1);

  std::string config_path, out_override, method, param, values_text, run_dir;
  bool plots = false;

  CLI::App* gen = app.add_subcommand("gen-data", "Generate the behavior dataset only");
  gen->add_option("--config", config_path, "experiment config file")->required();
  gen->add_option("--out", out_override, "output directory (overrides config)");

  CLI::App* train = app.add_subcommand("train", "Run the full pipeline over all seeds");
  train->add_option("--config", config_path, "experiment config file")->required();
  train->add_option("--method", method, "override the config's method");
  train->add_option("--out", out_override, "output directory (overrides config)");

  CLI::App* sweep = app.add_subcommand("sweep", "Re-run the pipeline over parameter values");
  sweep->add_option("--config", config_path, "experiment config file")->required();
  sweep->add_option("--param", param, "one of: alpha, beta, eta")->required();
  sweep->add_option("--values", values_text, "comma-separated values")->required();
  sweep->add_option("--out", out_override, "output directory (overrides config)");

  CLI::App* report = app.add_subcommand("report", "Summarize a finished run directory");
  report->add_option("--in", run_dir, "run directory containing report.json")->required();
  report->add_flag("--plots", plots, "also write plot-data CSVs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(config_path, out_override);
    if (train->parsed()) return cmd_train(config_path, method, out_override);
    if (sweep->parsed()) return cmd_sweep(config_path, param, values_text, out_override);
    if (report->parsed()) return cmd_report(run_dir, plots);
  } catch (const sit::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const sit::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
