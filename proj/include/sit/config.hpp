#pragma once
// Experiment configuration: a small key = value text format covering the
// environment, dataset composition, the three training stages, the method,
// and the seed list. Unknown keys are errors so typos fail fast.
//
//   # lines starting with '#' (or trailing '# ...') are comments
//   env.id = spread_grid
//   env.n_agents = 3
//   dataset.mixture = 0.5[r,r,r]+0.5[r,m,m]
//   dataset.episodes = 240
//   method = sit
//   seeds = 0,1,2,3,4
//
// Method names: sit, bc, icq, and the single-mechanism variants
// sit_no_priority, sit_no_attention, sit_no_ensemble, sit_no_gat.

#include <map>
#include <string>
#include <vector>

#include "sit/ardnem.hpp"
#include "sit/dataset.hpp"
#include "sit/dper.hpp"
#include "sit/env.hpp"
#include "sit/policy.hpp"

namespace sit {

bool method_known(const std::string& method);
const std::vector<std::string>& known_methods();

struct ExperimentConfig {
  EnvSpec env;
  DatasetComposition composition;
  ArdnemHyper stage1;
  DperHyper stage2;
  PolicyHyper stage3;
  std::string method = "sit";
  std::vector<int> seeds = {0, 1, 2, 3, 4};
  std::string out_dir = "runs/out";

  void validate() const;
  // Effective settings as flat key -> value text (the same keys the parser
  // accepts), used for the report echo and for ablation diffs.
  std::map<std::string, std::string> to_kv() const;

  static ExperimentConfig parse_text(const std::string& text, const std::string& origin);
  static ExperimentConfig parse_file(const std::string& path);
};

// "0.5[r,r]+0.5[r,m]" -> components; level names may be single letters or
// full words (r|random, m|medium, e|expert).
DatasetComposition parse_mixture(const std::string& text, int n_agents, int episodes);

std::vector<int> parse_seed_list(const std::string& text);

}  // namespace sit
