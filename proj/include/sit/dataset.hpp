#pragma once
// Offline trajectory storage.
//
// Joint data is what the environment emitted: per step the global state, all
// observations, the joint action, the shared reward and the done flag.
// Individual (decomposed) data is per-agent: estimated reward, uncertainty and
// return per step. Individual steps reference their source (episode, t) rather
// than duplicating observation vectors; observations are materialized on
// access from the joint dataset.
//
// On disk both kinds share one line-delimited text format: a JSON header line,
// then one JSON record per line tagged with its record kind. Reals are written
// with 17 significant digits, so a load/save cycle reproduces the file exactly.

#include <cstdint>
#include <string>
#include <vector>

#include "sit/common.hpp"
#include "sit/env.hpp"

namespace sit {

struct JointStep {
  Vec state;              // global state before the action
  std::vector<Vec> obs;   // per-agent observations before the action
  std::vector<int> actions;
  double r_tot = 0.0;
  bool done = false;
};

struct DatasetMeta {
  std::string composition;
  std::uint64_t seed = 0;
};

struct JointDataset {
  EnvSpec spec;
  DatasetMeta meta;
  std::vector<std::vector<JointStep>> episodes;

  int n_episodes() const { return static_cast<int>(episodes.size()); }
  int total_steps() const;
  const JointStep& at(int episode, int t) const;
  double episode_return(int episode) const;
  double mean_episode_return() const;
  void validate() const;
};

void save_dataset(const JointDataset& ds, const std::string& path);
JointDataset load_dataset(const std::string& path);

struct StepRef {
  int episode = 0;
  int t = 0;
};

// Uniform sampling with replacement over all (episode, t) pairs.
std::vector<StepRef> sample_joint_batch(const JointDataset& ds, int batch, Rng& rng);

// --- Decomposed per-agent data ---------------------------------------------

struct IndividualStep {
  int episode = 0;  // source episode in the joint dataset
  int t = 0;        // source step
  int action = 0;   // this agent's action a_i^t
  double r_hat = 0.0;   // decomposed reward estimate
  double u_hat = 0.0;   // ensemble disagreement (uncertainty)
  double g_hat = 0.0;   // discounted return-to-go of r_hat
  bool terminal = false;
};

struct IndividualTrajectory {
  int agent = 0;
  std::string type;
  std::vector<IndividualStep> steps;
  double priority_raw = 0.0;  // mean per-step return before reshaping
  double priority = 0.0;      // reshaped sampling priority
};

// Materialization helpers (observations live only in the joint dataset).
Vec obs_of(const JointDataset& ds, int agent, const IndividualStep& s);
// Zero vector when the step is terminal (never consumed by learners).
Vec next_obs_of(const JointDataset& ds, int agent, const IndividualStep& s);
// Concatenated observations of all other agents, ascending index order.
Vec other_obs_of(const JointDataset& ds, int agent, const IndividualStep& s);

// --- Dataset generation -----------------------------------------------------

struct MixtureComponent {
  double fraction = 1.0;
  std::vector<SkillLevel> levels;  // one per agent
};

struct DatasetComposition {
  std::vector<MixtureComponent> mixture;
  int episodes = 0;
  std::string label() const;
};

// Episode counts per component: round(fraction * episodes), with any rounding
// remainder assigned to the first component.
std::vector<int> component_episode_counts(const DatasetComposition& comp);

// Deterministic in (spec, composition, seed): repeated calls produce
// byte-identical saved files.
JointDataset generate_dataset(const EnvSpec& spec, const DatasetComposition& comp,
                              std::uint64_t seed);

}  // namespace sit
