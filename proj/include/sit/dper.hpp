#pragma once
// Decomposed prioritized experience replay.
//
// The trained reward-decomposition ensemble turns each joint episode into one
// individual trajectory per agent, carrying per-step estimated rewards r_hat,
// ensemble-disagreement uncertainties u_hat and discounted returns g_hat. A
// trajectory's raw priority is its mean per-step return; within each agent
// type, raw priorities are min-max rescaled to a fixed range and pushed
// through a temperature softmax to give sampling probabilities, stored in a
// sum-tree per type. Agents later draw trajectories from their own type's
// tree (shared across all agents of that type) and a uniform step within the
// trajectory.

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sit/ardnem.hpp"
#include "sit/dataset.hpp"
#include "sit/sumtree.hpp"

namespace sit {

struct DperHyper {
  double alpha = 0.2;       // priority softmax temperature
  double rescale_lo = 0.0;  // min-max target range for raw priorities
  double rescale_hi = 20.0;
  double gamma = 0.99;           // discount for returns-to-go
  bool unit_uncertainty = false; // force u_hat ≡ 1 (single-member ablation)

  void validate() const;
};

// Backward recursion g[t] = r[t] + gamma * g[t+1], g[T-1] = r[T-1].
Vec discounted_returns(const Vec& rewards, double gamma);

// Min-max rescale to [lo, hi] (all-equal input maps to the midpoint), then a
// numerically stable softmax of (rescaled / alpha). Sums to 1.
Vec reshape_priorities(const Vec& p_hat, double alpha, double lo, double hi);

// One trajectory per agent for the given episode; priorities left raw.
std::vector<IndividualTrajectory> decompose_episode(const EnsembleRewardModel& model,
                                                    const JointDataset& ds, int episode,
                                                    const DperHyper& hyper);

struct TypeBucket {
  std::vector<IndividualTrajectory> trajectories;
  std::unique_ptr<SumTree> tree;  // over reshaped priorities
  double median_u = 0.0;          // median u_hat over all steps in the bucket
};

class Dper {
 public:
  Dper(std::shared_ptr<const JointDataset> ds, std::map<std::string, TypeBucket> buckets,
       DperHyper hyper);

  const JointDataset& dataset() const { return *ds_; }
  std::shared_ptr<const JointDataset> dataset_ptr() const { return ds_; }
  const DperHyper& hyper() const { return hyper_; }
  std::vector<std::string> types() const;
  const TypeBucket& bucket(const std::string& type) const;

  struct SampleRef {
    int trajectory = 0;
    int step = 0;
  };
  // Trajectory via sum-tree proportional draw, step uniform within it.
  SampleRef sample(const std::string& type, Rng& rng) const;

  void save(const std::string& path) const;
  static Dper load(const std::string& path, std::shared_ptr<const JointDataset> ds);

 private:
  std::shared_ptr<const JointDataset> ds_;
  std::map<std::string, TypeBucket> buckets_;
  DperHyper hyper_;
};

// Decomposes every episode, groups trajectories by agent type, reshapes
// priorities within each type and builds the per-type sum-trees.
Dper build_dper(std::shared_ptr<const JointDataset> ds, const EnsembleRewardModel& model,
                const DperHyper& hyper);

}  // namespace sit
