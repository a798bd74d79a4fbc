#pragma once
// Ensemble reward decomposition with state-conditioned attention.
//
// Each ensemble member regresses the shared team reward onto a weighted sum of
// per-agent reward estimates:
//     r_tot_hat = sum_i lambda_i * f(o_i ⊕ onehot(a_i))
// where f is a reward network shared across agents and the weights lambda are
// a softmax over bilinear scores between a global-state embedding and per-agent
// observation-action embeddings:
//     lambda_i ∝ exp( (Wq e_s) · (Wk e_i) ).
// Members share no parameters and are trained independently on the same data
// (MSE against r_tot); their spread later serves as an uncertainty estimate.

#include <cstdint>
#include <string>
#include <vector>

#include "sit/common.hpp"
#include "sit/dataset.hpp"
#include "sit/mlp.hpp"

namespace sit {

struct ArdnemHyper {
  double lr = 1e-4;
  int batch = 32;
  int epochs = 20000;
  double grad_clip = 10.0;
  int hidden = 64;   // reward network and encoder hidden width
  int embed = 64;    // attention embedding width
  int members = 5;
  bool use_attention = true;      // false fixes every lambda to 1
  double holdout_fraction = 0.1;  // trailing episodes reserved for diagnostics
  int log_interval = 200;

  void validate() const;
};

struct DecompositionMember {
  Mlp reward_net;      // (obs ⊕ onehot(action)) -> scalar
  Mlp state_encoder;   // state -> embedding
  Mlp obsact_encoder;  // (obs ⊕ onehot(action)) -> embedding
  Matrix w_query, w_key;    // embedding projections for the attention scores
  Matrix gw_query, gw_key;  // their gradient buffers
  bool use_attention = true;

  static DecompositionMember make(const EnvSpec& spec, const ArdnemHyper& hyper, Rng& rng);

  // Parameter views in a stable order (used by optimizer and checkpoints).
  std::vector<ParamView> params(const std::string& prefix = "");

  // Softmax attention weights over agents; always sums to 1.
  Vec attention_weights(const EnvSpec& spec, const Vec& state, const std::vector<Vec>& obs,
                        const std::vector<int>& actions) const;
  // f(o_i ⊕ onehot(a_i)).
  double agent_reward(const EnvSpec& spec, const Vec& obs_i, int action) const;
  // Weighted total; uses lambda ≡ 1 when attention is disabled.
  double predict_total(const EnvSpec& spec, const Vec& state, const std::vector<Vec>& obs,
                       const std::vector<int>& actions) const;
};

struct ArdnemLogPoint {
  int epoch = 0;
  double batch_loss = 0.0;
  Vec probe_mean_weighted;  // per-agent mean lambda_i*f_i over the probe slice
};

struct EnsembleRewardModel {
  EnvSpec spec;
  ArdnemHyper hyper;
  std::vector<DecompositionMember> members;
  std::vector<std::vector<ArdnemLogPoint>> logs;  // per member training curve

  // Ensemble decomposition of one step:
  //   r_hat_i = mean_m lambda_im * f_im,
  //   u_hat_i = population std over members of lambda_im * f_im.
  void decompose_step(const Vec& state, const std::vector<Vec>& obs,
                      const std::vector<int>& actions, Vec* r_hat, Vec* u_hat) const;

  // Mean over members of the predicted total reward.
  double predict_total_mean(const Vec& state, const std::vector<Vec>& obs,
                            const std::vector<int>& actions) const;

  void save(const std::string& path) const;
  static EnsembleRewardModel load(const std::string& path, const EnvSpec& spec);
};

// Mean squared total-reward error of one member over the given steps.
double member_mse(const DecompositionMember& member, const JointDataset& ds,
                  const std::vector<StepRef>& refs);

// Reverse-mode gradient of member_mse, accumulated into the member's gradient
// buffers (callers zero them first). Returns the loss value.
double member_mse_grad(DecompositionMember& member, const JointDataset& ds,
                       const std::vector<StepRef>& refs);

// Leading/trailing episode split used for training vs diagnostics.
std::vector<StepRef> training_refs(const JointDataset& ds, double holdout_fraction);
std::vector<StepRef> holdout_refs(const JointDataset& ds, double holdout_fraction);

EnsembleRewardModel train_ardnem(const JointDataset& ds, const ArdnemHyper& hyper,
                                 std::uint64_t seed);

}  // namespace sit
