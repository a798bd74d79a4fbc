#pragma once
// Offline policy learning on decomposed, prioritized trajectories.
//
// Per agent: a feed-forward actor pi(a | tau) over the action-observation
// history tau = o ⊕ onehot(prev action) (zero action vector on the first
// step), and a critic with a local branch f_local(tau ⊕ onehot(a)) plus a
// graph-attention branch that aggregates all agents' observations into a
// global embedding. The critic minimizes an uncertainty-weighted TD error on
// dataset (SARSA) targets with a periodically synced target network; the actor
// maximizes exponentially-filtered log-likelihood of dataset actions (the
// filter weight is exp(Q/beta) normalized by its batch mean, gradient-stopped).
// Low-uncertainty samples are trusted more: both losses are scaled by
// eta / u_hat with u_hat clamped below at a fraction of its bucket median.
//
// Baselines: behavior cloning, and an ICQ-style method on joint data (per
// agent critics combined by a state-conditioned linear mixer, softmax-filtered
// one-step targets, filtered actor updates).

#include <cstdint>
#include <string>
#include <vector>

#include "sit/common.hpp"
#include "sit/dataset.hpp"
#include "sit/dper.hpp"
#include "sit/mlp.hpp"

namespace sit {

struct PolicyHyper {
  double gamma = 0.99;
  double beta = 0.1;  // advantage filter temperature
  double eta = 1.0;   // conservatism scale on 1/u_hat weights
  double actor_lr = 5e-4;
  double critic_lr = 1e-4;
  int batch = 32;
  int epochs = 15000;
  int target_interval = 100;
  double grad_clip = 10.0;
  int critic_hidden = 32;  // critic embeddings and hidden width
  int actor_hidden = 64;
  bool use_gat = true;         // false: uniform mean instead of attention
  double exp_clamp = 20.0;     // cap on exponents before exp()
  double u_floor_frac = 0.05;  // u_hat floor as a fraction of the bucket median
  double beta_icq = 0.1;       // filter temperature of the ICQ-style baseline
  int eval_interval = 500;
  int eval_episodes = 32;
  int final_eval_episodes = 128;

  void validate() const;
};

struct ActorNet {
  Mlp net;  // tau -> action logits

  static ActorNet make(const EnvSpec& spec, int hidden, Rng& rng);
  Vec logits(const Vec& tau) const { return net.forward(tau); }
  Vec log_probs(const Vec& tau) const;
  // Argmax with ties toward the lowest action index.
  int greedy_action(const Vec& tau) const;
  std::vector<ParamView> params(const std::string& prefix);
};

struct CriticNet {
  Mlp f_local;              // (tau ⊕ onehot(a)) -> local embedding
  Matrix w1, gw1;           // observation projection for the attention branch
  Matrix w2, gw2;           // attention scoring vector over [z_i ; z_j]
  Mlp f_agg;                // (e_local ⊕ e_global) -> scalar Q
  bool use_gat = true;
  double leaky_slope = 0.2;

  static CriticNet make(const EnvSpec& spec, int hidden, bool use_gat, Rng& rng);
  // Attention weights of agent `self` over all observations; sums to 1.
  Vec gat_weights(int self, const std::vector<Vec>& all_obs) const;
  // e_global = sum_j w_j * (W1 o_j); uniform w when attention is disabled.
  Vec gat_embedding(int self, const std::vector<Vec>& all_obs) const;
  double q_value(const Vec& tau, int action, int self, const std::vector<Vec>& all_obs) const;
  std::vector<ParamView> params(const std::string& prefix);
};

// One training sample, materialized from an individual trajectory plus the
// joint dataset (observations of all agents for the attention branch).
struct PolicyBatchItem {
  Vec tau;
  int action = 0;
  int agent = 0;  // source agent index (the "self" slot of the attention branch)
  std::vector<Vec> all_obs;
  double r_hat = 0.0;
  double u_eff = 1.0;  // clamped uncertainty
  bool terminal = false;
  Vec next_tau;
  int next_action = 0;
  std::vector<Vec> next_all_obs;
};

// Draws `batch` items for an agent type: trajectory by priority, step uniform.
// Asserts every sampled trajectory carries exactly the requested type.
std::vector<PolicyBatchItem> sample_policy_batch(const Dper& dper, const std::string& type,
                                                 int batch, double u_floor_frac, Rng& rng);

// Uncertainty-weighted TD loss mean_b (eta/u_b) * (r_b + gamma*Q'_b - Q_b)^2,
// with Q' from the target net at the next dataset action (0 at terminal).
// *_value: plain recomputation; *_grad: accumulates gradients, returns loss.
double critic_loss_value(const CriticNet& online, const CriticNet& target, const EnvSpec& spec,
                         const std::vector<PolicyBatchItem>& batch, double gamma, double eta);
double critic_loss_grad(CriticNet& online, const CriticNet& target, const EnvSpec& spec,
                        const std::vector<PolicyBatchItem>& batch, double gamma, double eta);

struct ActorLossInfo {
  double loss = 0.0;
  double mean_filter_weight = 0.0;  // 1 by construction of the normalizer
};

// Filtered behavior-cloning loss mean_b (eta/u_b) * w_b * (-log pi(a_b|tau_b)),
// w_b = exp(clamped Q_b/beta) / batch-mean of the same (Q gradient-stopped).
ActorLossInfo actor_loss_value(const ActorNet& actor, const CriticNet& critic,
                               const EnvSpec& spec, const std::vector<PolicyBatchItem>& batch,
                               double beta, double eta, double exp_clamp);
ActorLossInfo actor_loss_grad(ActorNet& actor, const CriticNet& critic, const EnvSpec& spec,
                              const std::vector<PolicyBatchItem>& batch, double beta, double eta,
                              double exp_clamp);

// Literal expected-filtered-value objective (expectation of filtered Q under
// pi). Retained behind this disabled flag for comparison runs only; training
// always uses the weighted log-likelihood form above.
inline constexpr bool kUseLiteralActorObjective = false;
double actor_loss_literal_value(const ActorNet& actor, const CriticNet& critic,
                                const EnvSpec& spec, const std::vector<PolicyBatchItem>& batch,
                                double beta, double eta, double exp_clamp);

struct MetricsRow {
  int epoch = 0;
  int agent = 0;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double eval_return_mean = 0.0;
  double eval_return_std = 0.0;
};

struct EvalResult {
  double mean = 0.0;
  double stddev = 0.0;
  Vec returns;
};

struct TrainResult {
  std::vector<ActorNet> actors;
  std::vector<CriticNet> critics;  // empty for behavior cloning
  std::vector<MetricsRow> metrics;
  EvalResult final_eval;
};

// Decentralized greedy evaluation: each actor sees exactly its own observation
// and previous action. Returns per-episode undiscounted returns.
EvalResult evaluate(const std::vector<ActorNet>& actors, const EnvSpec& spec, int episodes,
                    std::uint64_t seed);

TrainResult train_sit(const Dper& dper, const PolicyHyper& hyper, std::uint64_t seed);
TrainResult train_bc(const JointDataset& ds, const PolicyHyper& hyper, std::uint64_t seed);
TrainResult train_icq(const JointDataset& ds, const PolicyHyper& hyper, std::uint64_t seed);

// Checkpointing for the per-seed policy artifacts (actors + critics).
void save_policies(const std::string& path, const EnvSpec& spec, const TrainResult& result);
TrainResult load_policies(const std::string& path, const EnvSpec& spec, const PolicyHyper& hyper);

// tau = obs ⊕ onehot(prev_action); prev_action < 0 means "first step".
Vec make_tau(const EnvSpec& spec, const Vec& obs, int prev_action);

}  // namespace sit
