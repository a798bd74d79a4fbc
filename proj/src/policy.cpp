#include "sit/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sit/checkpoint.hpp"
#include "sit/net_tape.hpp"
#include "sit/optim.hpp"

namespace sit {
namespace {

Vec with_action(const Vec& head, int action, int n_actions, const std::string& what) {
  if (action < 0 || action >= n_actions)
    throw std::invalid_argument(what + ": action " + std::to_string(action) + " out of range");
  Vec x = head;
  const Vec a = onehot(action, n_actions);
  x.insert(x.end(), a.begin(), a.end());
  return x;
}

struct CriticNodes {
  MlpNodes f_local, f_agg;
  int w1 = -1, w2 = -1;
};

CriticNodes bind_critic(Tape& tape, CriticNet& c) {
  CriticNodes ids;
  ids.f_local = bind_mlp(tape, c.f_local);
  ids.w1 = bind_matrix(tape, c.w1, c.gw1);
  ids.w2 = bind_matrix(tape, c.w2, c.gw2);
  ids.f_agg = bind_mlp(tape, c.f_agg);
  return ids;
}

int critic_q_node(Tape& tape, const CriticNet& c, const CriticNodes& ids, const EnvSpec& spec,
                  const Vec& tau, int action, int self, const std::vector<Vec>& all_obs) {
  const int e_local = apply_mlp(tape, c.f_local, ids.f_local,
                                tape.leaf(with_action(tau, action, spec.n_actions, "critic")));
  std::vector<int> z;
  z.reserve(all_obs.size());
  for (const Vec& o : all_obs) z.push_back(tape.matvec(ids.w1, tape.leaf(o)));
  int weights;
  if (c.use_gat) {
    std::vector<int> scores;
    scores.reserve(z.size());
    for (size_t j = 0; j < z.size(); ++j) {
      const int pair[] = {z[static_cast<size_t>(self)], z[j]};
      scores.push_back(tape.leaky_relu(tape.matvec(ids.w2, tape.concat(pair)), c.leaky_slope));
    }
    weights = tape.softmax(tape.concat(scores));
  } else {
    weights = tape.leaf(Vec(z.size(), 1.0 / static_cast<double>(z.size())));
  }
  const int e_global = tape.weighted_sum(weights, z);
  const int head[] = {e_local, e_global};
  return apply_mlp(tape, c.f_agg, ids.f_agg, tape.concat(head));
}

// Target value y = r_hat + gamma * Q'(next) with Q' = 0 at terminal steps.
double td_target(const CriticNet& target, const PolicyBatchItem& item, double gamma) {
  if (item.terminal) return item.r_hat;
  return item.r_hat +
         gamma * target.q_value(item.next_tau, item.next_action, item.agent, item.next_all_obs);
}

// Exponential filter weights exp(clamp(Q/beta)) normalized by their batch mean.
Vec filter_weights(const CriticNet& critic, const std::vector<PolicyBatchItem>& batch, double beta,
                   double exp_clamp) {
  Vec e(batch.size());
  for (size_t b = 0; b < batch.size(); ++b) {
    const PolicyBatchItem& it = batch[b];
    const double q = critic.q_value(it.tau, it.action, it.agent, it.all_obs);
    e[b] = std::exp(std::min(q / beta, exp_clamp));
  }
  const double z = mean_of(e);
  for (double& v : e) v /= z;
  return e;
}

}  // namespace

void PolicyHyper::validate() const {
  if (gamma < 0.0 || gamma > 1.0) throw ConfigError("policy: gamma must be in [0, 1]");
  if (beta <= 0.0) throw ConfigError("policy: beta must be positive");
  if (eta <= 0.0) throw ConfigError("policy: eta must be positive");
  if (actor_lr <= 0.0 || critic_lr <= 0.0) throw ConfigError("policy: learning rates must be positive");
  if (batch < 1) throw ConfigError("policy: batch must be >= 1");
  if (epochs < 1) throw ConfigError("policy: epochs must be >= 1");
  if (target_interval < 1) throw ConfigError("policy: target_interval must be >= 1");
  if (grad_clip <= 0.0) throw ConfigError("policy: grad_clip must be positive");
  if (critic_hidden < 1 || actor_hidden < 1) throw ConfigError("policy: hidden dims must be >= 1");
  if (exp_clamp <= 0.0) throw ConfigError("policy: exp_clamp must be positive");
  if (u_floor_frac < 0.0) throw ConfigError("policy: u_floor_frac must be >= 0");
  if (beta_icq <= 0.0) throw ConfigError("policy: beta_icq must be positive");
  if (eval_interval < 1 || eval_episodes < 1 || final_eval_episodes < 1)
    throw ConfigError("policy: evaluation settings must be >= 1");
}

Vec make_tau(const EnvSpec& spec, const Vec& obs, int prev_action) {
  if (static_cast<int>(obs.size()) != spec.obs_dim)
    throw std::invalid_argument("make_tau: observation size " + std::to_string(obs.size()) +
                                ", expected " + std::to_string(spec.obs_dim));
  Vec tau = obs;
  if (prev_action < 0) {
    tau.insert(tau.end(), static_cast<size_t>(spec.n_actions), 0.0);
  } else {
    const Vec a = onehot(prev_action, spec.n_actions);
    tau.insert(tau.end(), a.begin(), a.end());
  }
  return tau;
}

ActorNet ActorNet::make(const EnvSpec& spec, int hidden, Rng& rng) {
  ActorNet a;
  const int dims[] = {spec.obs_dim + spec.n_actions, hidden, spec.n_actions};
  a.net = Mlp::make(dims, rng);
  return a;
}

Vec ActorNet::log_probs(const Vec& tau) const {
  const Vec l = logits(tau);
  const double m = *std::max_element(l.begin(), l.end());
  double z = 0.0;
  for (double v : l) z += std::exp(v - m);
  const double logz = m + std::log(z);
  Vec out(l.size());
  for (size_t i = 0; i < l.size(); ++i) out[i] = l[i] - logz;
  return out;
}

int ActorNet::greedy_action(const Vec& tau) const {
  const Vec l = logits(tau);
  int best = 0;
  for (size_t a = 1; a < l.size(); ++a)
    if (l[a] > l[static_cast<size_t>(best)]) best = static_cast<int>(a);
  return best;
}

std::vector<ParamView> ActorNet::params(const std::string& prefix) {
  std::vector<ParamView> out;
  net.append_params(prefix + "net", out);
  return out;
}

CriticNet CriticNet::make(const EnvSpec& spec, int hidden, bool use_gat, Rng& rng) {
  CriticNet c;
  const int tau_dim = spec.obs_dim + spec.n_actions;
  const int local_dims[] = {tau_dim + spec.n_actions, hidden, hidden};
  const int agg_dims[] = {2 * hidden, hidden, 1};
  c.f_local = Mlp::make(local_dims, rng);
  c.w1 = Matrix(hidden, spec.obs_dim);
  c.w2 = Matrix(1, 2 * hidden);
  init_uniform_fanin(c.w1, rng);
  init_uniform_fanin(c.w2, rng);
  c.gw1 = Matrix(hidden, spec.obs_dim);
  c.gw2 = Matrix(1, 2 * hidden);
  c.f_agg = Mlp::make(agg_dims, rng);
  c.use_gat = use_gat;
  return c;
}

Vec CriticNet::gat_weights(int self, const std::vector<Vec>& all_obs) const {
  if (self < 0 || self >= static_cast<int>(all_obs.size()))
    throw std::invalid_argument("gat_weights: self index out of range");
  const size_t n = all_obs.size();
  if (!use_gat) return Vec(n, 1.0 / static_cast<double>(n));
  const Vec z_self = matvec(w1, all_obs[static_cast<size_t>(self)], "gat projection");
  Vec scores(n);
  for (size_t j = 0; j < n; ++j) {
    Vec cat = z_self;
    const Vec z_j = matvec(w1, all_obs[j], "gat projection");
    cat.insert(cat.end(), z_j.begin(), z_j.end());
    const double s = matvec(w2, cat, "gat score")[0];
    scores[j] = s > 0.0 ? s : leaky_slope * s;
  }
  return stable_softmax(scores);
}

Vec CriticNet::gat_embedding(int self, const std::vector<Vec>& all_obs) const {
  const Vec w = gat_weights(self, all_obs);
  Vec e(static_cast<size_t>(w1.rows), 0.0);
  for (size_t j = 0; j < all_obs.size(); ++j) {
    const Vec z = matvec(w1, all_obs[j], "gat projection");
    for (size_t d = 0; d < e.size(); ++d) e[d] += w[j] * z[d];
  }
  return e;
}

double CriticNet::q_value(const Vec& tau, int action, int self,
                          const std::vector<Vec>& all_obs) const {
  const int n_actions = f_local.in_dim() - static_cast<int>(tau.size());
  Vec local_in = with_action(tau, action, n_actions, "critic q_value");
  const Vec e_local = f_local.forward(local_in);
  const Vec e_global = gat_embedding(self, all_obs);
  Vec head = e_local;
  head.insert(head.end(), e_global.begin(), e_global.end());
  return f_agg.forward(head)[0];
}

std::vector<ParamView> CriticNet::params(const std::string& prefix) {
  std::vector<ParamView> out;
  f_local.append_params(prefix + "f_local", out);
  out.push_back({prefix + "w1", &w1.data, &gw1.data, w1.rows, w1.cols});
  out.push_back({prefix + "w2", &w2.data, &gw2.data, w2.rows, w2.cols});
  f_agg.append_params(prefix + "f_agg", out);
  return out;
}

std::vector<PolicyBatchItem> sample_policy_batch(const Dper& dper, const std::string& type,
                                                 int batch, double u_floor_frac, Rng& rng) {
  if (batch < 1) throw std::invalid_argument("sample_policy_batch: batch must be >= 1");
  const TypeBucket& bucket = dper.bucket(type);
  const JointDataset& ds = dper.dataset();
  const EnvSpec& spec = ds.spec;
  const double floor = std::max(u_floor_frac * bucket.median_u, 1e-8);
  std::vector<PolicyBatchItem> out;
  out.reserve(static_cast<size_t>(batch));
  for (int b = 0; b < batch; ++b) {
    const Dper::SampleRef ref = dper.sample(type, rng);
    const IndividualTrajectory& traj = bucket.trajectories[static_cast<size_t>(ref.trajectory)];
    if (traj.type != type)
      throw std::logic_error("sample_policy_batch: trajectory type '" + traj.type +
                             "' in bucket '" + type + "'");
    const IndividualStep& s = traj.steps[static_cast<size_t>(ref.step)];
    const JointStep& js = ds.at(s.episode, s.t);
    PolicyBatchItem item;
    item.agent = traj.agent;
    const int prev = ref.step > 0 ? traj.steps[static_cast<size_t>(ref.step) - 1].action : -1;
    item.tau = make_tau(spec, js.obs[static_cast<size_t>(traj.agent)], prev);
    item.action = s.action;
    item.all_obs = js.obs;
    item.r_hat = s.r_hat;
    item.u_eff = std::max(s.u_hat, floor);
    item.terminal = s.terminal;
    if (!item.terminal) {
      const JointStep& jn = ds.at(s.episode, s.t + 1);
      item.next_tau = make_tau(spec, jn.obs[static_cast<size_t>(traj.agent)], s.action);
      item.next_action = traj.steps[static_cast<size_t>(ref.step) + 1].action;
      item.next_all_obs = jn.obs;
    }
    out.push_back(std::move(item));
  }
  return out;
}

double critic_loss_value(const CriticNet& online, const CriticNet& target, const EnvSpec&,
                         const std::vector<PolicyBatchItem>& batch, double gamma, double eta) {
  if (batch.empty()) throw std::invalid_argument("critic_loss: empty batch");
  double loss = 0.0;
  for (const PolicyBatchItem& it : batch) {
    const double y = td_target(target, it, gamma);
    const double q = online.q_value(it.tau, it.action, it.agent, it.all_obs);
    loss += (eta / it.u_eff) * (q - y) * (q - y);
  }
  return loss / static_cast<double>(batch.size());
}

double critic_loss_grad(CriticNet& online, const CriticNet& target, const EnvSpec& spec,
                        const std::vector<PolicyBatchItem>& batch, double gamma, double eta) {
  if (batch.empty()) throw std::invalid_argument("critic_loss: empty batch");
  Tape tape;
  const CriticNodes ids = bind_critic(tape, online);
  std::vector<int> terms;
  terms.reserve(batch.size());
  for (const PolicyBatchItem& it : batch) {
    const double y = td_target(target, it, gamma);
    const int q = critic_q_node(tape, online, ids, spec, it.tau, it.action, it.agent, it.all_obs);
    terms.push_back(tape.scale(tape.square(tape.add_const(q, -y)), eta / it.u_eff));
  }
  const int loss = tape.mean_all(tape.concat(terms));
  tape.backward(loss);
  return tape.scalar(loss);
}

ActorLossInfo actor_loss_value(const ActorNet& actor, const CriticNet& critic, const EnvSpec&,
                               const std::vector<PolicyBatchItem>& batch, double beta, double eta,
                               double exp_clamp) {
  if (batch.empty()) throw std::invalid_argument("actor_loss: empty batch");
  const Vec w = filter_weights(critic, batch, beta, exp_clamp);
  ActorLossInfo info;
  for (size_t b = 0; b < batch.size(); ++b) {
    const PolicyBatchItem& it = batch[b];
    const double logp = actor.log_probs(it.tau)[static_cast<size_t>(it.action)];
    info.loss += -(eta / it.u_eff) * w[b] * logp;
    info.mean_filter_weight += w[b];
  }
  info.loss /= static_cast<double>(batch.size());
  info.mean_filter_weight /= static_cast<double>(batch.size());
  return info;
}

ActorLossInfo actor_loss_grad(ActorNet& actor, const CriticNet& critic, const EnvSpec&,
                              const std::vector<PolicyBatchItem>& batch, double beta, double eta,
                              double exp_clamp) {
  if (batch.empty()) throw std::invalid_argument("actor_loss: empty batch");
  const Vec w = filter_weights(critic, batch, beta, exp_clamp);
  Tape tape;
  MlpNodes ids = bind_mlp(tape, actor.net);
  std::vector<int> terms;
  terms.reserve(batch.size());
  ActorLossInfo info;
  for (size_t b = 0; b < batch.size(); ++b) {
    const PolicyBatchItem& it = batch[b];
    const int lp = tape.log_softmax(apply_mlp(tape, actor.net, ids, tape.leaf(it.tau)));
    terms.push_back(tape.scale(tape.pick(lp, it.action), -(eta / it.u_eff) * w[b]));
    info.mean_filter_weight += w[b];
  }
  const int loss = tape.mean_all(tape.concat(terms));
  tape.backward(loss);
  info.loss = tape.scalar(loss);
  info.mean_filter_weight /= static_cast<double>(batch.size());
  return info;
}

double actor_loss_literal_value(const ActorNet& actor, const CriticNet& critic,
                                const EnvSpec& spec, const std::vector<PolicyBatchItem>& batch,
                                double beta, double eta, double exp_clamp) {
  // Expected filtered value under the current policy. Comparison-only path;
  // kept alongside the trained weighted log-likelihood objective.
  if (batch.empty()) throw std::invalid_argument("actor_loss_literal: empty batch");
  Vec e(batch.size());
  for (size_t b = 0; b < batch.size(); ++b) {
    const PolicyBatchItem& it = batch[b];
    const double q = critic.q_value(it.tau, it.action, it.agent, it.all_obs);
    e[b] = std::exp(std::min(q / beta, exp_clamp));
  }
  const double z = mean_of(e);
  double loss = 0.0;
  for (size_t b = 0; b < batch.size(); ++b) {
    const PolicyBatchItem& it = batch[b];
    const Vec lp = actor.log_probs(it.tau);
    double expectation = 0.0;
    for (int a = 0; a < spec.n_actions; ++a) {
      const double q = critic.q_value(it.tau, a, it.agent, it.all_obs);
      const double filt = std::exp(std::min(q / beta, exp_clamp)) / z;
      expectation += std::exp(lp[static_cast<size_t>(a)]) * filt * q;
    }
    loss += -(eta / it.u_eff) * expectation;
  }
  return loss / static_cast<double>(batch.size());
}

EvalResult evaluate(const std::vector<ActorNet>& actors, const EnvSpec& spec, int episodes,
                    std::uint64_t seed) {
  if (static_cast<int>(actors.size()) != spec.n_agents)
    throw std::invalid_argument("evaluate: need one actor per agent");
  if (episodes < 1) throw std::invalid_argument("evaluate: episodes must be >= 1");
  const int tau_dim = spec.obs_dim + spec.n_actions;
  for (const ActorNet& a : actors)
    if (a.net.in_dim() != tau_dim)
      throw std::logic_error("evaluate: actor input must be exactly obs ⊕ previous action");
  EvalResult ev;
  ev.returns.reserve(static_cast<size_t>(episodes));
  for (int e = 0; e < episodes; ++e) {
    ResetResult rr = env_reset(spec, stream_seed(seed, "eval_reset/" + std::to_string(e)));
    EnvState state = rr.state;
    std::vector<Vec> obs = rr.obs;
    std::vector<int> prev(static_cast<size_t>(spec.n_agents), -1);
    double ep_return = 0.0;
    while (!state.done) {
      std::vector<int> actions(static_cast<size_t>(spec.n_agents), 0);
      for (int i = 0; i < spec.n_agents; ++i)
        actions[static_cast<size_t>(i)] = actors[static_cast<size_t>(i)].greedy_action(
            make_tau(spec, obs[static_cast<size_t>(i)], prev[static_cast<size_t>(i)]));
      StepResult sr = env_step(spec, state, actions);
      ep_return += sr.r_tot;
      state = sr.state;
      obs = sr.obs;
      prev = actions;
    }
    ev.returns.push_back(ep_return);
  }
  ev.mean = mean_of(ev.returns);
  ev.stddev = stddev_of(ev.returns);
  return ev;
}

TrainResult train_sit(const Dper& dper, const PolicyHyper& hyper, std::uint64_t seed) {
  hyper.validate();
  const EnvSpec& spec = dper.dataset().spec;
  const int n = spec.n_agents;

  TrainResult result;
  result.actors.reserve(static_cast<size_t>(n));
  result.critics.reserve(static_cast<size_t>(n));
  std::vector<CriticNet> targets;
  targets.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng init(stream_seed(seed, "policy/agent" + std::to_string(i) + "/init"));
    result.actors.push_back(ActorNet::make(spec, hyper.actor_hidden, init));
    result.critics.push_back(CriticNet::make(spec, hyper.critic_hidden, hyper.use_gat, init));
    targets.push_back(result.critics.back());
  }

  std::vector<std::vector<ParamView>> actor_params, critic_params;
  std::vector<RmsProp> actor_opt, critic_opt;
  std::vector<Rng> sample_rng;
  for (int i = 0; i < n; ++i) {
    actor_params.push_back(result.actors[static_cast<size_t>(i)].params("actor"));
    critic_params.push_back(result.critics[static_cast<size_t>(i)].params("critic"));
    actor_opt.emplace_back(hyper.actor_lr);
    critic_opt.emplace_back(hyper.critic_lr);
    sample_rng.emplace_back(stream_seed(seed, "policy/agent" + std::to_string(i) + "/sample"));
  }

  Vec critic_acc(static_cast<size_t>(n), 0.0), actor_acc(static_cast<size_t>(n), 0.0);
  int acc_count = 0;

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    for (int i = 0; i < n; ++i) {
      const std::string& type = spec.agent_types[static_cast<size_t>(i)];
      const std::vector<PolicyBatchItem> batch = sample_policy_batch(
          dper, type, hyper.batch, hyper.u_floor_frac, sample_rng[static_cast<size_t>(i)]);

      zero_grads(critic_params[static_cast<size_t>(i)]);
      const double closs =
          critic_loss_grad(result.critics[static_cast<size_t>(i)], targets[static_cast<size_t>(i)],
                           spec, batch, hyper.gamma, hyper.eta);
      if (!std::isfinite(closs))
        throw DivergenceError("train_sit: non-finite critic loss at agent " + std::to_string(i) +
                              ", epoch " + std::to_string(epoch));
      clip_grad_norm(critic_params[static_cast<size_t>(i)], hyper.grad_clip);
      critic_opt[static_cast<size_t>(i)].step(critic_params[static_cast<size_t>(i)]);

      zero_grads(actor_params[static_cast<size_t>(i)]);
      const ActorLossInfo ainfo =
          actor_loss_grad(result.actors[static_cast<size_t>(i)], result.critics[static_cast<size_t>(i)],
                          spec, batch, hyper.beta, hyper.eta, hyper.exp_clamp);
      if (!std::isfinite(ainfo.loss))
        throw DivergenceError("train_sit: non-finite actor loss at agent " + std::to_string(i) +
                              ", epoch " + std::to_string(epoch));
      clip_grad_norm(actor_params[static_cast<size_t>(i)], hyper.grad_clip);
      actor_opt[static_cast<size_t>(i)].step(actor_params[static_cast<size_t>(i)]);

      critic_acc[static_cast<size_t>(i)] += closs;
      actor_acc[static_cast<size_t>(i)] += ainfo.loss;
    }
    ++acc_count;

    if ((epoch + 1) % hyper.target_interval == 0)
      for (int i = 0; i < n; ++i) targets[static_cast<size_t>(i)] = result.critics[static_cast<size_t>(i)];

    if ((epoch + 1) % hyper.eval_interval == 0 || epoch + 1 == hyper.epochs) {
      const EvalResult ev = evaluate(result.actors, spec, hyper.eval_episodes,
                                     stream_seed(seed, "eval/epoch" + std::to_string(epoch + 1)));
      for (int i = 0; i < n; ++i) {
        MetricsRow row;
        row.epoch = epoch + 1;
        row.agent = i;
        row.critic_loss = critic_acc[static_cast<size_t>(i)] / acc_count;
        row.actor_loss = actor_acc[static_cast<size_t>(i)] / acc_count;
        row.eval_return_mean = ev.mean;
        row.eval_return_std = ev.stddev;
        result.metrics.push_back(row);
      }
      std::fill(critic_acc.begin(), critic_acc.end(), 0.0);
      std::fill(actor_acc.begin(), actor_acc.end(), 0.0);
      acc_count = 0;
    }
  }

  result.final_eval =
      evaluate(result.actors, spec, hyper.final_eval_episodes, stream_seed(seed, "eval/final"));
  return result;
}

void save_policies(const std::string& path, const EnvSpec& spec, const TrainResult& result) {
  nlohmann::json meta;
  meta["env_id"] = env_id_name(spec.env_id);
  meta["n_agents"] = spec.n_agents;
  meta["has_critics"] = !result.critics.empty();
  std::vector<ParamView> all;
  for (size_t i = 0; i < result.actors.size(); ++i) {
    auto ap = const_cast<ActorNet&>(result.actors[i]).params("agent" + std::to_string(i) + ".actor.");
    all.insert(all.end(), ap.begin(), ap.end());
  }
  for (size_t i = 0; i < result.critics.size(); ++i) {
    auto cp = const_cast<CriticNet&>(result.critics[i]).params("agent" + std::to_string(i) + ".critic.");
    all.insert(all.end(), cp.begin(), cp.end());
  }
  save_checkpoint(path, "policy", meta, all);
}

TrainResult load_policies(const std::string& path, const EnvSpec& spec, const PolicyHyper& hyper) {
  const CheckpointData ckpt = load_checkpoint(path);
  if (ckpt.kind != "policy")
    throw ConfigError("load_policies: checkpoint kind '" + ckpt.kind + "', expected 'policy'");
  if (ckpt.meta.at("env_id").get<std::string>() != env_id_name(spec.env_id) ||
      ckpt.meta.at("n_agents").get<int>() != spec.n_agents)
    throw ConfigError("load_policies: checkpoint env does not match the given spec");
  const bool has_critics = ckpt.meta.at("has_critics").get<bool>();
  TrainResult result;
  Rng dummy(0);
  std::vector<ParamView> all;
  for (int i = 0; i < spec.n_agents; ++i)
    result.actors.push_back(ActorNet::make(spec, hyper.actor_hidden, dummy));
  if (has_critics)
    for (int i = 0; i < spec.n_agents; ++i)
      result.critics.push_back(CriticNet::make(spec, hyper.critic_hidden, hyper.use_gat, dummy));
  for (int i = 0; i < spec.n_agents; ++i) {
    auto ap = result.actors[static_cast<size_t>(i)].params("agent" + std::to_string(i) + ".actor.");
    all.insert(all.end(), ap.begin(), ap.end());
  }
  for (size_t i = 0; i < result.critics.size(); ++i) {
    auto cp = result.critics[i].params("agent" + std::to_string(i) + ".critic.");
    all.insert(all.end(), cp.begin(), cp.end());
  }
  assign_params(ckpt, all);
  return result;
}

}  // namespace sit
