#include "sit/ardnem.hpp"

#include <cmath>
#include <stdexcept>

#include "sit/checkpoint.hpp"
#include "sit/net_tape.hpp"
#include "sit/optim.hpp"

namespace sit {
namespace {

Vec obsact_input(const EnvSpec& spec, const Vec& obs_i, int action) {
  if (static_cast<int>(obs_i.size()) != spec.obs_dim)
    throw std::invalid_argument("ardnem: observation size " + std::to_string(obs_i.size()) +
                                ", expected " + std::to_string(spec.obs_dim));
  Vec x = obs_i;
  const Vec a = onehot(action, spec.n_actions);
  x.insert(x.end(), a.begin(), a.end());
  return x;
}

// Per-tape parameter bindings of one member.
struct MemberNodes {
  MlpNodes reward, state_enc, obsact_enc;
  int wq = -1, wk = -1;
};

MemberNodes bind_member(Tape& tape, DecompositionMember& m) {
  MemberNodes ids;
  ids.reward = bind_mlp(tape, m.reward_net);
  ids.state_enc = bind_mlp(tape, m.state_encoder);
  ids.obsact_enc = bind_mlp(tape, m.obsact_encoder);
  ids.wq = bind_matrix(tape, m.w_query, m.gw_query);
  ids.wk = bind_matrix(tape, m.w_key, m.gw_key);
  return ids;
}

// Builds the predicted-total node for one step.
int predict_total_node(Tape& tape, DecompositionMember& m, const MemberNodes& ids,
                       const EnvSpec& spec, const JointStep& st) {
  std::vector<int> f_nodes;
  f_nodes.reserve(static_cast<size_t>(spec.n_agents));
  std::vector<int> score_nodes;
  int q_node = -1;
  if (m.use_attention) {
    const int es = apply_mlp(tape, m.state_encoder, ids.state_enc, tape.leaf(st.state));
    q_node = tape.matvec(ids.wq, es);
  }
  for (int i = 0; i < spec.n_agents; ++i) {
    const int x = tape.leaf(obsact_input(spec, st.obs[static_cast<size_t>(i)], st.actions[static_cast<size_t>(i)]));
    f_nodes.push_back(apply_mlp(tape, m.reward_net, ids.reward, x));
    if (m.use_attention) {
      const int ei = apply_mlp(tape, m.obsact_encoder, ids.obsact_enc, x);
      score_nodes.push_back(tape.dot(q_node, tape.matvec(ids.wk, ei)));
    }
  }
  const int f_stack = tape.concat(f_nodes);
  const int lambda = m.use_attention
                         ? tape.softmax(tape.concat(score_nodes))
                         : tape.leaf(Vec(static_cast<size_t>(spec.n_agents), 1.0));
  return tape.dot(lambda, f_stack);
}

}  // namespace

void ArdnemHyper::validate() const {
  if (lr <= 0.0) throw ConfigError("ardnem: lr must be positive");
  if (batch < 1) throw ConfigError("ardnem: batch must be >= 1");
  if (epochs < 1) throw ConfigError("ardnem: epochs must be >= 1");
  if (grad_clip <= 0.0) throw ConfigError("ardnem: grad_clip must be positive");
  if (hidden < 1 || embed < 1) throw ConfigError("ardnem: hidden/embed must be >= 1");
  if (members < 1) throw ConfigError("ardnem: members must be >= 1");
  if (holdout_fraction < 0.0 || holdout_fraction > 0.5)
    throw ConfigError("ardnem: holdout_fraction must be in [0, 0.5]");
  if (log_interval < 1) throw ConfigError("ardnem: log_interval must be >= 1");
}

DecompositionMember DecompositionMember::make(const EnvSpec& spec, const ArdnemHyper& hyper,
                                              Rng& rng) {
  DecompositionMember m;
  const int oa = spec.obs_dim + spec.n_actions;
  const int reward_dims[] = {oa, hyper.hidden, 1};
  const int state_dims[] = {spec.state_dim, hyper.hidden, hyper.embed};
  const int obsact_dims[] = {oa, hyper.hidden, hyper.embed};
  m.reward_net = Mlp::make(reward_dims, rng);
  m.state_encoder = Mlp::make(state_dims, rng);
  m.obsact_encoder = Mlp::make(obsact_dims, rng);
  m.w_query = Matrix(hyper.embed, hyper.embed);
  m.w_key = Matrix(hyper.embed, hyper.embed);
  init_uniform_fanin(m.w_query, rng);
  init_uniform_fanin(m.w_key, rng);
  m.gw_query = Matrix(hyper.embed, hyper.embed);
  m.gw_key = Matrix(hyper.embed, hyper.embed);
  m.use_attention = hyper.use_attention;
  return m;
}

std::vector<ParamView> DecompositionMember::params(const std::string& prefix) {
  std::vector<ParamView> out;
  reward_net.append_params(prefix + "reward_net", out);
  state_encoder.append_params(prefix + "state_encoder", out);
  obsact_encoder.append_params(prefix + "obsact_encoder", out);
  out.push_back({prefix + "w_query", &w_query.data, &gw_query.data, w_query.rows, w_query.cols});
  out.push_back({prefix + "w_key", &w_key.data, &gw_key.data, w_key.rows, w_key.cols});
  return out;
}

Vec DecompositionMember::attention_weights(const EnvSpec& spec, const Vec& state,
                                           const std::vector<Vec>& obs,
                                           const std::vector<int>& actions) const {
  if (static_cast<int>(obs.size()) != spec.n_agents ||
      static_cast<int>(actions.size()) != spec.n_agents)
    throw std::invalid_argument("attention_weights: need one obs/action per agent");
  const Vec q = matvec(w_query, state_encoder.forward(state), "attention query");
  Vec scores(static_cast<size_t>(spec.n_agents), 0.0);
  for (int i = 0; i < spec.n_agents; ++i) {
    const Vec k = matvec(w_key, obsact_encoder.forward(obsact_input(spec, obs[static_cast<size_t>(i)], actions[static_cast<size_t>(i)])),
                         "attention key");
    double s = 0.0;
    for (size_t d = 0; d < q.size(); ++d) s += q[d] * k[d];
    scores[static_cast<size_t>(i)] = s;
  }
  return stable_softmax(scores);
}

double DecompositionMember::agent_reward(const EnvSpec& spec, const Vec& obs_i, int action) const {
  return reward_net.forward(obsact_input(spec, obs_i, action))[0];
}

double DecompositionMember::predict_total(const EnvSpec& spec, const Vec& state,
                                          const std::vector<Vec>& obs,
                                          const std::vector<int>& actions) const {
  const Vec lambda = use_attention ? attention_weights(spec, state, obs, actions)
                                   : Vec(static_cast<size_t>(spec.n_agents), 1.0);
  double total = 0.0;
  for (int i = 0; i < spec.n_agents; ++i)
    total += lambda[static_cast<size_t>(i)] *
             agent_reward(spec, obs[static_cast<size_t>(i)], actions[static_cast<size_t>(i)]);
  return total;
}

void EnsembleRewardModel::decompose_step(const Vec& state, const std::vector<Vec>& obs,
                                         const std::vector<int>& actions, Vec* r_hat,
                                         Vec* u_hat) const {
  if (members.empty()) throw std::logic_error("decompose_step: no ensemble members");
  const int n = spec.n_agents;
  const int m_count = static_cast<int>(members.size());
  std::vector<Vec> weighted(static_cast<size_t>(m_count));
  for (int m = 0; m < m_count; ++m) {
    const DecompositionMember& mem = members[static_cast<size_t>(m)];
    const Vec lambda = mem.use_attention ? mem.attention_weights(spec, state, obs, actions)
                                         : Vec(static_cast<size_t>(n), 1.0);
    Vec w(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i)
      w[static_cast<size_t>(i)] = lambda[static_cast<size_t>(i)] *
                                  mem.agent_reward(spec, obs[static_cast<size_t>(i)], actions[static_cast<size_t>(i)]);
    weighted[static_cast<size_t>(m)] = std::move(w);
  }
  r_hat->assign(static_cast<size_t>(n), 0.0);
  u_hat->assign(static_cast<size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    double mean = 0.0;
    for (int m = 0; m < m_count; ++m) mean += weighted[static_cast<size_t>(m)][static_cast<size_t>(i)];
    mean /= m_count;
    double var = 0.0;
    for (int m = 0; m < m_count; ++m) {
      const double d = weighted[static_cast<size_t>(m)][static_cast<size_t>(i)] - mean;
      var += d * d;
    }
    (*r_hat)[static_cast<size_t>(i)] = mean;
    (*u_hat)[static_cast<size_t>(i)] = std::sqrt(var / m_count);
  }
}

double EnsembleRewardModel::predict_total_mean(const Vec& state, const std::vector<Vec>& obs,
                                               const std::vector<int>& actions) const {
  double s = 0.0;
  for (const DecompositionMember& m : members) s += m.predict_total(spec, state, obs, actions);
  return s / static_cast<double>(members.size());
}

double member_mse(const DecompositionMember& member, const JointDataset& ds,
                  const std::vector<StepRef>& refs) {
  if (refs.empty()) throw std::invalid_argument("member_mse: no steps");
  double se = 0.0;
  for (const StepRef& r : refs) {
    const JointStep& st = ds.at(r.episode, r.t);
    const double d = member.predict_total(ds.spec, st.state, st.obs, st.actions) - st.r_tot;
    se += d * d;
  }
  return se / static_cast<double>(refs.size());
}

double member_mse_grad(DecompositionMember& member, const JointDataset& ds,
                       const std::vector<StepRef>& refs) {
  if (refs.empty()) throw std::invalid_argument("member_mse_grad: no steps");
  Tape tape;
  const MemberNodes ids = bind_member(tape, member);
  std::vector<int> sq_nodes;
  sq_nodes.reserve(refs.size());
  for (const StepRef& r : refs) {
    const JointStep& st = ds.at(r.episode, r.t);
    const int pred = predict_total_node(tape, member, ids, ds.spec, st);
    sq_nodes.push_back(tape.square(tape.add_const(pred, -st.r_tot)));
  }
  const int loss = tape.mean_all(tape.concat(sq_nodes));
  tape.backward(loss);
  return tape.scalar(loss);
}

std::vector<StepRef> training_refs(const JointDataset& ds, double holdout_fraction) {
  const int k_hold = static_cast<int>(std::floor(ds.n_episodes() * holdout_fraction));
  const int k_train = ds.n_episodes() - k_hold;
  if (k_train < 1) throw ConfigError("training_refs: holdout leaves no training episodes");
  std::vector<StepRef> out;
  for (int k = 0; k < k_train; ++k)
    for (int t = 0; t < static_cast<int>(ds.episodes[static_cast<size_t>(k)].size()); ++t)
      out.push_back({k, t});
  return out;
}

std::vector<StepRef> holdout_refs(const JointDataset& ds, double holdout_fraction) {
  const int k_hold = static_cast<int>(std::floor(ds.n_episodes() * holdout_fraction));
  std::vector<StepRef> out;
  for (int k = ds.n_episodes() - k_hold; k < ds.n_episodes(); ++k)
    for (int t = 0; t < static_cast<int>(ds.episodes[static_cast<size_t>(k)].size()); ++t)
      out.push_back({k, t});
  return out;
}

EnsembleRewardModel train_ardnem(const JointDataset& ds, const ArdnemHyper& hyper,
                                 std::uint64_t seed) {
  hyper.validate();
  ds.validate();
  EnsembleRewardModel model;
  model.spec = ds.spec;
  model.hyper = hyper;
  model.logs.resize(static_cast<size_t>(hyper.members));

  const std::vector<StepRef> train = training_refs(ds, hyper.holdout_fraction);
  // Fixed probe slice for decomposition-curve logging.
  const std::vector<StepRef> probe(train.begin(),
                                   train.begin() + std::min<size_t>(train.size(), 256));

  for (int m = 0; m < hyper.members; ++m) {
    Rng init_rng(stream_seed(seed, "ardnem/member" + std::to_string(m) + "/init"));
    model.members.push_back(DecompositionMember::make(ds.spec, hyper, init_rng));
  }

  // Members share no parameters, so they are trained independently.
  for (int m = 0; m < hyper.members; ++m) {
    DecompositionMember& member = model.members[static_cast<size_t>(m)];
    std::vector<ParamView> params = member.params();
    Rng batch_rng(stream_seed(seed, "ardnem/member" + std::to_string(m) + "/batch"));
    RmsProp opt(hyper.lr);
    Tape tape;

    auto log_point = [&](int epoch, double loss) {
      ArdnemLogPoint pt;
      pt.epoch = epoch;
      pt.batch_loss = loss;
      pt.probe_mean_weighted.assign(static_cast<size_t>(ds.spec.n_agents), 0.0);
      for (const StepRef& r : probe) {
        const JointStep& st = ds.at(r.episode, r.t);
        const Vec lambda = member.use_attention
                               ? member.attention_weights(ds.spec, st.state, st.obs, st.actions)
                               : Vec(static_cast<size_t>(ds.spec.n_agents), 1.0);
        for (int i = 0; i < ds.spec.n_agents; ++i)
          pt.probe_mean_weighted[static_cast<size_t>(i)] +=
              lambda[static_cast<size_t>(i)] *
              member.agent_reward(ds.spec, st.obs[static_cast<size_t>(i)], st.actions[static_cast<size_t>(i)]);
      }
      for (double& v : pt.probe_mean_weighted) v /= static_cast<double>(probe.size());
      model.logs[static_cast<size_t>(m)].push_back(std::move(pt));
    };

    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
      tape.reset();
      const MemberNodes ids = bind_member(tape, member);
      std::vector<int> sq_nodes;
      sq_nodes.reserve(static_cast<size_t>(hyper.batch));
      for (int b = 0; b < hyper.batch; ++b) {
        const StepRef ref = train[static_cast<size_t>(batch_rng.uniform_int(static_cast<int>(train.size())))];
        const JointStep& st = ds.at(ref.episode, ref.t);
        const int pred = predict_total_node(tape, member, ids, ds.spec, st);
        sq_nodes.push_back(tape.square(tape.add_const(pred, -st.r_tot)));
      }
      const int loss = tape.mean_all(tape.concat(sq_nodes));
      const double loss_value = tape.scalar(loss);
      if (!std::isfinite(loss_value))
        throw DivergenceError("train_ardnem: non-finite loss at member " + std::to_string(m) +
                              ", epoch " + std::to_string(epoch));
      if (epoch % hyper.log_interval == 0) log_point(epoch, loss_value);
      zero_grads(params);
      tape.backward(loss);
      clip_grad_norm(params, hyper.grad_clip);
      opt.step(params);
    }
    // Closing log point with a fresh post-training batch loss estimate.
    log_point(hyper.epochs, member_mse(member, ds, train));
  }
  return model;
}

void EnsembleRewardModel::save(const std::string& path) const {
  nlohmann::json meta;
  meta["env_id"] = env_id_name(spec.env_id);
  meta["n_agents"] = spec.n_agents;
  meta["obs_dim"] = spec.obs_dim;
  meta["state_dim"] = spec.state_dim;
  meta["n_actions"] = spec.n_actions;
  meta["members"] = static_cast<int>(members.size());
  meta["hidden"] = hyper.hidden;
  meta["embed"] = hyper.embed;
  meta["use_attention"] = hyper.use_attention;
  std::vector<ParamView> all;
  for (size_t m = 0; m < members.size(); ++m) {
    auto mp = const_cast<DecompositionMember&>(members[m]).params("m" + std::to_string(m) + ".");
    all.insert(all.end(), mp.begin(), mp.end());
  }
  save_checkpoint(path, "ardnem", meta, all);
}

EnsembleRewardModel EnsembleRewardModel::load(const std::string& path, const EnvSpec& spec) {
  const CheckpointData ckpt = load_checkpoint(path);
  if (ckpt.kind != "ardnem")
    throw ConfigError("load ardnem: checkpoint kind '" + ckpt.kind + "', expected 'ardnem'");
  EnsembleRewardModel model;
  model.spec = spec;
  model.hyper.members = ckpt.meta.at("members").get<int>();
  model.hyper.hidden = ckpt.meta.at("hidden").get<int>();
  model.hyper.embed = ckpt.meta.at("embed").get<int>();
  model.hyper.use_attention = ckpt.meta.at("use_attention").get<bool>();
  if (ckpt.meta.at("env_id").get<std::string>() != env_id_name(spec.env_id) ||
      ckpt.meta.at("n_agents").get<int>() != spec.n_agents ||
      ckpt.meta.at("obs_dim").get<int>() != spec.obs_dim ||
      ckpt.meta.at("state_dim").get<int>() != spec.state_dim ||
      ckpt.meta.at("n_actions").get<int>() != spec.n_actions)
    throw ConfigError("load ardnem: checkpoint env does not match the given spec");
  Rng dummy(0);
  for (int m = 0; m < model.hyper.members; ++m)
    model.members.push_back(DecompositionMember::make(spec, model.hyper, dummy));
  // Parameter views are collected only once the vector is fully grown, so
  // reallocation cannot invalidate them.
  std::vector<ParamView> all;
  for (int m = 0; m < model.hyper.members; ++m) {
    auto mp = model.members[static_cast<size_t>(m)].params("m" + std::to_string(m) + ".");
    all.insert(all.end(), mp.begin(), mp.end());
  }
  assign_params(ckpt, all);
  model.logs.resize(model.members.size());
  return model;
}

}  // namespace sit
