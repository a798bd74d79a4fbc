#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sit/net_tape.hpp"
#include "sit/optim.hpp"
#include "sit/policy.hpp"

namespace sit {
namespace {

// Joint transition materialized for the baseline trainers: per-agent action
// histories plus the global state, with SARSA-style next actions.
struct JointItem {
  std::vector<Vec> taus, next_taus;
  std::vector<int> actions, next_actions;
  Vec state, next_state;
  double r_tot = 0.0;
  bool terminal = false;
};

std::vector<JointItem> sample_joint_items(const JointDataset& ds, int batch, Rng& rng) {
  const EnvSpec& spec = ds.spec;
  const std::vector<StepRef> refs = sample_joint_batch(ds, batch, rng);
  std::vector<JointItem> out;
  out.reserve(refs.size());
  for (const StepRef& ref : refs) {
    const JointStep& js = ds.at(ref.episode, ref.t);
    JointItem item;
    item.state = js.state;
    item.actions = js.actions;
    item.r_tot = js.r_tot;
    item.terminal = js.done;
    for (int i = 0; i < spec.n_agents; ++i) {
      const int prev = ref.t > 0 ? ds.at(ref.episode, ref.t - 1).actions[static_cast<size_t>(i)] : -1;
      item.taus.push_back(make_tau(spec, js.obs[static_cast<size_t>(i)], prev));
    }
    if (!item.terminal) {
      const JointStep& jn = ds.at(ref.episode, ref.t + 1);
      item.next_state = jn.state;
      item.next_actions = jn.actions;
      for (int i = 0; i < spec.n_agents; ++i)
        item.next_taus.push_back(
            make_tau(spec, jn.obs[static_cast<size_t>(i)], js.actions[static_cast<size_t>(i)]));
    }
    out.push_back(std::move(item));
  }
  return out;
}

// Value-factorization critic: per-agent action-value heads combined by a
// state-conditioned linear mixer with non-negative weights, q_tot =
// sum_i |w_i(s)| * Q_i(tau_i, a_i) + b(s).
struct MixedCritic {
  std::vector<Mlp> q;
  Mlp hyper;

  static MixedCritic make(const EnvSpec& spec, int hidden, Rng& rng) {
    MixedCritic c;
    const int tau_dim = spec.obs_dim + spec.n_actions;
    const int q_dims[] = {tau_dim, hidden, spec.n_actions};
    for (int i = 0; i < spec.n_agents; ++i) c.q.push_back(Mlp::make(q_dims, rng));
    const int hyper_dims[] = {spec.state_dim, spec.n_agents + 1};
    c.hyper = Mlp::make(hyper_dims, rng);
    return c;
  }

  // Mixer coefficients at a state: n_agents non-negative weights then a bias.
  Vec mixer(const Vec& state) const {
    Vec h = hyper.forward(state);
    for (size_t i = 0; i + 1 < h.size(); ++i) h[i] = std::fabs(h[i]);
    return h;
  }

  double q_agent(int agent, const Vec& tau, int action) const {
    return q[static_cast<size_t>(agent)].forward(tau)[static_cast<size_t>(action)];
  }

  double q_total(const Vec& state, const std::vector<Vec>& taus,
                 const std::vector<int>& actions) const {
    const Vec h = mixer(state);
    double total = h.back();
    for (size_t i = 0; i < q.size(); ++i) total += h[i] * q_agent(static_cast<int>(i), taus[i], actions[i]);
    return total;
  }

  std::vector<ParamView> params() {
    std::vector<ParamView> out;
    for (size_t i = 0; i < q.size(); ++i)
      q[i].append_params("q" + std::to_string(i), out);
    hyper.append_params("hyper", out);
    return out;
  }
};

struct MixedCriticNodes {
  std::vector<MlpNodes> q;
  MlpNodes hyper;
};

MixedCriticNodes bind_mixed_critic(Tape& tape, MixedCritic& c) {
  MixedCriticNodes ids;
  for (Mlp& net : c.q) ids.q.push_back(bind_mlp(tape, net));
  ids.hyper = bind_mlp(tape, c.hyper);
  return ids;
}

int q_total_node(Tape& tape, const MixedCritic& c, const MixedCriticNodes& ids,
                 const JointItem& item) {
  const int h = apply_mlp(tape, c.hyper, ids.hyper, tape.leaf(item.state));
  const int n = static_cast<int>(c.q.size());
  int total = tape.pick(h, n);
  for (int i = 0; i < n; ++i) {
    const int w_raw = tape.pick(h, i);
    const int w_abs = tape.add(tape.relu(w_raw), tape.relu(tape.scale(w_raw, -1.0)));
    const int qi = tape.pick(
        apply_mlp(tape, c.q[static_cast<size_t>(i)], ids.q[static_cast<size_t>(i)],
                  tape.leaf(item.taus[static_cast<size_t>(i)])),
        item.actions[static_cast<size_t>(i)]);
    total = tape.add(total, tape.dot(w_abs, qi));
  }
  return total;
}

// One-step targets y = r + gamma * (exp(q'/beta)/Z) * q' with the filter
// normalized by its batch mean over non-terminal items; terminal steps use r.
Vec filtered_targets(const MixedCritic& target, const std::vector<JointItem>& batch, double gamma,
                     double beta, double exp_clamp) {
  const size_t n = batch.size();
  Vec q_next(n, 0.0), filt(n, 0.0);
  double z = 0.0;
  int alive = 0;
  for (size_t j = 0; j < n; ++j) {
    if (batch[j].terminal) continue;
    q_next[j] = target.q_total(batch[j].next_state, batch[j].next_taus, batch[j].next_actions);
    filt[j] = std::exp(std::min(q_next[j] / beta, exp_clamp));
    z += filt[j];
    ++alive;
  }
  if (alive > 0) z /= alive;
  Vec y(n);
  for (size_t j = 0; j < n; ++j) {
    y[j] = batch[j].r_tot;
    if (!batch[j].terminal) y[j] += gamma * (filt[j] / z) * q_next[j];
  }
  return y;
}

double bc_loss_grad(ActorNet& actor, int agent, const std::vector<JointItem>& batch,
                    const Vec& weights) {
  Tape tape;
  MlpNodes ids = bind_mlp(tape, actor.net);
  std::vector<int> terms;
  terms.reserve(batch.size());
  for (size_t j = 0; j < batch.size(); ++j) {
    const JointItem& it = batch[j];
    const int lp = tape.log_softmax(
        apply_mlp(tape, actor.net, ids, tape.leaf(it.taus[static_cast<size_t>(agent)])));
    terms.push_back(
        tape.scale(tape.pick(lp, it.actions[static_cast<size_t>(agent)]), -weights[j]));
  }
  const int loss = tape.mean_all(tape.concat(terms));
  tape.backward(loss);
  return tape.scalar(loss);
}

}  // namespace

TrainResult train_bc(const JointDataset& ds, const PolicyHyper& hyper, std::uint64_t seed) {
  hyper.validate();
  const EnvSpec& spec = ds.spec;
  const int n = spec.n_agents;

  TrainResult result;
  std::vector<std::vector<ParamView>> actor_params;
  std::vector<RmsProp> actor_opt;
  result.actors.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng init(stream_seed(seed, "bc/agent" + std::to_string(i) + "/init"));
    result.actors.push_back(ActorNet::make(spec, hyper.actor_hidden, init));
  }
  for (int i = 0; i < n; ++i) {
    actor_params.push_back(result.actors[static_cast<size_t>(i)].params("actor"));
    actor_opt.emplace_back(hyper.actor_lr);
  }
  Rng sample(stream_seed(seed, "bc/sample"));

  Vec actor_acc(static_cast<size_t>(n), 0.0);
  int acc_count = 0;
  const Vec unit_weights(static_cast<size_t>(hyper.batch), 1.0);

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    const std::vector<JointItem> batch = sample_joint_items(ds, hyper.batch, sample);
    for (int i = 0; i < n; ++i) {
      zero_grads(actor_params[static_cast<size_t>(i)]);
      const double loss =
          bc_loss_grad(result.actors[static_cast<size_t>(i)], i, batch, unit_weights);
      if (!std::isfinite(loss))
        throw DivergenceError("train_bc: non-finite loss at agent " + std::to_string(i) +
                              ", epoch " + std::to_string(epoch));
      clip_grad_norm(actor_params[static_cast<size_t>(i)], hyper.grad_clip);
      actor_opt[static_cast<size_t>(i)].step(actor_params[static_cast<size_t>(i)]);
      actor_acc[static_cast<size_t>(i)] += loss;
    }
    ++acc_count;

    if ((epoch + 1) % hyper.eval_interval == 0 || epoch + 1 == hyper.epochs) {
      const EvalResult ev = evaluate(result.actors, spec, hyper.eval_episodes,
                                     stream_seed(seed, "eval/epoch" + std::to_string(epoch + 1)));
      for (int i = 0; i < n; ++i) {
        MetricsRow row;
        row.epoch = epoch + 1;
        row.agent = i;
        row.critic_loss = 0.0;
        row.actor_loss = actor_acc[static_cast<size_t>(i)] / acc_count;
        row.eval_return_mean = ev.mean;
        row.eval_return_std = ev.stddev;
        result.metrics.push_back(row);
      }
      std::fill(actor_acc.begin(), actor_acc.end(), 0.0);
      acc_count = 0;
    }
  }

  result.final_eval =
      evaluate(result.actors, spec, hyper.final_eval_episodes, stream_seed(seed, "eval/final"));
  return result;
}

TrainResult train_icq(const JointDataset& ds, const PolicyHyper& hyper, std::uint64_t seed) {
  hyper.validate();
  const EnvSpec& spec = ds.spec;
  const int n = spec.n_agents;

  TrainResult result;
  result.actors.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng init(stream_seed(seed, "icq/agent" + std::to_string(i) + "/init"));
    result.actors.push_back(ActorNet::make(spec, hyper.actor_hidden, init));
  }
  Rng mixer_init(stream_seed(seed, "icq/mixer/init"));
  MixedCritic critic = MixedCritic::make(spec, hyper.critic_hidden, mixer_init);
  MixedCritic target = critic;

  std::vector<std::vector<ParamView>> actor_params;
  std::vector<RmsProp> actor_opt;
  for (int i = 0; i < n; ++i) {
    actor_params.push_back(result.actors[static_cast<size_t>(i)].params("actor"));
    actor_opt.emplace_back(hyper.actor_lr);
  }
  std::vector<ParamView> critic_params = critic.params();
  RmsProp critic_opt(hyper.critic_lr);
  Rng sample(stream_seed(seed, "icq/sample"));

  Vec actor_acc(static_cast<size_t>(n), 0.0);
  double critic_acc = 0.0;
  int acc_count = 0;

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    const std::vector<JointItem> batch = sample_joint_items(ds, hyper.batch, sample);

    const Vec y = filtered_targets(target, batch, hyper.gamma, hyper.beta_icq, hyper.exp_clamp);
    Tape tape;
    const MixedCriticNodes ids = bind_mixed_critic(tape, critic);
    std::vector<int> terms;
    terms.reserve(batch.size());
    for (size_t j = 0; j < batch.size(); ++j)
      terms.push_back(tape.square(tape.add_const(q_total_node(tape, critic, ids, batch[j]), -y[j])));
    const int loss_node = tape.mean_all(tape.concat(terms));
    zero_grads(critic_params);
    tape.backward(loss_node);
    const double closs = tape.scalar(loss_node);
    if (!std::isfinite(closs))
      throw DivergenceError("train_icq: non-finite critic loss at epoch " + std::to_string(epoch));
    clip_grad_norm(critic_params, hyper.grad_clip);
    critic_opt.step(critic_params);
    critic_acc += closs;

    for (int i = 0; i < n; ++i) {
      // Actor filter exp(w_i(s) * Q_i(tau_i, a_i) / beta) normalized by its
      // batch mean, all computed from the online critic without gradients.
      Vec weights(batch.size());
      for (size_t j = 0; j < batch.size(); ++j) {
        const JointItem& it = batch[j];
        const double w_i = critic.mixer(it.state)[static_cast<size_t>(i)];
        const double q_i = critic.q_agent(i, it.taus[static_cast<size_t>(i)],
                                          it.actions[static_cast<size_t>(i)]);
        weights[j] = std::exp(std::min(w_i * q_i / hyper.beta_icq, hyper.exp_clamp));
      }
      const double z = mean_of(weights);
      for (double& w : weights) w /= z;

      zero_grads(actor_params[static_cast<size_t>(i)]);
      const double aloss = bc_loss_grad(result.actors[static_cast<size_t>(i)], i, batch, weights);
      if (!std::isfinite(aloss))
        throw DivergenceError("train_icq: non-finite actor loss at agent " + std::to_string(i) +
                              ", epoch " + std::to_string(epoch));
      clip_grad_norm(actor_params[static_cast<size_t>(i)], hyper.grad_clip);
      actor_opt[static_cast<size_t>(i)].step(actor_params[static_cast<size_t>(i)]);
      actor_acc[static_cast<size_t>(i)] += aloss;
    }
    ++acc_count;

    if ((epoch + 1) % hyper.target_interval == 0) target = critic;

    if ((epoch + 1) % hyper.eval_interval == 0 || epoch + 1 == hyper.epochs) {
      const EvalResult ev = evaluate(result.actors, spec, hyper.eval_episodes,
                                     stream_seed(seed, "eval/epoch" + std::to_string(epoch + 1)));
      for (int i = 0; i < n; ++i) {
        MetricsRow row;
        row.epoch = epoch + 1;
        row.agent = i;
        row.critic_loss = critic_acc / acc_count;
        row.actor_loss = actor_acc[static_cast<size_t>(i)] / acc_count;
        row.eval_return_mean = ev.mean;
        row.eval_return_std = ev.stddev;
        result.metrics.push_back(row);
      }
      std::fill(actor_acc.begin(), actor_acc.end(), 0.0);
      critic_acc = 0.0;
      acc_count = 0;
    }
  }

  result.final_eval =
      evaluate(result.actors, spec, hyper.final_eval_episodes, stream_seed(seed, "eval/final"));
  return result;
}

}  // namespace sit
