#include "sit/env.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace sit {
namespace {

constexpr int kSpreadActions = 5;  // stay, up, down, left, right
constexpr int kDx[kSpreadActions] = {0, 0, 0, -1, 1};
constexpr int kDy[kSpreadActions] = {0, -1, 1, 0, 0};

int manhattan(const std::array<int, 2>& a, const std::array<int, 2>& b) {
  return std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]);
}

std::array<int, 2> moved(const EnvSpec& spec, std::array<int, 2> pos, int action) {
  pos[0] = std::clamp(pos[0] + kDx[action], 0, spec.grid_size - 1);
  pos[1] = std::clamp(pos[1] + kDy[action], 0, spec.grid_size - 1);
  return pos;
}

void check_actions(const EnvSpec& spec, const std::vector<int>& actions) {
  if (static_cast<int>(actions.size()) != spec.n_agents)
    throw std::invalid_argument("env_step: got " + std::to_string(actions.size()) +
                                " actions for " + std::to_string(spec.n_agents) + " agents");
  for (int a : actions)
    if (a < 0 || a >= spec.n_actions)
      throw std::invalid_argument("env_step: action " + std::to_string(a) + " out of range [0," +
                                  std::to_string(spec.n_actions) + ")");
}

Vec spread_state_vector(const EnvSpec& spec, const std::vector<std::array<int, 2>>& agents,
                        const std::vector<std::array<int, 2>>& landmarks) {
  const double g = spec.grid_size;
  Vec s;
  s.reserve(static_cast<size_t>(spec.state_dim));
  for (const auto& p : agents) {
    s.push_back(p[0] / g);
    s.push_back(p[1] / g);
  }
  for (const auto& p : landmarks) {
    s.push_back(p[0] / g);
    s.push_back(p[1] / g);
  }
  return s;
}

std::vector<Vec> spread_observations(const EnvSpec& spec,
                                     const std::vector<std::array<int, 2>>& agents,
                                     const std::vector<std::array<int, 2>>& landmarks) {
  const double g = spec.grid_size;
  std::vector<Vec> obs(static_cast<size_t>(spec.n_agents));
  for (int i = 0; i < spec.n_agents; ++i) {
    // Nearest other agent by Manhattan distance, ties toward the lowest index.
    int nearest = -1, best = INT_MAX;
    for (int j = 0; j < spec.n_agents; ++j) {
      if (j == i) continue;
      const int d = manhattan(agents[i], agents[j]);
      if (d < best) {
        best = d;
        nearest = j;
      }
    }
    const auto& p = agents[static_cast<size_t>(i)];
    const auto& l = landmarks[static_cast<size_t>(i)];
    const auto& q = agents[static_cast<size_t>(nearest)];
    obs[static_cast<size_t>(i)] = {p[0] / g,
                                   p[1] / g,
                                   (l[0] - p[0]) / g,
                                   (l[1] - p[1]) / g,
                                   (q[0] - p[0]) / g,
                                   (q[1] - p[1]) / g};
  }
  return obs;
}

}  // namespace

std::string env_id_name(EnvId id) {
  switch (id) {
    case EnvId::kMatrixGame: return "matrix_game";
    case EnvId::kSpreadGrid: return "spread_grid";
  }
  throw std::logic_error("env_id_name: bad id");
}

EnvId env_id_from(const std::string& name) {
  if (name == "matrix_game") return EnvId::kMatrixGame;
  if (name == "spread_grid") return EnvId::kSpreadGrid;
  throw ConfigError("unknown env_id '" + name + "' (expected matrix_game or spread_grid)");
}

EnvSpec EnvSpec::matrix_game(int n_agents) {
  std::vector<Vec> payoffs;
  for (int i = 0; i < n_agents; ++i) {
    const double scale = 1.0 + 0.5 * i;
    payoffs.push_back({-scale, 0.0, scale});
  }
  return matrix_game(n_agents, std::move(payoffs));
}

EnvSpec EnvSpec::matrix_game(int n_agents, std::vector<Vec> payoffs) {
  EnvSpec s;
  s.env_id = EnvId::kMatrixGame;
  s.n_agents = n_agents;
  s.agent_types.assign(static_cast<size_t>(n_agents), "toy");
  s.payoffs = std::move(payoffs);
  s.n_actions = s.payoffs.empty() ? 0 : static_cast<int>(s.payoffs[0].size());
  s.obs_dim = n_agents;    // one-hot agent id
  s.state_dim = n_agents;  // zero vector; the game is stateless
  s.max_steps = 1;
  s.grid_size = 0;
  s.validate();
  return s;
}

EnvSpec EnvSpec::spread_grid(int n_agents, int grid_size, int max_steps) {
  EnvSpec s;
  s.env_id = EnvId::kSpreadGrid;
  s.n_agents = n_agents;
  s.agent_types.assign(static_cast<size_t>(n_agents), "toy");
  s.n_actions = kSpreadActions;
  s.obs_dim = 6;                 // own pos, offset to landmark, offset to nearest other
  s.state_dim = 4 * n_agents;    // all agent + landmark positions
  s.max_steps = max_steps;
  s.grid_size = grid_size;
  s.validate();
  return s;
}

void EnvSpec::validate() const {
  if (n_agents < 1) throw ConfigError("EnvSpec: n_agents must be >= 1");
  if (static_cast<int>(agent_types.size()) != n_agents)
    throw ConfigError("EnvSpec: agent_types size != n_agents");
  if (n_actions < 2) throw ConfigError("EnvSpec: n_actions must be >= 2");
  if (max_steps < 1) throw ConfigError("EnvSpec: max_steps must be >= 1");
  if (env_id == EnvId::kMatrixGame) {
    if (static_cast<int>(payoffs.size()) != n_agents)
      throw ConfigError("EnvSpec: matrix_game needs one payoff table per agent");
    for (const Vec& t : payoffs)
      if (static_cast<int>(t.size()) != n_actions)
        throw ConfigError("EnvSpec: payoff table size != n_actions");
  } else {
    if (grid_size < 2) throw ConfigError("EnvSpec: grid_size must be >= 2");
    if (n_agents < 2) throw ConfigError("EnvSpec: spread_grid needs >= 2 agents");
  }
  if (obs_dim < 1 || state_dim < 1) throw ConfigError("EnvSpec: missing obs/state dims");
}

ResetResult env_reset(const EnvSpec& spec, std::uint64_t seed) {
  spec.validate();
  ResetResult r;
  r.state.t = 0;
  r.state.done = false;
  if (spec.env_id == EnvId::kMatrixGame) {
    r.state.state.assign(static_cast<size_t>(spec.state_dim), 0.0);
    for (int i = 0; i < spec.n_agents; ++i) r.obs.push_back(onehot(i, spec.n_agents));
    return r;
  }
  Rng rng(seed);
  // Landmarks on distinct cells; agents anywhere (overlaps allowed).
  const int cells = spec.grid_size * spec.grid_size;
  if (cells < spec.n_agents)
    throw ConfigError("env_reset: grid too small for distinct landmarks");
  std::vector<int> taken;
  for (int i = 0; i < spec.n_agents; ++i) {
    int cell;
    do {
      cell = rng.uniform_int(cells);
    } while (std::find(taken.begin(), taken.end(), cell) != taken.end());
    taken.push_back(cell);
    r.state.landmark_pos.push_back({cell % spec.grid_size, cell / spec.grid_size});
  }
  for (int i = 0; i < spec.n_agents; ++i) {
    const int cell = rng.uniform_int(cells);
    r.state.agent_pos.push_back({cell % spec.grid_size, cell / spec.grid_size});
  }
  r.state.state = spread_state_vector(spec, r.state.agent_pos, r.state.landmark_pos);
  r.obs = spread_observations(spec, r.state.agent_pos, r.state.landmark_pos);
  return r;
}

Vec oracle_rewards(const EnvSpec& spec, const EnvState& state, const std::vector<int>& actions) {
  check_actions(spec, actions);
  Vec phi(static_cast<size_t>(spec.n_agents), 0.0);
  if (spec.env_id == EnvId::kMatrixGame) {
    for (int i = 0; i < spec.n_agents; ++i)
      phi[static_cast<size_t>(i)] = spec.payoffs[static_cast<size_t>(i)][static_cast<size_t>(actions[static_cast<size_t>(i)])];
    return phi;
  }
  std::vector<std::array<int, 2>> next(static_cast<size_t>(spec.n_agents));
  for (int i = 0; i < spec.n_agents; ++i)
    next[static_cast<size_t>(i)] = moved(spec, state.agent_pos[static_cast<size_t>(i)], actions[static_cast<size_t>(i)]);
  for (int i = 0; i < spec.n_agents; ++i) {
    int colocated = 0;
    for (int j = 0; j < spec.n_agents; ++j)
      if (j != i && next[static_cast<size_t>(j)] == next[static_cast<size_t>(i)]) ++colocated;
    phi[static_cast<size_t>(i)] =
        -static_cast<double>(manhattan(next[static_cast<size_t>(i)], state.landmark_pos[static_cast<size_t>(i)])) /
            spec.grid_size -
        0.5 * colocated;
  }
  return phi;
}

StepResult env_step(const EnvSpec& spec, const EnvState& state, const std::vector<int>& actions) {
  if (state.done) throw std::logic_error("env_step: episode already done");
  check_actions(spec, actions);
  const Vec phi = oracle_rewards(spec, state, actions);
  StepResult r;
  r.r_tot = 0.0;
  for (double p : phi) r.r_tot += p;

  r.state = state;
  r.state.t = state.t + 1;
  if (spec.env_id == EnvId::kMatrixGame) {
    r.state.done = true;
    r.done = true;
    for (int i = 0; i < spec.n_agents; ++i) r.obs.push_back(onehot(i, spec.n_agents));
    return r;
  }
  for (int i = 0; i < spec.n_agents; ++i)
    r.state.agent_pos[static_cast<size_t>(i)] =
        moved(spec, state.agent_pos[static_cast<size_t>(i)], actions[static_cast<size_t>(i)]);
  r.state.state = spread_state_vector(spec, r.state.agent_pos, r.state.landmark_pos);
  r.obs = spread_observations(spec, r.state.agent_pos, r.state.landmark_pos);
  r.state.done = (r.state.t >= spec.max_steps);
  r.done = r.state.done;
  return r;
}

std::string skill_name(SkillLevel level) {
  switch (level) {
    case SkillLevel::kRandom: return "random";
    case SkillLevel::kMedium: return "medium";
    case SkillLevel::kExpert: return "expert";
  }
  throw std::logic_error("skill_name: bad level");
}

SkillLevel skill_from(const std::string& name) {
  if (name == "random" || name == "r") return SkillLevel::kRandom;
  if (name == "medium" || name == "m") return SkillLevel::kMedium;
  if (name == "expert" || name == "e") return SkillLevel::kExpert;
  throw ConfigError("unknown skill level '" + name + "' (expected random|medium|expert)");
}

int expert_action(const EnvSpec& spec, const EnvState& state, int agent) {
  if (agent < 0 || agent >= spec.n_agents)
    throw std::invalid_argument("expert_action: agent index out of range");
  if (spec.env_id == EnvId::kMatrixGame) {
    const Vec& table = spec.payoffs[static_cast<size_t>(agent)];
    int best = 0;
    for (int a = 1; a < spec.n_actions; ++a)
      if (table[static_cast<size_t>(a)] > table[static_cast<size_t>(best)]) best = a;
    return best;
  }
  const auto& pos = state.agent_pos[static_cast<size_t>(agent)];
  const auto& lm = state.landmark_pos[static_cast<size_t>(agent)];
  int best = 0;
  int best_d = manhattan(moved(spec, pos, 0), lm);
  for (int a = 1; a < spec.n_actions; ++a) {
    const int d = manhattan(moved(spec, pos, a), lm);
    if (d < best_d) {
      best = a;
      best_d = d;
    }
  }
  return best;
}

int BehaviorPolicy::act(const EnvSpec& spec, const EnvState& state, Rng& rng) const {
  // The mixture coin is always drawn so every skill level consumes the same
  // number of random draws per step.
  const bool explore = rng.uniform() < epsilon;
  const int uniform = rng.uniform_int(spec.n_actions);
  if (explore) return uniform;
  return expert_action(spec, state, agent);
}

std::vector<BehaviorPolicy> make_policy_pool(const EnvSpec& spec, SkillLevel level,
                                             std::uint64_t /*seed*/) {
  std::vector<SkillLevel> levels(static_cast<size_t>(spec.n_agents), level);
  return make_policy_set(spec, levels);
}

std::vector<BehaviorPolicy> make_policy_set(const EnvSpec& spec,
                                            const std::vector<SkillLevel>& levels) {
  if (static_cast<int>(levels.size()) != spec.n_agents)
    throw ConfigError("make_policy_set: need one level per agent");
  std::vector<BehaviorPolicy> out;
  for (int i = 0; i < spec.n_agents; ++i) {
    BehaviorPolicy p;
    p.agent = i;
    p.level = levels[static_cast<size_t>(i)];
    p.epsilon = p.level == SkillLevel::kRandom ? 1.0 : (p.level == SkillLevel::kMedium ? 0.5 : 0.0);
    out.push_back(p);
  }
  return out;
}

double scripted_mean_return(const EnvSpec& spec, const std::vector<BehaviorPolicy>& policies,
                            int episodes, std::uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("scripted_mean_return: episodes must be >= 1");
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    ResetResult rr = env_reset(spec, stream_seed(seed, "rollout_reset/" + std::to_string(e)));
    Rng rng(stream_seed(seed, "rollout_act/" + std::to_string(e)));
    EnvState state = rr.state;
    double ep_return = 0.0;
    while (!state.done) {
      std::vector<int> actions;
      for (const BehaviorPolicy& p : policies) actions.push_back(p.act(spec, state, rng));
      StepResult sr = env_step(spec, state, actions);
      ep_return += sr.r_tot;
      state = sr.state;
    }
    total += ep_return;
  }
  return total / episodes;
}

}  // namespace sit
