#pragma once
// Built-in cooperative environments with per-agent reward oracles.
//
// Both environments expose a shared team reward r_tot per step, but are
// constructed so that r_tot decomposes exactly into per-agent contributions
// phi_i (the "oracle"), which ground-truth tests of the learned decomposition.
//
//  - matrix_game: one-step game; agent i observes its one-hot id and earns
//    payoff[i][a_i]; r_tot is the sum of payoffs. The global state is a zero
//    vector (the game is stateless).
//  - spread_grid: an n_agents grid world with one landmark per agent
//    (assigned by index). Per step phi_i = -manhattan(i, landmark_i)/grid_size
//    - 0.5 * (number of other agents on the same cell). Episodes run a fixed
//    number of steps. Observations are local: own position, offset to the
//    assigned landmark, offset to the nearest other agent (all normalized),
//    so obs_dim < state_dim.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sit/common.hpp"

namespace sit {

enum class EnvId { kMatrixGame, kSpreadGrid };

std::string env_id_name(EnvId id);
EnvId env_id_from(const std::string& name);

struct EnvSpec {
  EnvId env_id = EnvId::kMatrixGame;
  int n_agents = 2;
  std::vector<std::string> agent_types;  // one label per agent
  int n_actions = 3;
  int obs_dim = 0;
  int state_dim = 0;
  int max_steps = 1;
  int grid_size = 6;            // spread_grid only
  std::vector<Vec> payoffs;     // matrix_game only: per agent, one entry per action

  // Payoff tables scale_i * {-1, 0, +1} with scale_i = 1 + i/2: zero-mean per
  // agent, distinct magnitudes so per-agent credit is distinguishable.
  static EnvSpec matrix_game(int n_agents);
  static EnvSpec matrix_game(int n_agents, std::vector<Vec> payoffs);
  static EnvSpec spread_grid(int n_agents, int grid_size = 6, int max_steps = 25);

  void validate() const;
};

struct EnvState {
  int t = 0;
  bool done = false;
  Vec state;  // global state vector as fed to models
  // spread_grid internals
  std::vector<std::array<int, 2>> agent_pos;
  std::vector<std::array<int, 2>> landmark_pos;
};

struct ResetResult {
  EnvState state;
  std::vector<Vec> obs;
};

struct StepResult {
  EnvState state;
  std::vector<Vec> obs;
  double r_tot = 0.0;
  bool done = false;
};

// Deterministic in (spec, seed).
ResetResult env_reset(const EnvSpec& spec, std::uint64_t seed);

// Applies one joint action. Throws if the episode is already done or an
// action index is out of range.
StepResult env_step(const EnvSpec& spec, const EnvState& state, const std::vector<int>& actions);

// Ground-truth per-agent reward for taking `actions` in `state`. The sum over
// agents equals the r_tot returned by env_step for the same transition.
Vec oracle_rewards(const EnvSpec& spec, const EnvState& state, const std::vector<int>& actions);

// --- Scripted behavior policies -------------------------------------------

enum class SkillLevel { kRandom, kMedium, kExpert };

std::string skill_name(SkillLevel level);
SkillLevel skill_from(const std::string& name);

// Deterministic greedy rule: matrix_game -> argmax payoff; spread_grid ->
// action minimizing post-move distance to the assigned landmark. Ties are
// broken toward the lowest action index.
int expert_action(const EnvSpec& spec, const EnvState& state, int agent);

// Epsilon-mixture over the expert rule: random acts uniformly (eps = 1),
// medium follows the expert half the time (eps = 0.5), expert always (eps = 0).
struct BehaviorPolicy {
  int agent = 0;
  SkillLevel level = SkillLevel::kRandom;
  double epsilon = 1.0;

  int act(const EnvSpec& spec, const EnvState& state, Rng& rng) const;
};

// One policy per agent, all at the same skill level. The seed is accepted for
// interface uniformity; scripted rules carry no trained state.
std::vector<BehaviorPolicy> make_policy_pool(const EnvSpec& spec, SkillLevel level,
                                             std::uint64_t seed);

// One policy per agent with individually chosen levels.
std::vector<BehaviorPolicy> make_policy_set(const EnvSpec& spec,
                                            const std::vector<SkillLevel>& levels);

// Mean undiscounted episode return of a scripted policy set over `episodes`
// rollouts (fresh resets derived from seed).
double scripted_mean_return(const EnvSpec& spec, const std::vector<BehaviorPolicy>& policies,
                            int episodes, std::uint64_t seed);

}  // namespace sit
