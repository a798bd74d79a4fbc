#include "sit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace sit {
namespace {

constexpr int kDatasetVersion = 1;

void append_vec(std::string& out, const Vec& v) {
  out += '[';
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_real(v[i]);
  }
  out += ']';
}

void append_ints(std::string& out, const std::vector<int>& v) {
  out += '[';
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  out += ']';
}

std::string header_line(const JointDataset& ds) {
  const EnvSpec& s = ds.spec;
  std::string out = "{\"format_version\":" + std::to_string(kDatasetVersion) +
                    ",\"kind\":\"header\",\"env_id\":\"" + env_id_name(s.env_id) + "\"";
  out += ",\"n_agents\":" + std::to_string(s.n_agents);
  out += ",\"agent_types\":[";
  for (int i = 0; i < s.n_agents; ++i) {
    if (i) out += ',';
    out += "\"" + s.agent_types[static_cast<size_t>(i)] + "\"";
  }
  out += "]";
  out += ",\"n_actions\":" + std::to_string(s.n_actions);
  out += ",\"obs_dim\":" + std::to_string(s.obs_dim);
  out += ",\"state_dim\":" + std::to_string(s.state_dim);
  out += ",\"max_steps\":" + std::to_string(s.max_steps);
  out += ",\"grid_size\":" + std::to_string(s.grid_size);
  out += ",\"payoffs\":[";
  for (size_t i = 0; i < s.payoffs.size(); ++i) {
    if (i) out += ',';
    append_vec(out, s.payoffs[i]);
  }
  out += "]";
  out += ",\"metadata\":{\"composition\":\"" + ds.meta.composition +
         "\",\"seed\":" + std::to_string(ds.meta.seed) + "}}";
  return out;
}

std::string record_line(int k, int t, const JointStep& st) {
  std::string out = "{\"kind\":\"joint\",\"k\":" + std::to_string(k) + ",\"t\":" + std::to_string(t);
  out += ",\"s\":";
  append_vec(out, st.state);
  out += ",\"obs\":[";
  for (size_t i = 0; i < st.obs.size(); ++i) {
    if (i) out += ',';
    append_vec(out, st.obs[i]);
  }
  out += "]";
  out += ",\"actions\":";
  append_ints(out, st.actions);
  out += ",\"r_tot\":" + format_real(st.r_tot);
  out += ",\"done\":";
  out += st.done ? "true" : "false";
  out += '}';
  return out;
}

}  // namespace

int JointDataset::total_steps() const {
  int n = 0;
  for (const auto& ep : episodes) n += static_cast<int>(ep.size());
  return n;
}

const JointStep& JointDataset::at(int episode, int t) const {
  if (episode < 0 || episode >= n_episodes())
    throw std::out_of_range("JointDataset: episode " + std::to_string(episode) + " out of range");
  const auto& ep = episodes[static_cast<size_t>(episode)];
  if (t < 0 || t >= static_cast<int>(ep.size()))
    throw std::out_of_range("JointDataset: step " + std::to_string(t) + " out of range in episode " +
                            std::to_string(episode));
  return ep[static_cast<size_t>(t)];
}

double JointDataset::episode_return(int episode) const {
  double r = 0.0;
  for (const JointStep& st : episodes[static_cast<size_t>(episode)]) r += st.r_tot;
  return r;
}

double JointDataset::mean_episode_return() const {
  if (episodes.empty()) throw std::logic_error("JointDataset: empty dataset");
  double s = 0.0;
  for (int k = 0; k < n_episodes(); ++k) s += episode_return(k);
  return s / n_episodes();
}

void JointDataset::validate() const {
  spec.validate();
  if (episodes.empty()) throw ConfigError("JointDataset: no episodes");
  for (int k = 0; k < n_episodes(); ++k) {
    const auto& ep = episodes[static_cast<size_t>(k)];
    if (ep.empty()) throw ConfigError("JointDataset: episode " + std::to_string(k) + " is empty");
    if (static_cast<int>(ep.size()) > spec.max_steps)
      throw ConfigError("JointDataset: episode " + std::to_string(k) + " exceeds max_steps");
    for (size_t t = 0; t < ep.size(); ++t) {
      const JointStep& st = ep[t];
      if (static_cast<int>(st.state.size()) != spec.state_dim)
        throw ConfigError("JointDataset: bad state dim at episode " + std::to_string(k));
      if (static_cast<int>(st.obs.size()) != spec.n_agents)
        throw ConfigError("JointDataset: bad obs count at episode " + std::to_string(k));
      for (const Vec& o : st.obs)
        if (static_cast<int>(o.size()) != spec.obs_dim)
          throw ConfigError("JointDataset: bad obs dim at episode " + std::to_string(k));
      if (static_cast<int>(st.actions.size()) != spec.n_agents)
        throw ConfigError("JointDataset: bad action count at episode " + std::to_string(k));
      for (int a : st.actions)
        if (a < 0 || a >= spec.n_actions)
          throw ConfigError("JointDataset: action out of range at episode " + std::to_string(k));
      if (!std::isfinite(st.r_tot))
        throw ConfigError("JointDataset: non-finite reward at episode " + std::to_string(k));
      const bool last = (t + 1 == ep.size());
      if (st.done != last)
        throw ConfigError("JointDataset: done flag must mark exactly the last step (episode " +
                          std::to_string(k) + ", t " + std::to_string(t) + ")");
    }
  }
}

void save_dataset(const JointDataset& ds, const std::string& path) {
  ds.validate();
  std::ofstream out(path);
  if (!out) throw ConfigError("save_dataset: cannot open '" + path + "' for writing");
  out << header_line(ds) << "\n";
  for (int k = 0; k < ds.n_episodes(); ++k) {
    const auto& ep = ds.episodes[static_cast<size_t>(k)];
    for (size_t t = 0; t < ep.size(); ++t)
      out << record_line(k, static_cast<int>(t), ep[t]) << "\n";
  }
  if (!out) throw ConfigError("save_dataset: write failed for '" + path + "'");
}

JointDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("load_dataset: cannot open '" + path + "'");
  JointDataset ds;
  std::string line;
  int lineno = 0;

  auto fail = [&](const std::string& why) -> void {
    throw ConfigError("load_dataset: " + path + ":" + std::to_string(lineno) + ": " + why);
  };

  if (!std::getline(in, line)) {
    lineno = 1;
    fail("empty file");
  }
  ++lineno;
  try {
    nlohmann::json h = nlohmann::json::parse(line);
    if (h.at("kind").get<std::string>() != "header") fail("first line must be the header");
    if (h.at("format_version").get<int>() != kDatasetVersion) fail("unsupported format_version");
    EnvSpec& s = ds.spec;
    s.env_id = env_id_from(h.at("env_id").get<std::string>());
    s.n_agents = h.at("n_agents").get<int>();
    s.agent_types = h.at("agent_types").get<std::vector<std::string>>();
    s.n_actions = h.at("n_actions").get<int>();
    s.obs_dim = h.at("obs_dim").get<int>();
    s.state_dim = h.at("state_dim").get<int>();
    s.max_steps = h.at("max_steps").get<int>();
    s.grid_size = h.at("grid_size").get<int>();
    s.payoffs = h.at("payoffs").get<std::vector<Vec>>();
    ds.meta.composition = h.at("metadata").at("composition").get<std::string>();
    ds.meta.seed = h.at("metadata").at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("bad header: ") + e.what());
  }

  int expect_k = 0, expect_t = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      nlohmann::json r = nlohmann::json::parse(line);
      if (r.at("kind").get<std::string>() != "joint") fail("expected record kind 'joint'");
      const int k = r.at("k").get<int>();
      const int t = r.at("t").get<int>();
      if (k != expect_k || t != expect_t)
        fail("out-of-order record (k=" + std::to_string(k) + ", t=" + std::to_string(t) +
             "), expected (k=" + std::to_string(expect_k) + ", t=" + std::to_string(expect_t) + ")");
      JointStep st;
      st.state = r.at("s").get<Vec>();
      st.obs = r.at("obs").get<std::vector<Vec>>();
      st.actions = r.at("actions").get<std::vector<int>>();
      st.r_tot = r.at("r_tot").get<double>();
      st.done = r.at("done").get<bool>();
      if (t == 0) ds.episodes.emplace_back();
      ds.episodes.back().push_back(std::move(st));
      if (ds.episodes.back().back().done) {
        ++expect_k;
        expect_t = 0;
      } else {
        ++expect_t;
      }
    } catch (const nlohmann::json::exception& e) {
      fail(std::string("bad record: ") + e.what());
    }
  }
  if (expect_t != 0) {
    ++lineno;
    fail("last episode not terminated");
  }
  ds.validate();
  return ds;
}

std::vector<StepRef> sample_joint_batch(const JointDataset& ds, int batch, Rng& rng) {
  if (batch < 1) throw std::invalid_argument("sample_joint_batch: batch must be >= 1");
  std::vector<int> offsets;  // cumulative step counts per episode
  offsets.reserve(ds.episodes.size() + 1);
  offsets.push_back(0);
  for (const auto& ep : ds.episodes) offsets.push_back(offsets.back() + static_cast<int>(ep.size()));
  const int total = offsets.back();
  if (total == 0) throw std::logic_error("sample_joint_batch: empty dataset");
  std::vector<StepRef> out;
  out.reserve(static_cast<size_t>(batch));
  for (int i = 0; i < batch; ++i) {
    const int flat = rng.uniform_int(total);
    const auto it = std::upper_bound(offsets.begin(), offsets.end(), flat);
    const int k = static_cast<int>(it - offsets.begin()) - 1;
    out.push_back({k, flat - offsets[static_cast<size_t>(k)]});
  }
  return out;
}

Vec obs_of(const JointDataset& ds, int agent, const IndividualStep& s) {
  return ds.at(s.episode, s.t).obs[static_cast<size_t>(agent)];
}

Vec next_obs_of(const JointDataset& ds, int agent, const IndividualStep& s) {
  if (s.terminal) return Vec(static_cast<size_t>(ds.spec.obs_dim), 0.0);
  return ds.at(s.episode, s.t + 1).obs[static_cast<size_t>(agent)];
}

Vec other_obs_of(const JointDataset& ds, int agent, const IndividualStep& s) {
  const JointStep& st = ds.at(s.episode, s.t);
  Vec out;
  out.reserve(static_cast<size_t>(ds.spec.obs_dim) * (ds.spec.n_agents - 1));
  for (int j = 0; j < ds.spec.n_agents; ++j) {
    if (j == agent) continue;
    const Vec& o = st.obs[static_cast<size_t>(j)];
    out.insert(out.end(), o.begin(), o.end());
  }
  return out;
}

std::string DatasetComposition::label() const {
  std::string out;
  for (size_t c = 0; c < mixture.size(); ++c) {
    if (c) out += '+';
    char frac[32];
    std::snprintf(frac, sizeof(frac), "%g", mixture[c].fraction);
    out += frac;
    out += '[';
    for (size_t i = 0; i < mixture[c].levels.size(); ++i) {
      if (i) out += ',';
      out += skill_name(mixture[c].levels[i]);
    }
    out += ']';
  }
  return out;
}

std::vector<int> component_episode_counts(const DatasetComposition& comp) {
  if (comp.mixture.empty()) throw ConfigError("composition: no mixture components");
  if (comp.episodes < 1) throw ConfigError("composition: episodes must be >= 1");
  double frac_sum = 0.0;
  for (const MixtureComponent& c : comp.mixture) {
    if (c.fraction < 0.0) throw ConfigError("composition: negative fraction");
    frac_sum += c.fraction;
  }
  if (std::abs(frac_sum - 1.0) > 1e-6)
    throw ConfigError("composition: fractions sum to " + format_real(frac_sum) + ", expected 1");
  std::vector<int> counts;
  int assigned = 0;
  for (const MixtureComponent& c : comp.mixture) {
    const int n = static_cast<int>(std::llround(c.fraction * comp.episodes));
    counts.push_back(n);
    assigned += n;
  }
  counts[0] += comp.episodes - assigned;  // rounding remainder to the first component
  if (counts[0] < 0) throw ConfigError("composition: rounding produced a negative episode count");
  return counts;
}

JointDataset generate_dataset(const EnvSpec& spec, const DatasetComposition& comp,
                              std::uint64_t seed) {
  spec.validate();
  for (const MixtureComponent& c : comp.mixture)
    if (static_cast<int>(c.levels.size()) != spec.n_agents)
      throw ConfigError("composition: component needs one skill level per agent");
  const std::vector<int> counts = component_episode_counts(comp);

  JointDataset ds;
  ds.spec = spec;
  ds.meta.composition = comp.label();
  ds.meta.seed = seed;

  int k = 0;
  for (size_t c = 0; c < comp.mixture.size(); ++c) {
    const std::vector<BehaviorPolicy> policies = make_policy_set(spec, comp.mixture[c].levels);
    for (int e = 0; e < counts[c]; ++e, ++k) {
      ResetResult rr = env_reset(spec, stream_seed(seed, "reset/" + std::to_string(k)));
      Rng act_rng(stream_seed(seed, "act/" + std::to_string(k)));
      EnvState state = rr.state;
      std::vector<Vec> obs = rr.obs;
      std::vector<JointStep> episode;
      while (!state.done) {
        JointStep st;
        st.state = state.state;
        st.obs = obs;
        for (const BehaviorPolicy& p : policies) st.actions.push_back(p.act(spec, state, act_rng));
        StepResult sr = env_step(spec, state, st.actions);
        st.r_tot = sr.r_tot;
        st.done = sr.done;
        episode.push_back(std::move(st));
        state = sr.state;
        obs = sr.obs;
      }
      ds.episodes.push_back(std::move(episode));
    }
  }
  ds.validate();
  return ds;
}

}  // namespace sit
