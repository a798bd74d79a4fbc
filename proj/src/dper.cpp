#include "sit/dper.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "sit/tape.hpp"

namespace sit {
namespace {

constexpr int kDperVersion = 1;

}  // namespace

void DperHyper::validate() const {
  if (alpha <= 0.0) throw ConfigError("dper: alpha must be positive");
  if (rescale_hi <= rescale_lo) throw ConfigError("dper: rescale range must have hi > lo");
  if (gamma < 0.0 || gamma > 1.0) throw ConfigError("dper: gamma must be in [0, 1]");
}

Vec discounted_returns(const Vec& rewards, double gamma) {
  if (rewards.empty()) throw std::invalid_argument("discounted_returns: empty reward sequence");
  Vec g(rewards.size(), 0.0);
  g.back() = rewards.back();
  for (int t = static_cast<int>(rewards.size()) - 2; t >= 0; --t)
    g[static_cast<size_t>(t)] = rewards[static_cast<size_t>(t)] + gamma * g[static_cast<size_t>(t) + 1];
  return g;
}

Vec reshape_priorities(const Vec& p_hat, double alpha, double lo, double hi) {
  if (p_hat.empty()) throw std::invalid_argument("reshape_priorities: empty input");
  if (alpha <= 0.0) throw std::invalid_argument("reshape_priorities: alpha must be positive");
  if (hi <= lo) throw std::invalid_argument("reshape_priorities: need hi > lo");
  if (!all_finite(p_hat)) throw std::invalid_argument("reshape_priorities: non-finite input");
  const double mn = *std::min_element(p_hat.begin(), p_hat.end());
  const double mx = *std::max_element(p_hat.begin(), p_hat.end());
  Vec scaled(p_hat.size());
  if (mx == mn) {
    std::fill(scaled.begin(), scaled.end(), 0.5 * (lo + hi));
  } else {
    const double f = (hi - lo) / (mx - mn);
    for (size_t i = 0; i < p_hat.size(); ++i) scaled[i] = lo + (p_hat[i] - mn) * f;
  }
  for (double& v : scaled) v /= alpha;
  return stable_softmax(scaled);
}

std::vector<IndividualTrajectory> decompose_episode(const EnsembleRewardModel& model,
                                                    const JointDataset& ds, int episode,
                                                    const DperHyper& hyper) {
  hyper.validate();
  const EnvSpec& spec = ds.spec;
  const auto& ep = ds.episodes.at(static_cast<size_t>(episode));
  const int n = spec.n_agents;
  const int len = static_cast<int>(ep.size());

  std::vector<IndividualTrajectory> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    out[static_cast<size_t>(i)].agent = i;
    out[static_cast<size_t>(i)].type = spec.agent_types[static_cast<size_t>(i)];
    out[static_cast<size_t>(i)].steps.resize(static_cast<size_t>(len));
  }

  Vec r_hat, u_hat;
  for (int t = 0; t < len; ++t) {
    const JointStep& st = ep[static_cast<size_t>(t)];
    model.decompose_step(st.state, st.obs, st.actions, &r_hat, &u_hat);
    for (int i = 0; i < n; ++i) {
      IndividualStep& s = out[static_cast<size_t>(i)].steps[static_cast<size_t>(t)];
      s.episode = episode;
      s.t = t;
      s.action = st.actions[static_cast<size_t>(i)];
      s.r_hat = r_hat[static_cast<size_t>(i)];
      s.u_hat = hyper.unit_uncertainty ? 1.0 : u_hat[static_cast<size_t>(i)];
      s.terminal = st.done;
    }
  }

  for (int i = 0; i < n; ++i) {
    IndividualTrajectory& traj = out[static_cast<size_t>(i)];
    Vec rewards(static_cast<size_t>(len));
    for (int t = 0; t < len; ++t) rewards[static_cast<size_t>(t)] = traj.steps[static_cast<size_t>(t)].r_hat;
    const Vec g = discounted_returns(rewards, hyper.gamma);
    double sum_g = 0.0;
    for (int t = 0; t < len; ++t) {
      traj.steps[static_cast<size_t>(t)].g_hat = g[static_cast<size_t>(t)];
      sum_g += g[static_cast<size_t>(t)];
    }
    traj.priority_raw = sum_g / len;
    traj.priority = 0.0;  // assigned during bucket construction
  }
  return out;
}

Dper::Dper(std::shared_ptr<const JointDataset> ds, std::map<std::string, TypeBucket> buckets,
           DperHyper hyper)
    : ds_(std::move(ds)), buckets_(std::move(buckets)), hyper_(hyper) {
  if (!ds_) throw std::invalid_argument("Dper: null dataset");
  if (buckets_.empty()) throw std::invalid_argument("Dper: no type buckets");
}

std::vector<std::string> Dper::types() const {
  std::vector<std::string> out;
  for (const auto& [type, bucket] : buckets_) out.push_back(type);
  return out;
}

const TypeBucket& Dper::bucket(const std::string& type) const {
  auto it = buckets_.find(type);
  if (it == buckets_.end()) throw std::invalid_argument("Dper: unknown type '" + type + "'");
  return it->second;
}

Dper::SampleRef Dper::sample(const std::string& type, Rng& rng) const {
  const TypeBucket& b = bucket(type);
  const double u = rng.uniform() * b.tree->total();
  const int traj = b.tree->sample(u);
  const int len = static_cast<int>(b.trajectories[static_cast<size_t>(traj)].steps.size());
  return {traj, rng.uniform_int(len)};
}

Dper build_dper(std::shared_ptr<const JointDataset> ds, const EnsembleRewardModel& model,
                const DperHyper& hyper) {
  hyper.validate();
  if (!ds) throw std::invalid_argument("build_dper: null dataset");
  ds->validate();

  std::map<std::string, TypeBucket> buckets;
  for (int k = 0; k < ds->n_episodes(); ++k) {
    std::vector<IndividualTrajectory> trajs = decompose_episode(model, *ds, k, hyper);
    for (IndividualTrajectory& t : trajs) {
      TypeBucket& b = buckets[t.type];
      b.trajectories.push_back(std::move(t));
    }
  }
  for (auto& [type, b] : buckets) {
    Vec raw;
    raw.reserve(b.trajectories.size());
    for (const IndividualTrajectory& t : b.trajectories) raw.push_back(t.priority_raw);
    const Vec reshaped = reshape_priorities(raw, hyper.alpha, hyper.rescale_lo, hyper.rescale_hi);
    Vec u_all;
    for (size_t i = 0; i < b.trajectories.size(); ++i) {
      b.trajectories[i].priority = reshaped[i];
      for (const IndividualStep& s : b.trajectories[i].steps) u_all.push_back(s.u_hat);
    }
    b.median_u = median_of(std::move(u_all));
    b.tree = std::make_unique<SumTree>(reshaped);
  }
  return Dper(std::move(ds), std::move(buckets), hyper);
}

void Dper::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("Dper::save: cannot open '" + path + "' for writing");
  out << "{\"format_version\":" << kDperVersion << ",\"kind\":\"dper\""
      << ",\"alpha\":" << format_real(hyper_.alpha)
      << ",\"rescale_lo\":" << format_real(hyper_.rescale_lo)
      << ",\"rescale_hi\":" << format_real(hyper_.rescale_hi)
      << ",\"gamma\":" << format_real(hyper_.gamma)
      << ",\"unit_uncertainty\":" << (hyper_.unit_uncertainty ? "true" : "false")
      << ",\"n_types\":" << buckets_.size() << "}\n";
  for (const auto& [type, b] : buckets_) {
    for (size_t j = 0; j < b.trajectories.size(); ++j) {
      const IndividualTrajectory& traj = b.trajectories[j];
      for (size_t i = 0; i < traj.steps.size(); ++i) {
        const IndividualStep& s = traj.steps[i];
        out << "{\"kind\":\"individual\",\"type\":\"" << type << "\",\"traj\":" << j
            << ",\"agent\":" << traj.agent << ",\"i\":" << i << ",\"k\":" << s.episode
            << ",\"t\":" << s.t << ",\"a\":" << s.action
            << ",\"r_hat\":" << format_real(s.r_hat) << ",\"u_hat\":" << format_real(s.u_hat)
            << ",\"g_hat\":" << format_real(s.g_hat)
            << ",\"terminal\":" << (s.terminal ? "true" : "false") << "}\n";
      }
      out << "{\"kind\":\"priority\",\"type\":\"" << type << "\",\"traj\":" << j
          << ",\"p_hat\":" << format_real(traj.priority_raw)
          << ",\"p\":" << format_real(traj.priority) << "}\n";
    }
  }
  out << "{\"kind\":\"end\"}\n";
  if (!out) throw ConfigError("Dper::save: write failed for '" + path + "'");
}

Dper Dper::load(const std::string& path, std::shared_ptr<const JointDataset> ds) {
  if (!ds) throw std::invalid_argument("Dper::load: null dataset");
  std::ifstream in(path);
  if (!in) throw ConfigError("Dper::load: cannot open '" + path + "'");
  std::string line;
  int lineno = 0;

  auto fail = [&](const std::string& why) -> void {
    throw ConfigError("Dper::load: " + path + ":" + std::to_string(lineno) + ": " + why);
  };

  DperHyper hyper;
  if (!std::getline(in, line)) {
    lineno = 1;
    fail("empty file");
  }
  ++lineno;
  try {
    nlohmann::json h = nlohmann::json::parse(line);
    if (h.at("kind").get<std::string>() != "dper") fail("first line must be the dper header");
    if (h.at("format_version").get<int>() != kDperVersion) fail("unsupported format_version");
    hyper.alpha = h.at("alpha").get<double>();
    hyper.rescale_lo = h.at("rescale_lo").get<double>();
    hyper.rescale_hi = h.at("rescale_hi").get<double>();
    hyper.gamma = h.at("gamma").get<double>();
    hyper.unit_uncertainty = h.at("unit_uncertainty").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("bad header: ") + e.what());
  }

  std::map<std::string, TypeBucket> buckets;
  bool saw_end = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      nlohmann::json r = nlohmann::json::parse(line);
      const std::string kind = r.at("kind").get<std::string>();
      if (kind == "end") {
        saw_end = true;
        break;
      }
      const std::string type = r.at("type").get<std::string>();
      TypeBucket& b = buckets[type];
      const size_t traj = r.at("traj").get<size_t>();
      if (kind == "individual") {
        if (traj > b.trajectories.size()) fail("trajectory ids out of order");
        if (traj == b.trajectories.size()) b.trajectories.emplace_back();
        IndividualTrajectory& tr = b.trajectories[traj];
        IndividualStep s;
        s.episode = r.at("k").get<int>();
        s.t = r.at("t").get<int>();
        s.action = r.at("a").get<int>();
        s.r_hat = r.at("r_hat").get<double>();
        s.u_hat = r.at("u_hat").get<double>();
        s.g_hat = r.at("g_hat").get<double>();
        s.terminal = r.at("terminal").get<bool>();
        const int agent = r.at("agent").get<int>();
        if (r.at("i").get<size_t>() != tr.steps.size()) fail("step indices out of order");
        // Integrity against the backing joint dataset.
        const JointStep& js = ds->at(s.episode, s.t);
        if (agent < 0 || agent >= ds->spec.n_agents) fail("agent index out of range");
        if (js.actions[static_cast<size_t>(agent)] != s.action)
          fail("action mismatch against the joint dataset");
        tr.agent = agent;
        tr.type = type;
        tr.steps.push_back(s);
      } else if (kind == "priority") {
        if (traj >= b.trajectories.size()) fail("priority for unknown trajectory");
        b.trajectories[traj].priority_raw = r.at("p_hat").get<double>();
        b.trajectories[traj].priority = r.at("p").get<double>();
      } else {
        fail("unknown record kind '" + kind + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      fail(std::string("bad record: ") + e.what());
    }
  }
  if (!saw_end) {
    ++lineno;
    fail("missing end record");
  }
  for (auto& [type, b] : buckets) {
    if (b.trajectories.empty()) fail("type bucket '" + type + "' has no trajectories");
    Vec p, u_all;
    for (const IndividualTrajectory& t : b.trajectories) {
      if (t.steps.empty()) fail("empty trajectory in type '" + type + "'");
      p.push_back(t.priority);
      for (const IndividualStep& s : t.steps) u_all.push_back(s.u_hat);
    }
    b.median_u = median_of(std::move(u_all));
    b.tree = std::make_unique<SumTree>(p);
  }
  return Dper(std::move(ds), std::move(buckets), hyper);
}

}  // namespace sit
