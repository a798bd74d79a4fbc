#include "sit/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace sit {
namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

// Raw key -> value pairs; tracks which keys were consumed so leftovers can be
// rejected with their original spelling.
class KvMap {
 public:
  KvMap(const std::string& text, std::string origin) : origin_(std::move(origin)) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const size_t hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin_ + ":" + std::to_string(lineno) + ": expected 'key = value'");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty())
        throw ConfigError(origin_ + ":" + std::to_string(lineno) + ": empty key");
      if (values_.count(key))
        throw ConfigError(origin_ + ": duplicate key '" + key + "'");
      values_[key] = value;
    }
  }

  bool take(const std::string& key, std::string* out) {
    auto it = values_.find(key);
    if (it == values_.end()) return false;
    *out = it->second;
    consumed_.insert(key);
    return true;
  }

  void reject_leftovers() const {
    for (const auto& [key, value] : values_)
      if (!consumed_.count(key)) throw ConfigError(origin_ + ": unknown key '" + key + "'");
  }

  const std::string& origin() const { return origin_; }

 private:
  std::string origin_;
  std::map<std::string, std::string> values_;
  std::set<std::string> consumed_;
};

int parse_int(const std::string& raw, const std::string& context) {
  try {
    size_t pos = 0;
    const long v = std::stol(raw, &pos);
    if (pos != raw.size()) throw std::invalid_argument(raw);
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw ConfigError(context + ": not an integer: '" + raw + "'");
  }
}

double take_real(KvMap& kv, const std::string& key, double fallback) {
  std::string raw;
  if (!kv.take(key, &raw)) return fallback;
  return parse_real(raw, kv.origin() + ": " + key);
}

int take_int(KvMap& kv, const std::string& key, int fallback) {
  std::string raw;
  if (!kv.take(key, &raw)) return fallback;
  return parse_int(raw, kv.origin() + ": " + key);
}

bool take_bool(KvMap& kv, const std::string& key, bool fallback) {
  std::string raw;
  if (!kv.take(key, &raw)) return fallback;
  if (raw == "true") return true;
  if (raw == "false") return false;
  throw ConfigError(kv.origin() + ": " + key + ": expected true or false, got '" + raw + "'");
}

std::vector<Vec> parse_payoffs(const std::string& text, const std::string& context) {
  std::vector<Vec> out;
  for (const std::string& group : split(text, ';')) {
    Vec row;
    for (const std::string& cell : split(group, ','))
      row.push_back(parse_real(trim(cell), context));
    out.push_back(std::move(row));
  }
  return out;
}

std::string format_payoffs(const std::vector<Vec>& payoffs) {
  std::string out;
  for (size_t i = 0; i < payoffs.size(); ++i) {
    if (i) out += ';';
    for (size_t a = 0; a < payoffs[i].size(); ++a) {
      if (a) out += ',';
      out += format_real(payoffs[i][a]);
    }
  }
  return out;
}

}  // namespace

const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> kMethods = {
      "sit",        "bc",     "icq", "sit_no_priority", "sit_no_attention", "sit_no_ensemble",
      "sit_no_gat",
  };
  return kMethods;
}

bool method_known(const std::string& method) {
  const auto& m = known_methods();
  return std::find(m.begin(), m.end(), method) != m.end();
}

DatasetComposition parse_mixture(const std::string& text, int n_agents, int episodes) {
  DatasetComposition comp;
  comp.episodes = episodes;
  for (const std::string& part_raw : split(text, '+')) {
    const std::string part = trim(part_raw);
    const size_t open = part.find('[');
    const size_t close = part.rfind(']');
    if (open == std::string::npos || close == std::string::npos || close < open ||
        close + 1 != part.size())
      throw ConfigError("mixture component '" + part + "': expected fraction[levels]");
    MixtureComponent c;
    c.fraction = parse_real(trim(part.substr(0, open)), "mixture fraction");
    for (const std::string& lvl : split(part.substr(open + 1, close - open - 1), ','))
      c.levels.push_back(skill_from(trim(lvl)));
    if (static_cast<int>(c.levels.size()) != n_agents)
      throw ConfigError("mixture component '" + part + "': " + std::to_string(c.levels.size()) +
                        " levels for " + std::to_string(n_agents) + " agents");
    if (c.fraction <= 0.0 || c.fraction > 1.0)
      throw ConfigError("mixture component '" + part + "': fraction must be in (0, 1]");
    comp.mixture.push_back(std::move(c));
  }
  double total = 0.0;
  for (const MixtureComponent& c : comp.mixture) total += c.fraction;
  if (std::fabs(total - 1.0) > 1e-9)
    throw ConfigError("mixture '" + text + "': fractions sum to " + format_real(total) +
                      ", expected 1");
  return comp;
}

std::vector<int> parse_seed_list(const std::string& text) {
  std::vector<int> seeds;
  for (const std::string& cell : split(text, ',')) {
    const std::string t = trim(cell);
    try {
      size_t pos = 0;
      const long v = std::stol(t, &pos);
      if (pos != t.size() || v < 0) throw std::invalid_argument(t);
      seeds.push_back(static_cast<int>(v));
    } catch (const std::exception&) {
      throw ConfigError("seeds: not a non-negative integer: '" + t + "'");
    }
  }
  if (seeds.empty()) throw ConfigError("seeds: empty list");
  std::set<int> uniq(seeds.begin(), seeds.end());
  if (uniq.size() != seeds.size()) throw ConfigError("seeds: duplicate entries");
  return seeds;
}

ExperimentConfig ExperimentConfig::parse_text(const std::string& text, const std::string& origin) {
  KvMap kv(text, origin);
  ExperimentConfig cfg;

  std::string raw;
  if (!kv.take("env.id", &raw)) throw ConfigError(origin + ": missing required key 'env.id'");
  const EnvId env_id = env_id_from(raw);
  if (!kv.take("env.n_agents", &raw))
    throw ConfigError(origin + ": missing required key 'env.n_agents'");
  const int n_agents = parse_int(raw, origin + ": env.n_agents");

  if (env_id == EnvId::kMatrixGame) {
    if (kv.take("env.payoffs", &raw))
      cfg.env = EnvSpec::matrix_game(n_agents, parse_payoffs(raw, origin + ": env.payoffs"));
    else
      cfg.env = EnvSpec::matrix_game(n_agents);
  } else {
    const int grid = take_int(kv, "env.grid_size", 6);
    const int steps = take_int(kv, "env.max_steps", 25);
    cfg.env = EnvSpec::spread_grid(n_agents, grid, steps);
  }

  const int episodes = take_int(kv, "dataset.episodes", 0);
  if (!kv.take("dataset.mixture", &raw))
    throw ConfigError(origin + ": missing required key 'dataset.mixture'");
  cfg.composition = parse_mixture(raw, cfg.env.n_agents, episodes);

  cfg.stage1.lr = take_real(kv, "stage1.lr", cfg.stage1.lr);
  cfg.stage1.batch = take_int(kv, "stage1.batch", cfg.stage1.batch);
  cfg.stage1.epochs = take_int(kv, "stage1.epochs", cfg.stage1.epochs);
  cfg.stage1.grad_clip = take_real(kv, "stage1.grad_clip", cfg.stage1.grad_clip);
  cfg.stage1.hidden = take_int(kv, "stage1.hidden", cfg.stage1.hidden);
  cfg.stage1.embed = take_int(kv, "stage1.embed", cfg.stage1.embed);
  cfg.stage1.members = take_int(kv, "stage1.members", cfg.stage1.members);
  cfg.stage1.holdout_fraction = take_real(kv, "stage1.holdout_fraction", cfg.stage1.holdout_fraction);
  cfg.stage1.log_interval = take_int(kv, "stage1.log_interval", cfg.stage1.log_interval);
  cfg.stage1.use_attention = take_bool(kv, "stage1.use_attention", cfg.stage1.use_attention);

  cfg.stage2.alpha = take_real(kv, "stage2.alpha", cfg.stage2.alpha);
  cfg.stage2.rescale_lo = take_real(kv, "stage2.rescale_lo", cfg.stage2.rescale_lo);
  cfg.stage2.rescale_hi = take_real(kv, "stage2.rescale_hi", cfg.stage2.rescale_hi);
  cfg.stage2.gamma = take_real(kv, "stage2.gamma", cfg.stage2.gamma);
  cfg.stage2.unit_uncertainty = take_bool(kv, "stage2.unit_uncertainty", cfg.stage2.unit_uncertainty);

  cfg.stage3.gamma = take_real(kv, "stage3.gamma", cfg.stage3.gamma);
  cfg.stage3.beta = take_real(kv, "stage3.beta", cfg.stage3.beta);
  cfg.stage3.eta = take_real(kv, "stage3.eta", cfg.stage3.eta);
  cfg.stage3.actor_lr = take_real(kv, "stage3.actor_lr", cfg.stage3.actor_lr);
  cfg.stage3.critic_lr = take_real(kv, "stage3.critic_lr", cfg.stage3.critic_lr);
  cfg.stage3.batch = take_int(kv, "stage3.batch", cfg.stage3.batch);
  cfg.stage3.epochs = take_int(kv, "stage3.epochs", cfg.stage3.epochs);
  cfg.stage3.target_interval = take_int(kv, "stage3.target_interval", cfg.stage3.target_interval);
  cfg.stage3.grad_clip = take_real(kv, "stage3.grad_clip", cfg.stage3.grad_clip);
  cfg.stage3.critic_hidden = take_int(kv, "stage3.critic_hidden", cfg.stage3.critic_hidden);
  cfg.stage3.actor_hidden = take_int(kv, "stage3.actor_hidden", cfg.stage3.actor_hidden);
  cfg.stage3.use_gat = take_bool(kv, "stage3.use_gat", cfg.stage3.use_gat);
  cfg.stage3.exp_clamp = take_real(kv, "stage3.exp_clamp", cfg.stage3.exp_clamp);
  cfg.stage3.u_floor_frac = take_real(kv, "stage3.u_floor_frac", cfg.stage3.u_floor_frac);
  cfg.stage3.beta_icq = take_real(kv, "stage3.beta_icq", cfg.stage3.beta_icq);
  cfg.stage3.eval_interval = take_int(kv, "stage3.eval_interval", cfg.stage3.eval_interval);
  cfg.stage3.eval_episodes = take_int(kv, "stage3.eval_episodes", cfg.stage3.eval_episodes);
  cfg.stage3.final_eval_episodes =
      take_int(kv, "stage3.final_eval_episodes", cfg.stage3.final_eval_episodes);

  if (kv.take("method", &raw)) cfg.method = trim(raw);
  if (kv.take("seeds", &raw)) cfg.seeds = parse_seed_list(raw);
  if (kv.take("out", &raw)) cfg.out_dir = trim(raw);

  kv.reject_leftovers();
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_text(buf.str(), path);
}

void ExperimentConfig::validate() const {
  env.validate();
  if (composition.mixture.empty()) throw ConfigError("config: dataset.mixture is empty");
  if (composition.episodes < 1) throw ConfigError("config: dataset.episodes must be >= 1");
  component_episode_counts(composition);  // checks fractions sum to 1
  for (const MixtureComponent& c : composition.mixture)
    if (static_cast<int>(c.levels.size()) != env.n_agents)
      throw ConfigError("config: mixture component needs one level per agent");
  stage1.validate();
  stage2.validate();
  stage3.validate();
  if (!method_known(method)) {
    std::string names;
    for (const std::string& m : known_methods()) names += (names.empty() ? "" : ", ") + m;
    throw ConfigError("config: unknown method '" + method + "' (known: " + names + ")");
  }
  if (seeds.empty()) throw ConfigError("config: seeds must be non-empty");
  for (int s : seeds)
    if (s < 0) throw ConfigError("config: seeds must be non-negative");
  if (out_dir.empty()) throw ConfigError("config: out directory must be non-empty");
}

std::map<std::string, std::string> ExperimentConfig::to_kv() const {
  std::map<std::string, std::string> kv;
  kv["env.id"] = env_id_name(env.env_id);
  kv["env.n_agents"] = std::to_string(env.n_agents);
  if (env.env_id == EnvId::kMatrixGame) {
    kv["env.payoffs"] = format_payoffs(env.payoffs);
  } else {
    kv["env.grid_size"] = std::to_string(env.grid_size);
    kv["env.max_steps"] = std::to_string(env.max_steps);
  }
  kv["dataset.mixture"] = composition.label();
  kv["dataset.episodes"] = std::to_string(composition.episodes);

  kv["stage1.lr"] = format_real(stage1.lr);
  kv["stage1.batch"] = std::to_string(stage1.batch);
  kv["stage1.epochs"] = std::to_string(stage1.epochs);
  kv["stage1.grad_clip"] = format_real(stage1.grad_clip);
  kv["stage1.hidden"] = std::to_string(stage1.hidden);
  kv["stage1.embed"] = std::to_string(stage1.embed);
  kv["stage1.members"] = std::to_string(stage1.members);
  kv["stage1.holdout_fraction"] = format_real(stage1.holdout_fraction);
  kv["stage1.log_interval"] = std::to_string(stage1.log_interval);
  kv["stage1.use_attention"] = stage1.use_attention ? "true" : "false";

  kv["stage2.alpha"] = format_real(stage2.alpha);
  kv["stage2.rescale_lo"] = format_real(stage2.rescale_lo);
  kv["stage2.rescale_hi"] = format_real(stage2.rescale_hi);
  kv["stage2.gamma"] = format_real(stage2.gamma);
  kv["stage2.unit_uncertainty"] = stage2.unit_uncertainty ? "true" : "false";

  kv["stage3.gamma"] = format_real(stage3.gamma);
  kv["stage3.beta"] = format_real(stage3.beta);
  kv["stage3.eta"] = format_real(stage3.eta);
  kv["stage3.actor_lr"] = format_real(stage3.actor_lr);
  kv["stage3.critic_lr"] = format_real(stage3.critic_lr);
  kv["stage3.batch"] = std::to_string(stage3.batch);
  kv["stage3.epochs"] = std::to_string(stage3.epochs);
  kv["stage3.target_interval"] = std::to_string(stage3.target_interval);
  kv["stage3.grad_clip"] = format_real(stage3.grad_clip);
  kv["stage3.critic_hidden"] = std::to_string(stage3.critic_hidden);
  kv["stage3.actor_hidden"] = std::to_string(stage3.actor_hidden);
  kv["stage3.use_gat"] = stage3.use_gat ? "true" : "false";
  kv["stage3.exp_clamp"] = format_real(stage3.exp_clamp);
  kv["stage3.u_floor_frac"] = format_real(stage3.u_floor_frac);
  kv["stage3.beta_icq"] = format_real(stage3.beta_icq);
  kv["stage3.eval_interval"] = std::to_string(stage3.eval_interval);
  kv["stage3.eval_episodes"] = std::to_string(stage3.eval_episodes);
  kv["stage3.final_eval_episodes"] = std::to_string(stage3.final_eval_episodes);

  kv["method"] = method;
  std::string seed_text;
  for (size_t i = 0; i < seeds.size(); ++i)
    seed_text += (i ? "," : "") + std::to_string(seeds[i]);
  kv["seeds"] = seed_text;
  kv["out"] = out_dir;
  return kv;
}

}  // namespace sit
