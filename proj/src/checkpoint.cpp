#include "sit/checkpoint.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace sit {

constexpr int kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const std::string& kind,
                     const nlohmann::json& meta, const std::vector<ParamView>& params) {
  std::ofstream out(path);
  if (!out) throw ConfigError("save_checkpoint: cannot open '" + path + "' for writing");
  nlohmann::json header;
  header["format_version"] = kCheckpointVersion;
  header["kind"] = kind;
  header["meta"] = meta;
  out << header.dump() << "\n";
  for (const ParamView& p : params) {
    if (p.name.find(' ') != std::string::npos)
      throw std::invalid_argument("save_checkpoint: parameter name contains space: " + p.name);
    out << "param " << p.name << " " << p.rows << " " << p.cols;
    for (double v : *p.value) out << " " << format_real(v);
    out << "\n";
  }
  out << "end\n";
  if (!out) throw ConfigError("save_checkpoint: write failed for '" + path + "'");
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("load_checkpoint: cannot open '" + path + "'");
  CheckpointData ckpt;
  std::string line;
  int lineno = 0;

  auto fail = [&](const std::string& why) -> void {
    throw ConfigError("load_checkpoint: " + path + ":" + std::to_string(lineno) + ": " + why);
  };

  if (!std::getline(in, line)) {
    lineno = 1;
    fail("empty file");
  }
  ++lineno;
  try {
    nlohmann::json header = nlohmann::json::parse(line);
    ckpt.format_version = header.at("format_version").get<int>();
    ckpt.kind = header.at("kind").get<std::string>();
    ckpt.meta = header.value("meta", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("bad header: ") + e.what());
  }
  if (ckpt.format_version != kCheckpointVersion)
    fail("unsupported format_version " + std::to_string(ckpt.format_version));

  bool saw_end = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line == "end") {
      saw_end = true;
      break;
    }
    std::istringstream ls(line);
    std::string tag, name;
    ls >> tag >> name;
    if (tag != "param") fail("expected 'param' or 'end', got '" + tag + "'");
    CheckpointData::Entry e;
    if (!(ls >> e.rows >> e.cols)) fail("missing shape for '" + name + "'");
    if (e.rows < 0 || e.cols < 0) fail("negative shape for '" + name + "'");
    const size_t expected = static_cast<size_t>(e.rows) * static_cast<size_t>(e.cols);
    e.values.reserve(expected);
    double v;
    while (ls >> v) e.values.push_back(v);
    if (!ls.eof()) fail("non-numeric value in '" + name + "'");
    if (e.values.size() != expected)
      fail("'" + name + "' has " + std::to_string(e.values.size()) + " values, shape implies " +
           std::to_string(expected));
    if (!ckpt.params.emplace(name, std::move(e)).second) fail("duplicate tensor '" + name + "'");
  }
  if (!saw_end) {
    ++lineno;
    fail("missing 'end' terminator");
  }
  return ckpt;
}

void assign_params(const CheckpointData& ckpt, const std::vector<ParamView>& params) {
  std::set<std::string> used;
  for (const ParamView& p : params) {
    auto it = ckpt.params.find(p.name);
    if (it == ckpt.params.end())
      throw ConfigError("checkpoint: missing tensor '" + p.name + "'");
    const CheckpointData::Entry& e = it->second;
    if (e.rows != p.rows || e.cols != p.cols)
      throw ConfigError("checkpoint: tensor '" + p.name + "' has shape " +
                        std::to_string(e.rows) + "x" + std::to_string(e.cols) + ", expected " +
                        std::to_string(p.rows) + "x" + std::to_string(p.cols));
    *p.value = e.values;
    used.insert(p.name);
  }
  for (const auto& [name, entry] : ckpt.params)
    if (!used.count(name)) throw ConfigError("checkpoint: unused tensor '" + name + "'");
}

}  // namespace sit
