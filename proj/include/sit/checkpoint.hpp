#pragma once
// Versioned plain-text checkpoints: a JSON header line with kind + metadata,
// then one `param <name> <rows> <cols> <values...>` line per tensor (17
// significant digits), then `end`. Loading is strict: unknown kinds, missing
// tensors and shape mismatches are errors that name the offender.

#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "sit/matrix.hpp"

namespace sit {

struct CheckpointData {
  int format_version = 0;
  std::string kind;
  nlohmann::json meta;
  struct Entry {
    int rows = 0;
    int cols = 1;
    Vec values;
  };
  std::map<std::string, Entry> params;
};

void save_checkpoint(const std::string& path, const std::string& kind,
                     const nlohmann::json& meta, const std::vector<ParamView>& params);

// Throws ConfigError naming the file and line on any malformed content.
CheckpointData load_checkpoint(const std::string& path);

// Copies stored tensors into the given views; every view must be present with
// matching shape, and every stored tensor must be consumed.
void assign_params(const CheckpointData& ckpt, const std::vector<ParamView>& params);

}  // namespace sit
