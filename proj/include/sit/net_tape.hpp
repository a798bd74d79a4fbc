#pragma once
// Glue for running Mlp/Matrix parameters through the autodiff tape: register
// each tensor once per tape, then apply layers to input nodes.

#include <array>
#include <vector>

#include "sit/mlp.hpp"
#include "sit/tape.hpp"

namespace sit {

struct MlpNodes {
  std::vector<std::array<int, 2>> layers;  // (weight node, bias node) per layer
};

inline MlpNodes bind_mlp(Tape& tape, Mlp& m) {
  MlpNodes ids;
  ids.layers.reserve(m.layers.size());
  for (Dense& l : m.layers) {
    const int w = tape.param({"w", &l.w.data, &l.gw.data, l.w.rows, l.w.cols});
    const int b = tape.param({"b", &l.b, &l.gb, static_cast<int>(l.b.size()), 1});
    ids.layers.push_back({w, b});
  }
  return ids;
}

inline int apply_mlp(Tape& tape, const Mlp& m, const MlpNodes& ids, int x) {
  int h = x;
  for (size_t i = 0; i < m.layers.size(); ++i) {
    h = tape.affine(ids.layers[i][0], ids.layers[i][1], h);
    const bool last = (i + 1 == m.layers.size());
    if ((last ? m.out_act : m.hidden_act) == Activation::kRelu) h = tape.relu(h);
  }
  return h;
}

// Registers a bare matrix parameter (e.g. a bias-free projection).
inline int bind_matrix(Tape& tape, Matrix& w, Matrix& gw) {
  return tape.param({"m", &w.data, &gw.data, w.rows, w.cols});
}

}  // namespace sit
