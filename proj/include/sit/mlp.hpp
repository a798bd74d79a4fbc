#pragma once
// Feed-forward multi-layer perceptron with co-located gradient buffers.
// Initialization is uniform on [-1/sqrt(fan_in), 1/sqrt(fan_in)]. The chosen
// activation is applied after every hidden layer; the output layer gets the
// separately configured output activation (identity for embeddings/values).

#include <span>
#include <string>
#include <vector>

#include "sit/common.hpp"
#include "sit/matrix.hpp"

namespace sit {

enum class Activation { kIdentity, kRelu };

// One affine layer, parameters and their gradient buffers side by side.
struct Dense {
  Matrix w;   // out x in
  Vec b;      // out
  Matrix gw;  // gradient of w
  Vec gb;     // gradient of b

  Dense() = default;
  Dense(int out, int in)
      : w(out, in), b(static_cast<size_t>(out), 0.0), gw(out, in), gb(static_cast<size_t>(out), 0.0) {}
};

struct Mlp {
  std::vector<Dense> layers;
  Activation hidden_act = Activation::kRelu;
  Activation out_act = Activation::kIdentity;

  // dims = {in, h1, ..., out}. Needs at least two entries.
  static Mlp make(std::span<const int> dims, Rng& rng,
                  Activation hidden = Activation::kRelu,
                  Activation out = Activation::kIdentity);

  int in_dim() const;
  int out_dim() const;

  // Plain inference pass (no gradient recording).
  Vec forward(const Vec& x) const;

  // Appends (w, b) views for every layer, names prefixed with `prefix`.
  void append_params(const std::string& prefix, std::vector<ParamView>& out);
};

// Uniform +-1/sqrt(fan_in) initialization for a bare matrix (fan_in = cols).
void init_uniform_fanin(Matrix& w, Rng& rng);

Vec apply_activation(Activation act, Vec x);

}  // namespace sit
