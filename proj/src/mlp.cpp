#include "sit/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace sit {

Vec matvec(const Matrix& w, const Vec& x, const std::string& what) {
  if (static_cast<int>(x.size()) != w.cols)
    throw std::invalid_argument(what + ": input size " + std::to_string(x.size()) +
                                ", expected " + std::to_string(w.cols));
  Vec y(static_cast<size_t>(w.rows), 0.0);
  for (int r = 0; r < w.rows; ++r) {
    const double* row = &w.data[static_cast<size_t>(r) * w.cols];
    double s = 0.0;
    for (int c = 0; c < w.cols; ++c) s += row[c] * x[static_cast<size_t>(c)];
    y[static_cast<size_t>(r)] = s;
  }
  return y;
}

void zero_grads(const std::vector<ParamView>& params) {
  for (const ParamView& p : params)
    std::fill(p.grad->begin(), p.grad->end(), 0.0);
}

void init_uniform_fanin(Matrix& w, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(w.cols));
  for (double& v : w.data) v = rng.uniform(-bound, bound);
}

Vec apply_activation(Activation act, Vec x) {
  if (act == Activation::kRelu)
    for (double& v : x) v = v > 0.0 ? v : 0.0;
  return x;
}

Mlp Mlp::make(std::span<const int> dims, Rng& rng, Activation hidden, Activation out) {
  if (dims.size() < 2) throw std::invalid_argument("Mlp::make: need at least {in, out} dims");
  Mlp m;
  m.hidden_act = hidden;
  m.out_act = out;
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    if (dims[i] <= 0 || dims[i + 1] <= 0)
      throw std::invalid_argument("Mlp::make: non-positive layer dim");
    Dense layer(dims[i + 1], dims[i]);
    init_uniform_fanin(layer.w, rng);
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[i]));
    for (double& v : layer.b) v = rng.uniform(-bound, bound);
    m.layers.push_back(std::move(layer));
  }
  return m;
}

int Mlp::in_dim() const {
  if (layers.empty()) throw std::logic_error("Mlp::in_dim: empty network");
  return layers.front().w.cols;
}

int Mlp::out_dim() const {
  if (layers.empty()) throw std::logic_error("Mlp::out_dim: empty network");
  return layers.back().w.rows;
}

Vec Mlp::forward(const Vec& x) const {
  if (layers.empty()) throw std::logic_error("Mlp::forward: empty network");
  Vec h = x;
  for (size_t i = 0; i < layers.size(); ++i) {
    const Dense& l = layers[i];
    Vec z = matvec(l.w, h, "mlp layer " + std::to_string(i));
    for (int r = 0; r < l.w.rows; ++r) z[static_cast<size_t>(r)] += l.b[static_cast<size_t>(r)];
    const bool last = (i + 1 == layers.size());
    h = apply_activation(last ? out_act : hidden_act, std::move(z));
  }
  return h;
}

void Mlp::append_params(const std::string& prefix, std::vector<ParamView>& out) {
  for (size_t i = 0; i < layers.size(); ++i) {
    Dense& l = layers[i];
    out.push_back({prefix + ".w" + std::to_string(i), &l.w.data, &l.gw.data, l.w.rows, l.w.cols});
    out.push_back({prefix + ".b" + std::to_string(i), &l.b, &l.gb, static_cast<int>(l.b.size()), 1});
  }
}

}  // namespace sit
