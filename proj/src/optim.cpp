#include "sit/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace sit {

RmsProp::RmsProp(double lr, double decay, double eps) : lr_(lr), decay_(decay), eps_(eps) {
  if (lr <= 0.0) throw std::invalid_argument("RmsProp: lr must be positive");
  if (decay < 0.0 || decay >= 1.0) throw std::invalid_argument("RmsProp: decay must be in [0,1)");
}

void RmsProp::step(const std::vector<ParamView>& params) {
  if (sq_avg_.empty()) {
    sq_avg_.reserve(params.size());
    for (const ParamView& p : params) sq_avg_.emplace_back(p.value->size(), 0.0);
  }
  if (sq_avg_.size() != params.size())
    throw std::logic_error("RmsProp: parameter list changed between steps");
  for (size_t k = 0; k < params.size(); ++k) {
    const ParamView& p = params[k];
    Vec& s = sq_avg_[k];
    if (s.size() != p.value->size())
      throw std::logic_error("RmsProp: parameter '" + p.name + "' changed size");
    for (size_t i = 0; i < s.size(); ++i) {
      const double g = (*p.grad)[i];
      if (!std::isfinite(g))
        throw DivergenceError("RmsProp: non-finite gradient in '" + p.name + "'");
      s[i] = decay_ * s[i] + (1.0 - decay_) * g * g;
      (*p.value)[i] -= lr_ * g / (std::sqrt(s[i]) + eps_);
    }
  }
}

double global_grad_norm(const std::vector<ParamView>& params) {
  double sq = 0.0;
  for (const ParamView& p : params)
    for (double g : *p.grad) sq += g * g;
  return std::sqrt(sq);
}

double clip_grad_norm(const std::vector<ParamView>& params, double max_norm) {
  if (max_norm <= 0.0) throw std::invalid_argument("clip_grad_norm: max_norm must be positive");
  const double norm = global_grad_norm(params);
  if (!std::isfinite(norm)) throw DivergenceError("clip_grad_norm: non-finite gradient norm");
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (const ParamView& p : params)
      for (double& g : *p.grad) g *= f;
  }
  return norm;
}

}  // namespace sit
