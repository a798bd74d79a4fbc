#pragma once
// RMSProp optimizer and global-norm gradient clipping.

#include <vector>

#include "sit/common.hpp"
#include "sit/matrix.hpp"

namespace sit {

// RMSProp with a running average of squared gradients:
//   s <- decay*s + (1-decay)*g^2;  p <- p - lr * g / (sqrt(s) + eps)
// State is keyed by parameter order; the same view list must be passed on
// every step. Non-finite gradients raise DivergenceError.
class RmsProp {
 public:
  explicit RmsProp(double lr, double decay = 0.99, double eps = 1e-8);

  void step(const std::vector<ParamView>& params);
  double lr() const { return lr_; }

 private:
  double lr_, decay_, eps_;
  std::vector<Vec> sq_avg_;
};

// Returns the global L2 norm over all gradient buffers.
double global_grad_norm(const std::vector<ParamView>& params);

// Scales all gradients so the global L2 norm is at most max_norm.
// Returns the pre-clip norm. A second application is a no-op.
double clip_grad_norm(const std::vector<ParamView>& params, double max_norm);

}  // namespace sit
