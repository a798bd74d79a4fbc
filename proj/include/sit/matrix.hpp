#pragma once
// Dense row-major matrix plus the named-parameter view used by the optimizer,
// gradient clipping, checkpoint IO and the autodiff tape.

#include <string>
#include <vector>

#include "sit/common.hpp"

namespace sit {

struct Matrix {
  int rows = 0;
  int cols = 0;
  Vec data;  // row-major, rows*cols entries

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  void zero() { std::fill(data.begin(), data.end(), 0.0); }
};

// y = W x  (y has W.rows entries). Throws on shape mismatch, naming the operation.
Vec matvec(const Matrix& w, const Vec& x, const std::string& what);

// A mutable, named view over one parameter tensor and its gradient buffer.
// rows/cols describe the logical shape (cols == 1 for bias vectors).
struct ParamView {
  std::string name;
  Vec* value = nullptr;
  Vec* grad = nullptr;
  int rows = 0;
  int cols = 1;
};

// Sets every referenced gradient buffer to zero.
void zero_grads(const std::vector<ParamView>& params);

}  // namespace sit
