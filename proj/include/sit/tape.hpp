#pragma once
// Reverse-mode automatic differentiation over vector-valued operations.
//
// A Tape records the forward computation as a sequence of nodes; backward()
// walks the sequence in reverse and accumulates gradients. Trainable leaves are
// registered through ParamView and accumulate their gradient into the view's
// buffer, so the caller zeroes grads, builds a loss, calls backward, and hands
// the same views to the optimizer.

#include <cstdint>
#include <span>
#include <vector>

#include "sit/common.hpp"
#include "sit/matrix.hpp"

namespace sit {

class Tape {
 public:
  // Constant input (no gradient).
  int leaf(Vec v);
  int leaf(const double* data, int n);
  int leaf_scalar(double v);

  // Trainable leaf: value is copied in, gradients accumulate into *view.grad.
  int param(const ParamView& view);

  // y = W x + b, where `w` is a param/leaf holding a row-major matrix.
  int affine(int w, int b, int x);
  // y = W x (no bias).
  int matvec(int w, int x);

  int relu(int x);
  int leaky_relu(int x, double slope);
  int softmax(int x);
  int log_softmax(int x);
  int concat(std::span<const int> xs);
  int dot(int u, int v);
  // Scalar y = x[index].
  int pick(int x, int index);
  int add(int u, int v);
  int sub(int u, int v);
  int scale(int x, double c);
  int add_const(int x, double c);
  int square(int x);
  // Scalar mean of all entries.
  int mean_all(int x);
  // y = sum_j weights[j] * vectors[j]; gradients flow into both.
  int weighted_sum(int weights, std::span<const int> vectors);

  const Vec& value(int id) const;
  double scalar(int id) const;

  // Backpropagates from a scalar node. Throws if the tape is empty or the node
  // is not scalar.
  void backward(int loss);

  // Clears all nodes (capacity retained) so the tape can be reused.
  void reset();
  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  enum class Op : std::uint8_t {
    kLeaf, kParam, kAffine, kMatVec, kRelu, kLeakyRelu, kSoftmax, kLogSoftmax,
    kConcat, kDot, kPick, kAdd, kSub, kScale, kAddConst, kSquare, kMeanAll,
    kWeightedSum,
  };

  struct Node {
    Op op = Op::kLeaf;
    int i0 = 0;          // op-specific: matrix rows / pick index
    int i1 = 0;          // op-specific: matrix cols
    double c = 0.0;      // op-specific: scale constant / leaky slope
    Vec value;
    Vec grad;            // allocated lazily during backward
    std::vector<int> in;
    Vec* sink = nullptr; // gradient sink for kParam
  };

  int push(Node n);
  Node& node(int id);
  const Node& cnode(int id) const;
  Vec& grad_of(int id);

  std::vector<Node> nodes_;
};

// Numerically stable softmax (max subtraction). Throws on empty input.
Vec stable_softmax(const Vec& x);

}  // namespace sit
