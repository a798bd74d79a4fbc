#include "sit/sumtree.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace sit {

SumTree::SumTree(std::span<const double> priorities) {
  n_ = static_cast<int>(priorities.size());
  if (n_ < 1) throw std::invalid_argument("SumTree: need at least one leaf");
  base_ = 1;
  while (base_ < n_) base_ *= 2;
  tree_.assign(static_cast<size_t>(2 * base_), 0.0);
  for (int i = 0; i < n_; ++i) {
    const double p = priorities[static_cast<size_t>(i)];
    if (!std::isfinite(p) || p < 0.0)
      throw std::invalid_argument("SumTree: priority at " + std::to_string(i) +
                                  " must be finite and non-negative");
    tree_[static_cast<size_t>(base_ + i)] = p;
  }
  for (int i = base_ - 1; i >= 1; --i)
    tree_[static_cast<size_t>(i)] = tree_[static_cast<size_t>(2 * i)] + tree_[static_cast<size_t>(2 * i + 1)];
}

double SumTree::total() const { return tree_[1]; }

double SumTree::leaf(int index) const {
  if (index < 0 || index >= n_)
    throw std::out_of_range("SumTree::leaf: index " + std::to_string(index) + " out of range");
  return tree_[static_cast<size_t>(base_ + index)];
}

void SumTree::update(int index, double value) {
  if (index < 0 || index >= n_)
    throw std::out_of_range("SumTree::update: index " + std::to_string(index) + " out of range");
  if (!std::isfinite(value) || value < 0.0)
    throw std::invalid_argument("SumTree::update: value must be finite and non-negative");
  int i = base_ + index;
  tree_[static_cast<size_t>(i)] = value;
  for (i /= 2; i >= 1; i /= 2)
    tree_[static_cast<size_t>(i)] = tree_[static_cast<size_t>(2 * i)] + tree_[static_cast<size_t>(2 * i + 1)];
}

int SumTree::sample(double u) const {
  if (!(u >= 0.0) || !(u < total()))
    throw std::invalid_argument("SumTree::sample: u must be in [0, total); total is " +
                                std::to_string(total()));
  int i = 1;
  while (i < base_) {
    const double left = tree_[static_cast<size_t>(2 * i)];
    if (u < left) {
      i = 2 * i;
    } else {
      u -= left;
      i = 2 * i + 1;
    }
  }
  const int leaf_index = i - base_;
  if (leaf_index >= n_)
    throw std::logic_error("SumTree::sample: descent reached a padding leaf");
  return leaf_index;
}

double SumTree::max_consistency_error() const {
  double worst = 0.0;
  for (int i = 1; i < base_; ++i) {
    const double err = std::abs(tree_[static_cast<size_t>(i)] - tree_[static_cast<size_t>(2 * i)] -
                                tree_[static_cast<size_t>(2 * i + 1)]);
    if (err > worst) worst = err;
  }
  return worst;
}

}  // namespace sit
