#pragma once
// Complete-binary-tree prefix-sum structure for proportional sampling.
// Leaves hold non-negative priorities; every internal node stores the sum of
// its children. sample(u) descends from the root: left when u is below the
// left child's sum, otherwise right with u reduced by it — O(log n), and a
// zero-priority leaf is never returned. update() is O(log n).

#include <span>
#include <vector>

namespace sit {

class SumTree {
 public:
  explicit SumTree(std::span<const double> priorities);

  int size() const { return n_; }
  double total() const;
  double leaf(int index) const;

  // Replaces one leaf priority (must be finite and >= 0) and repairs ancestors.
  void update(int index, double value);

  // Maps u in [0, total) to a leaf index; throws std::invalid_argument outside
  // that range (including when the total priority is zero).
  int sample(double u) const;

  // Max |node - (left + right)| over internal nodes; diagnostics for tests.
  double max_consistency_error() const;

 private:
  int n_ = 0;     // leaves in use
  int base_ = 1;  // leaf i lives at tree_[base_ + i]
  std::vector<double> tree_;
};

}  // namespace sit
