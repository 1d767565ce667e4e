#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace sop::replay {

/// Complete binary tree of partial sums over `capacity` leaves. Leaf i holds
/// the sampling mass of buffer slot i.
class SumTree {
 public:
  static constexpr std::uint64_t kRebuildInterval = 100000;

  explicit SumTree(std::size_t capacity);

  std::size_t capacity() const { return capacity_; }
  double total() const { return nodes_[1]; }
  double leaf(std::size_t slot) const;

  /// Sets a leaf and refreshes its ancestors. Every kRebuildInterval writes
  /// the whole tree is recomputed from the leaves.
  void set(std::size_t slot, double value);

  /// Slot whose cumulative range contains `mass`, for mass in [0, total()).
  /// Never returns a zero-mass leaf while total() > 0.
  std::size_t find(double mass) const;

  /// Recomputes every internal node from the leaves.
  void rebuild();

  /// True if every internal node equals the sum of its two children.
  bool consistent() const;

  std::uint64_t writes() const { return writes_; }

 private:
  std::size_t capacity_;
  std::size_t leaves_;  // power of two >= capacity
  std::vector<double> nodes_;
  std::uint64_t writes_ = 0;
};

}  // namespace sop::replay
