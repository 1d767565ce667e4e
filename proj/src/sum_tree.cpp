#include "sop/sum_tree.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace sop::replay {

SumTree::SumTree(std::size_t capacity) : capacity_(capacity), leaves_(1) {
  if (capacity == 0) throw std::invalid_argument("sum tree: capacity must be positive");
  while (leaves_ < capacity) leaves_ <<= 1;
  nodes_.assign(2 * leaves_, 0.0);
}

double SumTree::leaf(std::size_t slot) const {
  if (slot >= capacity_) throw std::out_of_range("sum tree: slot " + std::to_string(slot));
  return nodes_[leaves_ + slot];
}

void SumTree::set(std::size_t slot, double value) {
  if (slot >= capacity_) throw std::out_of_range("sum tree: slot " + std::to_string(slot));
  if (!(value >= 0.0) || !std::isfinite(value))
    throw std::invalid_argument("sum tree: leaf value must be finite and >= 0");
  std::size_t i = leaves_ + slot;
  nodes_[i] = value;
  for (i >>= 1; i >= 1; i >>= 1) nodes_[i] = nodes_[2 * i] + nodes_[2 * i + 1];
  if (++writes_ % kRebuildInterval == 0) rebuild();
}

std::size_t SumTree::find(double mass) const {
  std::size_t i = 1;
  while (i < leaves_) {
    const double left = nodes_[2 * i];
    const double right = nodes_[2 * i + 1];
    if (mass < left || right <= 0.0) {
      i = 2 * i;
    } else {
      mass -= left;
      i = 2 * i + 1;
    }
  }
  return i - leaves_;
}

void SumTree::rebuild() {
  for (std::size_t i = leaves_ - 1; i >= 1; --i) nodes_[i] = nodes_[2 * i] + nodes_[2 * i + 1];
}

bool SumTree::consistent() const {
  for (std::size_t i = 1; i < leaves_; ++i)
    if (nodes_[i] != nodes_[2 * i] + nodes_[2 * i + 1]) return false;
  return true;
}

}  // namespace sop::replay
