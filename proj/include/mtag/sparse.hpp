#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "mtag/error.hpp"

namespace mtag {

using FeatureId = std::uint32_t;

struct SparseEntry {
  FeatureId index;
  double weight;

  friend bool operator==(const SparseEntry&, const SparseEntry&) = default;
};

using SparseView = std::span<const SparseEntry>;

// Sorted (index, weight) pairs. Indices strictly increase, stay below
// `dimension`, and no stored weight is zero.
class SparseVector {
 public:
  SparseVector() = default;
  explicit SparseVector(std::size_t dimension) : dimension_(dimension) {}

  // Builds from unordered pairs; duplicate indices are summed, zeros dropped.
  static SparseVector from_pairs(std::vector<SparseEntry> pairs, std::size_t dimension) {
    std::sort(pairs.begin(), pairs.end(),
              [](const SparseEntry& a, const SparseEntry& b) { return a.index < b.index; });
    SparseVector out(dimension);
    for (const auto& e : pairs) {
      if (e.index >= dimension) throw InternalError("sparse index out of range");
      if (!out.entries_.empty() && out.entries_.back().index == e.index)
        out.entries_.back().weight += e.weight;
      else
        out.entries_.push_back(e);
    }
    std::erase_if(out.entries_, [](const SparseEntry& e) { return e.weight == 0.0; });
    return out;
  }

  // Appends an entry; the index must exceed every stored index.
  void push_back(FeatureId index, double weight) {
    if (index >= dimension_ || (!entries_.empty() && entries_.back().index >= index))
      throw InternalError("sparse push_back out of order");
    if (weight != 0.0) entries_.push_back({index, weight});
  }

  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t nnz() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const std::vector<SparseEntry>& entries() const noexcept { return entries_; }
  SparseView view() const noexcept { return entries_; }

  double get(FeatureId index) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), index,
                               [](const SparseEntry& e, FeatureId i) { return e.index < i; });
    return (it != entries_.end() && it->index == index) ? it->weight : 0.0;
  }

  double squared_norm() const {
    double s = 0.0;
    for (const auto& e : entries_) s += e.weight * e.weight;
    return s;
  }
  double norm() const { return std::sqrt(squared_norm()); }

  void scale(double factor) {
    for (auto& e : entries_) e.weight *= factor;
    std::erase_if(entries_, [](const SparseEntry& e) { return e.weight == 0.0; });
  }

  // Scales to unit Euclidean norm; the zero vector stays zero.
  void normalize() {
    const double n = norm();
    if (n > 0.0) scale(1.0 / n);
  }

  bool valid() const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].index >= dimension_ || entries_[i].weight == 0.0 || !std::isfinite(entries_[i].weight))
        return false;
      if (i > 0 && entries_[i - 1].index >= entries_[i].index) return false;
    }
    return true;
  }

  friend bool operator==(const SparseVector&, const SparseVector&) = default;

 private:
  std::size_t dimension_ = 0;
  std::vector<SparseEntry> entries_;
};

inline double dot(SparseView x, std::span<const double> dense) {
  double s = 0.0;
  for (const auto& e : x) s += e.weight * dense[e.index];
  return s;
}

inline double dot(SparseView a, SparseView b) {
  double s = 0.0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (i->index < j->index)
      ++i;
    else if (j->index < i->index)
      ++j;
    else {
      s += i->weight * j->weight;
      ++i;
      ++j;
    }
  }
  return s;
}

inline void axpy(double alpha, SparseView x, std::span<double> dense) {
  for (const auto& e : x) dense[e.index] += alpha * e.weight;
}

}  // namespace mtag
