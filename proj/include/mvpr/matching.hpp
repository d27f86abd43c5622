#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace mvpr {

// Dense symmetric cost matrix, row-major n x n.
class CostMatrix {
 public:
  CostMatrix() = default;
  explicit CostMatrix(std::size_t n, double fill = 0.0) : n_(n), data_(n * n, fill) {}

  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

struct Matching {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // first < second, sorted by first
  double cost = 0.0;
  bool exact = false;
};

// Largest point count solved exactly by the bitmask dynamic program.
inline constexpr std::size_t kExactMatchingLimit = 18;

// Exact minimum-weight perfect matching, O(2^n n). n must be even and
// <= 22; intended for n <= kExactMatchingLimit.
Matching match_exact(const CostMatrix& cost);

// Greedy closest-pair matching refined by 2-opt pair swaps until no swap
// improves the total. Not guaranteed optimal.
Matching match_greedy_2opt(const CostMatrix& cost);

// Exact up to kExactMatchingLimit points, heuristic beyond. Throws
// ContractViolation for an odd point count or non-finite costs.
Matching min_weight_perfect_matching(const CostMatrix& cost);

}  // namespace mvpr
