#include "mvpr/matching.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "mvpr/error.hpp"

namespace mvpr {

namespace {

void check_input(const CostMatrix& cost) {
  const auto n = cost.size();
  if (n % 2 != 0) {
    throw ContractViolation("perfect matching needs an even point count, got " +
                            std::to_string(n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j && !std::isfinite(cost(i, j))) {
        throw ContractViolation("matching cost between " + std::to_string(i) + " and " +
                                std::to_string(j) + " is not finite");
      }
    }
  }
}

double total(const CostMatrix& cost, const std::vector<std::pair<std::size_t, std::size_t>>& p) {
  double sum = 0.0;
  for (const auto& [a, b] : p) sum += cost(a, b);
  return sum;
}

void canonicalize(Matching& m, const CostMatrix& cost) {
  for (auto& [a, b] : m.pairs) {
    if (a > b) std::swap(a, b);
  }
  std::sort(m.pairs.begin(), m.pairs.end());
  m.cost = total(cost, m.pairs);
}

}  // namespace

Matching match_exact(const CostMatrix& cost) {
  check_input(cost);
  const auto n = cost.size();
  if (n > 22) throw ContractViolation("exact matching limited to 22 points");
  Matching result;
  result.exact = true;
  if (n == 0) return result;

  // best[mask]: minimum cost to pair off exactly the points in mask. Every
  // transition pairs the lowest unmatched point, so each matching is reached
  // along exactly one path and last_pair[mask] records its final pair.
  const std::uint32_t full = (std::uint32_t{1} << n) - 1;
  std::vector<double> best(std::size_t{full} + 1, std::numeric_limits<double>::infinity());
  std::vector<std::pair<std::uint8_t, std::uint8_t>> last_pair(std::size_t{full} + 1);
  best[0] = 0.0;
  for (std::uint32_t mask = 0; mask < full; ++mask) {
    if (best[mask] == std::numeric_limits<double>::infinity()) continue;
    std::size_t i = 0;
    while (mask & (std::uint32_t{1} << i)) ++i;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (mask & (std::uint32_t{1} << j)) continue;
      const std::uint32_t next = mask | (std::uint32_t{1} << i) | (std::uint32_t{1} << j);
      const double c = best[mask] + cost(i, j);
      if (c < best[next]) {
        best[next] = c;
        last_pair[next] = {static_cast<std::uint8_t>(i), static_cast<std::uint8_t>(j)};
      }
    }
  }

  for (std::uint32_t mask = full; mask != 0;) {
    const auto [i, j] = last_pair[mask];
    result.pairs.emplace_back(i, j);
    mask &= ~((std::uint32_t{1} << i) | (std::uint32_t{1} << j));
  }
  canonicalize(result, cost);
  return result;
}

Matching match_greedy_2opt(const CostMatrix& cost) {
  check_input(cost);
  const auto n = cost.size();
  Matching result;
  result.exact = false;

  struct Candidate {
    double c;
    std::size_t i, j;
  };
  std::vector<Candidate> all;
  all.reserve(n * (n - (n > 0)) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) all.push_back({cost(i, j), i, j});
  }
  std::sort(all.begin(), all.end(), [](const Candidate& a, const Candidate& b) {
    if (a.c != b.c) return a.c < b.c;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  });
  std::vector<bool> used(n, false);
  for (const auto& cand : all) {
    if (used[cand.i] || used[cand.j]) continue;
    used[cand.i] = used[cand.j] = true;
    result.pairs.emplace_back(cand.i, cand.j);
  }

  // 2-opt: for pairs (a,b), (c,d) try (a,c)(b,d) and (a,d)(b,c).
  auto& p = result.pairs;
  bool improved = true;
  while (improved) {
    improved = false;
    for (std::size_t x = 0; x < p.size(); ++x) {
      for (std::size_t y = x + 1; y < p.size(); ++y) {
        const auto [a, b] = p[x];
        const auto [c, d] = p[y];
        const double now = cost(a, b) + cost(c, d);
        const double alt1 = cost(a, c) + cost(b, d);
        const double alt2 = cost(a, d) + cost(b, c);
        // Relative slack so rounding noise cannot cycle.
        const double slack = 1e-12 * std::max(1.0, now);
        if (alt1 < now - slack && alt1 <= alt2) {
          p[x] = {a, c};
          p[y] = {b, d};
          improved = true;
        } else if (alt2 < now - slack) {
          p[x] = {a, d};
          p[y] = {b, c};
          improved = true;
        }
      }
    }
  }
  canonicalize(result, cost);
  return result;
}

Matching min_weight_perfect_matching(const CostMatrix& cost) {
  return cost.size() <= kExactMatchingLimit ? match_exact(cost) : match_greedy_2opt(cost);
}

}  // namespace mvpr
