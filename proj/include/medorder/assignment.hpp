// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace medorder {

// Pair weight compared lexicographically: similarity first, then agreement on
// the remaining fields, then closeness of list positions.
struct PairWeight {
  double similarity = 0.0;
  double agreement = 0.0;
  double position = 0.0;

  friend PairWeight operator+(PairWeight a, PairWeight b) {
    return {a.similarity + b.similarity, a.agreement + b.agreement, a.position + b.position};
  }
  friend PairWeight operator-(PairWeight a, PairWeight b) {
    return {a.similarity - b.similarity, a.agreement - b.agreement, a.position - b.position};
  }
  friend bool operator<(const PairWeight& a, const PairWeight& b) {
    constexpr double kTol = 1e-12;
    if (std::abs(a.similarity - b.similarity) > kTol) return a.similarity < b.similarity;
    if (std::abs(a.agreement - b.agreement) > kTol) return a.agreement < b.agreement;
    return a.position < b.position - kTol;
  }
};

/// Maximum-weight assignment between rows and columns of a rectangular matrix
/// (Hungarian method over the lexicographic weight). Returns, for each row,
/// the matched column or -1. Every row/column pairing is allowed; callers drop
/// pairs they consider non-matches afterwards.
inline std::vector<int> max_weight_assignment(const std::vector<std::vector<PairWeight>>& weight) {
  const std::size_t rows = weight.size();
  const std::size_t cols = rows == 0 ? 0 : weight.front().size();
  const std::size_t n = std::max(rows, cols);
  std::vector<int> row_match(rows, -1);
  if (n == 0) return row_match;

  // cost = -weight on an n x n matrix padded with zeros, 1-based as in the
  // classic potential formulation.
  auto cost = [&](std::size_t i, std::size_t j) {
    if (i - 1 < rows && j - 1 < cols) return PairWeight{} - weight[i - 1][j - 1];
    return PairWeight{};
  };
  const PairWeight inf{std::numeric_limits<double>::infinity(), 0.0, 0.0};
  std::vector<PairWeight> u(n + 1), v(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<PairWeight> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      PairWeight delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const PairWeight cur = cost(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] = u[p[j]] + delta;
          v[j] = v[j] - delta;
        } else {
          minv[j] = minv[j] - delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  for (std::size_t j = 1; j <= n; ++j) {
    if (p[j] - 1 < rows && j - 1 < cols) row_match[p[j] - 1] = static_cast<int>(j - 1);
  }
  return row_match;
}

}  // namespace medorder
