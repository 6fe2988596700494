#pragma once
#include <limits>
#include <vector>

#include "avdet/errors.hpp"

namespace avdet {

// Minimum-cost assignment on an n_rows x n_cols cost matrix (row-major),
// Kuhn-Munkres with potentials, O(n^3). Rectangular inputs are padded with
// zero-cost dummy rows/columns, so every element of the smaller side is
// matched. Returns row -> col (-1 for unmatched rows) and the total matched
// cost.
inline double solve_assignment(const std::vector<double>& cost, int n_rows, int n_cols,
                               std::vector<int>& row_to_col) {
  require(static_cast<int>(cost.size()) == n_rows * n_cols, errc::shape,
          "solve_assignment: cost matrix size mismatch");
  row_to_col.assign(n_rows, -1);
  if (n_rows == 0 || n_cols == 0) return 0.0;

  const int n = std::max(n_rows, n_cols);
  const double inf = std::numeric_limits<double>::infinity();
  auto c = [&](int r, int col) -> double {
    return (r < n_rows && col < n_cols) ? cost[static_cast<std::size_t>(r) * n_cols + col] : 0.0;
  };

  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }

  double total = 0.0;
  for (int j = 1; j <= n; ++j) {
    const int r = p[j] - 1;
    if (r >= 0 && r < n_rows && j - 1 < n_cols) {
      row_to_col[r] = j - 1;
      total += cost[static_cast<std::size_t>(r) * n_cols + (j - 1)];
    }
  }
  return total;
}

}  // namespace avdet
