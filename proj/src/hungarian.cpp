#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "plreg/errors.hpp"
#include "plreg/eval.hpp"

namespace plreg {

CostMatrix::CostMatrix(Tensor cost) : cost_(std::move(cost)) {
  if (cost_.rows() != cost_.cols()) {
    throw ShapeError("CostMatrix must be square, got " + cost_.shape_str());
  }
  for (std::size_t i = 0; i < cost_.size(); ++i) {
    if (!std::isfinite(cost_[i])) {
      throw ContractError("CostMatrix: non-finite entry at row " + std::to_string(i / cost_.cols()) +
                          ", col " + std::to_string(i % cost_.cols()));
    }
  }
}

namespace {

// Re-routes an optimal matching to the lexicographically smallest one.
//
// With optimal duals (u, v), the optimal assignments are exactly the perfect
// matchings of the tight-edge subgraph. Rows are fixed in order; row i moves
// to a smaller tight column j when the row displaced from j can reach i's old
// column along an alternating path over unfixed rows.
void lexicographic_refine(const CostMatrix& cost, const std::vector<double>& u,
                          const std::vector<double>& v, std::vector<std::size_t>& match) {
  const std::size_t n = cost.n();
  double scale = 1.0;
  for (double c : cost.tensor().values()) scale = std::max(scale, std::abs(c));
  const double tol = 1e-9 * scale;
  auto tight = [&](std::size_t r, std::size_t c) {
    return std::abs(cost(r, c) - u[r + 1] - v[c + 1]) <= tol;
  };

  std::vector<std::size_t> owner(n);
  for (std::size_t r = 0; r < n; ++r) owner[match[r]] = r;

  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t target = match[i];  // column freed if row i moves
    for (std::size_t j = 0; j < target; ++j) {
      if (!tight(i, j) || owner[j] < i) continue;
      const std::size_t start = owner[j];
      std::vector<std::size_t> via_row(n, kNone);
      std::vector<std::size_t> queue{start};
      std::vector<char> seen_col(n, 0);
      seen_col[j] = 1;
      bool found = false;
      for (std::size_t q = 0; q < queue.size() && !found; ++q) {
        const std::size_t r = queue[q];
        for (std::size_t c = 0; c < n && !found; ++c) {
          if (seen_col[c] || !tight(r, c)) continue;
          if (c != target && owner[c] <= i) continue;
          seen_col[c] = 1;
          via_row[c] = r;
          if (c == target) {
            found = true;
          } else {
            queue.push_back(owner[c]);
          }
        }
      }
      if (!found) continue;
      std::size_t col = target;
      while (true) {
        const std::size_t r = via_row[col];
        const std::size_t prev = match[r];
        match[r] = col;
        owner[col] = r;
        if (r == start) break;
        col = prev;
      }
      match[i] = j;
      owner[j] = i;
      break;
    }
  }
}

}  // namespace

Assignment hungarian(const CostMatrix& cost) {
  const std::size_t n = cost.n();
  Assignment result;
  if (n == 0) return result;
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials; p[j] is the row matched to column j
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
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
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
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

  result.row_to_col.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) result.row_to_col[p[j] - 1] = j - 1;
  lexicographic_refine(cost, u, v, result.row_to_col);
  for (std::size_t r = 0; r < n; ++r) result.total_cost += cost(r, result.row_to_col[r]);
  return result;
}

}  // namespace plreg
