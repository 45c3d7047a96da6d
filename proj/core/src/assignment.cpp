#include "stereofish/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stereofish/error.hpp"

namespace stereofish {

WeightMatrix WeightMatrix::transposed() const {
  WeightMatrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) {
      if (forbidden(r, c)) {
        t.forbid(c, r);
      } else {
        t.set(c, r, weight(r, c));
      }
    }
  }
  return t;
}

namespace {

// Shortest augmenting path Hungarian method (O(n^3)) on a dense square cost
// matrix. Returns row -> column and the dual potentials; for the optimum,
// cost(i, j) - u[i] - v[j] >= 0 with equality on the assignment.
struct DualSolution {
  std::vector<int> row_to_col;
  std::vector<double> u;
  std::vector<double> v;
};

DualSolution hungarian(const std::vector<double>& cost, int n) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);

  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      const double* row = &cost[static_cast<std::size_t>(i0 - 1) * n];
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = row[j - 1] - u[i0] - v[j];
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
    } while (j0 != 0);
  }

  DualSolution out;
  out.row_to_col.assign(n, -1);
  for (int j = 1; j <= n; ++j) {
    if (p[j] != 0) out.row_to_col[p[j] - 1] = j - 1;
  }
  out.u.assign(u.begin() + 1, u.end());
  out.v.assign(v.begin() + 1, v.end());
  return out;
}

// Lexicographic tie-break inside the equality subgraph of an optimal dual
// solution. Every perfect matching on tight edges is optimal, so rows are
// fixed greedily to their smallest feasible output column while an
// alternating-path search keeps the rest of the matching perfect.
class TieBreaker {
 public:
  TieBreaker(int n, std::vector<std::vector<int>> tight, std::vector<int> row_to_col, std::vector<char> output_edge)
      : n_(n), tight_(std::move(tight)), row_to_col_(std::move(row_to_col)), output_(std::move(output_edge)) {
    col_to_row_.assign(n_, -1);
    for (int r = 0; r < n_; ++r) col_to_row_[row_to_col_[r]] = r;
    row_locked_.assign(n_, 0);
    col_locked_.assign(n_, 0);
    row_floating_.assign(n_, 0);
  }

  std::vector<int> run(int real_rows) {
    for (int r = 0; r < real_rows; ++r) {
      bool fixed = false;
      for (int c : tight_[r]) {  // ascending
        if (!is_output(r, c) || col_locked_[c]) continue;
        if (try_assign(r, c)) {
          row_locked_[r] = 1;
          col_locked_[c] = 1;
          fixed = true;
          break;
        }
      }
      if (!fixed) {
        // Row stays unmatched in the output: restrict it to non-output edges
        // but leave it re-routable for later rows.
        row_floating_[r] = 1;
        if (is_output(r, row_to_col_[r])) reroute_floating(r);
      }
    }
    return row_to_col_;
  }

 private:
  bool is_output(int r, int c) const { return output_[static_cast<std::size_t>(r) * n_ + c] != 0; }

  bool edge_usable(int r, int c) const {
    if (col_locked_[c] || row_locked_[r]) return false;
    if (row_floating_[r] && is_output(r, c)) return false;
    return true;
  }

  // Find an alternating path from (free) row `start` to column `target`,
  // never touching columns in `blocked`.
  bool augment(int start, int target, int blocked) {
    std::vector<int> parent_col(n_, -1);  // col -> row that reached it
    std::vector<char> seen_row(n_, 0);
    std::vector<int> stack{start};
    seen_row[start] = 1;
    while (!stack.empty()) {
      const int r = stack.back();
      stack.pop_back();
      for (int c : tight_[r]) {
        if (c == blocked || parent_col[c] != -1 || !edge_usable(r, c)) continue;
        parent_col[c] = r;
        if (c == target) {
          int col = c;
          while (true) {
            const int row = parent_col[col];
            const int prev = row_to_col_[row];
            row_to_col_[row] = col;
            col_to_row_[col] = row;
            if (row == start) break;
            col = prev;
          }
          return true;
        }
        const int next = col_to_row_[c];
        if (next >= 0 && !seen_row[next] && !row_locked_[next]) {
          seen_row[next] = 1;
          stack.push_back(next);
        }
      }
    }
    return false;
  }

  bool try_assign(int r, int c) {
    if (row_to_col_[r] == c) return true;
    const int displaced_row = col_to_row_[c];
    const int freed_col = row_to_col_[r];
    const auto saved_r2c = row_to_col_;
    const auto saved_c2r = col_to_row_;
    row_to_col_[r] = c;
    col_to_row_[c] = r;
    row_locked_[r] = 1;  // temporarily, so the search never re-routes r
    row_to_col_[displaced_row] = -1;
    const bool ok = augment(displaced_row, freed_col, c);
    row_locked_[r] = 0;
    if (!ok) {
      row_to_col_ = saved_r2c;
      col_to_row_ = saved_c2r;
    }
    return ok;
  }

  void reroute_floating(int r) {
    // r currently holds an output column; move it to a non-output one.
    for (int c : tight_[r]) {
      if (is_output(r, c) || col_locked_[c]) continue;
      if (try_assign(r, c)) return;
    }
    // No alternative exists; the primal optimum already matched r to an
    // output column, so this cannot happen with exact arithmetic.
  }

  int n_;
  std::vector<std::vector<int>> tight_;
  std::vector<int> row_to_col_;
  std::vector<int> col_to_row_;
  std::vector<char> output_;
  std::vector<char> row_locked_;
  std::vector<char> col_locked_;
  std::vector<char> row_floating_;
};

}  // namespace

Matching solve_max_weight(const WeightMatrix& m) {
  Matching result;
  if (m.empty()) return result;

  const int rows = static_cast<int>(m.rows());
  const int cols = static_cast<int>(m.cols());
  const int n = std::max(rows, cols);

  double abs_sum = 0.0;
  double max_abs = 0.0;
  bool any_forbidden = false;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (m.forbidden(r, c)) {
        any_forbidden = true;
        continue;
      }
      const double w = m.weight(r, c);
      if (!std::isfinite(w)) {
        throw Error(ErrorCode::InvalidArgument, "allowed weights must be finite");
      }
      abs_sum += std::abs(w);
      max_abs = std::max(max_abs, std::abs(w));
    }
  }
  const double sentinel = abs_sum + 1.0;

  // Negate and row-reduce so that every row minimum is zero.
  std::vector<double> cost(static_cast<std::size_t>(n) * n, 0.0);
  std::vector<char> output(static_cast<std::size_t>(n) * n, 0);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const std::size_t k = static_cast<std::size_t>(r) * n + c;
      if (m.forbidden(r, c)) {
        cost[k] = sentinel;
      } else {
        cost[k] = -m.weight(r, c);
        output[k] = 1;
      }
    }
  }
  for (int r = 0; r < n; ++r) {
    double lo = cost[static_cast<std::size_t>(r) * n];
    for (int c = 1; c < n; ++c) lo = std::min(lo, cost[static_cast<std::size_t>(r) * n + c]);
    for (int c = 0; c < n; ++c) cost[static_cast<std::size_t>(r) * n + c] -= lo;
  }

  DualSolution dual = hungarian(cost, n);

  const double tolerance =
      1e-9 * (1.0 + max_abs) + (any_forbidden ? 64.0 * std::numeric_limits<double>::epsilon() * sentinel : 0.0);
  std::vector<std::vector<int>> tight(n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const double reduced = cost[static_cast<std::size_t>(r) * n + c] - dual.u[r] - dual.v[c];
      if (std::abs(reduced) <= tolerance || dual.row_to_col[r] == c) tight[r].push_back(c);
    }
  }
  TieBreaker breaker(n, std::move(tight), dual.row_to_col, std::move(output));
  const std::vector<int> assignment = breaker.run(rows);

  for (int r = 0; r < rows; ++r) {
    const int c = assignment[r];
    if (c < 0 || c >= cols || m.forbidden(r, c)) continue;
    result.pairs.emplace_back(r, c);
    result.objective += m.weight(r, c);
  }
  return result;
}

Matching solve_min_cost(const WeightMatrix& costs) {
  WeightMatrix negated(costs.rows(), costs.cols());
  for (std::size_t r = 0; r < costs.rows(); ++r) {
    for (std::size_t c = 0; c < costs.cols(); ++c) {
      if (costs.forbidden(r, c)) {
        negated.forbid(r, c);
      } else {
        negated.set(r, c, -costs.weight(r, c));
      }
    }
  }
  Matching m = solve_max_weight(negated);
  m.objective = -m.objective;
  return m;
}

}  // namespace stereofish
