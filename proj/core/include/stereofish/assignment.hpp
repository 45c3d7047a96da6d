#pragma once

// Rectangular maximum-weight bipartite assignment with forbidden cells.

#include <cstddef>
#include <utility>
#include <vector>

namespace stereofish {

class WeightMatrix {
 public:
  WeightMatrix() = default;
  WeightMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), weights_(rows * cols, fill), forbidden_(rows * cols, false) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0 || cols_ == 0; }

  double weight(std::size_t r, std::size_t c) const { return weights_[r * cols_ + c]; }
  bool forbidden(std::size_t r, std::size_t c) const { return forbidden_[r * cols_ + c]; }
  bool allowed(std::size_t r, std::size_t c) const { return !forbidden(r, c); }

  void set(std::size_t r, std::size_t c, double w) {
    weights_[r * cols_ + c] = w;
    forbidden_[r * cols_ + c] = false;
  }
  void forbid(std::size_t r, std::size_t c) { forbidden_[r * cols_ + c] = true; }

  WeightMatrix transposed() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> weights_;
  std::vector<bool> forbidden_;
};

struct Matching {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (row, col), sorted by row
  double objective = 0.0;
};

/// Maximum-weight matching among matchings of maximum cardinality on allowed
/// cells, solved as a padded square min-cost problem with forbidden cells
/// priced above any achievable gain. Among optimal matchings (equal up to
/// floating-point tolerance) the lexicographically smallest pair list is returned.
Matching solve_max_weight(const WeightMatrix& m);

/// Minimum-cost counterpart: identical semantics with costs negated.
Matching solve_min_cost(const WeightMatrix& costs);

}  // namespace stereofish
