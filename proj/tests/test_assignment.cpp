#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "stereofish/assignment.hpp"
#include "stereofish/error.hpp"
#include "stereofish/synthetic.hpp"

using namespace stereofish;

namespace {

WeightMatrix random_matrix(std::mt19937_64& gen, std::size_t rows, std::size_t cols, double forbid_p) {
  std::uniform_real_distribution<double> w(-1.0, 1.0), u(0.0, 1.0);
  WeightMatrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      m.set(r, c, w(gen));
      if (u(gen) < forbid_p) m.forbid(r, c);
    }
  return m;
}

// Independent oracle: enumerate every injection of rows into columns (or
// none), keep maximum cardinality, then maximum weight.
struct Best {
  std::size_t cardinality = 0;
  double objective = -1e300;
};

void enumerate(const WeightMatrix& m, std::size_t row, std::vector<bool>& used, std::size_t card, double sum,
               Best& best) {
  if (row == m.rows()) {
    if (card > best.cardinality || (card == best.cardinality && sum > best.objective)) best = {card, sum};
    return;
  }
  enumerate(m, row + 1, used, card, sum, best);
  for (std::size_t c = 0; c < m.cols(); ++c) {
    if (used[c] || m.forbidden(row, c)) continue;
    used[c] = true;
    enumerate(m, row + 1, used, card + 1, sum + m.weight(row, c), best);
    used[c] = false;
  }
}

Best oracle(const WeightMatrix& m) {
  std::vector<bool> used(m.cols(), false);
  Best best;
  enumerate(m, 0, used, 0, 0.0, best);
  if (best.cardinality == 0) best.objective = 0.0;
  return best;
}

void expect_valid(const WeightMatrix& m, const Matching& res) {
  std::vector<bool> rows(m.rows(), false), cols(m.cols(), false);
  double sum = 0.0;
  for (auto [r, c] : res.pairs) {
    ASSERT_LT(r, m.rows());
    ASSERT_LT(c, m.cols());
    EXPECT_FALSE(rows[r]);
    EXPECT_FALSE(cols[c]);
    EXPECT_FALSE(m.forbidden(r, c));
    rows[r] = cols[c] = true;
    sum += m.weight(r, c);
  }
  EXPECT_NEAR(sum, res.objective, 1e-9);
}

}  // namespace

TEST(Assignment, TwoByTwo) {
  WeightMatrix m(2, 2);
  m.set(0, 0, 1);
  m.set(0, 1, 2);
  m.set(1, 0, 2);
  m.set(1, 1, 1);
  const Matching res = solve_max_weight(m);
  ASSERT_EQ(res.pairs.size(), 2u);
  EXPECT_EQ(res.pairs[0], std::make_pair(std::size_t{0}, std::size_t{1}));
  EXPECT_EQ(res.pairs[1], std::make_pair(std::size_t{1}, std::size_t{0}));
  EXPECT_DOUBLE_EQ(res.objective, 4.0);
}

TEST(Assignment, OnlyCellForbidden) {
  WeightMatrix m(1, 1, 3.0);
  m.forbid(0, 0);
  const Matching res = solve_max_weight(m);
  EXPECT_TRUE(res.pairs.empty());
  EXPECT_EQ(res.objective, 0.0);
}

TEST(Assignment, EmptyInput) {
  EXPECT_TRUE(solve_max_weight(WeightMatrix(0, 4)).pairs.empty());
  EXPECT_TRUE(solve_max_weight(WeightMatrix()).pairs.empty());
}

TEST(Assignment, CardinalityBeforeWeight) {
  // a single heavy cell loses to two light ones
  WeightMatrix m(2, 2);
  m.set(0, 0, 10.0);
  m.set(0, 1, 1.0);
  m.set(1, 0, 1.0);
  m.forbid(1, 1);
  const Matching res = solve_max_weight(m);
  EXPECT_EQ(res.pairs.size(), 2u);
  EXPECT_DOUBLE_EQ(res.objective, 2.0);
}

TEST(Assignment, TiesGoToSmallestPairList) {
  WeightMatrix m(2, 2, 1.0);
  const Matching res = solve_max_weight(m);
  ASSERT_EQ(res.pairs.size(), 2u);
  EXPECT_EQ(res.pairs[0].second, 0u);
  EXPECT_EQ(res.pairs[1].second, 1u);
}

TEST(Assignment, MatchesEnumerationSixBySix) {
  std::mt19937_64 gen(31);
  for (int trial = 0; trial < 200; ++trial) {
    const WeightMatrix m = random_matrix(gen, 6, 6, 0.2);
    const Matching res = solve_max_weight(m);
    const Best best = oracle(m);
    expect_valid(m, res);
    EXPECT_EQ(res.pairs.size(), best.cardinality);
    EXPECT_NEAR(res.objective, best.objective, 1e-9);
  }
}

TEST(Assignment, MatchesEnumerationRectangular) {
  std::mt19937_64 gen(32);
  std::uniform_int_distribution<int> dim(0, 7);
  std::uniform_real_distribution<double> p(0.0, 0.6);
  for (int trial = 0; trial < 400; ++trial) {
    const WeightMatrix m = random_matrix(gen, dim(gen), dim(gen), p(gen));
    const Matching res = solve_max_weight(m);
    const Best best = oracle(m);
    expect_valid(m, res);
    EXPECT_EQ(res.pairs.size(), best.cardinality);
    EXPECT_NEAR(res.objective, best.objective, 1e-9);
    const Matching brute = brute_force_assignment(m);
    EXPECT_EQ(brute.pairs, res.pairs);
  }
}

TEST(Assignment, PermutationInvariantObjective) {
  std::mt19937_64 gen(33);
  const WeightMatrix m = random_matrix(gen, 7, 5, 0.2);
  std::vector<std::size_t> rp(7), cp(5);
  std::iota(rp.begin(), rp.end(), 0);
  std::iota(cp.begin(), cp.end(), 0);
  std::shuffle(rp.begin(), rp.end(), gen);
  std::shuffle(cp.begin(), cp.end(), gen);
  WeightMatrix p(7, 5);
  for (std::size_t r = 0; r < 7; ++r)
    for (std::size_t c = 0; c < 5; ++c) {
      p.set(r, c, m.weight(rp[r], cp[c]));
      if (m.forbidden(rp[r], cp[c])) p.forbid(r, c);
    }
  EXPECT_NEAR(solve_max_weight(m).objective, solve_max_weight(p).objective, 1e-9);
}

TEST(Assignment, ConstantShift) {
  std::mt19937_64 gen(34);
  const std::size_t n = 6;
  const WeightMatrix m = random_matrix(gen, n, n, 0.0);
  WeightMatrix shifted(n, n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) shifted.set(r, c, m.weight(r, c) + 2.5);
  const Matching a = solve_max_weight(m), b = solve_max_weight(shifted);
  EXPECT_NEAR(b.objective, a.objective + n * 2.5, 1e-9);
  EXPECT_EQ(a.pairs, b.pairs);
}

TEST(Assignment, TransposeGivesTransposedMatching) {
  std::mt19937_64 gen(35);
  const WeightMatrix m = random_matrix(gen, 5, 6, 0.2);
  const Matching a = solve_max_weight(m);
  const Matching b = solve_max_weight(m.transposed());
  EXPECT_NEAR(a.objective, b.objective, 1e-9);
  EXPECT_EQ(a.pairs.size(), b.pairs.size());
}

TEST(Assignment, MinCostIsNegatedMax) {
  std::mt19937_64 gen(36);
  const WeightMatrix m = random_matrix(gen, 6, 6, 0.1);
  WeightMatrix neg(6, 6);
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 6; ++c) {
      neg.set(r, c, -m.weight(r, c));
      if (m.forbidden(r, c)) neg.forbid(r, c);
    }
  EXPECT_NEAR(solve_min_cost(neg).objective, -solve_max_weight(m).objective, 1e-9);
}

TEST(Assignment, BruteForceRefusesLargeInput) {
  try {
    brute_force_assignment(WeightMatrix(9, 3));
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooLarge);
  }
}

TEST(Assignment, DenseFiveHundredUnderOneSecond) {
  std::mt19937_64 gen(37);
  const WeightMatrix m = random_matrix(gen, 500, 500, 0.0);
  const auto t0 = std::chrono::steady_clock::now();
  const Matching res = solve_max_weight(m);
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_EQ(res.pairs.size(), 500u);
  EXPECT_LT(s, 1.0);
}
