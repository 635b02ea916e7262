#ifndef IVT_TESTS_ORACLES_HPP
#define IVT_TESTS_ORACLES_HPP

// Independent reference computations used only by the tests.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <vector>

namespace oracle {

// Dense two-phase simplex with Bland's rule for
//   min c'x  s.t.  A x = b, x >= 0   (b >= 0).
// Returns nullopt when infeasible.
inline std::optional<double> simplex_min(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                                         const Eigen::VectorXd& c) {
  const Eigen::Index m = A.rows();
  const Eigen::Index n = A.cols();
  // Tableau columns: n originals, m artificials, rhs.
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m + 1, n + m + 1);
  t.topLeftCorner(m, n) = A;
  t.block(0, n, m, m) = Eigen::MatrixXd::Identity(m, m);
  t.col(n + m).head(m) = b;
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) basis[static_cast<std::size_t>(i)] = n + i;
  constexpr double eps = 1e-11;

  const auto pivot = [&](Eigen::Index row, Eigen::Index col) {
    t.row(row) /= t(row, col);
    for (Eigen::Index r = 0; r <= m; ++r)
      if (r != row && t(r, col) != 0.0) t.row(r) -= t(r, col) * t.row(row);
    basis[static_cast<std::size_t>(row)] = col;
  };
  const auto run = [&](Eigen::Index allowed) {
    for (int iter = 0; iter < 10000; ++iter) {
      Eigen::Index enter = -1;
      for (Eigen::Index j = 0; j < allowed; ++j)
        if (t(m, j) < -eps) {
          enter = j;
          break;
        }
      if (enter < 0) return;
      Eigen::Index leave = -1;
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < m; ++i) {
        if (t(i, enter) > eps) {
          const double ratio = t(i, n + m) / t(i, enter);
          if (ratio < best - 1e-15 ||
              (std::abs(ratio - best) <= 1e-15 && leave >= 0 &&
               basis[static_cast<std::size_t>(i)] < basis[static_cast<std::size_t>(leave)])) {
            best = ratio;
            leave = i;
          }
        }
      }
      if (leave < 0) return;  // unbounded; cannot happen for bounded couplings
      pivot(leave, enter);
    }
  };

  // Phase 1: minimize the sum of artificials.
  t.row(m).setZero();
  for (Eigen::Index i = 0; i < m; ++i) t.row(m) -= t.row(i);
  for (Eigen::Index i = 0; i < m; ++i) t(m, n + i) = 0.0;
  run(n + m);
  if (-t(m, n + m) > 1e-9) return std::nullopt;
  // Drive artificials out of the basis where possible.
  for (Eigen::Index i = 0; i < m; ++i) {
    if (basis[static_cast<std::size_t>(i)] < n) continue;
    for (Eigen::Index j = 0; j < n; ++j)
      if (std::abs(t(i, j)) > eps) {
        pivot(i, j);
        break;
      }
  }
  // Phase 2.
  t.row(m).setZero();
  t.row(m).head(n) = c.transpose();
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index bj = basis[static_cast<std::size_t>(i)];
    if (bj < n && t(m, bj) != 0.0) t.row(m) -= t(m, bj) * t.row(i);
  }
  run(n);
  return -t(m, n + m);
}

// min over couplings of p and q of P(X1 = X2), by linear programming.
inline double lp_min_collision(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  const Eigen::Index s = p.size();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2 * s, s * s);
  Eigen::VectorXd b(2 * s);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(s * s);
  for (Eigen::Index i = 0; i < s; ++i) {
    for (Eigen::Index j = 0; j < s; ++j) {
      A(i, i * s + j) = 1.0;
      A(s + j, i * s + j) = 1.0;
    }
    b(i) = p(i);
    b(s + i) = q(i);
    c(i * s + i) = 1.0;
  }
  return *simplex_min(A, b, c);
}

// Exhaustive search: can integer counts[i][x] (each row summing to q) be
// split into q tuples of pairwise-distinct x, one coordinate per row?
class TupleSearch {
 public:
  explicit TupleSearch(std::vector<std::vector<int>> counts) : start_(std::move(counts)) {}

  bool feasible() { return go(start_); }

 private:
  bool go(std::vector<std::vector<int>>& c) {
    const std::size_t m = c.size();
    const std::size_t s = c[0].size();
    std::size_t first = s;
    for (std::size_t x = 0; x < s; ++x)
      if (c[0][x] > 0) {
        first = x;
        break;
      }
    if (first == s) return true;
    if (auto it = memo_.find(c); it != memo_.end()) return it->second;
    std::vector<std::size_t> tuple{first};
    bool ok = false;
    c[0][first]--;
    ok = extend(c, tuple, 1, m, s);
    c[0][first]++;
    memo_[c] = ok;
    return ok;
  }

  bool extend(std::vector<std::vector<int>>& c, std::vector<std::size_t>& tuple, std::size_t row,
              std::size_t m, std::size_t s) {
    if (row == m) return go(c);
    for (std::size_t x = 0; x < s; ++x) {
      if (c[row][x] == 0 || std::find(tuple.begin(), tuple.end(), x) != tuple.end()) continue;
      c[row][x]--;
      tuple.push_back(x);
      const bool ok = extend(c, tuple, row + 1, m, s);
      tuple.pop_back();
      c[row][x]++;
      if (ok) return true;
    }
    return false;
  }

  std::vector<std::vector<int>> start_;
  std::map<std::vector<std::vector<int>>, bool> memo_;
};

// Random composition of `total` into `parts` non-negative integers.
inline std::vector<int> random_composition(int total, std::size_t parts, std::mt19937_64& rng) {
  std::vector<int> out(parts, 0);
  std::uniform_int_distribution<std::size_t> pick(0, parts - 1);
  for (int k = 0; k < total; ++k) out[pick(rng)]++;
  return out;
}

// Fraction of (z-cell pair, u-cell) triples with equal images for the
// binary construction and identical conditionals, counted with explicit
// XOR masks: the level-m bit of the mask is set when address symbol m is 1.
inline double dyadic_collision_count(int depth) {
  const std::uint32_t cells = 1u << depth;
  std::uint64_t hits = 0;
  for (std::uint32_t a = 0; a < cells; ++a)
    for (std::uint32_t b = 0; b < cells; ++b)
      for (std::uint32_t k = 0; k < cells; ++k)
        if ((k ^ a) == (k ^ b)) ++hits;
  return static_cast<double>(hits) / (static_cast<double>(cells) * cells * cells);
}

}  // namespace oracle

#endif  // IVT_TESTS_ORACLES_HPP
