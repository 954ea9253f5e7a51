#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "sdrsac/errors.hpp"
#include "sdrsac/geometry.hpp"

namespace sdrsac {

/// Position in the lifted N^2 x N^2 index space.
struct IndexPair {
  std::size_t row = 0;
  std::size_t col = 0;

  friend auto operator<=>(const IndexPair&, const IndexPair&) = default;
};

/// Lifted index of the candidate match (source a, target b); column-stacked, 0-based.
inline std::size_t lifted_index(std::size_t a, std::size_t b, std::size_t n) { return a + b * n; }

/// Symmetric matching-potential matrix between candidate pairs of two
/// N-point samples, plus the set of entries that are structurally zero.
///
/// Only nonzero entries are stored. The zero mask is kept as canonical pairs
/// (row <= col), sorted; it is what the relaxation turns into equality
/// constraints, so it is explicit rather than implied by missing entries.
class AffinityMatrix {
 public:
  using Sparse = Eigen::SparseMatrix<double>;

  /// Builds from a dense N^2 x N^2 matrix. Validates symmetry, the [0, 1] range
  /// and that masked positions hold zero.
  static AffinityMatrix from_dense(std::size_t n, const Eigen::MatrixXd& values, std::vector<IndexPair> zero_mask) {
    const std::size_t dim = n * n;
    detail::require(n >= 1, "AffinityMatrix: n must be positive");
    detail::require(static_cast<std::size_t>(values.rows()) == dim && static_cast<std::size_t>(values.cols()) == dim,
                    "AffinityMatrix: values must be N^2 x N^2");
    detail::require(values.allFinite(), "AffinityMatrix: non-finite entry");
    detail::require((values - values.transpose()).cwiseAbs().maxCoeff() == 0.0, "AffinityMatrix: not symmetric");
    detail::require(values.minCoeff() >= 0.0 && values.maxCoeff() <= 1.0, "AffinityMatrix: entries must lie in [0, 1]");

    for (IndexPair& p : zero_mask) {
      detail::require(p.row < dim && p.col < dim, "AffinityMatrix: mask index out of range");
      if (p.row > p.col) std::swap(p.row, p.col);
      detail::require(values(p.row, p.col) == 0.0, "AffinityMatrix: masked entry is nonzero");
    }
    std::sort(zero_mask.begin(), zero_mask.end());
    zero_mask.erase(std::unique(zero_mask.begin(), zero_mask.end()), zero_mask.end());

    AffinityMatrix out;
    out.n_ = n;
    out.entries_ = values.sparseView(0.0, 0.0);
    out.entries_.makeCompressed();
    out.zero_mask_ = std::move(zero_mask);
    return out;
  }

  std::size_t n() const { return n_; }
  std::size_t dim() const { return n_ * n_; }

  double value(std::size_t ab, std::size_t cd) const { return entries_.coeff(static_cast<Eigen::Index>(ab), static_cast<Eigen::Index>(cd)); }

  bool is_masked(std::size_t ab, std::size_t cd) const {
    IndexPair key = ab <= cd ? IndexPair{ab, cd} : IndexPair{cd, ab};
    return std::binary_search(zero_mask_.begin(), zero_mask_.end(), key);
  }

  const Sparse& entries() const { return entries_; }
  std::span<const IndexPair> zero_mask() const { return zero_mask_; }

  Eigen::MatrixXd dense() const { return Eigen::MatrixXd(entries_); }

 private:
  AffinityMatrix() = default;

  std::size_t n_ = 0;
  Sparse entries_;
  std::vector<IndexPair> zero_mask_;
};

/// Fractional N x N match matrix returned by the relaxation.
struct FractionalMatch {
  Eigen::MatrixXd x;
  double objective = 0.0;
  std::size_t m = 0;
};

inline Eigen::MatrixXd pairwise_distances(const PointCloud& c) {
  const auto n = static_cast<Eigen::Index>(c.size());
  Eigen::MatrixXd d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) d(i, j) = (c[i] - c[j]).norm();
  }
  return d;
}

/// Affinity between candidate pairs: exp(-|len(p_a p_c) - len(q_b q_d)|) when
/// the segment lengths differ by at most gamma, structurally zero otherwise.
inline AffinityMatrix build_affinity(const PointCloud& p, const PointCloud& q, double gamma) {
  detail::require(p.size() == q.size(), "build_affinity: samples differ in size");
  detail::require(gamma > 0.0 && std::isfinite(gamma), "build_affinity: gamma must be positive");
  const std::size_t n = p.size();
  const std::size_t dim = n * n;
  const Eigen::MatrixXd dp = pairwise_distances(p);
  const Eigen::MatrixXd dq = pairwise_distances(q);

  Eigen::MatrixXd values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  std::vector<IndexPair> mask;
  for (std::size_t ab = 0; ab < dim; ++ab) {
    const std::size_t a = ab % n, b = ab / n;
    for (std::size_t cd = ab; cd < dim; ++cd) {
      const std::size_t c = cd % n, d = cd / n;
      const double diff = std::abs(dp(a, c) - dq(b, d));
      if (diff <= gamma) {
        const double v = std::exp(-diff);
        values(ab, cd) = v;
        values(cd, ab) = v;
      } else {
        mask.push_back({ab, cd});
      }
    }
  }
  return AffinityMatrix::from_dense(n, values, std::move(mask));
}

/// Quadratic matching objective x^T A x for the indicator vector of `matching`.
inline double matching_objective(const AffinityMatrix& a, const CorrespondenceSet& matching) {
  const std::size_t n = a.n();
  double total = 0.0;
  for (const auto& u : matching.pairs) {
    for (const auto& v : matching.pairs) {
      total += a.value(lifted_index(u.source, u.target, n), lifted_index(v.source, v.target, n));
    }
  }
  return total;
}

namespace detail {

/// Minimum-cost perfect assignment on a square matrix (shortest augmenting
/// paths with potentials, O(n^3)). Returns column assigned to each row.
inline std::vector<std::size_t> hungarian_min(const Eigen::MatrixXd& cost) {
  const std::size_t n = static_cast<std::size_t>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) - u[i0] - v[j];
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
  std::vector<std::size_t> row_to_col(n);
  for (std::size_t j = 1; j <= n; ++j) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

inline double assignment_value(const Eigen::MatrixXd& weights, const std::vector<std::size_t>& row_to_col) {
  double total = 0.0;
  for (std::size_t i = 0; i < row_to_col.size(); ++i) {
    total += weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(row_to_col[i]));
  }
  return total;
}

/// Best total weight of a perfect assignment between the given rows and columns.
inline double best_assignment_value(const Eigen::MatrixXd& weights, std::span<const std::size_t> rows,
                                    std::span<const std::size_t> cols) {
  if (rows.empty()) return 0.0;
  const auto k = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd sub(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) sub(i, j) = weights(rows[i], cols[j]);
  }
  const auto assignment = hungarian_min(-sub);
  return assignment_value(sub, assignment);
}

}  // namespace detail

/// Projects a fractional match onto the permutation matrices by maximizing
/// <X, xt.x>. Among optimal permutations the lexicographically smallest
/// (row-by-row column choice) is returned. Pairs carry their fractional score.
inline CorrespondenceSet project_assignment(const FractionalMatch& xt) {
  const Eigen::MatrixXd& w = xt.x;
  detail::require(w.rows() == w.cols() && w.rows() > 0, "project_assignment: matrix must be square and nonempty");
  detail::require(w.allFinite(), "project_assignment: non-finite entry");
  const std::size_t n = static_cast<std::size_t>(w.rows());
  const double tol = 1e-9 * (1.0 + w.cwiseAbs().maxCoeff()) * static_cast<double>(n);

  // Fix rows in order, each to the smallest column that keeps the total optimal.
  std::vector<std::size_t> free_cols(n);
  std::iota(free_cols.begin(), free_cols.end(), std::size_t{0});
  double remaining_best = detail::assignment_value(w, detail::hungarian_min(-w));
  CorrespondenceSet out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> rows_after(n - i - 1);
    std::iota(rows_after.begin(), rows_after.end(), i + 1);
    for (std::size_t k = 0; k < free_cols.size(); ++k) {
      const std::size_t j = free_cols[k];
      std::vector<std::size_t> cols_after = free_cols;
      cols_after.erase(cols_after.begin() + static_cast<std::ptrdiff_t>(k));
      const double rest = detail::best_assignment_value(w, rows_after, cols_after);
      const double with_j = w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) + rest;
      if (with_j >= remaining_best - tol || free_cols.size() == 1) {
        out.pairs.push_back({i, j, w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))});
        free_cols = std::move(cols_after);
        remaining_best = rest;
        break;
      }
    }
  }
  return out;
}

/// Keeps the `m` pairs of a full permutation with the highest fractional
/// scores (ties: smaller source index first). Output is ordered by source index.
inline CorrespondenceSet select_top_m(const CorrespondenceSet& perm, const FractionalMatch& xt, std::size_t m) {
  const std::size_t n = perm.size();
  detail::require(n == static_cast<std::size_t>(xt.x.rows()), "select_top_m: permutation size does not match X");
  detail::require(m >= 3 && m <= n, "select_top_m: m must satisfy 3 <= m <= N");
  std::vector<Correspondence> pairs = perm.pairs;
  for (auto& c : pairs) c.score = xt.x(static_cast<Eigen::Index>(c.source), static_cast<Eigen::Index>(c.target));
  std::stable_sort(pairs.begin(), pairs.end(), [](const Correspondence& a, const Correspondence& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.source < b.source;
  });
  pairs.resize(m);
  std::sort(pairs.begin(), pairs.end(),
            [](const Correspondence& a, const Correspondence& b) { return a.source < b.source; });
  return CorrespondenceSet{std::move(pairs)};
}

/// Whether the exhaustive search may pick pairs whose mutual affinity is
/// structurally zero. `ignore` solves the plain quadratic matching problem;
/// `enforce` additionally requires every selected pair of pairs to be
/// unmasked, which is the feasible set of the tightened relaxation.
enum class MaskPolicy { ignore, enforce };

struct BruteForceResult {
  CorrespondenceSet matching;
  double objective = 0.0;
  bool feasible = false;
};

/// Exact maximizer of x^T A x over sub-permutations with exactly `m` pairs, by
/// enumeration. Refuses N > 8. The first maximizer in enumeration order wins.
inline BruteForceResult brute_force_match(const AffinityMatrix& a, std::size_t m,
                                          MaskPolicy policy = MaskPolicy::ignore) {
  const std::size_t n = a.n();
  detail::require(n <= 8, "brute_force_match: N > 8 is refused (combinatorial blow-up)");
  detail::require(m >= 3 && m <= n, "brute_force_match: m must satisfy 3 <= m <= N");

  const Eigen::MatrixXd dense = a.dense();
  const std::size_t dim = n * n;
  std::vector<char> masked(dim * dim, 0);
  for (const IndexPair& p : a.zero_mask()) {
    masked[p.row * dim + p.col] = 1;
    masked[p.col * dim + p.row] = 1;
  }

  BruteForceResult best;
  best.objective = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> rows, cols, lifted;
  std::vector<char> col_used(n, 0);

  // Rows are chosen in increasing order; columns are any injective assignment.
  auto recurse = [&](auto&& self, std::size_t next_row, double value) -> void {
    if (rows.size() == m) {
      if (value > best.objective) {
        best.objective = value;
        best.feasible = true;
        best.matching.pairs.clear();
        for (std::size_t k = 0; k < m; ++k) best.matching.pairs.push_back({rows[k], cols[k], 0.0});
      }
      return;
    }
    if (n - next_row < m - rows.size()) return;
    for (std::size_t r = next_row; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        if (col_used[c]) continue;
        const std::size_t id = lifted_index(r, c, n);
        double gain = dense(id, id);
        bool ok = policy == MaskPolicy::ignore || !masked[id * dim + id];
        for (std::size_t prev : lifted) {
          gain += 2.0 * dense(id, prev);
          if (policy == MaskPolicy::enforce && masked[id * dim + prev]) ok = false;
        }
        if (!ok) continue;
        rows.push_back(r);
        cols.push_back(c);
        lifted.push_back(id);
        col_used[c] = 1;
        self(self, r + 1, value + gain);
        col_used[c] = 0;
        lifted.pop_back();
        cols.pop_back();
        rows.pop_back();
      }
    }
  };
  recurse(recurse, 0, 0.0);
  if (!best.feasible) best.objective = 0.0;
  return best;
}

}  // namespace sdrsac
