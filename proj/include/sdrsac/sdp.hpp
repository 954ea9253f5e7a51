#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "sdrsac/errors.hpp"
#include "sdrsac/matching.hpp"
#include "sdrsac/psd.hpp"

namespace sdrsac {

/// Which family a linear constraint row of the relaxation belongs to.
enum class ConstraintKind {
  homogenizing,   // Z(0,0) = 1
  match_bounds,   // 0 <= X_ij <= 1
  row_sum,        // sum_j X_ij <= 1
  column_sum,     // sum_i X_ij <= 1
  total,          // sum X = m
  trace,          // trace(Y) = m
  conflict,       // Y_ab,cd <= 0 for pairs sharing exactly one endpoint
  lifted_bound,   // Y_ab,cd <= X_ab and Y_ab,cd <= X_cd
};

/// Tightened semidefinite relaxation of the cardinality-constrained matching
/// problem for one pair of samples.
///
/// The decision variable is the symmetric (N^2+1)-square matrix
/// Z = [[1, x^T], [x, Y]], stored as its scaled upper triangle (off-diagonal
/// entries times sqrt(2), so Euclidean norms match Frobenius norms). Entries of
/// Y in the affinity zero mask are eliminated: they are fixed at zero and carry
/// no variable. Every other constraint is a row of `rows` with bounds.
struct SdpProblem {
  std::size_t n = 0;
  std::size_t m = 0;
  AffinityMatrix affinity;

  std::size_t cone_dim = 0;                // N^2 + 1
  std::vector<std::ptrdiff_t> packed_to_var;  // -1 for eliminated entries
  std::vector<std::size_t> var_to_packed;
  Eigen::SparseMatrix<double, Eigen::RowMajor> rows;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  std::vector<ConstraintKind> kinds;
  Eigen::VectorXd cost;  // minimized: cost^T v = -trace(A Y)

  std::size_t variable_count() const { return var_to_packed.size(); }
  std::size_t packed_dim() const { return cone_dim * (cone_dim + 1) / 2; }
  std::size_t eliminated_count() const { return packed_dim() - variable_count(); }

  std::size_t count(ConstraintKind kind) const {
    return static_cast<std::size_t>(std::count(kinds.begin(), kinds.end(), kind));
  }
};

namespace detail {

inline std::size_t packed_index(std::size_t i, std::size_t j) {
  if (i > j) std::swap(i, j);
  return j * (j + 1) / 2 + i;
}

inline Eigen::VectorXd pack_symmetric(const Eigen::MatrixXd& s) {
  const auto n = static_cast<std::size_t>(s.rows());
  Eigen::VectorXd v(static_cast<Eigen::Index>(n * (n + 1) / 2));
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i <= j; ++i) {
      const double scale = i == j ? 1.0 : std::numbers::sqrt2;
      v(static_cast<Eigen::Index>(packed_index(i, j))) = scale * s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  }
  return v;
}

inline Eigen::MatrixXd unpack_symmetric(const Eigen::VectorXd& v, std::size_t n) {
  Eigen::MatrixXd s(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i <= j; ++i) {
      const double scale = i == j ? 1.0 : 1.0 / std::numbers::sqrt2;
      const double value = scale * v(static_cast<Eigen::Index>(packed_index(i, j)));
      s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = value;
      s(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = value;
    }
  }
  return s;
}

/// Maximum bipartite matching size over candidate pairs whose lifted diagonal
/// entry is not eliminated (Kuhn's algorithm).
inline std::size_t candidate_matching_size(const AffinityMatrix& a) {
  const std::size_t n = a.n();
  std::vector<std::ptrdiff_t> owner(n, -1);
  std::size_t size = 0;
  for (std::size_t row = 0; row < n; ++row) {
    std::vector<char> seen(n, 0);
    auto augment = [&](auto&& self, std::size_t r) -> bool {
      for (std::size_t c = 0; c < n; ++c) {
        const std::size_t id = lifted_index(r, c, n);
        if (seen[c] || a.is_masked(id, id)) continue;
        seen[c] = 1;
        if (owner[c] < 0 || self(self, static_cast<std::size_t>(owner[c]))) {
          owner[c] = static_cast<std::ptrdiff_t>(r);
          return true;
        }
      }
      return false;
    };
    if (augment(augment, row)) ++size;
  }
  return size;
}

}  // namespace detail

/// Emits the relaxation: row/column sums <= 1, total = m, trace(Y) = m,
/// 0 <= X <= 1, Y_ab,cd <= 0 for pairs sharing exactly one endpoint,
/// Y_ab,cd <= min(X_ab, X_cd) otherwise, masked Y entries eliminated, Z PSD.
inline SdpProblem assemble_problem(const AffinityMatrix& a, std::size_t m) {
  const std::size_t n = a.n();
  detail::require(m >= 3 && m <= n, "assemble_problem: m must satisfy 3 <= m <= N");
  const std::size_t k = n * n;
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;

  SdpProblem p{n, m, a};
  p.cone_dim = k + 1;
  const std::size_t packed = p.packed_dim();
  p.packed_to_var.assign(packed, -1);

  // Z index 0 is the homogenizing row; Z index 1 + ab is candidate pair ab.
  auto is_free = [&](std::size_t i, std::size_t j) {
    if (i == 0 || j == 0) return true;
    return !a.is_masked(i - 1, j - 1);
  };
  for (std::size_t j = 0; j < p.cone_dim; ++j) {
    for (std::size_t i = 0; i <= j; ++i) {
      if (!is_free(i, j)) continue;
      p.packed_to_var[detail::packed_index(i, j)] = static_cast<std::ptrdiff_t>(p.var_to_packed.size());
      p.var_to_packed.push_back(detail::packed_index(i, j));
    }
  }
  auto var = [&](std::size_t i, std::size_t j) { return p.packed_to_var[detail::packed_index(i, j)]; };
  auto coef = [&](std::size_t i, std::size_t j) { return i == j ? 1.0 : inv_sqrt2; };

  std::vector<Eigen::Triplet<double>> triplets;
  std::vector<double> lo, hi;
  const double inf = std::numeric_limits<double>::infinity();
  auto add_row = [&](ConstraintKind kind, double l, double u) {
    p.kinds.push_back(kind);
    lo.push_back(l);
    hi.push_back(u);
    return static_cast<int>(p.kinds.size() - 1);
  };
  auto add_term = [&](int row, std::size_t i, std::size_t j, double scale) {
    const std::ptrdiff_t v = var(i, j);
    if (v >= 0) triplets.emplace_back(row, static_cast<int>(v), scale * coef(i, j));
  };

  add_term(add_row(ConstraintKind::homogenizing, 1.0, 1.0), 0, 0, 1.0);
  for (std::size_t ab = 0; ab < k; ++ab) add_term(add_row(ConstraintKind::match_bounds, 0.0, 1.0), 0, 1 + ab, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const int row = add_row(ConstraintKind::row_sum, -inf, 1.0);
    for (std::size_t j = 0; j < n; ++j) add_term(row, 0, 1 + lifted_index(i, j, n), 1.0);
  }
  for (std::size_t j = 0; j < n; ++j) {
    const int row = add_row(ConstraintKind::column_sum, -inf, 1.0);
    for (std::size_t i = 0; i < n; ++i) add_term(row, 0, 1 + lifted_index(i, j, n), 1.0);
  }
  {
    const int row = add_row(ConstraintKind::total, static_cast<double>(m), static_cast<double>(m));
    for (std::size_t ab = 0; ab < k; ++ab) add_term(row, 0, 1 + ab, 1.0);
  }
  {
    const int row = add_row(ConstraintKind::trace, static_cast<double>(m), static_cast<double>(m));
    for (std::size_t ab = 0; ab < k; ++ab) add_term(row, 1 + ab, 1 + ab, 1.0);
  }
  for (std::size_t cd = 0; cd < k; ++cd) {
    for (std::size_t ab = 0; ab <= cd; ++ab) {
      if (var(1 + ab, 1 + cd) < 0) continue;
      const std::size_t a_src = ab % n, b_dst = ab / n, c_src = cd % n, d_dst = cd / n;
      const bool conflict = ab != cd && ((a_src == c_src) != (b_dst == d_dst));
      if (conflict) {
        add_term(add_row(ConstraintKind::conflict, -inf, 0.0), 1 + ab, 1 + cd, 1.0);
        continue;
      }
      int row = add_row(ConstraintKind::lifted_bound, -inf, 0.0);
      add_term(row, 1 + ab, 1 + cd, 1.0);
      add_term(row, 0, 1 + ab, -1.0);
      if (ab != cd) {
        row = add_row(ConstraintKind::lifted_bound, -inf, 0.0);
        add_term(row, 1 + ab, 1 + cd, 1.0);
        add_term(row, 0, 1 + cd, -1.0);
      }
    }
  }

  p.rows.resize(static_cast<Eigen::Index>(p.kinds.size()), static_cast<Eigen::Index>(p.variable_count()));
  p.rows.setFromTriplets(triplets.begin(), triplets.end());
  p.rows.makeCompressed();
  p.lower = Eigen::Map<Eigen::VectorXd>(lo.data(), static_cast<Eigen::Index>(lo.size()));
  p.upper = Eigen::Map<Eigen::VectorXd>(hi.data(), static_cast<Eigen::Index>(hi.size()));

  p.cost = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.variable_count()));
  const auto& entries = a.entries();
  for (Eigen::Index col = 0; col < entries.outerSize(); ++col) {
    for (AffinityMatrix::Sparse::InnerIterator it(entries, col); it; ++it) {
      const auto ab = static_cast<std::size_t>(it.row()), cd = static_cast<std::size_t>(it.col());
      if (ab > cd) continue;
      const std::ptrdiff_t v = var(1 + ab, 1 + cd);
      // trace(A Y) counts each off-diagonal entry twice; packed values carry sqrt(2).
      if (v >= 0) p.cost(v) = -(ab == cd ? it.value() : std::numbers::sqrt2 * it.value());
    }
  }
  return p;
}

enum class SdpStatus { converged, max_iterations, infeasible };

inline const char* to_string(SdpStatus s) {
  switch (s) {
    case SdpStatus::converged: return "converged";
    case SdpStatus::max_iterations: return "max_iterations";
    case SdpStatus::infeasible: return "infeasible";
  }
  return "unknown";
}

struct SdpSettings {
  double tol = 1e-4;
  int max_iter = 2000;
  double rho = 10.0;
  double sigma = 1e-6;
  double relaxation = 1.6;
  int adapt_interval = 50;
  /// Anderson acceleration depth; 0 runs the plain iteration.
  int anderson_memory = 0;
  double anderson_safeguard = 1.0;
  bool record_history = false;
};

struct SdpSolution {
  FractionalMatch x;
  Eigen::MatrixXd y;
  double objective = 0.0;
  double primal_residual = std::numeric_limits<double>::infinity();
  double dual_residual = std::numeric_limits<double>::infinity();
  double gap = std::numeric_limits<double>::infinity();
  int iterations = 0;
  SdpStatus status = SdpStatus::max_iterations;
  /// max(primal, dual) residual after each iteration (only when requested).
  std::vector<double> residual_history;
  /// Packed iterate after the final iteration, for reproducibility checks.
  Eigen::VectorXd packed;
};

namespace detail {

class SdpAdmm {
 public:
  SdpAdmm(const SdpProblem& p, const SdpSettings& s) : p_(p), s_(s) {
    const auto nv = static_cast<Eigen::Index>(p.variable_count());
    const auto nr = p.rows.rows();
    const auto nc = static_cast<Eigen::Index>(p.packed_dim());
    // Rows are normalized to unit length; iterates live in the scaled rows and
    // residuals are reported in the original units.
    row_scale_.resize(nr);
    for (Eigen::Index r = 0; r < nr; ++r) {
      const double norm = p.rows.row(r).norm();
      row_scale_(r) = norm > 0.0 ? 1.0 / norm : 1.0;
    }
    rows_ = row_scale_.asDiagonal() * p.rows;
    lower_ = row_scale_.cwiseProduct(p.lower);
    upper_ = row_scale_.cwiseProduct(p.upper);
    for (Eigen::Index r = 0; r < nr; ++r) {
      if (!std::isfinite(p.lower(r))) lower_(r) = p.lower(r);
      if (!std::isfinite(p.upper(r))) upper_(r) = p.upper(r);
    }
    rows_t_ = rows_.transpose();
    x_.setZero(nv);
    y_rows_.setZero(nr);
    y_cone_.setZero(nc);

    // Cold start: X = m / N^2 everywhere, Y = (m / N^2) I, Z(0,0) = 1.
    const double fill = static_cast<double>(p.m) / static_cast<double>(p.n * p.n);
    for (Eigen::Index v = 0; v < nv; ++v) {
      const std::size_t pos = p.var_to_packed[static_cast<std::size_t>(v)];
      const auto [i, j] = unpacked(pos);
      if (i == 0 && j == 0) x_(v) = 1.0;
      else if (i == 0) x_(v) = std::numbers::sqrt2 * fill;
      else if (i == j) x_(v) = fill;
    }
    z_rows_ = rows_ * x_;
    z_cone_ = embed(x_);
    set_rho(s.rho);
  }

  SdpSolution run() {
    SdpSolution out;
    const Eigen::Index dim = x_.size() + 2 * z_rows_.size() + 2 * z_cone_.size();
    const int mem = std::max(0, s_.anderson_memory);
    Eigen::MatrixXd d_g(dim, mem), d_f(dim, mem);
    int stored = 0, next_col = 0;
    Eigen::VectorXd u = state(), f, g, f_last, g_last, f_safe;
    double g_safe = std::numeric_limits<double>::infinity();
    bool extrapolated = false;

    for (int iter = 1; iter <= s_.max_iter; ++iter) {
      load(u);
      step();
      f = state();
      g = f - u;

      if (!f.allFinite()) {
        throw NumericalError("solve_sdp: non-finite iterate at iteration " + std::to_string(iter) +
                             " (primal residual " + std::to_string(out.primal_residual) + ", dual residual " +
                             std::to_string(out.dual_residual) + ")");
      }

      const Residuals r = residuals();
      out.primal_residual = r.primal;
      out.dual_residual = r.dual;
      out.gap = r.gap;
      out.iterations = iter;
      if (s_.record_history) out.residual_history.push_back(std::max(r.primal, r.dual));
      if (r.primal <= s_.tol && r.dual <= s_.tol && r.gap <= s_.tol) {
        out.status = SdpStatus::converged;
        break;
      }
      if (s_.adapt_interval > 0 && iter % s_.adapt_interval == 0 && adapt(r)) {
        // The fixed-point map changed; old differences no longer apply.
        stored = next_col = 0;
        extrapolated = false;
        g_safe = std::numeric_limits<double>::infinity();
        u = state();
        continue;
      }
      if (mem == 0) {
        u = f;
        continue;
      }

      const double g_norm = g.norm();
      if (extrapolated && g_norm > s_.anderson_safeguard * g_safe) {
        // The extrapolated point was worse than a plain step would have been.
        stored = next_col = 0;
        extrapolated = false;
        g_safe = std::numeric_limits<double>::infinity();
        u = f_safe;
        continue;
      }
      if (f_last.size() == dim) {
        d_g.col(next_col) = g - g_last;
        d_f.col(next_col) = f - f_last;
        next_col = (next_col + 1) % mem;
        stored = std::min(stored + 1, mem);
      }
      f_last = f;
      g_last = g;
      f_safe = f;
      g_safe = g_norm;
      if (stored == 0) {
        u = f;
        extrapolated = false;
        continue;
      }
      const auto dg = d_g.leftCols(stored);
      Eigen::MatrixXd gram = dg.transpose() * dg;
      const double reg = 1e-10 * (gram.diagonal().maxCoeff() + 1e-300);
      gram.diagonal().array() += reg;
      const Eigen::VectorXd gamma = gram.ldlt().solve(dg.transpose() * g);
      if (!gamma.allFinite()) {
        u = f;
        extrapolated = false;
        continue;
      }
      u = f - d_f.leftCols(stored) * gamma;
      extrapolated = true;
    }
    finish(out);
    return out;
  }

 private:
  Eigen::VectorXd state() const {
    Eigen::VectorXd u(x_.size() + 2 * z_rows_.size() + 2 * z_cone_.size());
    u << x_, z_rows_, y_rows_, z_cone_, y_cone_;
    return u;
  }

  void load(const Eigen::VectorXd& u) {
    Eigen::Index at = 0;
    for (Eigen::VectorXd* v : {&x_, &z_rows_, &y_rows_, &z_cone_, &y_cone_}) {
      *v = u.segment(at, v->size());
      at += v->size();
    }
  }

  void step() {
    const double alpha = s_.relaxation;
    const Eigen::VectorXd rhs = s_.sigma * x_ - p_.cost + rows_t_ * (rho_rows_.cwiseProduct(z_rows_) - y_rows_) +
                                gather(rho_ * z_cone_ - y_cone_);
    const Eigen::VectorXd x_tilde = ldlt_.solve(rhs);
    const Eigen::VectorXd zr_tilde = rows_ * x_tilde;
    const Eigen::VectorXd zc_tilde = embed(x_tilde);

    x_ = alpha * x_tilde + (1.0 - alpha) * x_;
    const Eigen::VectorXd zr_hat = alpha * zr_tilde + (1.0 - alpha) * z_rows_;
    const Eigen::VectorXd zc_hat = alpha * zc_tilde + (1.0 - alpha) * z_cone_;

    // y+ = rho (w - P(w)) with w = z_hat + y / rho; written this way the
    // multipliers of inactive rows are exactly zero.
    const Eigen::VectorXd wr = zr_hat + y_rows_.cwiseQuotient(rho_rows_);
    z_rows_ = wr.cwiseMax(lower_).cwiseMin(upper_);
    y_rows_ = rho_rows_.cwiseProduct(wr - z_rows_);
    const Eigen::VectorXd wc = zc_hat + y_cone_ / rho_;
    z_cone_ = pack_symmetric(projector_.project(unpack_symmetric(wc, p_.cone_dim)));
    y_cone_ = rho_ * (wc - z_cone_);
  }

  struct Residuals {
    double primal, dual, gap;
    double primal_raw, dual_raw;
    double primal_scale, dual_scale;
  };

  static std::pair<std::size_t, std::size_t> unpacked(std::size_t pos) {
    std::size_t j = static_cast<std::size_t>((std::sqrt(8.0 * static_cast<double>(pos) + 1.0) - 1.0) / 2.0);
    while (j * (j + 1) / 2 > pos) --j;
    while ((j + 1) * (j + 2) / 2 <= pos) ++j;
    return {pos - j * (j + 1) / 2, j};
  }

  Eigen::VectorXd embed(const Eigen::VectorXd& v) const {
    Eigen::VectorXd full = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p_.packed_dim()));
    for (Eigen::Index k = 0; k < v.size(); ++k) full(static_cast<Eigen::Index>(p_.var_to_packed[k])) = v(k);
    return full;
  }

  Eigen::VectorXd gather(const Eigen::VectorXd& full) const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(p_.variable_count()));
    for (Eigen::Index k = 0; k < v.size(); ++k) v(k) = full(static_cast<Eigen::Index>(p_.var_to_packed[k]));
    return v;
  }

  void set_rho(double rho) {
    rho_ = std::clamp(rho, 1e-6, 1e6);
    rho_rows_.resize(rows_.rows());
    for (Eigen::Index r = 0; r < rho_rows_.size(); ++r) {
      // Equality rows get a stiffer penalty.
      rho_rows_(r) = lower_(r) == upper_(r) ? 1e3 * rho_ : rho_;
    }
    const auto nv = static_cast<Eigen::Index>(p_.variable_count());
    Eigen::SparseMatrix<double> system = rows_t_ * rho_rows_.asDiagonal() * rows_;
    Eigen::SparseMatrix<double> shift(nv, nv);
    shift.setIdentity();
    system += (s_.sigma + rho_) * shift;
    if (!analyzed_) {
      ldlt_.analyzePattern(system);
      analyzed_ = true;
    }
    ldlt_.factorize(system);
    if (ldlt_.info() != Eigen::Success) throw NumericalError("solve_sdp: KKT factorization failed");
  }

  Residuals residuals() const {
    const Eigen::VectorXd ax = p_.rows * x_;
    const Eigen::VectorXd zr = z_rows_.cwiseQuotient(row_scale_);
    const Eigen::VectorXd ex = embed(x_);
    const double primal = std::max((ax - zr).lpNorm<Eigen::Infinity>(), (ex - z_cone_).lpNorm<Eigen::Infinity>());
    const double primal_scale =
        std::max({ax.lpNorm<Eigen::Infinity>(), ex.lpNorm<Eigen::Infinity>(), zr.lpNorm<Eigen::Infinity>(),
                  z_cone_.lpNorm<Eigen::Infinity>()});
    const Eigen::VectorXd aty = rows_t_ * y_rows_ + gather(y_cone_);
    const double dual = (p_.cost + aty).lpNorm<Eigen::Infinity>();
    const double dual_scale = std::max(aty.lpNorm<Eigen::Infinity>(), p_.cost.lpNorm<Eigen::Infinity>());

    const double pobj = p_.cost.dot(x_);
    double support = 0.0;
    for (Eigen::Index r = 0; r < y_rows_.size(); ++r) {
      const double y = y_rows_(r);
      if (y > 0.0) support += upper_(r) * y;
      else if (y < 0.0) support += lower_(r) * y;
    }
    const double dobj = -support;
    const double gap = std::isfinite(dobj) ? std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj))
                                           : std::numeric_limits<double>::infinity();
    return {primal / (1.0 + primal_scale), dual / (1.0 + dual_scale), gap, primal, dual, primal_scale, dual_scale};
  }

  bool adapt(const Residuals& r) {
    const double primal_rel = r.primal_raw / std::max(r.primal_scale, 1e-12);
    const double dual_rel = r.dual_raw / std::max(r.dual_scale, 1e-12);
    if (primal_rel <= 0.0 || dual_rel <= 0.0) return false;
    const double proposed = rho_ * std::sqrt(primal_rel / dual_rel);
    if (proposed <= 5.0 * rho_ && proposed >= 0.2 * rho_) return false;
    set_rho(proposed);
    return true;
  }

  void finish(SdpSolution& out) const {
    const std::size_t n = p_.n;
    const std::size_t k = n * n;
    const Eigen::MatrixXd z = unpack_symmetric(embed(x_), p_.cone_dim);
    out.x.m = p_.m;
    out.x.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t ab = 0; ab < k; ++ab) {
      out.x.x(static_cast<Eigen::Index>(ab % n), static_cast<Eigen::Index>(ab / n)) = z(0, static_cast<Eigen::Index>(1 + ab));
    }
    out.y = z.bottomRightCorner(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    out.objective = -p_.cost.dot(x_);
    out.x.objective = out.objective;
    out.packed = x_;
  }

  const SdpProblem& p_;
  SdpSettings s_;
  Eigen::SparseMatrix<double> rows_, rows_t_;
  Eigen::VectorXd row_scale_, lower_, upper_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
  bool analyzed_ = false;
  double rho_ = 0.1;
  Eigen::VectorXd rho_rows_;
  Eigen::VectorXd x_, z_rows_, z_cone_, y_rows_, y_cone_;
  PsdProjector projector_;
};

}  // namespace detail

/// Solves the relaxation by operator splitting (ADMM in the OSQP form).
///
/// The iterate is split into a copy that meets the linear rows (each step is a
/// prefactored normal-equation solve followed by clipping to the row bounds)
/// and a copy in the PSD cone (eigenvalue clipping). Duals accumulate the
/// disagreement. Returns at the first iterate whose scaled primal residual,
/// dual residual and duality gap are all <= tol.
inline SdpSolution solve_sdp(const SdpProblem& p, const SdpSettings& settings) {
  detail::require(settings.tol > 0.0, "solve_sdp: tol must be positive");
  detail::require(settings.max_iter >= 0, "solve_sdp: max_iter must be nonnegative");
  if (detail::candidate_matching_size(p.affinity) < p.m) {
    SdpSolution out;
    out.status = SdpStatus::infeasible;
    out.x.m = p.m;
    out.x.x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p.n), static_cast<Eigen::Index>(p.n));
    out.y = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p.n * p.n), static_cast<Eigen::Index>(p.n * p.n));
    return out;
  }
  detail::SdpAdmm admm(p, settings);
  return admm.run();
}

inline SdpSolution solve_sdp(const SdpProblem& p, double tol, int max_iter) {
  SdpSettings s;
  s.tol = tol;
  s.max_iter = max_iter;
  return solve_sdp(p, s);
}

/// Constraint violations of a solution, recomputed from X and Y directly.
struct KktReport {
  double homogenizing = 0.0;
  double match_bounds = 0.0;
  double row_sum = 0.0;
  double column_sum = 0.0;
  double total = 0.0;
  double trace = 0.0;
  double conflict = 0.0;
  double lifted_bound = 0.0;
  double zero_mask = 0.0;
  double symmetry = 0.0;
  double psd = 0.0;  // max(0, -lambda_min(Z))
  double min_eigenvalue = 0.0;

  double max_violation() const {
    return std::max({homogenizing, match_bounds, row_sum, column_sum, total, trace, conflict, lifted_bound, zero_mask,
                     symmetry, psd});
  }
};

/// Primal feasibility check that does not reuse the solver's constraint rows.
inline KktReport verify_kkt(const SdpProblem& p, const SdpSolution& s) {
  const std::size_t n = p.n;
  const std::size_t k = n * n;
  const Eigen::MatrixXd& x = s.x.x;
  const Eigen::MatrixXd& y = s.y;
  detail::require(x.rows() == static_cast<Eigen::Index>(n) && x.cols() == static_cast<Eigen::Index>(n),
                  "verify_kkt: X has the wrong shape");
  detail::require(y.rows() == static_cast<Eigen::Index>(k) && y.cols() == static_cast<Eigen::Index>(k),
                  "verify_kkt: Y has the wrong shape");
  auto xv = [&](std::size_t ab) { return x(static_cast<Eigen::Index>(ab % n), static_cast<Eigen::Index>(ab / n)); };
  const double md = static_cast<double>(p.m);

  KktReport r;
  r.match_bounds = std::max((-x.array()).maxCoeff(), (x.array() - 1.0).maxCoeff());
  r.match_bounds = std::max(r.match_bounds, 0.0);
  r.row_sum = std::max(0.0, (x.rowwise().sum().array() - 1.0).maxCoeff());
  r.column_sum = std::max(0.0, (x.colwise().sum().array() - 1.0).maxCoeff());
  r.total = std::abs(x.sum() - md);
  r.trace = std::abs(y.trace() - md);
  r.symmetry = (y - y.transpose()).cwiseAbs().maxCoeff();

  for (std::size_t ab = 0; ab < k; ++ab) {
    for (std::size_t cd = 0; cd < k; ++cd) {
      const double v = y(static_cast<Eigen::Index>(ab), static_cast<Eigen::Index>(cd));
      if (p.affinity.is_masked(ab, cd)) {
        r.zero_mask = std::max(r.zero_mask, std::abs(v));
        continue;
      }
      const bool same_src = ab % n == cd % n;
      const bool same_dst = ab / n == cd / n;
      if (ab != cd && same_src != same_dst) {
        r.conflict = std::max(r.conflict, v);
      } else {
        r.lifted_bound = std::max({r.lifted_bound, v - xv(ab), v - xv(cd)});
      }
    }
  }

  Eigen::MatrixXd z(static_cast<Eigen::Index>(k + 1), static_cast<Eigen::Index>(k + 1));
  z(0, 0) = 1.0;
  for (std::size_t ab = 0; ab < k; ++ab) {
    z(0, static_cast<Eigen::Index>(1 + ab)) = xv(ab);
    z(static_cast<Eigen::Index>(1 + ab), 0) = xv(ab);
  }
  z.bottomRightCorner(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) = 0.5 * (y + y.transpose());
  r.min_eigenvalue = min_eigenvalue(z);
  r.psd = std::max(0.0, -r.min_eigenvalue);
  return r;
}

/// Writes a self-describing text dump of a problem instance: sizes, the upper
/// triangle of A as (row, col, value) triplets and the zero mask.
inline void write_problem(std::ostream& os, const SdpProblem& p) {
  os.precision(17);
  os << "sdrsac-sdp-problem 1\n";
  os << "n " << p.n << "\nm " << p.m << "\nlifted_dim " << p.n * p.n << "\n";
  std::vector<std::tuple<std::size_t, std::size_t, double>> entries;
  const auto& a = p.affinity.entries();
  for (Eigen::Index col = 0; col < a.outerSize(); ++col) {
    for (AffinityMatrix::Sparse::InnerIterator it(a, col); it; ++it) {
      if (it.row() <= it.col()) entries.emplace_back(it.row(), it.col(), it.value());
    }
  }
  std::sort(entries.begin(), entries.end());
  os << "affinity " << entries.size() << "\n";
  for (const auto& [r, c, v] : entries) os << r << ' ' << c << ' ' << v << '\n';
  os << "zero_mask " << p.affinity.zero_mask().size() << "\n";
  for (const IndexPair& z : p.affinity.zero_mask()) os << z.row << ' ' << z.col << '\n';
}

/// Reads a dump written by write_problem and reassembles the problem.
inline SdpProblem read_problem(std::istream& is) {
  auto expect = [&](const std::string& word) {
    std::string token;
    if (!(is >> token) || token != word) throw ParseError("read_problem: expected '" + word + "'");
  };
  auto number = [&]() {
    std::size_t v = 0;
    if (!(is >> v)) throw ParseError("read_problem: expected an integer");
    return v;
  };
  expect("sdrsac-sdp-problem");
  if (number() != 1) throw UnsupportedFormat("read_problem: unknown version");
  expect("n");
  const std::size_t n = number();
  expect("m");
  const std::size_t m = number();
  expect("lifted_dim");
  const std::size_t dim = number();
  if (dim != n * n) throw ParseError("read_problem: lifted_dim does not equal n^2");
  expect("affinity");
  const std::size_t count = number();
  Eigen::MatrixXd values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t r = 0, c = 0;
    double v = 0.0;
    if (!(is >> r >> c >> v) || r >= dim || c >= dim) throw ParseError("read_problem: bad affinity triplet");
    values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    values(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(r)) = v;
  }
  expect("zero_mask");
  const std::size_t masked = number();
  std::vector<IndexPair> mask(masked);
  for (auto& z : mask) {
    if (!(is >> z.row >> z.col)) throw ParseError("read_problem: bad zero_mask pair");
  }
  return assemble_problem(AffinityMatrix::from_dense(n, values, std::move(mask)), m);
}

}  // namespace sdrsac
