#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sdrsac/errors.hpp"

#ifdef SDRSAC_HAVE_LAPACKE
#include <lapacke.h>
#endif

namespace sdrsac {

/// Euclidean (Frobenius) projection onto the PSD cone by eigenvalue clipping.
///
/// With LAPACKE only the eigenpairs on one side of zero are computed: the
/// positive ones when they are expected to be few, the negative ones
/// otherwise. The side is picked from the previous call's count, which is
/// only a speed heuristic; either side gives the same projection.
class PsdProjector {
 public:
  Eigen::MatrixXd project(const Eigen::MatrixXd& s) {
    detail::require(s.rows() == s.cols(), "project_psd: matrix must be square");
    if (!s.allFinite()) throw NumericalError("project_psd: non-finite matrix");
#ifdef SDRSAC_HAVE_LAPACKE
    return project_lapack(s);
#else
    return project_eigen(s);
#endif
  }

  /// Number of positive eigenvalues seen by the last projection.
  Eigen::Index last_positive_count() const { return positive_; }

 private:
  Eigen::MatrixXd project_eigen(const Eigen::MatrixXd& s) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    if (es.info() != Eigen::Success) throw NumericalError("project_psd: eigendecomposition failed");
    const Eigen::VectorXd clipped = es.eigenvalues().cwiseMax(0.0);
    positive_ = (es.eigenvalues().array() > 0.0).count();
    Eigen::MatrixXd out = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
    return (0.5 * (out + out.transpose())).eval();
  }

#ifdef SDRSAC_HAVE_LAPACKE
  Eigen::MatrixXd project_lapack(const Eigen::MatrixXd& s) {
    const Eigen::Index n = s.rows();
    // Partial spectra only pay off when one side is small; otherwise a full
    // decomposition is cheaper.
    const Eigen::Index small_side = std::min(positive_, n - positive_);
    if (first_ || small_side > n / 8) {
      first_ = false;
      return project_eigen(s);
    }
    const bool want_positive = positive_ <= n / 2;
    const double bound = s.cwiseAbs().rowwise().sum().maxCoeff() + 1.0;

    work_ = s;
    values_.resize(n);
    vectors_.resize(n, n);
    support_.resize(2 * static_cast<std::size_t>(n));
    lapack_int found = 0;
    const double lo = want_positive ? 0.0 : -bound;
    const double hi = want_positive ? bound : 0.0;
    const lapack_int info =
        LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'V', 'V', 'U', static_cast<lapack_int>(n), work_.data(),
                       static_cast<lapack_int>(n), lo, hi, 0, 0, 0.0, &found, values_.data(), vectors_.data(),
                       static_cast<lapack_int>(n), support_.data());
    if (info != 0) throw NumericalError("project_psd: dsyevr failed with info " + std::to_string(info));

    const auto v = vectors_.leftCols(found);
    const auto lambda = values_.head(found);
    positive_ = want_positive ? found : n - found;
    if (want_positive) {
      Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
      if (found > 0) out.noalias() = (v * lambda.asDiagonal()) * v.transpose();
      return (0.5 * (out + out.transpose())).eval();
    }
    Eigen::MatrixXd out = s;
    if (found > 0) out.noalias() -= (v * lambda.asDiagonal()) * v.transpose();
    // Exact symmetry keeps downstream packing independent of triangle choice.
    return (0.5 * (out + out.transpose())).eval();
  }

  bool first_ = true;
  Eigen::MatrixXd work_;
  Eigen::VectorXd values_;
  Eigen::MatrixXd vectors_;
  std::vector<lapack_int> support_;
#endif

  Eigen::Index positive_ = 0;
};

inline Eigen::MatrixXd project_psd(const Eigen::MatrixXd& s) {
  PsdProjector projector;
  return projector.project(s);
}

/// Smallest eigenvalue of a symmetric matrix.
inline double min_eigenvalue(const Eigen::MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

}  // namespace sdrsac
