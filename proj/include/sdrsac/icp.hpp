#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "sdrsac/errors.hpp"
#include "sdrsac/geometry.hpp"

namespace sdrsac {

struct IcpConfig {
  int max_iterations = 50;
  /// Stop when |mse_prev - mse| <= convergence_tol * mse_prev.
  double convergence_tol = 1e-8;
  /// Fraction of closest pairs kept per iteration; 1 is classic ICP.
  double trim_ratio = 1.0;

  void validate() const {
    detail::require(max_iterations >= 1, "IcpConfig: max_iterations must be >= 1");
    detail::require(convergence_tol > 0.0, "IcpConfig: convergence_tol must be positive");
    detail::require(trim_ratio > 0.0 && trim_ratio <= 1.0, "IcpConfig: trim_ratio must be in (0, 1]");
  }
};

struct IcpResult {
  RigidTransform transform;
  int iterations = 0;
  /// Trimmed mean squared error under `transform` on the last kept set.
  double mse = 0.0;
  bool converged = false;
  /// Set when a kept set could not determine a rotation; `transform` is then the init.
  bool degenerate = false;
  std::vector<double> mse_history;
};

namespace detail {

struct Residual {
  double squared;
  std::size_t source;
  std::size_t target;
};

inline std::size_t kept_count(std::size_t n, double trim_ratio) {
  const auto k = static_cast<std::size_t>(std::ceil(trim_ratio * static_cast<double>(n) - 1e-9));
  return std::clamp<std::size_t>(k, 1, n);
}

/// Nearest-target residuals under `t`, reduced to the `keep` smallest (ties by source index).
inline std::vector<Residual> closest_pairs(const PointCloud& src, const PointCloud& dst, const RigidTransform& t,
                                           std::size_t keep) {
  std::vector<Residual> res(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Neighbor nn = dst.index()->nearest(t(src[i]));
    res[i] = {nn.distance * nn.distance, i, nn.index};
  }
  if (keep < res.size()) {
    auto less = [](const Residual& a, const Residual& b) {
      return a.squared != b.squared ? a.squared < b.squared : a.source < b.source;
    };
    std::nth_element(res.begin(), res.begin() + static_cast<std::ptrdiff_t>(keep - 1), res.end(), less);
    res.resize(keep);
    std::sort(res.begin(), res.end(), [](const Residual& a, const Residual& b) { return a.source < b.source; });
  }
  return res;
}

inline double mean_squared(const std::vector<Residual>& res) {
  double sum = 0.0;
  for (const Residual& r : res) sum += r.squared;
  return sum / static_cast<double>(res.size());
}

}  // namespace detail

/// Point-to-point ICP with optional trimming (TrICP when trim_ratio < 1).
inline IcpResult icp_refine(const PointCloud& src, const PointCloud& dst, const RigidTransform& init,
                            const IcpConfig& cfg = {}) {
  cfg.validate();
  const PointCloud target = dst.has_index() ? dst : dst.with_index();
  const std::size_t keep = detail::kept_count(src.size(), cfg.trim_ratio);

  IcpResult out;
  out.transform = init;
  RigidTransform current = init;
  double previous = 0.0;
  std::vector<Vec3> a, b;
  for (int iter = 1; iter <= cfg.max_iterations; ++iter) {
    const auto pairs = detail::closest_pairs(src, target, current, keep);
    const double mse = detail::mean_squared(pairs);
    out.transform = current;
    out.mse = mse;
    out.iterations = iter;
    out.mse_history.push_back(mse);
    if (mse <= 1e-300 || (iter > 1 && std::abs(previous - mse) <= cfg.convergence_tol * previous)) {
      out.converged = true;
      return out;
    }
    previous = mse;

    a.clear();
    b.clear();
    for (const auto& r : pairs) {
      a.push_back(src[r.source]);
      b.push_back(target[r.target]);
    }
    try {
      current = estimate_rigid(a, b);
    } catch (const InvalidArgument&) {
      out = IcpResult{init, iter, 0.0, false, true, std::move(out.mse_history)};
      return out;
    } catch (const DegenerateConfiguration&) {
      out = IcpResult{init, iter, 0.0, false, true, std::move(out.mse_history)};
      return out;
    }
  }
  // Report the error of the last estimate on its own fresh correspondences.
  const auto pairs = detail::closest_pairs(src, target, current, keep);
  out.transform = current;
  out.mse = detail::mean_squared(pairs);
  return out;
}

}  // namespace sdrsac
