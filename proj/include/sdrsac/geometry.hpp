#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sdrsac/errors.hpp"
#include "sdrsac/kdtree.hpp"

namespace sdrsac {

using Mat3 = Eigen::Matrix3d;

/// Ordered set of 3-d points with an optional nearest-neighbor index.
///
/// Copies share the index. The point storage is never mutated after
/// construction, which keeps the index consistent with the points.
class PointCloud {
 public:
  explicit PointCloud(std::vector<Vec3> points) : points_(std::move(points)) {
    detail::require(!points_.empty(), "PointCloud: at least one point is required");
    for (const Vec3& p : points_) {
      detail::require(p.allFinite(), "PointCloud: non-finite coordinate");
    }
  }

  std::size_t size() const { return points_.size(); }
  const Vec3& operator[](std::size_t i) const { return points_[i]; }
  std::span<const Vec3> points() const { return points_; }

  bool has_index() const { return index_ != nullptr; }
  const KdTree* index() const { return index_.get(); }

  /// Returns a copy of this cloud carrying a k-d tree over its points.
  PointCloud with_index() const {
    PointCloud out = *this;
    if (!out.index_) out.index_ = std::make_shared<const KdTree>(points_);
    return out;
  }

  PointCloud subset(std::span<const std::size_t> indices) const {
    std::vector<Vec3> pts;
    pts.reserve(indices.size());
    for (std::size_t i : indices) {
      detail::require(i < points_.size(), "PointCloud::subset: index out of range");
      pts.push_back(points_[i]);
    }
    return PointCloud(std::move(pts));
  }

  Vec3 centroid() const {
    Vec3 c = Vec3::Zero();
    for (const Vec3& p : points_) c += p;
    return c / static_cast<double>(points_.size());
  }

  /// Largest axis-aligned bounding-box side.
  double extent() const {
    Vec3 lo = points_.front();
    Vec3 hi = points_.front();
    for (const Vec3& p : points_) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    return (hi - lo).maxCoeff();
  }

  friend bool operator==(const PointCloud& a, const PointCloud& b) { return a.points_ == b.points_; }

 private:
  std::vector<Vec3> points_;
  std::shared_ptr<const KdTree> index_;
};

/// Rotation in SO(3) followed by a translation: p -> R p + t.
class RigidTransform {
 public:
  static constexpr double kTolerance = 1e-9;

  RigidTransform() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}

  RigidTransform(const Mat3& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {
    detail::require(rotation_.allFinite() && translation_.allFinite(), "RigidTransform: non-finite entries");
    detail::require(is_rotation(rotation_), "RigidTransform: rotation is not in SO(3)");
  }

  static RigidTransform identity() { return {}; }

  static bool is_rotation(const Mat3& r, double tol = kTolerance) {
    return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(r.determinant() - 1.0) <= tol;
  }

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Vec3 operator()(const Vec3& p) const { return rotation_ * p + translation_; }

  RigidTransform inverse() const {
    const Mat3 rt = rotation_.transpose();
    return RigidTransform(rt, -(rt * translation_));
  }

  /// (a * b)(p) == a(b(p))
  friend RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
    return RigidTransform(a.rotation_ * b.rotation_, a.rotation_ * b.translation_ + a.translation_);
  }

  friend bool operator==(const RigidTransform& a, const RigidTransform& b) {
    return a.rotation_ == b.rotation_ && a.translation_ == b.translation_;
  }

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

/// Geodesic angle between two rotations, in degrees.
inline double rotation_error_deg(const Mat3& estimate, const Mat3& truth) {
  const double c = std::clamp(((estimate * truth.transpose()).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

struct Correspondence {
  std::size_t source = 0;
  std::size_t target = 0;
  double score = 0.0;

  friend bool operator==(const Correspondence&, const Correspondence&) = default;
};

/// List of (source, target) index pairs. Sets produced as matchings never
/// repeat an index on either side; consensus inlier lists may repeat targets.
struct CorrespondenceSet {
  std::vector<Correspondence> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }

  bool is_matching() const {
    std::vector<std::size_t> src, dst;
    for (const auto& c : pairs) {
      src.push_back(c.source);
      dst.push_back(c.target);
    }
    auto unique = [](std::vector<std::size_t>& v) {
      std::sort(v.begin(), v.end());
      return std::adjacent_find(v.begin(), v.end()) == v.end();
    };
    return unique(src) && unique(dst);
  }

  friend bool operator==(const CorrespondenceSet&, const CorrespondenceSet&) = default;
};

struct ConsensusResult {
  std::size_t count = 0;
  CorrespondenceSet inliers;
};

inline PointCloud apply_transform(const RigidTransform& t, const PointCloud& c) {
  std::vector<Vec3> out;
  out.reserve(c.size());
  for (const Vec3& p : c.points()) out.push_back(t(p));
  return PointCloud(std::move(out));
}

/// Closest target point to `query`; ties resolve to the smallest index.
/// Uses the cloud's k-d tree when present, a linear scan otherwise.
inline Neighbor nearest_neighbor(const PointCloud& target, const Vec3& query) {
  if (const KdTree* tree = target.index()) return tree->nearest(query);
  Neighbor best{0, std::numeric_limits<double>::infinity()};
  double best_sq = best.distance;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double sq = (target[i] - query).squaredNorm();
    if (sq < best_sq) {
      best_sq = sq;
      best.index = i;
    }
  }
  best.distance = std::sqrt(best_sq);
  return best;
}

/// Counts source points that land within `eps` of their nearest target point
/// under `t`. Several source points may share one target point.
inline ConsensusResult consensus_score(const PointCloud& src, const PointCloud& dst, const RigidTransform& t,
                                       double eps) {
  detail::require(eps > 0.0 && std::isfinite(eps), "consensus_score: eps must be positive");
  const PointCloud indexed = dst.has_index() ? dst : dst.with_index();
  ConsensusResult result;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Neighbor nn = indexed.index()->nearest(t(src[i]));
    if (nn.distance <= eps) result.inliers.pairs.push_back({i, nn.index, nn.distance});
  }
  result.count = result.inliers.size();
  return result;
}

/// Least-squares rigid alignment of paired points (Kabsch). Reflections are
/// corrected by flipping the singular vector of the smallest singular value.
inline RigidTransform estimate_rigid(std::span<const Vec3> src, std::span<const Vec3> dst) {
  detail::require(src.size() == dst.size(), "estimate_rigid: point lists differ in length");
  detail::require(src.size() >= 3, "estimate_rigid: at least 3 pairs are required");

  Vec3 src_mean = Vec3::Zero();
  Vec3 dst_mean = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    src_mean += src[i];
    dst_mean += dst[i];
  }
  src_mean /= static_cast<double>(src.size());
  dst_mean /= static_cast<double>(src.size());

  Mat3 cross = Mat3::Zero();
  Mat3 src_scatter = Mat3::Zero();
  Mat3 dst_scatter = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Vec3 a = src[i] - src_mean;
    const Vec3 b = dst[i] - dst_mean;
    cross += a * b.transpose();
    src_scatter += a * a.transpose();
    dst_scatter += b * b.transpose();
  }

  // Rank <= 1 on either side leaves the rotation about the line undetermined.
  auto spread_rank_deficient = [](const Mat3& scatter) {
    const Vec3 ev = Eigen::SelfAdjointEigenSolver<Mat3>(scatter, Eigen::EigenvaluesOnly).eigenvalues();
    return ev[2] <= 0.0 || ev[1] <= 1e-12 * ev[2];
  };
  if (spread_rank_deficient(src_scatter) || spread_rank_deficient(dst_scatter)) {
    throw DegenerateConfiguration("estimate_rigid: points are collinear or coincident");
  }

  Eigen::JacobiSVD<Mat3> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3& u = svd.matrixU();
  Mat3 v = svd.matrixV();
  if ((v * u.transpose()).determinant() < 0.0) v.col(2) *= -1.0;
  Mat3 r = v * u.transpose();

  // Re-orthonormalize so round-off never breaks the SO(3) invariant.
  Eigen::JacobiSVD<Mat3> polish(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  r = polish.matrixU() * polish.matrixV().transpose();
  return RigidTransform(r, dst_mean - r * src_mean);
}

}  // namespace sdrsac
