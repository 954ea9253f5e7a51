#include <gtest/gtest.h>

#include <numbers>

#include "sdrsac/geometry.hpp"
#include "sdrsac/random.hpp"

using namespace sdrsac;

namespace {

PointCloud random_cloud(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  RandomStream rng(seed);
  std::vector<Vec3> pts;
  for (std::size_t i = 0; i < n; ++i) pts.emplace_back(rng.uniform(-scale, scale), rng.uniform(-scale, scale), rng.uniform(-scale, scale));
  return PointCloud(std::move(pts));
}

RigidTransform random_transform(std::uint64_t seed) {
  RandomStream rng(seed, {99});
  return RigidTransform(rng.rotation(), Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)));
}

Neighbor linear_scan(const PointCloud& c, const Vec3& q) {
  Neighbor best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double d = (c[i] - q).norm();
    if (d < best.distance) best = {i, d};
  }
  return best;
}

}  // namespace

TEST(PointCloud, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(PointCloud(std::vector<Vec3>{}), InvalidArgument);
  EXPECT_THROW(PointCloud({Vec3(0, std::numeric_limits<double>::quiet_NaN(), 0)}), InvalidArgument);
}

TEST(ApplyTransform, IdentityKeepsCloud) {
  const PointCloud c = random_cloud(50, 1);
  EXPECT_EQ(apply_transform(RigidTransform::identity(), c), c);
}

TEST(ApplyTransform, QuarterTurnAboutZ) {
  const Mat3 rz = Eigen::AngleAxisd(std::numbers::pi / 2, Vec3::UnitZ()).toRotationMatrix();
  const PointCloud out = apply_transform(RigidTransform(rz, Vec3::Zero()), PointCloud({Vec3(1, 0, 0)}));
  EXPECT_NEAR((out[0] - Vec3(0, 1, 0)).norm(), 0.0, 1e-15);
}

TEST(ApplyTransform, InverseRoundTrip) {
  const PointCloud c = random_cloud(200, 2);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const RigidTransform t = random_transform(s);
    const PointCloud back = apply_transform(t.inverse(), apply_transform(t, c));
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_LT((back[i] - c[i]).norm(), 1e-12);
  }
}

TEST(RigidTransform, RejectsReflection) {
  Mat3 m = Mat3::Identity();
  m(2, 2) = -1;
  EXPECT_THROW(RigidTransform(m, Vec3::Zero()), InvalidArgument);
}

TEST(RigidTransform, CompositionOrder) {
  const RigidTransform a = random_transform(3), b = random_transform(4);
  const Vec3 p(0.3, -0.2, 0.9);
  EXPECT_LT(((a * b)(p) - a(b(p))).norm(), 1e-14);
}

TEST(RotationError, ZeroForEqualAndKnownAngle) {
  const Mat3 r = RandomStream(5).rotation();
  EXPECT_NEAR(rotation_error_deg(r, r), 0.0, 1e-9);
  const Mat3 turn = Eigen::AngleAxisd(30.0 * std::numbers::pi / 180.0, Vec3::UnitX()).toRotationMatrix();
  EXPECT_NEAR(rotation_error_deg(turn * r, r), 30.0, 1e-9);
}

TEST(NearestNeighbor, ExactHitAndTwoPointCase) {
  const PointCloud c = random_cloud(100, 6).with_index();
  const Neighbor hit = nearest_neighbor(c, c[37]);
  EXPECT_EQ(hit.index, 37u);
  EXPECT_EQ(hit.distance, 0.0);

  const PointCloud two = PointCloud({Vec3(0, 0, 0), Vec3(1, 0, 0)}).with_index();
  const Neighbor nn = nearest_neighbor(two, Vec3(0.6, 0, 0));
  EXPECT_EQ(nn.index, 1u);
  EXPECT_NEAR(nn.distance, 0.4, 1e-15);
}

TEST(KdTree, MatchesLinearScan) {
  const PointCloud c = random_cloud(500, 7).with_index();
  RandomStream rng(8);
  for (int q = 0; q < 100; ++q) {
    const Vec3 query(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5));
    const Neighbor a = nearest_neighbor(c, query);
    const Neighbor b = linear_scan(c, query);
    EXPECT_EQ(a.index, b.index);
    EXPECT_EQ(a.distance, b.distance);
  }
}

TEST(KdTree, TiesResolveToSmallestIndex) {
  // Many duplicates make equal distances common.
  std::vector<Vec3> pts;
  for (int i = 0; i < 64; ++i) pts.emplace_back(i % 4, (i / 4) % 4, 0);
  for (int i = 0; i < 64; ++i) pts.emplace_back(i % 4, (i / 4) % 4, 0);
  const PointCloud c = PointCloud(pts).with_index();
  RandomStream rng(9);
  for (int q = 0; q < 200; ++q) {
    const Vec3 query(0.5 * static_cast<double>(rng.below(8)), 0.5 * static_cast<double>(rng.below(8)), 0.0);
    EXPECT_EQ(nearest_neighbor(c, query).index, linear_scan(c, query).index);
  }
}

TEST(Consensus, ExactCopyCountsEverything) {
  const PointCloud s = random_cloud(300, 10);
  const RigidTransform t = random_transform(11);
  const PointCloud d = apply_transform(t, s).with_index();
  const ConsensusResult r = consensus_score(s, d, t, 1e-6);
  EXPECT_EQ(r.count, s.size());
  EXPECT_EQ(r.inliers.size(), s.size());
}

TEST(Consensus, RejectsNonPositiveEpsilon) {
  const PointCloud s = random_cloud(10, 12);
  EXPECT_THROW(consensus_score(s, s, RigidTransform(), 0.0), InvalidArgument);
  EXPECT_THROW(consensus_score(s, s, RigidTransform(), -1.0), InvalidArgument);
}

TEST(Consensus, DroppedPointsStayOutliersWhenSparse) {
  // Sparse cloud, tiny eps: only surviving points can be inliers.
  const PointCloud s = random_cloud(1000, 13);
  const RigidTransform t = random_transform(14);
  RandomStream rng(15);
  std::vector<Vec3> kept;
  std::size_t survivors = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (rng.uniform() < 0.3) continue;
    kept.push_back(t(s[i]));
    ++survivors;
  }
  const PointCloud d = PointCloud(kept).with_index();
  EXPECT_EQ(consensus_score(s, d, t, 1e-6).count, survivors);
  // Binomial(1000, 0.7): 3 sigma is about 43.
  EXPECT_NEAR(static_cast<double>(survivors), 700.0, 3.0 * std::sqrt(1000 * 0.3 * 0.7));
}

TEST(EstimateRigid, IdentityOnEqualSets) {
  const PointCloud c = random_cloud(10, 16);
  const RigidTransform t = estimate_rigid(c.points(), c.points());
  EXPECT_LT((t.rotation() - Mat3::Identity()).norm(), 1e-12);
  EXPECT_LT(t.translation().norm(), 1e-12);
}

TEST(EstimateRigid, RecoversTransform) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const PointCloud c = random_cloud(10, 100 + s);
    const RigidTransform t0 = random_transform(200 + s);
    const PointCloud d = apply_transform(t0, c);
    const RigidTransform t = estimate_rigid(c.points(), d.points());
    EXPECT_LT((t.rotation() - t0.rotation()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((t.translation() - t0.translation()).cwiseAbs().maxCoeff(), 1e-9);
    double residual = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) residual += (t(c[i]) - d[i]).squaredNorm();
    EXPECT_LT(residual, 1e-15 * std::pow(c.extent(), 2));
  }
}

TEST(EstimateRigid, MirroredDataStillGivesProperRotation) {
  const PointCloud c = random_cloud(3, 17);
  std::vector<Vec3> mirrored;
  for (const Vec3& p : c.points()) mirrored.emplace_back(p.x(), p.y(), -p.z());
  const RigidTransform t = estimate_rigid(c.points(), mirrored);
  EXPECT_NEAR(t.rotation().determinant(), 1.0, 1e-12);
}

TEST(EstimateRigid, Errors) {
  const std::vector<Vec3> two{Vec3(0, 0, 0), Vec3(1, 0, 0)};
  EXPECT_THROW(estimate_rigid(two, two), InvalidArgument);
  const std::vector<Vec3> line{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0), Vec3(3, 0, 0)};
  EXPECT_THROW(estimate_rigid(line, line), DegenerateConfiguration);
  const std::vector<Vec3> three{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  EXPECT_THROW(estimate_rigid(three, two), InvalidArgument);
}

TEST(RandomStream, CounterStreamsAreReproducibleAndDistinct) {
  RandomStream a(42, {1, 2}), b(42, {1, 2}), c(42, {2, 1});
  for (int i = 0; i < 10; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    EXPECT_NE(x, c.next());
  }
}

TEST(RandomStream, SampleIndicesAreDistinctAndInRange) {
  RandomStream rng(3);
  for (int k = 0; k < 50; ++k) {
    auto idx = rng.sample_indices(40, 16);
    ASSERT_EQ(idx.size(), 16u);
    std::sort(idx.begin(), idx.end());
    EXPECT_EQ(std::adjacent_find(idx.begin(), idx.end()), idx.end());
    EXPECT_LT(idx.back(), 40u);
  }
  EXPECT_THROW(rng.sample_indices(3, 4), InvalidArgument);
}

TEST(RandomStream, RotationsAreProper) {
  RandomStream rng(4);
  for (int k = 0; k < 100; ++k) EXPECT_TRUE(RigidTransform::is_rotation(rng.rotation(), 1e-12));
}

TEST(RandomStream, NormalMoments) {
  RandomStream rng(5);
  const int n = 200000;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.02);
}
