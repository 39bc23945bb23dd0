#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "occslam/occupancy_map.hpp"
#include "occslam/sim.hpp"
#include "support.hpp"

using namespace occslam;
using occslam::testing::BoxRoomScene;
using occslam::testing::Positions;
using occslam::testing::RandomVec;

namespace {

constexpr double kRes = 0.03;
constexpr double kDim = 15.36;

VoxelData Voxel(double accumulated, int weight) {
  return {accumulated / weight, weight};
}

}  // namespace

TEST(SensorModel, ShapeAtKeyPoints) {
  const SensorModelParams p;
  for (double z : {0.5, 1.0, 5.0, 12.0}) {
    const double s = p.sigma(z);
    const double tau = p.tau(z);
    EXPECT_EQ(inverse_sensor_model(0.0, z, p), 0.0);
    EXPECT_EQ(inverse_sensor_model(-3.0 * s, z, p), p.l_min);
    EXPECT_EQ(inverse_sensor_model(-10.0 * s, z, p), p.l_min);
    const double plateau = p.l_min * (0.5 * tau) / (-3.0 * s);
    EXPECT_NEAR(inverse_sensor_model(0.5 * tau, z, p), plateau, 1e-12);
    EXPECT_NEAR(inverse_sensor_model(tau, z, p), plateau, 1e-12);
    // One slope on both sides of the surface.
    const double h = 1e-4 * s;
    const double left = (inverse_sensor_model(0.0, z, p) - inverse_sensor_model(-h, z, p)) / h;
    const double right = (inverse_sensor_model(h, z, p) - inverse_sensor_model(0.0, z, p)) / h;
    EXPECT_NEAR(left, right, 1e-9 * std::abs(left));
    EXPECT_NEAR(left, -p.l_min / (3.0 * s), 1e-6 * std::abs(left));
  }
}

TEST(SensorModel, WidthsGrowWithRange) {
  const SensorModelParams p;
  EXPECT_EQ(p.sigma(0.1), p.sigma_min);
  EXPECT_EQ(p.tau(0.1), p.tau_min);
  EXPECT_NEAR(p.sigma(5.0), 0.25, 1e-15);
  EXPECT_NEAR(p.tau(5.0), 0.25, 1e-15);
}

TEST(SensorModel, InvalidRangeThrows) {
  EXPECT_THROW(inverse_sensor_model(0.0, 0.0, {}), std::domain_error);
  EXPECT_THROW(inverse_sensor_model(0.0, -1.0, {}), std::domain_error);
}

TEST(SensorModel, ParamsValidate) {
  SensorModelParams p;
  EXPECT_NO_THROW(p.validate());
  p.l_min = 1.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = {};
  p.w_max = 0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = {};
  p.sigma_max = 0.01;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(VoxelUpdate, IncrementalMeanEqualsBatchMean) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> l(-5.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    VoxelData v;
    double sum = 0.0;
    const int n = 1 + trial % 19;
    for (int k = 0; k < n; ++k) {
      const double x = l(rng);
      sum += x;
      v.update(x, 20);
    }
    EXPECT_EQ(v.weight, n);
    EXPECT_NEAR(v.mean_log_odds, sum / n, 1e-9);
    EXPECT_NEAR(v.accumulated(), sum, 1e-9);
    EXPECT_EQ(v.accumulated(), v.mean_log_odds * v.weight);
  }
}

TEST(VoxelUpdate, WeightClampsAtMax) {
  VoxelData v;
  for (int k = 0; k < 25; ++k) v.update(-2.0, 20);
  EXPECT_EQ(v.weight, 20);
  EXPECT_EQ(v.mean_log_odds, -2.0);
}

TEST(VoxelUpdate, SaturationIsMonotone) {
  const SensorModelParams p;
  const double plateau = p.l_min * (0.5 * p.tau(2.0)) / (-3.0 * p.sigma(2.0));
  VoxelData occ, free;
  double last_occ = 0.0, last_free = 0.0;
  for (int k = 0; k < 60; ++k) {
    occ.update(plateau, p.w_max);
    free.update(p.l_min, p.w_max);
    EXPECT_GE(occ.accumulated(), last_occ);
    EXPECT_LE(free.accumulated(), last_free);
    EXPECT_LE(occ.accumulated(), p.w_max * plateau + 1e-12);
    EXPECT_GE(free.accumulated(), p.w_max * p.l_min - 1e-12);
    last_occ = occ.accumulated();
    last_free = free.accumulated();
  }
}

TEST(OccupancySubmap, DepthFromDimension) {
  const OccupancySubmap map(0, kRes, kDim);
  EXPECT_EQ(map.depth(), 9);
  EXPECT_EQ(map.voxels_per_side(), 512);
  EXPECT_THROW(OccupancySubmap(0, 0.03, 10.0), std::invalid_argument);
}

TEST(OccupancySubmap, FreshMapIsEmpty) {
  OccupancySubmap map(0, kRes, kDim);
  const AuditReport r = map.audit_and_propagate();
  EXPECT_TRUE(r.ok);
  EXPECT_EQ(map.node_count(), 0u);
  EXPECT_FALSE(map.query_accumulated(Vec3::Zero()).has_value());
  EXPECT_FALSE(map.is_observed(Vec3::Zero()));
}

TEST(IntegrateRay, SingleRayFirstUpdate) {
  OccupancySubmap map(0, kRes, kDim);
  const Vec3 origin(0.01, 0.02, 0.015);
  const Vec3 end = origin + Vec3(5.0, 0.0, 0.0);
  const RayResult r = map.integrate_ray(origin, end);
  EXPECT_EQ(r.status, RayStatus::kIntegrated);
  EXPECT_GT(r.updates, 0u);

  const VoxelData mid = map.voxel(*map.voxel_index(origin + Vec3(2.5, 0, 0)));
  EXPECT_EQ(mid.weight, 1);
  EXPECT_EQ(mid.mean_log_odds, map.params().l_min);

  // Endpoint voxel: model evaluated at its center's signed distance.
  const VoxelIndex ei = *map.voxel_index(end);
  const double d_r = (map.voxel_center(ei) - origin).dot(Vec3::UnitX()) - 5.0;
  const VoxelData at_end = map.voxel(ei);
  EXPECT_EQ(at_end.weight, 1);
  EXPECT_NEAR(at_end.mean_log_odds, inverse_sensor_model(d_r, 5.0, map.params()), 1e-12);
  EXPECT_LT(std::abs(at_end.mean_log_odds), 0.5);

  // Nothing beyond tau/2.
  const double tau = map.params().tau(5.0);
  EXPECT_FALSE(map.is_observed(end + Vec3(0.5 * tau + 2 * kRes, 0, 0)));
}

TEST(IntegrateRay, RepeatedRayIsFixedPoint) {
  OccupancySubmap once(0, kRes, kDim), twice(0, kRes, kDim), many(0, kRes, kDim);
  const Vec3 o(0.2, -0.3, 0.1), e(-2.0, 3.0, 0.7);
  once.integrate_ray(o, e);
  twice.integrate_ray(o, e);
  twice.integrate_ray(o, e);
  const int w_max = many.params().w_max;
  for (int k = 0; k < w_max + 5; ++k) many.integrate_ray(o, e);

  std::size_t checked = 0;
  once.for_each_observed_voxel([&](const VoxelIndex& i, const VoxelData& d) {
    const VoxelData d2 = twice.voxel(i);
    const VoxelData dn = many.voxel(i);
    EXPECT_EQ(d2.weight, 2 * d.weight);
    EXPECT_NEAR(d2.mean_log_odds, d.mean_log_odds, 1e-12);
    EXPECT_EQ(dn.weight, w_max);
    EXPECT_NEAR(dn.mean_log_odds, d.mean_log_odds, 1e-12);
    ++checked;
  });
  EXPECT_GT(checked, 10u);
}

TEST(IntegrateRay, RejectsZeroLengthAndClipsOutside) {
  OccupancySubmap map(0, kRes, kDim);
  EXPECT_EQ(map.integrate_ray(Vec3::Zero(), Vec3::Zero()).status, RayStatus::kRejected);
  EXPECT_EQ(map.node_count(), 0u);

  const Vec3 far(20.0, 0.0, 0.0);
  const RayResult r = map.integrate_ray(Vec3::Zero(), far);
  EXPECT_EQ(r.status, RayStatus::kClipped);
  // Free space inside, no surface evidence anywhere.
  EXPECT_TRUE(map.is_observed(Vec3(5.0, 0.0, 0.0)));
  EXPECT_LE(map.root_summary().max_log_odds, map.params().l_min + 1e-12);
}

TEST(IntegrateScan, EmptyScan) {
  OccupancySubmap map(0, kRes, kDim);
  const ScanIntegrationStats s = map.integrate_scan(Pose(), {});
  EXPECT_EQ(s.integrated + s.clipped + s.rejected + s.voxel_updates, 0u);
  EXPECT_EQ(map.node_count(), 0u);
}

TEST(IntegrateScan, BoxRoomWallsOccupiedAndInteriorsFree) {
  const Scene scene = parse_scene("room 0 0 0 3 2.5 1.5\n");
  LidarModel lidar;
  lidar.n_beams = 32;
  lidar.vertical_fov_min = -1.2;
  lidar.vertical_fov_max = 1.2;
  lidar.rate = 100000.0;
  const LidarScan scan = raycast(scene, Pose(), lidar, 0.0, 0.1);
  ASSERT_EQ(scan.points.size(), 10000u);
  const std::vector<Vec3> pts = Positions(scan);

  OccupancySubmap map(0, kRes, kDim);
  const ScanIntegrationStats s = map.integrate_scan(Pose(), pts);
  EXPECT_EQ(s.integrated, pts.size());
  EXPECT_TRUE(map.audit_and_propagate().ok);

  // Faces: +-x, +-y, +-z.
  std::array<int, 6> occupied{};
  int free_ok = 0, free_checked = 0;
  for (const Vec3& p : pts) {
    // The voxel just behind the return carries the surface evidence.
    const double l = map.voxel(*map.voxel_index(p + kRes * p.normalized())).accumulated();
    int face = 0;
    const Vec3 a = p.cwiseAbs().cwiseQuotient(Vec3(3, 2.5, 1.5));
    a.maxCoeff(&face);
    if (l > 0.0) ++occupied[2 * face + (p[face] > 0 ? 0 : 1)];
    const VoxelData mid = map.voxel(*map.voxel_index(0.5 * p));
    if (0.5 * p.norm() > 3.0 * map.params().sigma(p.norm()) + 0.1) {
      ++free_checked;
      if (mid.accumulated() == mid.weight * map.params().l_min) ++free_ok;
    }
  }
  for (int f = 0; f < 6; ++f) EXPECT_GT(occupied[f], 20) << "face " << f;
  EXPECT_GT(free_checked, 1000);
  EXPECT_EQ(free_ok, free_checked);
}

TEST(IntegrateScan, RotatedFrameGivesIdenticalMap) {
  std::mt19937_64 rng(4);
  std::vector<Vec3> pts;
  for (int i = 0; i < 500; ++i) pts.push_back(RandomVec(rng, 4.0));
  const Pose t_ms(exp_so3(Vec3(0.3, -0.2, 1.1)), Vec3(0.4, 0.1, -0.2));
  std::vector<Vec3> rotated;
  for (const Vec3& p : pts) rotated.push_back(t_ms.rotation * p);

  OccupancySubmap a(0, kRes, kDim), b(0, kRes, kDim);
  a.integrate_scan(t_ms, pts);
  b.integrate_scan(Pose(Rotation(), t_ms.translation), rotated);
  EXPECT_EQ(a.checksum(), b.checksum());
  EXPECT_EQ(a.node_count(), b.node_count());
}

TEST(Query, AtVoxelCenterReturnsVoxelValue) {
  OccupancySubmap map(0, kRes, kDim);
  const VoxelIndex base(250, 260, 255);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> l(-50.0, 10.0);
  for (int dx = -1; dx <= 1; ++dx)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dz = -1; dz <= 1; ++dz) map.set_voxel(base + VoxelIndex(dx, dy, dz), Voxel(l(rng), 5));
  map.propagate();
  const auto q = map.query_accumulated(map.voxel_center(base));
  ASSERT_TRUE(q.has_value());
  EXPECT_NEAR(*q, map.voxel(base).accumulated(), 1e-12);
}

TEST(Query, MidpointOfOpposingValuesIsZero) {
  OccupancySubmap map(0, kRes, kDim);
  const VoxelIndex base(100, 100, 100);
  for (int dy = 0; dy <= 1; ++dy)
    for (int dz = 0; dz <= 1; ++dz) {
      map.set_voxel(base + VoxelIndex(0, dy, dz), Voxel(-2.0, 1));
      map.set_voxel(base + VoxelIndex(1, dy, dz), Voxel(2.0, 1));
    }
  map.propagate();
  const Vec3 mid = 0.5 * (map.voxel_center(base) + map.voxel_center(base + VoxelIndex(1, 1, 1)));
  const auto q = map.query_accumulated(mid);
  ASSERT_TRUE(q.has_value());
  EXPECT_NEAR(*q, 0.0, 1e-12);
}

TEST(Query, UnknownIfAnyCornerUnobserved) {
  OccupancySubmap map(0, kRes, kDim);
  const VoxelIndex base(100, 100, 100);
  for (int i = 0; i < 8; ++i) {
    if (i == 5) continue;
    map.set_voxel(base + VoxelIndex(i & 1, (i >> 1) & 1, (i >> 2) & 1), Voxel(-1.0, 1));
  }
  map.propagate();
  const Vec3 mid = 0.5 * (map.voxel_center(base) + map.voxel_center(base + VoxelIndex(1, 1, 1)));
  EXPECT_FALSE(map.query_accumulated(mid).has_value());
  EXPECT_FALSE(map.query_accumulated(Vec3(100.0, 0.0, 0.0)).has_value());
}

TEST(Query, InterpolationIsConvexCombination) {
  OccupancySubmap map(0, kRes, kDim);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> l(-100.0, 20.0);
  const VoxelIndex lo(200, 200, 200);
  for (int x = 0; x < 8; ++x)
    for (int y = 0; y < 8; ++y)
      for (int z = 0; z < 8; ++z) map.set_voxel(lo + VoxelIndex(x, y, z), Voxel(l(rng), 3));
  map.propagate();
  std::uniform_real_distribution<double> u(0.0, 7.0);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 f(u(rng), u(rng), u(rng));
    const Vec3 p = map.voxel_center(lo) + kRes * f;
    const VoxelIndex c = lo + VoxelIndex(int(std::floor(f.x())), int(std::floor(f.y())),
                                         int(std::floor(f.z())));
    double mn = 1e300, mx = -1e300;
    for (int k = 0; k < 8; ++k) {
      const double v = map.voxel(c + VoxelIndex(k & 1, (k >> 1) & 1, (k >> 2) & 1)).accumulated();
      mn = std::min(mn, v);
      mx = std::max(mx, v);
    }
    const auto q = map.query_accumulated(p);
    ASSERT_TRUE(q.has_value());
    EXPECT_GE(*q, mn - 1e-9);
    EXPECT_LE(*q, mx + 1e-9);
  }
}

TEST(Query, ContinuityBound) {
  OccupancySubmap map(0, kRes, kDim);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> l(-100.0, 20.0);
  const VoxelIndex lo(300, 200, 250);
  double max_jump = 0.0;
  for (int x = 0; x < 6; ++x)
    for (int y = 0; y < 6; ++y)
      for (int z = 0; z < 6; ++z) map.set_voxel(lo + VoxelIndex(x, y, z), Voxel(l(rng), 1));
  for (int x = 0; x < 5; ++x)
    for (int y = 0; y < 6; ++y)
      for (int z = 0; z < 6; ++z) {
        const VoxelIndex i = lo + VoxelIndex(x, y, z);
        for (const VoxelIndex& d : {VoxelIndex(1, 0, 0), VoxelIndex(0, 1, 0), VoxelIndex(0, 0, 1)}) {
          if (!map.in_bounds(i + d) || (i + d - lo).maxCoeff() > 5) continue;
          max_jump = std::max(max_jump, std::abs(map.voxel(i).accumulated() -
                                                 map.voxel(i + d).accumulated()));
        }
      }
  map.propagate();
  const double eps = kRes / 100.0;
  std::uniform_real_distribution<double> u(0.1, 4.8);
  for (int i = 0; i < 500; ++i) {
    const Vec3 p = map.voxel_center(lo) + kRes * Vec3(u(rng), u(rng), u(rng));
    const Vec3 step = eps * RandomVec(rng, 1.0).normalized();
    const auto a = map.query_accumulated(p);
    const auto b = map.query_accumulated(p + step);
    ASSERT_TRUE(a && b);
    // Trilinear: slope along any axis is bounded by the largest neighbour jump.
    EXPECT_LE(std::abs(*a - *b), std::sqrt(3.0) * max_jump * (eps / kRes) + 1e-9);
  }
}

TEST(Gradient, ZeroInUniformFreeSpace) {
  OccupancySubmap map(0, kRes, kDim);
  map.set_uniform(3, VoxelIndex(256, 256, 256), Voxel(-100.0, 20));
  map.propagate();
  const Vec3 p = map.voxel_center(VoxelIndex(259, 259, 259)) + Vec3(0.004, 0.011, -0.007);
  const auto g = map.query_gradient(p);
  ASSERT_TRUE(g.has_value());
  EXPECT_EQ(g->norm(), 0.0);
}

TEST(Gradient, MatchesFiniteDifferencesOfQueryInSmoothField) {
  OccupancySubmap map(0, kRes, kDim);
  const VoxelIndex lo(240, 240, 240);
  const Vec3 c0 = map.voxel_center(lo);
  // Multilinear fields are reproduced exactly by trilinear interpolation.
  auto field = [&](const Vec3& p) {
    const Vec3 q = p - c0;
    return 80.0 * q.x() - 30.0 * q.y() + 10.0 * q.z() + 200.0 * q.x() * q.y() * q.z() - 5.0;
  };
  for (int x = 0; x < 12; ++x)
    for (int y = 0; y < 12; ++y)
      for (int z = 0; z < 12; ++z) {
        const VoxelIndex i = lo + VoxelIndex(x, y, z);
        map.set_voxel(i, {field(map.voxel_center(i)), 1});
      }
  map.propagate();
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(2.0, 9.0);
  const double h = kRes / 10.0;
  for (int i = 0; i < 200; ++i) {
    const Vec3 p = c0 + kRes * Vec3(u(rng), u(rng), u(rng));
    const auto g = map.query_gradient(p);
    const auto f = map.query_field(p);
    ASSERT_TRUE(g && f);
    EXPECT_EQ(f->gradient, *g);
    Vec3 fd;
    for (int k = 0; k < 3; ++k) {
      const Vec3 d = h * Vec3::Unit(k);
      fd[k] = (*map.query_accumulated(p + d) - *map.query_accumulated(p - d)) / (2 * h);
    }
    EXPECT_LT((fd - *g).norm(), 1e-2 * g->norm());
  }
}

TEST(Gradient, PlanarWallNormal) {
  const Scene scene = parse_scene("plane 2 0 0 3 3 0.7071067811865476 0 0.7071067811865476 0\n");
  LidarModel lidar;
  lidar.n_beams = 64;
  lidar.vertical_fov_min = -0.4;
  lidar.vertical_fov_max = 0.4;
  lidar.rate = 400000.0;
  OccupancySubmap map(0, kRes, kDim);
  for (int v = 0; v < 6; ++v) {
    const Pose pose(occslam::testing::Yaw(0.05 * v), Vec3(-0.1 * v, 0.05 * v, 0.03 * v));
    lidar.seed = v + 1;
    const std::vector<Vec3> pts = Positions(raycast(scene, pose, lidar, 0.0, 0.1));
    map.integrate_scan(pose, pts);
  }
  int checked = 0;
  for (double y = -0.6; y <= 0.6; y += 0.1) {
    for (double z = -0.3; z <= 0.3; z += 0.1) {
      const auto g = map.query_gradient(Vec3(2.0, y, z));
      if (!g || g->norm() < 1.0) continue;
      ++checked;
      const double angle = std::acos(std::min(1.0, std::abs(g->normalized().x())));
      EXPECT_LT(angle, 5.0 * M_PI / 180.0) << y << " " << z << " " << g->transpose();
    }
  }
  EXPECT_GT(checked, 30);
}

TEST(Audit, OneRaySummariesAreMaxOverDescendants) {
  OccupancySubmap map(0, kRes, kDim);
  map.integrate_ray(Vec3(0.1, 0.2, 0.3), Vec3(3.0, 1.0, -0.5));
  const AuditReport r = map.audit_and_propagate();
  EXPECT_TRUE(r.ok);
  EXPECT_TRUE(r.violations.empty());
  double mx = -1e300;
  map.for_each_observed_voxel([&](const VoxelIndex&, const VoxelData& d) {
    mx = std::max(mx, d.accumulated());
  });
  EXPECT_EQ(map.root_summary().max_log_odds, mx);
  EXPECT_EQ(map.root_summary().observed, ObservedFraction::kPartial);
  // Coarse observation queries agree with the voxels below them.
  map.for_each_observed_voxel([&](const VoxelIndex& i, const VoxelData&) {
    for (int level = 0; level <= map.depth(); ++level) {
      EXPECT_TRUE(map.is_observed(map.voxel_center(i), level));
    }
  });
}

TEST(Audit, IncrementalSummariesMatchFullRecompute) {
  OccupancySubmap map(0, kRes, kDim);
  std::mt19937_64 rng(21);
  for (int i = 0; i < 200; ++i) map.integrate_ray(RandomVec(rng, 0.5), RandomVec(rng, 6.0));
  EXPECT_TRUE(map.audit_and_propagate().ok);
}

TEST(Audit, SaturatedSiblingsArePruned) {
  OccupancySubmap map(0, kRes, kDim, {}, 1);
  const VoxelIndex origin(64, 64, 64);
  const VoxelData sat{map.params().l_min, map.params().w_max};
  for (int k = 0; k < 8; ++k) map.set_voxel(origin + VoxelIndex(k & 1, (k >> 1) & 1, (k >> 2) & 1), sat);
  map.propagate();
  std::vector<double> before;
  std::mt19937_64 rng(3);
  std::vector<Vec3> probes;
  for (int i = 0; i < 50; ++i) {
    probes.push_back(map.voxel_center(origin) + kRes * (Vec3(0.5, 0.5, 0.5) + 0.5 * RandomVec(rng, 1.0)));
  }
  for (const Vec3& p : probes) before.push_back(map.query_accumulated(p).value_or(1e9));
  const std::size_t nodes = map.node_count();
  const AuditReport r = map.audit_and_propagate();
  EXPECT_TRUE(r.ok);
  EXPECT_GE(r.pruned, 1u);
  EXPECT_LT(map.node_count(), nodes);
  for (std::size_t i = 0; i < probes.size(); ++i) {
    EXPECT_EQ(map.query_accumulated(probes[i]).value_or(1e9), before[i]);
  }
  for (int k = 0; k < 8; ++k) {
    EXPECT_EQ(map.voxel(origin + VoxelIndex(k & 1, (k >> 1) & 1, (k >> 2) & 1)), sat);
  }
}

TEST(Audit, UnsaturatedSiblingsAreKept) {
  OccupancySubmap map(0, kRes, kDim, {}, 1);
  const VoxelIndex origin(64, 64, 64);
  for (int k = 0; k < 8; ++k) {
    map.set_voxel(origin + VoxelIndex(k & 1, (k >> 1) & 1, (k >> 2) & 1), {-5.0, 3});
  }
  map.propagate();
  EXPECT_EQ(map.audit_and_propagate().pruned, 0u);
}

TEST(Slice, EmptyMapIsUnknown) {
  const OccupancySubmap map(0, kRes, kDim);
  const SliceGrid s = export_slice(map, 0.0);
  EXPECT_EQ(s.width, 512);
  EXPECT_TRUE(std::all_of(s.classes.begin(), s.classes.end(),
                          [](CellClass c) { return c == CellClass::kUnknown; }));
  EXPECT_THROW(export_slice(map, 100.0), std::out_of_range);
}

TEST(Slice, BoxRoomHasOccupiedBoundaryAndFreeInterior) {
  const Scene scene = parse_scene("room 0 0 0 3 2 1.5\n");
  LidarModel lidar;
  lidar.n_beams = 16;
  lidar.vertical_fov_min = -0.1;
  lidar.vertical_fov_max = 0.1;
  lidar.rate = 200000.0;
  OccupancySubmap map(0, kRes, kDim);
  map.integrate_scan(Pose(), Positions(raycast(scene, Pose(), lidar, 0.0, 0.1)));
  const SliceGrid s = export_slice(map, 0.0);

  auto cell = [&](double x, double y) {
    const int col = static_cast<int>(std::floor((x - s.x0) / s.resolution));
    const int row = s.rows - 1 - static_cast<int>(std::floor((y - s.y0) / s.resolution));
    return s.at(row, col);
  };
  EXPECT_EQ(cell(0.0, 0.0), CellClass::kFree);
  EXPECT_EQ(cell(1.5, 1.0), CellClass::kFree);
  EXPECT_EQ(cell(0.0, 5.0), CellClass::kUnknown);
  // Occupied cells sit on the four walls only.
  int occupied = 0, on_wall = 0;
  std::array<int, 4> walls{};
  for (int row = 0; row < s.rows; ++row) {
    for (int col = 0; col < s.width; ++col) {
      if (s.at(row, col) != CellClass::kOccupied) continue;
      ++occupied;
      const double x = s.x0 + (col + 0.5) * s.resolution;
      const double y = s.y0 + (s.rows - 1 - row + 0.5) * s.resolution;
      const double dx = std::abs(std::abs(x) - 3.0), dy = std::abs(std::abs(y) - 2.0);
      if (dx < 0.1 || dy < 0.1) ++on_wall;
      if (dx < 0.1) ++walls[x > 0 ? 0 : 1];
      if (dy < 0.1) ++walls[y > 0 ? 2 : 3];
    }
  }
  EXPECT_GT(occupied, 100);
  EXPECT_EQ(on_wall, occupied);
  for (int w : walls) EXPECT_GT(w, 20);
}

TEST(Slice, SphereOfRaysGivesAnnulus) {
  // Rays of one length in all directions form a spherical shell.
  OccupancySubmap map(0, kRes, kDim);
  std::vector<Vec3> pts;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / n;
    const double phi = i * M_PI * (3.0 - std::sqrt(5.0));
    const double r = std::sqrt(1.0 - z * z);
    pts.push_back(2.0 * Vec3(r * std::cos(phi), r * std::sin(phi), z));
  }
  map.integrate_scan(Pose(), pts);
  const SliceGrid s = export_slice(map, 0.0);
  int occupied = 0;
  for (int row = 0; row < s.rows; ++row) {
    for (int col = 0; col < s.width; ++col) {
      if (s.at(row, col) != CellClass::kOccupied) continue;
      ++occupied;
      const double x = s.x0 + (col + 0.5) * s.resolution;
      const double y = s.y0 + (s.rows - 1 - row + 0.5) * s.resolution;
      const double r = std::hypot(x, y);
      EXPECT_GT(r, 1.95);
      EXPECT_LT(r, 2.1);
    }
  }
  EXPECT_GT(occupied, 100);
}

TEST(Slice, WritesPgmAndCsv) {
  OccupancySubmap map(0, 0.5, 8.0);
  map.integrate_ray(Vec3(0.1, 0.1, 0.1), Vec3(3.0, 0.1, 0.1));
  const SliceGrid s = export_slice(map, 0.1);
  const auto dir = std::filesystem::temp_directory_path() / "occslam_slice_test";
  std::filesystem::create_directories(dir);
  write_slice_pgm(s, (dir / "s.pgm").string());
  write_slice_csv(s, (dir / "s.csv").string());
  std::ifstream pgm(dir / "s.pgm");
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  pgm >> magic >> w >> h >> maxval;
  EXPECT_EQ(magic, "P2");
  EXPECT_EQ(w, 16);
  EXPECT_EQ(h, 16);
  EXPECT_EQ(maxval, 255);
  std::ifstream csv(dir / "s.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "x0,y0,resolution,height");
}

TEST(Serialization, RoundTripIsBitExact) {
  OccupancySubmap map(42, kRes, kDim);
  std::mt19937_64 rng(31);
  for (int i = 0; i < 300; ++i) map.integrate_ray(RandomVec(rng, 0.5), RandomVec(rng, 5.0));
  map.set_uniform(4, VoxelIndex(0, 0, 0), {-5.0, 20});
  map.audit_and_propagate();
  std::stringstream buffer;
  save_submap(map, buffer);
  const OccupancySubmap back = load_submap(buffer);
  EXPECT_EQ(back.anchor_state_id(), 42);
  EXPECT_EQ(back.resolution(), map.resolution());
  EXPECT_EQ(back.checksum(), map.checksum());
  std::size_t n = 0;
  map.for_each_observed_voxel([&](const VoxelIndex& i, const VoxelData& d) {
    EXPECT_EQ(back.voxel(i), d);
    ++n;
  });
  EXPECT_GT(n, 1000u);
}

TEST(Serialization, RejectsGarbage) {
  std::stringstream buffer("not a submap");
  EXPECT_THROW(load_submap(buffer), std::runtime_error);
}
