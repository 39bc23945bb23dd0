#pragma once

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "occslam/geometry.hpp"
#include "occslam/occupancy_map.hpp"
#include "occslam/sim.hpp"

namespace occslam::testing {

inline Vec3 RandomVec(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

inline Pose RandomPose(std::mt19937_64& rng, double translation_scale = 2.0,
                       double max_angle = 3.0) {
  Vec3 axis = RandomVec(rng, 1.0);
  while (axis.norm() < 1e-3) axis = RandomVec(rng, 1.0);
  std::uniform_real_distribution<double> angle(0.0, max_angle);
  return Pose(exp_so3(axis.normalized() * angle(rng)), RandomVec(rng, translation_scale));
}

inline Rotation Yaw(double radians) { return exp_so3(Vec3(0.0, 0.0, radians)); }

// 8 x 6 x 3 m room with two obstacles.
inline Scene BoxRoomScene() {
  return parse_scene(
      "room 0 0 1.5 4 3 1.5\n"
      "box 1.5 1 0.5 0.4 0.5 0.5 30\n"
      "box -2 -1 1 0.3 0.3 1\n");
}

inline LidarModel DenseLidar(std::uint64_t seed) {
  LidarModel m;
  m.n_beams = 64;
  m.rate = 400000.0;
  m.vertical_fov_min = -0.5;
  m.vertical_fov_max = 0.5;
  m.max_range = 20.0;
  m.seed = seed;
  return m;
}

inline std::vector<Vec3> Positions(const LidarScan& scan) {
  std::vector<Vec3> out;
  out.reserve(scan.points.size());
  for (const TimedPoint& p : scan.points) out.push_back(p.position);
  return out;
}

// Random sensor poses inside the box room, away from the walls.
inline std::vector<Pose> RoomViewpoints(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(-2.5, 2.5), uy(-1.5, 1.5), uz(0.8, 2.0),
      yaw(-M_PI, M_PI);
  std::vector<Pose> out;
  while (out.size() < n) {
    const double x = ux(rng), y = uy(rng), z = uz(rng), a = yaw(rng);
    // Keep clear of the two obstacles.
    if (std::abs(x - 1.5) < 0.9 && std::abs(y - 1.0) < 0.9 && z < 1.3) continue;
    if (std::abs(x + 2.0) < 0.6 && std::abs(y + 1.0) < 0.6) continue;
    out.emplace_back(Yaw(a), Vec3(x, y, z));
  }
  return out;
}

// Map anchored at t_wm, integrated from static dense scans at each view.
inline std::shared_ptr<OccupancySubmap> BuildMap(const Scene& scene, const Pose& t_wm,
                                                 const std::vector<Pose>& views,
                                                 std::uint64_t seed, StateId anchor = 0) {
  auto map = std::make_shared<OccupancySubmap>(anchor, 0.03, 15.36);
  for (std::size_t v = 0; v < views.size(); ++v) {
    const LidarScan scan = raycast(scene, views[v], DenseLidar(seed + v), 0.0, 0.1);
    const std::vector<Vec3> pts = Positions(scan);
    map->integrate_scan(compose(inverse(t_wm), views[v]), pts);
  }
  map->audit_and_propagate();
  return map;
}

}  // namespace occslam::testing
