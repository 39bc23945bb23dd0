#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "occslam/geometry.hpp"
#include "occslam/submapping.hpp"

namespace occslam {

enum class PrimitiveKind {
  kBox,    // solid box
  kRoom,   // hollow box, its inner faces are visible from inside
  kPlane,  // bounded rectangle in the local xy plane
};

/// Axis-aligned in its own frame; `pose` is T_WP. For planes only the x and
/// y half extents are used.
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::kBox;
  Pose pose;
  Vec3 half_extents = Vec3::Ones();
};

struct Scene {
  std::vector<Primitive> primitives;
  /// Half edge of a cube around the origin that contains all primitives.
  double bounds = 0.0;

  /// Throws std::invalid_argument if empty or not finite.
  void validate() const;
};

struct RayHit {
  double range = 0.0;
  bool inside_solid = false;
  std::size_t primitive = 0;
};

/// Nearest intersection along a unit direction, ignoring hits closer than
/// `min_range`. A ray starting inside a solid box reports range 0.
std::optional<RayHit> intersect(const Scene& scene, const Vec3& origin, const Vec3& direction,
                                double min_range = 1e-9);

/// Signed violation of the implicit surface equation of `primitive` at a
/// world point, in meters (0 on the surface).
double surface_residual(const Primitive& primitive, const Vec3& p_w);

enum class ScanPattern { kSpinning, kDualAxis };

struct LidarModel {
  ScanPattern pattern = ScanPattern::kSpinning;
  int n_beams = 16;
  double vertical_fov_min = -0.2618;  // radians
  double vertical_fov_max = 0.2618;
  /// Dual-axis pattern: beam revolutions per second about the fast and
  /// slow axes.
  double fast_axis_rate = 200.0;
  double slow_axis_rate = 1.0;
  double rate = 36000.0;  // points per second
  double max_range = 30.0;
  double min_range = 0.1;
  double sigma_range = 0.0;
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument on invalid values.
  void validate() const;
  /// Unit beam direction in L for the i-th of n points of one sweep.
  Vec3 direction(std::size_t i, std::size_t n, double t) const;
};

struct RaycastStats {
  std::size_t rays = 0;
  std::size_t misses = 0;
  std::size_t inside_solid = 0;
  std::vector<std::string> warnings;
};

using PoseFunction = std::function<Pose(double)>;

/// Casts round((t1 - t0) * rate) rays with timestamps spread uniformly over
/// [t0, t1); each ray starts from the sensor pose T_WL at its own timestamp.
/// Points are returned in L. Deterministic per model seed and t0.
LidarScan raycast(const Scene& scene, const PoseFunction& t_wl, const LidarModel& model,
                  double t0, double t1, RaycastStats* stats = nullptr);

/// Static-sensor overload.
LidarScan raycast(const Scene& scene, const Pose& t_wl, const LidarModel& model, double t0,
                  double t1, RaycastStats* stats = nullptr);

/// Odometry corruption. Noise standard deviations grow with the square root
/// of the distance travelled in a step; biases grow linearly with it. All
/// vectors are expressed in the body frame of the step's start.
struct DriftModel {
  Vec3 sigma_translation = Vec3::Zero();  // m / sqrt(m)
  Vec3 sigma_rotation = Vec3::Zero();     // rad / sqrt(m)
  Vec3 bias_translation = Vec3::Zero();   // m / m
  Vec3 bias_rotation = Vec3::Zero();      // rad / m
  std::uint64_t seed = 1;

  void validate() const;
};

/// Measured relative poses T_{k-1,k} for consecutive ground-truth poses.
std::vector<Pose> drift_odometry(std::span<const Pose> ground_truth, const DriftModel& drift);

/// Chains relative poses onto `start`; returns one more pose than given.
std::vector<Pose> integrate_odometry(const Pose& start, std::span<const Pose> relatives);

/// Densely sampled trajectory T_WS(t). Evaluation outside the sampled span
/// clamps to the first or last pose (the body is at rest there).
class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(std::vector<TimedPose> samples);

  const std::vector<TimedPose>& samples() const { return samples_; }
  double start_time() const { return samples_.front().timestamp; }
  double end_time() const { return samples_.back().timestamp; }
  Pose at(double t) const;

  /// Rounded rectangle in the horizontal plane at height center.z(), driven
  /// counter-clockwise at constant speed starting from the middle of the
  /// southern side. The body x axis follows the direction of travel.
  static Trajectory RoundedRectangle(const Vec3& center, double width, double height,
                                     double corner_radius, double speed, int laps,
                                     double sample_dt = 0.01);
  /// Straight segment at constant speed with constant heading.
  static Trajectory Line(const Vec3& start, const Vec3& end, double speed,
                         double sample_dt = 0.01);

 private:
  std::vector<TimedPose> samples_;
};

/// Scene text format, one primitive per line, '#' comments:
///   bounds <half_edge>
///   box|room <cx> <cy> <cz> <hx> <hy> <hz> [yaw_deg]
///   plane <cx> <cy> <cz> <hx> <hy> [qw qx qy qz]
/// Box and room lines may also end with a quaternion instead of a yaw.
Scene parse_scene(const std::string& text);
Scene load_scene(const std::string& path);
std::string format_scene(const Scene& scene);

/// TUM trajectory lines "t x y z qx qy qz qw".
void write_tum(std::ostream& out, std::span<const TimedPose> poses);
void write_tum(const std::string& path, std::span<const TimedPose> poses);
std::vector<TimedPose> read_tum(std::istream& in);
std::vector<TimedPose> read_tum(const std::string& path);

/// Scan CSV with header "t,x,y,z", one point per line in L.
void write_scan_csv(const std::string& path, const LidarScan& scan);
LidarScan read_scan_csv(const std::string& path, const Pose& t_sl);

}  // namespace occslam
