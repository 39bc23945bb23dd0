#include "occslam/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

namespace occslam {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t StreamSeed(std::uint64_t seed, double t0) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &t0, sizeof(bits));
  std::uint64_t h = seed * 0x9E3779B97F4A7C15ULL ^ bits;
  h ^= h >> 31;
  h *= 0xBF58476D1CE4E5B9ULL;
  h ^= h >> 29;
  return h;
}

// Entry and exit parameters of a ray through an axis-aligned box centered at
// the origin, or nullopt when the ray misses the slab intersection.
std::optional<std::pair<double, double>> SlabInterval(const Vec3& o, const Vec3& d,
                                                      const Vec3& h) {
  double t_near = -kInf;
  double t_far = kInf;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(d[i]) < 1e-15) {
      if (std::abs(o[i]) > h[i]) return std::nullopt;
      continue;
    }
    double a = (-h[i] - o[i]) / d[i];
    double b = (h[i] - o[i]) / d[i];
    if (a > b) std::swap(a, b);
    t_near = std::max(t_near, a);
    t_far = std::min(t_far, b);
  }
  if (t_near > t_far) return std::nullopt;
  return std::make_pair(t_near, t_far);
}

std::optional<RayHit> IntersectPrimitive(const Primitive& prim, const Vec3& origin,
                                         const Vec3& direction, double min_range) {
  const Rotation r_pw = prim.pose.rotation.inverse();
  const Vec3 o = r_pw * (origin - prim.pose.translation);
  const Vec3 d = r_pw * direction;
  RayHit hit;
  switch (prim.kind) {
    case PrimitiveKind::kPlane: {
      if (std::abs(d.z()) < 1e-15) return std::nullopt;
      const double t = -o.z() / d.z();
      if (t < min_range) return std::nullopt;
      const Vec3 p = o + t * d;
      if (std::abs(p.x()) > prim.half_extents.x() || std::abs(p.y()) > prim.half_extents.y()) {
        return std::nullopt;
      }
      hit.range = t;
      return hit;
    }
    case PrimitiveKind::kBox: {
      const auto span = SlabInterval(o, d, prim.half_extents);
      if (!span || span->second < min_range) return std::nullopt;
      if (span->first < 0.0) {
        hit.inside_solid = true;
        hit.range = 0.0;
        return hit;
      }
      if (span->first < min_range) return std::nullopt;
      hit.range = span->first;
      return hit;
    }
    case PrimitiveKind::kRoom: {
      const auto span = SlabInterval(o, d, prim.half_extents);
      if (!span) return std::nullopt;
      if (span->first >= min_range) {
        hit.range = span->first;
      } else if (span->second >= min_range) {
        hit.range = span->second;
      } else {
        return std::nullopt;
      }
      return hit;
    }
  }
  return std::nullopt;
}

}  // namespace

void Scene::validate() const {
  if (primitives.empty()) throw std::invalid_argument("scene has no primitives");
  if (!std::isfinite(bounds) || bounds < 0.0) throw std::invalid_argument("invalid scene bounds");
  for (const Primitive& p : primitives) {
    if (!p.pose.translation.allFinite() || !p.half_extents.allFinite()) {
      throw std::invalid_argument("scene primitive has non-finite pose or extents");
    }
    const int dims = p.kind == PrimitiveKind::kPlane ? 2 : 3;
    for (int i = 0; i < dims; ++i) {
      if (!(p.half_extents[i] > 0.0)) {
        throw std::invalid_argument("scene primitive extents must be positive");
      }
    }
  }
}

std::optional<RayHit> intersect(const Scene& scene, const Vec3& origin, const Vec3& direction,
                                double min_range) {
  std::optional<RayHit> best;
  for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
    auto hit = IntersectPrimitive(scene.primitives[i], origin, direction, min_range);
    if (hit && (!best || hit->range < best->range)) {
      hit->primitive = i;
      best = hit;
    }
  }
  return best;
}

double surface_residual(const Primitive& primitive, const Vec3& p_w) {
  const Vec3 p = primitive.pose.rotation.inverse() * (p_w - primitive.pose.translation);
  if (primitive.kind == PrimitiveKind::kPlane) return p.z();
  return (p.cwiseAbs() - primitive.half_extents).maxCoeff();
}

void LidarModel::validate() const {
  if (!(rate > 0.0)) throw std::invalid_argument("lidar rate must be positive");
  if (!(sigma_range >= 0.0)) throw std::invalid_argument("lidar range noise must be >= 0");
  if (n_beams < 1) throw std::invalid_argument("lidar needs at least one beam");
  if (!(max_range > min_range) || min_range < 0.0) {
    throw std::invalid_argument("lidar range limits are inconsistent");
  }
  if (!(vertical_fov_max >= vertical_fov_min)) {
    throw std::invalid_argument("lidar vertical field of view is inverted");
  }
}

Vec3 LidarModel::direction(std::size_t i, std::size_t n, double t) const {
  if (pattern == ScanPattern::kDualAxis) {
    const double fast = 2.0 * std::numbers::pi * fast_axis_rate * t;
    const double slow = 2.0 * std::numbers::pi * slow_axis_rate * t;
    const Vec3 beam(std::cos(fast), 0.0, std::sin(fast));
    return Eigen::AngleAxisd(slow, Vec3::UnitZ()) * beam;
  }
  const std::size_t beams = static_cast<std::size_t>(n_beams);
  const std::size_t columns = std::max<std::size_t>(1, (n + beams - 1) / beams);
  const std::size_t beam = i % beams;
  const std::size_t column = i / beams;
  const double azimuth = 2.0 * std::numbers::pi * static_cast<double>(column) /
                         static_cast<double>(columns);
  const double elevation =
      beams == 1 ? 0.5 * (vertical_fov_min + vertical_fov_max)
                 : vertical_fov_min + (vertical_fov_max - vertical_fov_min) *
                                          static_cast<double>(beam) /
                                          static_cast<double>(beams - 1);
  return {std::cos(elevation) * std::cos(azimuth), std::cos(elevation) * std::sin(azimuth),
          std::sin(elevation)};
}

LidarScan raycast(const Scene& scene, const PoseFunction& t_wl, const LidarModel& model,
                  double t0, double t1, RaycastStats* stats) {
  if (!(t1 > t0)) throw std::invalid_argument("raycast: t1 must be greater than t0");
  model.validate();
  RaycastStats local;
  RaycastStats& s = stats != nullptr ? *stats : local;
  s = RaycastStats{};

  const auto n = static_cast<std::size_t>(std::llround((t1 - t0) * model.rate));
  LidarScan scan;
  scan.points.reserve(n);
  std::mt19937_64 rng(StreamSeed(model.seed, t0));
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = t0 + (t1 - t0) * static_cast<double>(i) / static_cast<double>(n);
    const Vec3 d_l = model.direction(i, n, t);
    const double eps = noise(rng);
    ++s.rays;
    if (scene.primitives.empty()) {
      ++s.misses;
      continue;
    }
    const Pose pose = t_wl(t);
    const auto hit = intersect(scene, pose.translation, pose.rotation * d_l);
    if (!hit) {
      ++s.misses;
      continue;
    }
    if (hit->inside_solid) {
      ++s.inside_solid;
      continue;
    }
    const double range = hit->range + model.sigma_range * eps;
    if (hit->range > model.max_range || range < model.min_range) {
      ++s.misses;
      continue;
    }
    scan.points.push_back({d_l * range, t});
  }
  if (s.inside_solid > 0) {
    s.warnings.push_back("sensor inside a solid primitive: dropped " +
                         std::to_string(s.inside_solid) + " zero-range rays");
  }
  return scan;
}

LidarScan raycast(const Scene& scene, const Pose& t_wl, const LidarModel& model, double t0,
                  double t1, RaycastStats* stats) {
  return raycast(scene, [&t_wl](double) { return t_wl; }, model, t0, t1, stats);
}

void DriftModel::validate() const {
  for (const Vec3* v : {&sigma_translation, &sigma_rotation}) {
    if (!v->allFinite() || (v->array() < 0.0).any()) {
      throw std::invalid_argument("drift noise levels must be finite and non-negative");
    }
  }
  if (!bias_translation.allFinite() || !bias_rotation.allFinite()) {
    throw std::invalid_argument("drift biases must be finite");
  }
}

std::vector<Pose> drift_odometry(std::span<const Pose> ground_truth, const DriftModel& drift) {
  drift.validate();
  if (ground_truth.size() < 2) throw std::invalid_argument("drift odometry needs two poses");
  std::mt19937_64 rng(drift.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Pose> out;
  out.reserve(ground_truth.size() - 1);
  for (std::size_t k = 1; k < ground_truth.size(); ++k) {
    const Pose rel = compose(inverse(ground_truth[k - 1]), ground_truth[k]);
    const double dist = rel.translation.norm();
    const double root = std::sqrt(dist);
    Vec3 n_t;
    Vec3 n_r;
    for (int i = 0; i < 3; ++i) n_t[i] = normal(rng);
    for (int i = 0; i < 3; ++i) n_r[i] = normal(rng);
    const Vec3 dt = drift.bias_translation * dist + drift.sigma_translation.cwiseProduct(n_t) * root;
    const Vec3 da = drift.bias_rotation * dist + drift.sigma_rotation.cwiseProduct(n_r) * root;
    out.emplace_back(exp_so3(da) * rel.rotation, rel.translation + dt);
  }
  return out;
}

std::vector<Pose> integrate_odometry(const Pose& start, std::span<const Pose> relatives) {
  std::vector<Pose> out{start};
  out.reserve(relatives.size() + 1);
  for (const Pose& rel : relatives) out.push_back(compose(out.back(), rel));
  return out;
}

Trajectory::Trajectory(std::vector<TimedPose> samples) : samples_(std::move(samples)) {
  if (samples_.empty()) throw std::invalid_argument("trajectory has no samples");
  for (std::size_t i = 1; i < samples_.size(); ++i) {
    if (!(samples_[i].timestamp > samples_[i - 1].timestamp)) {
      throw std::invalid_argument("trajectory timestamps must increase strictly");
    }
  }
}

Pose Trajectory::at(double t) const {
  if (t <= samples_.front().timestamp) return samples_.front().pose;
  if (t >= samples_.back().timestamp) return samples_.back().pose;
  auto upper = std::upper_bound(samples_.begin(), samples_.end(), t,
                                [](double v, const TimedPose& p) { return v < p.timestamp; });
  auto lower = std::prev(upper);
  return interpolate_pose(lower->pose, lower->timestamp, upper->pose, upper->timestamp, t);
}

namespace {

struct PathPiece {
  double length = 0.0;
  double radius = 0.0;  // 0 for straight pieces, else a left turn
};

struct PathState {
  Eigen::Vector2d position;
  double yaw = 0.0;
};

PathState Advance(const PathState& s, const PathPiece& piece, double arc) {
  PathState out;
  if (piece.radius == 0.0) {
    out.position = s.position + arc * Eigen::Vector2d(std::cos(s.yaw), std::sin(s.yaw));
    out.yaw = s.yaw;
    return out;
  }
  const double r = piece.radius;
  const Eigen::Vector2d center = s.position + r * Eigen::Vector2d(-std::sin(s.yaw), std::cos(s.yaw));
  out.yaw = s.yaw + arc / r;
  out.position = center + r * Eigen::Vector2d(std::sin(out.yaw), -std::cos(out.yaw));
  return out;
}

Trajectory SamplePath(const PathState& start, double z, const std::vector<PathPiece>& pieces,
                      double speed, double sample_dt) {
  if (!(speed > 0.0) || !(sample_dt > 0.0)) {
    throw std::invalid_argument("trajectory speed and sample step must be positive");
  }
  double total = 0.0;
  for (const PathPiece& p : pieces) total += p.length;
  if (!(total > 0.0)) throw std::invalid_argument("trajectory has zero length");
  const double duration = total / speed;
  const auto steps = static_cast<std::size_t>(std::ceil(duration / sample_dt - 1e-9));

  std::vector<TimedPose> samples;
  samples.reserve(steps + 1);
  std::size_t piece = 0;
  double piece_start = 0.0;
  PathState piece_state = start;
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = std::min(duration, static_cast<double>(k) * sample_dt);
    const double s = speed * t;
    while (piece + 1 < pieces.size() && s > piece_start + pieces[piece].length) {
      piece_state = Advance(piece_state, pieces[piece], pieces[piece].length);
      piece_start += pieces[piece].length;
      ++piece;
    }
    const PathState here = Advance(piece_state, pieces[piece], s - piece_start);
    samples.push_back({t, Pose(Rotation(Eigen::Quaterniond(
                                   Eigen::AngleAxisd(here.yaw, Vec3::UnitZ()))),
                               Vec3(here.position.x(), here.position.y(), z))});
  }
  return Trajectory(std::move(samples));
}

}  // namespace

Trajectory Trajectory::RoundedRectangle(const Vec3& center, double width, double height,
                                        double corner_radius, double speed, int laps,
                                        double sample_dt) {
  if (!(corner_radius > 0.0) || 2.0 * corner_radius > std::min(width, height) || laps < 1) {
    throw std::invalid_argument("invalid rounded rectangle");
  }
  const double quarter = 0.5 * std::numbers::pi * corner_radius;
  const double half_bottom = 0.5 * width - corner_radius;
  std::vector<PathPiece> pieces;
  for (int lap = 0; lap < laps; ++lap) {
    pieces.push_back({half_bottom, 0.0});
    pieces.push_back({quarter, corner_radius});
    pieces.push_back({height - 2.0 * corner_radius, 0.0});
    pieces.push_back({quarter, corner_radius});
    pieces.push_back({width - 2.0 * corner_radius, 0.0});
    pieces.push_back({quarter, corner_radius});
    pieces.push_back({height - 2.0 * corner_radius, 0.0});
    pieces.push_back({quarter, corner_radius});
    pieces.push_back({half_bottom, 0.0});
  }
  pieces.erase(std::remove_if(pieces.begin(), pieces.end(),
                              [](const PathPiece& p) { return p.length <= 0.0; }),
               pieces.end());
  PathState start{Eigen::Vector2d(center.x(), center.y() - 0.5 * height), 0.0};
  return SamplePath(start, center.z(), pieces, speed, sample_dt);
}

Trajectory Trajectory::Line(const Vec3& start, const Vec3& end, double speed,
                            double sample_dt) {
  const Vec3 delta = end - start;
  if (!(delta.head<2>().norm() > 0.0) || delta.z() != 0.0) {
    throw std::invalid_argument("line trajectory must be horizontal with non-zero length");
  }
  PathState s{start.head<2>(), std::atan2(delta.y(), delta.x())};
  return SamplePath(s, start.z(), {{delta.norm(), 0.0}}, speed, sample_dt);
}

}  // namespace occslam
