#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "occslam/factor_graph.hpp"
#include "occslam/occupancy_map.hpp"

namespace occslam {

struct TimedPoint {
  Vec3 position = Vec3::Zero();
  double timestamp = 0.0;
};

/// Points in the LiDAR frame L with per-point timestamps, plus extrinsics.
struct LidarScan {
  std::vector<TimedPoint> points;
  Pose t_sl;
};

struct TimedPose {
  double timestamp = 0.0;
  Pose pose;
};

struct DeskewResult {
  /// Points expressed in S at the reference time; extrinsics are identity.
  LidarScan scan;
  std::size_t dropped = 0;
};

/// Motion-compensates a scan into the body frame S at `reference_time` using
/// poses T_WS interpolated at each point's timestamp. Points outside the
/// span of `trajectory` are dropped; throws std::runtime_error if more than
/// half of them are, or if the reference time itself is not bracketed.
DeskewResult deskew(const LidarScan& scan, std::span<const TimedPose> trajectory,
                    double reference_time);

/// Fraction of endpoints (sensor frame, placed with T_MS) that fall into
/// observed space, judged on octree nodes of `level` (0 = single voxels).
/// Throws std::invalid_argument for an empty scan.
double overlap_ratio(const OccupancySubmap& active, const Pose& t_ms,
                     std::span<const Vec3> points_s, int level = 0);

/// Uniform subset without replacement of size min(n, |items|), deterministic
/// for a given seed.
template <typename T>
std::vector<T> sample_factor_points(std::span<const T> items, std::size_t n,
                                    std::uint64_t seed) {
  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t k = std::min(n, items.size());
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  std::vector<T> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(items[order[i]]);
  return out;
}

/// JSON-lines event sink for spawn, completion and factor wiring events.
class EventLog {
 public:
  explicit EventLog(std::ostream* out = nullptr) : out_(out) {}
  void emit(const std::string& json_line);
  const std::vector<std::string>& lines() const { return lines_; }

 private:
  std::ostream* out_;
  std::vector<std::string> lines_;
};

struct SubmappingConfig {
  double resolution = 0.03;
  double dimension = 15.36;
  int brick_level = 2;
  SensorModelParams sensor;
  double lambda_overlap = 0.4;
  double theta_geo = 0.3;
  /// Octree level at which observed space is judged for overlap ratios and
  /// scores; 0 = single voxels. Coarser levels help very sparse sensors.
  int overlap_level = 0;
  std::size_t n_frame_to_map = 100;
  std::size_t n_map_to_map = 1000;
  int keyframe_every_frames = 10;
  double keyframe_every_meters = 1.0;
  std::uint64_t seed = 1;
  /// Cap on occupied voxels tested when scoring overlap between submaps.
  std::size_t overlap_sample_cap = 20000;
};

/// Declares a keyframe every K frames or after D meters of travel since the
/// last keyframe, whichever comes first. The first frame is a keyframe.
class KeyframeSelector {
 public:
  KeyframeSelector(int every_frames, double every_meters)
      : every_frames_(every_frames), every_meters_(every_meters) {}
  bool is_keyframe(const Pose& t_ws);

 private:
  int every_frames_;
  double every_meters_;
  int frames_since_ = 0;
  std::optional<Vec3> last_position_;
};

/// Deskewed points of one frame, expressed in that frame's body frame.
struct AggregatedCloud {
  StateId source = -1;
  std::vector<Vec3> points;
};

struct SubmapEntry {
  StateId anchor = -1;
  std::shared_ptr<OccupancySubmap> active;        // set while accepting scans
  std::shared_ptr<const OccupancySubmap> frozen;  // set once completed
  std::uint64_t checksum_at_freeze = 0;
  std::size_t scans = 0;

  const OccupancySubmap& map() const { return frozen ? *frozen : *active; }
};

struct CompletionEvent {
  std::size_t completed_index = 0;
  StateId completed_anchor = -1;
  StateId new_anchor = -1;
  std::shared_ptr<const OccupancySubmap> submap;
  std::vector<AggregatedCloud> aggregated;
};

struct SpawnDecision {
  bool spawned = false;
  std::optional<CompletionEvent> completion;
};

/// Ordered submaps with exactly one active (mutable) entry until finish().
class SubmapRegistry {
 public:
  explicit SubmapRegistry(SubmappingConfig config, EventLog* log = nullptr);

  const SubmappingConfig& config() const { return config_; }
  EventLog* log() const { return log_; }

  /// Creates the first active submap anchored at `anchor`.
  void start(StateId anchor);
  bool started() const { return !entries_.empty(); }

  const std::vector<SubmapEntry>& submaps() const { return entries_; }
  std::size_t active_index() const { return entries_.size() - 1; }
  const SubmapEntry& active() const { return entries_.back(); }
  std::optional<std::size_t> last_completed() const;

  /// Integrates a deskewed cloud from state `source` into the active submap
  /// and appends it to the aggregation buffer.
  ScanIntegrationStats integrate(StateId source, const Pose& t_ms,
                                 std::span<const Vec3> points_s);
  const std::vector<AggregatedCloud>& aggregation_buffer() const { return buffer_; }

  /// Freezes the active submap and opens a new one at `anchor`.
  CompletionEvent complete_and_spawn(StateId anchor);
  /// Freezes the active submap at the end of a stream. No submap accepts
  /// scans afterwards.
  CompletionEvent finish();
  bool finished() const { return finished_; }

 private:
  SubmappingConfig config_;
  EventLog* log_;
  std::vector<SubmapEntry> entries_;
  std::vector<AggregatedCloud> buffer_;
  bool finished_ = false;

  CompletionEvent freeze_active();
};

/// Spawns a new submap at `next_keyframe` when ratio < lambda_overlap and the
/// active submap has received at least one scan.
SpawnDecision maybe_spawn(SubmapRegistry& registry, double ratio,
                          const StateNode& next_keyframe);

using PoseLookup = std::function<Pose(StateId)>;

/// Fraction of the occupied voxel centers of `completed` that land in
/// observed space of `older` (judged at `level`), both placed by their
/// anchor poses.
double submap_overlap_score(const OccupancySubmap& completed, const Pose& t_w_completed,
                            const OccupancySubmap& older, const Pose& t_w_older,
                            std::size_t sample_cap = 20000, int level = 0);

/// Index of the older submap with the largest overlap score if it reaches
/// theta_geo (ties go to the latest), else empty.
std::optional<std::size_t> find_most_overlapping(const SubmapRegistry& registry,
                                                 std::size_t completed_index,
                                                 const PoseLookup& anchor_pose);

struct LiveFrameEvent {
  StateId frame = -1;
  std::span<const Vec3> points_s;
};

struct WiredFactor {
  LidarFactorKind kind = LidarFactorKind::kFrameToMap;
  StateId state_a = -1;
  StateId state_b = -1;
  std::size_t terms = 0;
};

/// Adds one frame-to-map factor against the last completed submap. No-op
/// while no submap has been completed.
std::vector<WiredFactor> wire_factors(const SubmapRegistry& registry, Problem& problem,
                                      const LiveFrameEvent& event);

/// Adds map-to-map factors from the completed submap to its predecessor and
/// to the most overlapping older submap, when that is a different one.
std::vector<WiredFactor> wire_factors(const SubmapRegistry& registry, Problem& problem,
                                      const CompletionEvent& event);

}  // namespace occslam
