#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "occslam/geometry.hpp"

namespace occslam {

using StateId = std::int64_t;
using VoxelIndex = Eigen::Vector3i;

/// Piecewise-linear inverse sensor model. Range-dependent widths are
/// sigma(z) = clamp(sigma_scale * z, sigma_min, sigma_max) and
/// tau(z) = clamp(tau_scale * z, tau_min, tau_max).
struct SensorModelParams {
  double l_min = -5.0;
  double tau_scale = 0.05;
  double tau_min = 0.06;
  double tau_max = 1.0;
  double sigma_scale = 0.05;
  double sigma_min = 0.03;
  double sigma_max = 1.0;
  int w_max = 20;
  double sigma_z = 0.02;

  double sigma(double z) const;
  double tau(double z) const;
  /// Throws std::invalid_argument on inconsistent values.
  void validate() const;
};

/// Log-odds evidence for a point at signed distance d_r (query distance minus
/// measured range z_r) along a ray. Throws std::domain_error if z_r <= 0.
double inverse_sensor_model(double d_r, double z_r, const SensorModelParams& params);

struct VoxelData {
  double mean_log_odds = 0.0;
  int weight = 0;

  bool observed() const { return weight > 0; }
  double accumulated() const { return mean_log_odds * weight; }
  /// Clamped-weight running mean update.
  void update(double log_odds, int w_max);

  bool operator==(const VoxelData& o) const {
    return mean_log_odds == o.mean_log_odds && weight == o.weight;
  }
};

enum class ObservedFraction : std::uint8_t { kNone = 0, kPartial = 1, kFull = 2 };

/// Up-propagated statistic of a subtree: maximum accumulated log-odds over
/// observed voxels and whether the subtree is unobserved, partially or
/// fully observed.
struct NodeSummary {
  double max_log_odds = -std::numeric_limits<double>::infinity();
  ObservedFraction observed = ObservedFraction::kNone;

  bool operator==(const NodeSummary& o) const {
    return max_log_odds == o.max_log_odds && observed == o.observed;
  }
};

enum class RayStatus { kIntegrated, kClipped, kRejected };

struct RayResult {
  RayStatus status = RayStatus::kRejected;
  std::size_t updates = 0;
};

struct ScanIntegrationStats {
  std::size_t integrated = 0;
  std::size_t clipped = 0;
  std::size_t rejected = 0;
  std::size_t voxel_updates = 0;
};

struct AuditReport {
  bool ok = true;
  std::vector<std::string> violations;
  std::size_t pruned = 0;
  std::size_t node_count = 0;
};

/// A leaf of the octree: either a single voxel (level 0) or a uniform node
/// covering 2^level voxels per edge starting at `origin`.
struct LeafView {
  int level = 0;
  VoxelIndex origin = VoxelIndex::Zero();
  VoxelData data;
};

/// Fixed-depth sparse octree of clamped-weight log-odds voxels. The map frame
/// is the anchor keyframe's body frame; the cube of edge `dimension` is
/// centered on its origin. Leaves at `brick_level` hold dense bricks of
/// (2^brick_level)^3 voxels; any node may instead be a uniform leaf.
///
/// Writers must not interleave with readers. Const member functions are
/// safe to call concurrently.
class OccupancySubmap {
 public:
  OccupancySubmap(StateId anchor_state_id, double resolution, double dimension,
                  SensorModelParams params = {}, int brick_level = 2);
  ~OccupancySubmap();
  OccupancySubmap(OccupancySubmap&&) noexcept;
  OccupancySubmap& operator=(OccupancySubmap&&) noexcept;
  OccupancySubmap(const OccupancySubmap&) = delete;
  OccupancySubmap& operator=(const OccupancySubmap&) = delete;

  StateId anchor_state_id() const { return anchor_state_id_; }
  double resolution() const { return resolution_; }
  double dimension() const { return dimension_; }
  int depth() const { return depth_; }
  int brick_level() const { return brick_level_; }
  int voxels_per_side() const { return 1 << depth_; }
  const SensorModelParams& params() const { return params_; }

  /// Integrates one ray given in map coordinates and up-propagates.
  RayResult integrate_ray(const Vec3& origin_m, const Vec3& endpoint_m);

  /// Integrates points given in sensor frame S as rays from the origin of S,
  /// with T_MS placing the sensor in the map.
  ScanIntegrationStats integrate_scan(const Pose& t_ms, std::span<const Vec3> points_s);

  /// Trilinear interpolation of accumulated log-odds over the 8 neighbouring
  /// voxel centers. Empty if any corner is unobserved or out of bounds.
  std::optional<double> query_accumulated(const Vec3& p_m) const;

  /// Central differences of query_accumulated with a one-voxel step.
  std::optional<Vec3> query_gradient(const Vec3& p_m) const;

  /// Both of the above from one neighbourhood fetch.
  struct FieldSample {
    double value = 0.0;
    Vec3 gradient = Vec3::Zero();
  };
  std::optional<FieldSample> query_field(const Vec3& p_m) const;

  std::optional<VoxelIndex> voxel_index(const Vec3& p_m) const;
  Vec3 voxel_center(const VoxelIndex& index) const;
  bool in_bounds(const VoxelIndex& index) const;
  VoxelData voxel(const VoxelIndex& index) const;
  /// True if the voxel containing p has been observed.
  bool is_observed(const Vec3& p_m) const;
  /// True if any voxel of the level-`level` node containing p has been
  /// observed, using the up-propagated summaries.
  bool is_observed(const Vec3& p_m, int level) const;

  /// Overwrites a single voxel. Used by deserialization and synthetic fields.
  void set_voxel(const VoxelIndex& index, const VoxelData& data);
  /// Overwrites a whole node at `level` >= brick_level as a uniform leaf.
  void set_uniform(int level, const VoxelIndex& origin, const VoxelData& data);
  /// Recomputes summaries of nodes touched since the last call.
  void propagate();

  /// Full bottom-up recomputation of every summary, reporting stored
  /// summaries that disagreed, then prunes saturated-identical subtrees.
  AuditReport audit_and_propagate();

  NodeSummary root_summary() const;
  /// Allocated nodes below the root plus allocated bricks.
  std::size_t node_count() const;

  /// Visits observed leaves in deterministic depth-first order.
  void for_each_leaf(const std::function<void(const LeafView&)>& visit) const;
  /// Visits every observed voxel (uniform leaves expanded).
  void for_each_observed_voxel(
      const std::function<void(const VoxelIndex&, const VoxelData&)>& visit) const;

  /// FNV-1a hash over the observed leaf payload.
  std::uint64_t checksum() const;

  struct Node;

 private:
  enum class UpdatePass { kAll, kBandOnly, kFreeOnly };

  std::size_t integrate_segment(const Vec3& origin, const Vec3& endpoint, UpdatePass pass,
                                bool* clipped, bool* hit_map);
  VoxelData& mutable_voxel(const VoxelIndex& index);
  Node& mutable_node(int level, const VoxelIndex& index);
  const Node* find_leaf(const VoxelIndex& index, int* level) const;
  void coarse_update(const VoxelIndex& index, double log_odds);

  StateId anchor_state_id_;
  double resolution_;
  double dimension_;
  SensorModelParams params_;
  int depth_;
  int brick_level_;
  std::unique_ptr<Node> root_;
  // Write cache for the last touched brick.
  VoxelIndex cached_brick_ = VoxelIndex::Constant(-1);
  VoxelData* cached_brick_data_ = nullptr;
};

/// Binary submap dump, little-endian:
///   "OCCSUBMP" | u32 version(=1) | i64 anchor | f64 resolution | f64 dimension |
///   i32 brick_level | SensorModelParams (f64 l_min, tau_scale, tau_min,
///   tau_max, sigma_scale, sigma_min, sigma_max, i32 w_max, f64 sigma_z) |
///   u64 record count | records of (u8 level, i32 x, i32 y, i32 z,
///   f64 mean_log_odds, i32 weight)
/// Records list observed leaves; level 0 records are single voxels, higher
/// levels are uniform nodes whose origin is their minimum voxel index.
void save_submap(const OccupancySubmap& map, std::ostream& out);
OccupancySubmap load_submap(std::istream& in);
void save_submap(const OccupancySubmap& map, const std::string& path);
OccupancySubmap load_submap(const std::string& path);

enum class CellClass : std::uint8_t { kUnknown = 0, kFree = 1, kOccupied = 2 };

/// Horizontal slice through a submap at fixed map height. Row 0 is the
/// northmost row (largest y).
struct SliceGrid {
  double x0 = 0.0;  // x of the west edge
  double y0 = 0.0;  // y of the south edge
  double resolution = 0.0;
  double height = 0.0;
  int width = 0;
  int rows = 0;
  std::vector<CellClass> classes;
  std::vector<double> values;  // NaN where unknown

  CellClass at(int row, int col) const { return classes[row * width + col]; }
};

/// Throws std::out_of_range if the height lies outside the map.
SliceGrid export_slice(const OccupancySubmap& map, double height_m);
/// PGM P2 with occupied = 0, unknown = 128, free = 255.
void write_slice_pgm(const SliceGrid& slice, const std::string& path);
/// Header "x0,y0,resolution,height", one line with those values, then the
/// raw accumulated log-odds row-major north-up ("nan" where unknown).
void write_slice_csv(const SliceGrid& slice, const std::string& path);

}  // namespace occslam
