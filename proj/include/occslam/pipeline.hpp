#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "occslam/evaluation.hpp"
#include "occslam/factor_graph.hpp"
#include "occslam/sim.hpp"
#include "occslam/submapping.hpp"

namespace occslam {

/// Invalid or inconsistent run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure inside a pipeline stage; `stage` names it.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct TrajectorySpec {
  enum class Kind { kRectangle, kLine, kFile };
  Kind kind = Kind::kRectangle;
  Vec3 center = Vec3(0.0, 0.0, 1.2);  // rectangle center, or line start
  Vec3 end = Vec3(10.0, 0.0, 1.2);    // line end
  double width = 20.0;
  double height = 10.0;
  double corner_radius = 1.5;
  int laps = 1;
  double speed = 1.0;
  std::string file;  // TUM ground truth for kFile
};

struct RunConfig {
  std::string scene_path;
  TrajectorySpec trajectory;
  double frame_rate = 2.0;
  double scan_duration = 0.1;
  std::size_t max_frames = 0;  // 0 = all
  std::size_t scan_stride = 1;  // keep every n-th deskewed point
  Pose t_sl;
  LidarModel lidar;
  DriftModel drift;
  SubmappingConfig submapping;
  SolverConfig solver;
  int window = 5;
  bool lidar_factors = true;
  double odometry_sigma_translation = 0.02;  // per frame, meters
  double odometry_sigma_rotation = 0.005;    // per frame, radians
  double slice_height = 0.0;
  std::uint64_t seed = 1;
  // Seeds given explicitly are not re-derived from `seed`.
  bool lidar_seed_set = false;
  bool drift_seed_set = false;
  bool sampling_seed_set = false;
  std::string output_dir;

  /// Throws ConfigError.
  void validate() const;
};

/// Applies one `key = value` setting. Throws ConfigError for unknown keys or
/// malformed values. Relative paths are resolved against `base_dir`.
void apply_config_value(RunConfig& config, const std::string& key, const std::string& value,
                        const std::string& base_dir = "");

/// Parses the key-value text form. `seed` also derives the LiDAR, drift and
/// sampling seeds unless those are given explicitly.
RunConfig parse_run_config(const std::string& text, const std::string& base_dir = "");
RunConfig load_run_config(const std::string& path);
/// Sets the master seed and re-derives the seeds not given explicitly.
void set_run_seed(RunConfig& config, std::uint64_t seed);
std::string format_run_config(const RunConfig& config);

struct SimulatedFrame {
  double timestamp = 0.0;
  Pose ground_truth;       // T_WS at the frame time
  LidarScan scan;          // raw points in L over [t - scan_duration, t)
  Pose odometry_relative;  // measured T_{k-1,k}; identity for the first frame
};

struct SimulatedRun {
  Scene scene;
  Trajectory trajectory;
  std::vector<SimulatedFrame> frames;
  std::vector<std::string> warnings;
};

SimulatedRun simulate_run(const RunConfig& config);

/// Writes scene.txt, groundtruth.tum, odometry.tum, scans/frame_NNNNNN.csv
/// and manifest.txt (extrinsics and frame list) into `dir`.
void write_simulated_run(const SimulatedRun& run, const RunConfig& config,
                         const std::string& dir);

struct OptimizationRecord {
  std::string stage;  // "window", "completion" or "final"
  std::size_t frame = 0;
  OptimizationReport report;
};

struct RunMetrics {
  static constexpr int kSchemaVersion = 1;
  std::uint64_t seed = 0;
  std::string scene;
  bool lidar_factors = true;
  std::size_t frames = 0;
  int octree_depth = 0;
  double resolution = 0.0;
  std::size_t submaps = 0;
  std::vector<std::size_t> spawn_frames;
  std::size_t frame_to_map_factors = 0;
  std::size_t map_to_map_factors = 0;
  double ate_final = 0.0;
  double ate_causal = 0.0;
  double ate_odometry = 0.0;
  double score_final = 0.0;
  double score_causal = 0.0;
  double score_odometry = 0.0;
  std::vector<OptimizationRecord> optimizations;
};

struct RunTimings {
  std::map<std::string, double> seconds;  // per stage totals
  double per_frame_ms = 0.0;
};

struct RunResult {
  RunMetrics metrics;
  RunTimings timings;
  std::vector<TimedPose> ground_truth;
  std::vector<TimedPose> odometry;
  std::vector<TimedPose> causal;
  std::vector<TimedPose> final;
  std::vector<std::shared_ptr<const OccupancySubmap>> submaps;
  std::vector<StateId> submap_anchors;
};

/// Executes the full loop on a simulated run. Stage failures raise
/// StageError. Writes outputs when config.output_dir is set.
RunResult run_pipeline(const RunConfig& config, EventLog* log = nullptr);
RunResult run_pipeline(const RunConfig& config, const SimulatedRun& sim,
                       EventLog* log = nullptr);

std::string metrics_to_json(const RunMetrics& metrics);
std::string timings_to_json(const RunTimings& timings);

/// causal.tum, final.tum, groundtruth.tum, odometry.tum, metrics.json,
/// timings.json, submaps/submap_NNN.bin and slices/submap_NNN.{pgm,csv}.
void write_run_outputs(const RunResult& result, const RunConfig& config,
                       const std::string& dir);

struct CompareOptions {
  double ate_relative_tolerance = 0.10;
  double ate_absolute_tolerance = 0.002;
  double score_tolerance = 5.0;
};

struct CompareRow {
  std::string name;
  double baseline = 0.0;
  double candidate = 0.0;
  double delta = 0.0;
};

struct CompareResult {
  std::vector<CompareRow> rows;
  bool regression = false;
  std::vector<std::string> regressions;
  std::string table() const;
};

/// Compares two metrics.json documents (optionally with their timings).
/// Throws ConfigError if seeds or scenes differ.
CompareResult compare_runs(const std::string& baseline_metrics,
                           const std::string& candidate_metrics,
                           const CompareOptions& options = {},
                           const std::string& baseline_timings = "",
                           const std::string& candidate_timings = "");

std::string read_text_file(const std::string& path);

}  // namespace occslam
