#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>

#include "occslam/pipeline.hpp"

namespace occslam {

namespace {

namespace fs = std::filesystem;

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double ParseDouble(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "': expected a number, got '" + v + "'");
  }
}

long long ParseInt(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "': expected an integer, got '" + v + "'");
  }
}

std::size_t ParseCount(const std::string& key, const std::string& v) {
  const long long i = ParseInt(key, v);
  if (i < 0) throw ConfigError("'" + key + "' must not be negative");
  return static_cast<std::size_t>(i);
}

std::uint64_t ParseSeed(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const unsigned long long s = std::stoull(v, &used);
    if (used != v.size() || v.front() == '-') throw std::invalid_argument(v);
    return s;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "': expected a non-negative integer, got '" + v + "'");
  }
}

bool ParseBool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("'" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<double> ParseList(const std::string& key, const std::string& v, std::size_t n) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(ParseDouble(key, Trim(item)));
  if (out.size() != n) {
    throw ConfigError("'" + key + "': expected " + std::to_string(n) +
                      " comma-separated numbers");
  }
  return out;
}

Vec3 ParseVec3(const std::string& key, const std::string& v) {
  const auto l = ParseList(key, v, 3);
  return {l[0], l[1], l[2]};
}

std::string Fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string FmtVec(const Vec3& v) { return Fmt(v.x()) + "," + Fmt(v.y()) + "," + Fmt(v.z()); }

std::string ResolvePath(const std::string& base, const std::string& path) {
  if (base.empty() || path.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base) / path).lexically_normal().string();
}

constexpr double kDeg = std::numbers::pi / 180.0;

struct Setting {
  std::function<void(RunConfig&, const std::string& key, const std::string& value,
                     const std::string& base)>
      set;
  std::function<std::string(const RunConfig&)> get;
};

#define OCC_DOUBLE(KEY, FIELD)                                                        \
  {KEY,                                                                               \
   {[](RunConfig& c, const std::string& k, const std::string& v, const std::string&) { \
      c.FIELD = ParseDouble(k, v);                                                    \
    },                                                                                \
    [](const RunConfig& c) { return Fmt(c.FIELD); }}}
#define OCC_COUNT(KEY, FIELD)                                                         \
  {KEY,                                                                               \
   {[](RunConfig& c, const std::string& k, const std::string& v, const std::string&) { \
      c.FIELD = ParseCount(k, v);                                                     \
    },                                                                                \
    [](const RunConfig& c) { return std::to_string(c.FIELD); }}}
#define OCC_INT(KEY, FIELD)                                                           \
  {KEY,                                                                               \
   {[](RunConfig& c, const std::string& k, const std::string& v, const std::string&) { \
      c.FIELD = static_cast<int>(ParseInt(k, v));                                     \
    },                                                                                \
    [](const RunConfig& c) { return std::to_string(c.FIELD); }}}
#define OCC_VEC3(KEY, FIELD)                                                          \
  {KEY,                                                                               \
   {[](RunConfig& c, const std::string& k, const std::string& v, const std::string&) { \
      c.FIELD = ParseVec3(k, v);                                                      \
    },                                                                                \
    [](const RunConfig& c) { return FmtVec(c.FIELD); }}}

const std::map<std::string, Setting>& Settings() {
  static const std::map<std::string, Setting> settings = {
      {"scene",
       {[](RunConfig& c, const std::string&, const std::string& v, const std::string& base) {
          c.scene_path = ResolvePath(base, v);
        },
        [](const RunConfig& c) { return c.scene_path; }}},
      {"trajectory",
       {[](RunConfig& c, const std::string& k, const std::string& v, const std::string&) {
          if (v == "rectangle") {
            c.trajectory.kind = TrajectorySpec::Kind::kRectangle;
          } else if (v == "line") {
            c.trajectory.kind = TrajectorySpec::Kind::kLine;
          } else if (v == "file") {
            c.trajectory.kind = TrajectorySpec::Kind::kFile;
          } else {
            throw ConfigError("'" + k + "' must be rectangle, line or file");
          }
        },
        [](const RunConfig& c) -> std::string {
          switch (c.trajectory.kind) {
            case TrajectorySpec::Kind::kRectangle: return "rectangle";
            case TrajectorySpec::Kind::kLine: return "line";
            case TrajectorySpec::Kind::kFile: return "file";
          }
          return "rectangle";
        }}},
      OCC_VEC3("trajectory.center", trajectory.center),
      OCC_VEC3("trajectory.start", trajectory.center),
      OCC_VEC3("trajectory.end", trajectory.end),
      OCC_DOUBLE("trajectory.width", trajectory.width),
      OCC_DOUBLE("trajectory.height", trajectory.height),
      OCC_DOUBLE("trajectory.corner_radius", trajectory.corner_radius),
      OCC_INT("trajectory.laps", trajectory.laps),
      OCC_DOUBLE("trajectory.speed", trajectory.speed),
      {"trajectory.file",
       {[](RunConfig& c, const std::string&, const std::string& v, const std::string& base) {
          c.trajectory.file = ResolvePath(base, v);
        },
        [](const RunConfig& c) { return c.trajectory.file; }}},
      OCC_DOUBLE("frame_rate", frame_rate),
      OCC_DOUBLE("scan_duration", scan_duration),
      OCC_COUNT("max_frames", max_frames),
      OCC_COUNT("scan_stride", scan_stride),
      {"extrinsics",
       {[](RunConfig& c, const std::string& k, const std::string& v, const std::string&) {
          const auto l = ParseList(k, v, 7);
          Eigen::Quaterniond q(l[3], l[4], l[5], l[6]);
          if (q.norm() < 1e-12) throw ConfigError("'" + k + "': zero quaternion");
          c.t_sl = Pose(Rotation(q.normalized()), Vec3(l[0], l[1], l[2]));
        },
        [](const RunConfig& c) {
          const auto& q = c.t_sl.rotation.quaternion();
          return FmtVec(c.t_sl.translation) + "," + Fmt(q.w()) + "," + Fmt(q.x()) + "," +
                 Fmt(q.y()) + "," + Fmt(q.z());
        }}},
      {"lidar.pattern",
       {[](RunConfig& c, const std::string& k, const std::string& v, const std::string&) {
          if (v == "spinning") {
            c.lidar.pattern = ScanPattern::kSpinning;
          } else if (v == "dual_axis") {
            c.lidar.pattern = ScanPattern::kDualAxis;
          } else {
            throw ConfigError("'" + k + "' must be spinning or dual_axis");
          }
        },
        [](const RunConfig& c) {
          return std::string(c.lidar.pattern == ScanPattern::kSpinning ? "spinning"
                                                                       : "dual_axis");
        }}},
      OCC_INT("lidar.beams", lidar.n_beams),
      {"lidar.vfov_min_deg",
       {[](RunConfig& c, const std::string& k, const std::string& v, const std::string&) {
          c.lidar.vertical_fov_min = ParseDouble(k, v) * kDeg;
        },
        [](const RunConfig& c) { return Fmt(c.lidar.vertical_fov_min / kDeg); }}},
      {"lidar.vfov_max_deg",
       {[](RunConfig& c, const std::string& k, const std::string& v, const std::string&) {
          c.lidar.vertical_fov_max = ParseDouble(k, v) * kDeg;
        },
        [](const RunConfig& c) { return Fmt(c.lidar.vertical_fov_max / kDeg); }}},
      OCC_DOUBLE("lidar.fast_axis_rate", lidar.fast_axis_rate),
      OCC_DOUBLE("lidar.slow_axis_rate", lidar.slow_axis_rate),
      OCC_DOUBLE("lidar.rate", lidar.rate),
      OCC_DOUBLE("lidar.max_range", lidar.max_range),
      OCC_DOUBLE("lidar.min_range", lidar.min_range),
      OCC_DOUBLE("lidar.noise", lidar.sigma_range),
      {"lidar.seed",
       {[](RunConfig& c, const std::string& k, const std::string& v, const std::string&) {
          c.lidar.seed = ParseSeed(k, v);
          c.lidar_seed_set = true;
        },
        [](const RunConfig& c) { return std::to_string(c.lidar.seed); }}},
      OCC_VEC3("drift.sigma_translation", drift.sigma_translation),
      OCC_VEC3("drift.sigma_rotation", drift.sigma_rotation),
      OCC_VEC3("drift.bias_translation", drift.bias_translation),
      OCC_VEC3("drift.bias_rotation", drift.bias_rotation),
      {"drift.seed",
       {[](RunConfig& c, const std::string& k, const std::string& v, const std::string&) {
          c.drift.seed = ParseSeed(k, v);
          c.drift_seed_set = true;
        },
        [](const RunConfig& c) { return std::to_string(c.drift.seed); }}},
      OCC_DOUBLE("map.resolution", submapping.resolution),
      OCC_DOUBLE("map.dimension", submapping.dimension),
      OCC_INT("map.brick_level", submapping.brick_level),
      OCC_DOUBLE("sensor.l_min", submapping.sensor.l_min),
      OCC_DOUBLE("sensor.tau_scale", submapping.sensor.tau_scale),
      OCC_DOUBLE("sensor.tau_min", submapping.sensor.tau_min),
      OCC_DOUBLE("sensor.tau_max", submapping.sensor.tau_max),
      OCC_DOUBLE("sensor.sigma_scale", submapping.sensor.sigma_scale),
      OCC_DOUBLE("sensor.sigma_min", submapping.sensor.sigma_min),
      OCC_DOUBLE("sensor.sigma_max", submapping.sensor.sigma_max),
      OCC_INT("sensor.w_max", submapping.sensor.w_max),
      OCC_DOUBLE("sensor.sigma_z", submapping.sensor.sigma_z),
      OCC_DOUBLE("submap.lambda_overlap", submapping.lambda_overlap),
      OCC_DOUBLE("submap.theta_geo", submapping.theta_geo),
      OCC_INT("submap.overlap_level", submapping.overlap_level),
      OCC_COUNT("submap.n_frame_to_map", submapping.n_frame_to_map),
      OCC_COUNT("submap.n_map_to_map", submapping.n_map_to_map),
      OCC_INT("submap.keyframe_every_frames", submapping.keyframe_every_frames),
      OCC_DOUBLE("submap.keyframe_every_meters", submapping.keyframe_every_meters),
      OCC_COUNT("submap.overlap_sample_cap", submapping.overlap_sample_cap),
      {"submap.seed",
       {[](RunConfig& c, const std::string& k, const std::string& v, const std::string&) {
          c.submapping.seed = ParseSeed(k, v);
          c.sampling_seed_set = true;
        },
        [](const RunConfig& c) { return std::to_string(c.submapping.seed); }}},
      OCC_INT("solver.max_iterations", solver.max_iterations),
      OCC_DOUBLE("solver.initial_lambda", solver.initial_lambda),
      OCC_DOUBLE("solver.lambda_up", solver.lambda_up),
      OCC_DOUBLE("solver.lambda_down", solver.lambda_down),
      OCC_DOUBLE("solver.max_lambda", solver.max_lambda),
      OCC_DOUBLE("solver.cost_tolerance", solver.cost_tolerance),
      OCC_DOUBLE("solver.step_tolerance", solver.step_tolerance),
      OCC_DOUBLE("solver.gradient_tolerance", solver.gradient_tolerance),
      OCC_DOUBLE("solver.gradient_gate_fraction", solver.gradient_gate_fraction),
      OCC_INT("pipeline.window", window),
      {"pipeline.lidar_factors",
       {[](RunConfig& c, const std::string& k, const std::string& v, const std::string&) {
          c.lidar_factors = ParseBool(k, v);
        },
        [](const RunConfig& c) { return std::string(c.lidar_factors ? "true" : "false"); }}},
      OCC_DOUBLE("odometry.sigma_translation", odometry_sigma_translation),
      OCC_DOUBLE("odometry.sigma_rotation", odometry_sigma_rotation),
      OCC_DOUBLE("output.slice_height", slice_height),
      {"seed",
       {[](RunConfig& c, const std::string& k, const std::string& v, const std::string&) {
          set_run_seed(c, ParseSeed(k, v));
        },
        [](const RunConfig& c) { return std::to_string(c.seed); }}},
      {"output",
       {[](RunConfig& c, const std::string&, const std::string& v, const std::string& base) {
          c.output_dir = ResolvePath(base, v);
        },
        [](const RunConfig& c) { return c.output_dir; }}},
  };
  return settings;
}

#undef OCC_DOUBLE
#undef OCC_COUNT
#undef OCC_INT
#undef OCC_VEC3

}  // namespace

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(!scene_path.empty(), "no scene given");
  require(fs::exists(scene_path), "scene file not found: " + scene_path);
  if (trajectory.kind == TrajectorySpec::Kind::kFile) {
    require(fs::exists(trajectory.file), "trajectory file not found: " + trajectory.file);
  }
  require(trajectory.speed > 0.0, "trajectory.speed must be positive");
  require(trajectory.laps >= 1, "trajectory.laps must be at least 1");
  require(frame_rate > 0.0, "frame_rate must be positive");
  require(scan_duration > 0.0 && scan_duration <= 1.0 / frame_rate,
          "scan_duration must lie in (0, 1 / frame_rate]");
  require(scan_stride >= 1, "scan_stride must be at least 1");
  require(window >= 1, "pipeline.window must be at least 1");
  require(odometry_sigma_translation > 0.0 && odometry_sigma_rotation > 0.0,
          "odometry sigmas must be positive");
  require(submapping.resolution > 0.0, "map.resolution must be positive");
  require(submapping.dimension >= submapping.resolution, "map.dimension below resolution");
  const double cells = submapping.dimension / submapping.resolution;
  const double log2_cells = std::log2(cells);
  require(std::abs(cells - std::round(cells)) < 1e-6 &&
              std::abs(log2_cells - std::round(log2_cells)) < 1e-9,
          "map.dimension / map.resolution must be a power of two");
  require(submapping.brick_level >= 0 && submapping.brick_level <= std::lround(log2_cells),
          "map.brick_level out of range");
  require(submapping.lambda_overlap > 0.0 && submapping.lambda_overlap < 1.0,
          "submap.lambda_overlap must lie in (0, 1)");
  require(submapping.theta_geo >= 0.0 && submapping.theta_geo <= 1.0,
          "submap.theta_geo must lie in [0, 1]");
  require(submapping.overlap_level >= 0 && submapping.overlap_level <= std::lround(log2_cells),
          "submap.overlap_level out of range");
  require(submapping.keyframe_every_frames >= 1, "submap.keyframe_every_frames must be >= 1");
  require(submapping.keyframe_every_meters > 0.0, "submap.keyframe_every_meters must be > 0");
  try {
    submapping.sensor.validate();
    lidar.validate();
    drift.validate();
    solver.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

void apply_config_value(RunConfig& config, const std::string& key, const std::string& value,
                        const std::string& base_dir) {
  const auto& settings = Settings();
  const auto it = settings.find(key);
  if (it == settings.end()) throw ConfigError("unknown configuration key '" + key + "'");
  it->second.set(config, key, value, base_dir);
}

void set_run_seed(RunConfig& config, std::uint64_t seed) {
  config.seed = seed;
  if (!config.lidar_seed_set) config.lidar.seed = seed;
  if (!config.drift_seed_set) config.drift.seed = seed + 1;
  if (!config.sampling_seed_set) config.submapping.seed = seed + 2;
}

RunConfig parse_run_config(const std::string& text, const std::string& base_dir) {
  RunConfig config;
  set_run_seed(config, config.seed);
  std::istringstream in(text);
  std::string line;
  int number = 0;
  std::string seed_value;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
    }
    const std::string key = Trim(line.substr(0, eq));
    const std::string value = Trim(line.substr(eq + 1));
    if (key == "seed") {
      seed_value = value;  // applied last so explicit sub-seeds win
      continue;
    }
    apply_config_value(config, key, value, base_dir);
  }
  if (!seed_value.empty()) apply_config_value(config, "seed", seed_value, base_dir);
  return config;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), fs::path(path).parent_path().string());
}

std::string format_run_config(const RunConfig& config) {
  std::ostringstream out;
  for (const auto& [key, setting] : Settings()) {
    if (key == "trajectory.start") continue;
    out << key << " = " << setting.get(config) << '\n';
  }
  return out.str();
}

}  // namespace occslam
