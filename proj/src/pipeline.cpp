#include "occslam/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace occslam {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

template <typename F>
auto RunStage(const std::string& stage, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

class StageClock {
 public:
  explicit StageClock(RunTimings* timings) : timings_(timings) {}

  template <typename F>
  auto operator()(const std::string& stage, F&& fn) -> decltype(fn()) {
    const auto start = std::chrono::steady_clock::now();
    struct Record {
      RunTimings* t;
      const std::string& stage;
      std::chrono::steady_clock::time_point start;
      ~Record() {
        t->seconds[stage] +=
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      }
    } record{timings_, stage, start};
    return RunStage(stage, std::forward<F>(fn));
  }

 private:
  RunTimings* timings_;
};

std::string SceneHash(const Scene& scene) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : format_scene(scene)) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Trajectory MakeTrajectory(const TrajectorySpec& spec) {
  switch (spec.kind) {
    case TrajectorySpec::Kind::kRectangle:
      return Trajectory::RoundedRectangle(spec.center, spec.width, spec.height,
                                          spec.corner_radius, spec.speed, spec.laps);
    case TrajectorySpec::Kind::kLine:
      return Trajectory::Line(spec.center, spec.end, spec.speed);
    case TrajectorySpec::Kind::kFile:
      return Trajectory(read_tum(spec.file));
  }
  throw ConfigError("unknown trajectory kind");
}

// Temporarily fixes every state except the last `window` ones (and state 0).
OptimizationReport OptimizeWindow(Problem& problem, int window, const SolverConfig& solver) {
  const std::size_t n = problem.num_states();
  const std::size_t first_free =
      std::max<std::size_t>(1, n > static_cast<std::size_t>(window) ? n - window : 0);
  std::vector<StateId> released;
  for (std::size_t i = 0; i < first_free; ++i) {
    if (!problem.state(static_cast<StateId>(i)).fixed) {
      problem.set_fixed(static_cast<StateId>(i), true);
      released.push_back(static_cast<StateId>(i));
    }
  }
  OptimizationReport report = optimize(problem, solver);
  for (StateId id : released) problem.set_fixed(id, false);
  return report;
}

std::vector<TimedPose> StatePoses(const Problem& problem) {
  std::vector<TimedPose> out;
  out.reserve(problem.num_states());
  for (const StateNode& s : problem.states()) out.push_back({s.timestamp, s.pose});
  return out;
}

json ReportJson(const OptimizationRecord& r) {
  return {{"stage", r.stage},
          {"frame", r.frame},
          {"iterations", r.report.iterations},
          {"accepted_steps", r.report.accepted_steps},
          {"system_dimension", r.report.system_dimension},
          {"termination", to_string(r.report.termination)},
          {"cost_trace", r.report.cost_trace}};
}

std::string ReadText(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string Numbered(const char* prefix, std::size_t i, const char* suffix) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s%03zu%s", prefix, i, suffix);
  return buf;
}

}  // namespace

SimulatedRun simulate_run(const RunConfig& config) {
  config.validate();
  SimulatedRun run;
  run.scene = RunStage("scene", [&] { return load_scene(config.scene_path); });
  run.trajectory = RunStage("trajectory", [&] { return MakeTrajectory(config.trajectory); });

  const double t_start = run.trajectory.start_time();
  const double t_end = run.trajectory.end_time();
  std::vector<Pose> gt;
  for (std::size_t k = 0;; ++k) {
    const double t = t_start + static_cast<double>(k) / config.frame_rate;
    if (t > t_end + 1e-9) break;
    if (config.max_frames > 0 && k >= config.max_frames) break;
    SimulatedFrame frame;
    frame.timestamp = t;
    frame.ground_truth = run.trajectory.at(t);
    RaycastStats stats;
    frame.scan = RunStage("raycast", [&] {
      return raycast(
          run.scene,
          [&](double s) { return compose(run.trajectory.at(s), config.t_sl); }, config.lidar,
          t - config.scan_duration, t, &stats);
    });
    frame.scan.t_sl = config.t_sl;
    for (const std::string& w : stats.warnings) {
      run.warnings.push_back("frame " + std::to_string(k) + ": " + w);
    }
    gt.push_back(frame.ground_truth);
    run.frames.push_back(std::move(frame));
  }
  if (run.frames.size() < 2) throw StageError("trajectory", "fewer than two frames");
  const std::vector<Pose> rel = RunStage("odometry", [&] { return drift_odometry(gt, config.drift); });
  for (std::size_t k = 1; k < run.frames.size(); ++k) run.frames[k].odometry_relative = rel[k - 1];
  return run;
}

void write_simulated_run(const SimulatedRun& run, const RunConfig& config,
                         const std::string& dir) {
  const fs::path root(dir);
  fs::create_directories(root / "scans");
  WriteText(root / "scene.txt", format_scene(run.scene));
  WriteText(root / "config.txt", format_run_config(config));

  std::vector<TimedPose> gt;
  std::vector<Pose> rel;
  for (std::size_t k = 0; k < run.frames.size(); ++k) {
    gt.push_back({run.frames[k].timestamp, run.frames[k].ground_truth});
    if (k > 0) rel.push_back(run.frames[k].odometry_relative);
  }
  const std::vector<Pose> odo = integrate_odometry(gt.front().pose, rel);
  std::vector<TimedPose> odo_timed;
  for (std::size_t k = 0; k < odo.size(); ++k) odo_timed.push_back({gt[k].timestamp, odo[k]});
  write_tum((root / "groundtruth.tum").string(), gt);
  write_tum((root / "odometry.tum").string(), odo_timed);

  std::ostringstream manifest;
  const auto& q = config.t_sl.rotation.quaternion();
  char buf[256];
  std::snprintf(buf, sizeof(buf), "extrinsics %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n",
                config.t_sl.translation.x(), config.t_sl.translation.y(),
                config.t_sl.translation.z(), q.w(), q.x(), q.y(), q.z());
  manifest << "# T_SL as x y z qw qx qy qz, then one line per frame: index t file\n" << buf;
  for (std::size_t k = 0; k < run.frames.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%06zu.csv", k);
    write_scan_csv((root / "scans" / name).string(), run.frames[k].scan);
    std::snprintf(buf, sizeof(buf), "frame %zu %.17g scans/%s\n", k, run.frames[k].timestamp,
                  name);
    manifest << buf;
  }
  WriteText(root / "manifest.txt", manifest.str());
}

RunResult run_pipeline(const RunConfig& config, EventLog* log) {
  const SimulatedRun sim = simulate_run(config);
  return run_pipeline(config, sim, log);
}

RunResult run_pipeline(const RunConfig& config, const SimulatedRun& sim, EventLog* log) {
  config.validate();
  RunResult result;
  StageClock clock(&result.timings);
  const auto wall_start = std::chrono::steady_clock::now();

  Problem problem;
  SubmapRegistry registry(config.submapping, log);
  KeyframeSelector selector(config.submapping.keyframe_every_frames,
                            config.submapping.keyframe_every_meters);
  const Mat6 odometry_information =
      relative_pose_information(config.odometry_sigma_translation, config.odometry_sigma_rotation);
  RunMetrics& m = result.metrics;

  auto optimize_all = [&](const std::string& stage, std::size_t frame) {
    OptimizationReport report = optimize(problem, config.solver);
    m.optimizations.push_back({stage, frame, std::move(report)});
  };
  auto count_factors = [&](const std::vector<WiredFactor>& wired) {
    for (const WiredFactor& f : wired) {
      if (f.kind == LidarFactorKind::kFrameToMap) {
        ++m.frame_to_map_factors;
      } else {
        ++m.map_to_map_factors;
      }
    }
  };

  const double dt = 1.0 / config.frame_rate;
  for (std::size_t k = 0; k < sim.frames.size(); ++k) {
    const SimulatedFrame& frame = sim.frames[k];
    const double t = frame.timestamp;

    const StateId id = clock("predict", [&] {
      const Pose predicted = k == 0 ? frame.ground_truth
                                    : compose(problem.state(static_cast<StateId>(k - 1)).pose,
                                              frame.odometry_relative);
      const StateId sid = problem.add_state(t, predicted, StateRole::kLive, k == 0);
      if (k > 0) {
        problem.add_relative_pose_factor(
            {sid - 1, sid, frame.odometry_relative, odometry_information});
      }
      return sid;
    });

    const std::vector<Vec3> points_s = clock("deskew", [&] {
      std::vector<TimedPose> window;
      if (k == 0) {
        window = {{t - dt, problem.state(id).pose}, {t, problem.state(id).pose}};
      } else {
        window = {{sim.frames[k - 1].timestamp, problem.state(id - 1).pose},
                  {t, problem.state(id).pose}};
      }
      const DeskewResult deskewed = deskew(frame.scan, window, t);
      std::vector<Vec3> pts;
      pts.reserve(deskewed.scan.points.size() / config.scan_stride + 1);
      for (std::size_t i = 0; i < deskewed.scan.points.size(); i += config.scan_stride) {
        pts.push_back(deskewed.scan.points[i].position);
      }
      return pts;
    });

    if (config.lidar_factors && k > 0 && !points_s.empty()) {
      const auto wired = clock("wiring", [&] {
        return wire_factors(registry, problem, LiveFrameEvent{id, points_s});
      });
      count_factors(wired);
      if (!wired.empty()) {
        clock("window_optimization", [&] {
          OptimizationReport report = OptimizeWindow(problem, config.window, config.solver);
          m.optimizations.push_back({"window", k, std::move(report)});
          return 0;
        });
      }
    }
    result.causal.push_back({t, problem.state(id).pose});
    if (selector.is_keyframe(problem.state(id).pose)) problem.set_role(id, StateRole::kKeyframe);

    if (k == 0) {
      registry.start(id);
      problem.set_role(id, StateRole::kSubmapAnchor);
    }
    if (points_s.empty()) continue;

    const Pose t_ms = compose(inverse(problem.state(registry.active().anchor).pose),
                              problem.state(id).pose);
    const bool has_scans = registry.active().scans > 0;
    const double ratio = has_scans ? clock("overlap", [&] {
      return overlap_ratio(registry.active().map(), t_ms, points_s,
                           config.submapping.overlap_level);
    })
                                   : 1.0;
    clock("integration", [&] { return registry.integrate(id, t_ms, points_s); });

    if (has_scans && ratio < config.submapping.lambda_overlap) {
      // The triggering frame is promoted to the keyframe that anchors the
      // new submap.
      problem.set_role(id, StateRole::kKeyframe);
      SpawnDecision decision =
          clock("spawn", [&] { return maybe_spawn(registry, ratio, problem.state(id)); });
      if (decision.spawned) {
        problem.set_role(id, StateRole::kSubmapAnchor);
        m.spawn_frames.push_back(k);
        clock("integration", [&] { return registry.integrate(id, Pose(), points_s); });
        if (config.lidar_factors) {
          const auto wired = clock("wiring", [&] {
            return wire_factors(registry, problem, *decision.completion);
          });
          count_factors(wired);
          if (!wired.empty()) {
            clock("completion_optimization", [&] {
              optimize_all("completion", k);
              return 0;
            });
          }
        }
      }
    }
  }

  if (registry.active().scans > 0) {
    const CompletionEvent last = clock("spawn", [&] { return registry.finish(); });
    if (config.lidar_factors) {
      count_factors(clock("wiring", [&] { return wire_factors(registry, problem, last); }));
    }
  }
  if (config.lidar_factors) {
    clock("final_optimization", [&] {
      optimize_all("final", sim.frames.size());
      return 0;
    });
  }

  result.final = StatePoses(problem);
  for (const SimulatedFrame& f : sim.frames) result.ground_truth.push_back({f.timestamp, f.ground_truth});
  {
    std::vector<Pose> rel;
    for (std::size_t k = 1; k < sim.frames.size(); ++k) rel.push_back(sim.frames[k].odometry_relative);
    const auto odo = integrate_odometry(sim.frames.front().ground_truth, rel);
    for (std::size_t k = 0; k < odo.size(); ++k) result.odometry.push_back({sim.frames[k].timestamp, odo[k]});
  }
  for (const SubmapEntry& e : registry.submaps()) {
    result.submaps.push_back(e.frozen ? e.frozen : e.active);
    result.submap_anchors.push_back(e.anchor);
  }

  clock("evaluation", [&] {
    const AteResult final_ate = ate(result.final, result.ground_truth);
    const AteResult causal_ate = ate(result.causal, result.ground_truth);
    const AteResult odometry_ate = ate(result.odometry, result.ground_truth);
    m.ate_final = final_ate.rmse;
    m.ate_causal = causal_ate.rmse;
    m.ate_odometry = odometry_ate.rmse;
    m.score_final = hilti_score(final_ate.errors);
    m.score_causal = hilti_score(causal_ate.errors);
    m.score_odometry = hilti_score(odometry_ate.errors);
    return 0;
  });
  m.seed = config.seed;
  m.scene = SceneHash(sim.scene);
  m.lidar_factors = config.lidar_factors;
  m.frames = sim.frames.size();
  m.octree_depth = result.submaps.front()->depth();
  m.resolution = config.submapping.resolution;
  m.submaps = result.submaps.size();

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  result.timings.seconds["total"] = wall;
  result.timings.per_frame_ms = 1000.0 * wall / static_cast<double>(sim.frames.size());

  if (!config.output_dir.empty()) {
    RunStage("output", [&] {
      write_run_outputs(result, config, config.output_dir);
      return 0;
    });
  }
  return result;
}

std::string metrics_to_json(const RunMetrics& m) {
  json j;
  j["version"] = RunMetrics::kSchemaVersion;
  j["seed"] = m.seed;
  j["scene"] = m.scene;
  j["lidar_factors"] = m.lidar_factors;
  j["frames"] = m.frames;
  j["octree_depth"] = m.octree_depth;
  j["resolution"] = m.resolution;
  j["submaps"] = m.submaps;
  j["spawn_frames"] = m.spawn_frames;
  j["factors"] = {{"frame_to_map", m.frame_to_map_factors},
                  {"map_to_map", m.map_to_map_factors}};
  j["ate"] = {{"final", m.ate_final}, {"causal", m.ate_causal}, {"odometry", m.ate_odometry}};
  j["score"] = {
      {"final", m.score_final}, {"causal", m.score_causal}, {"odometry", m.score_odometry}};
  json opt = json::array();
  for (const OptimizationRecord& r : m.optimizations) opt.push_back(ReportJson(r));
  j["optimizations"] = std::move(opt);
  return j.dump(2) + "\n";
}

std::string timings_to_json(const RunTimings& timings) {
  json j;
  j["seconds"] = timings.seconds;
  j["per_frame_ms"] = timings.per_frame_ms;
  return j.dump(2) + "\n";
}

void write_run_outputs(const RunResult& result, const RunConfig& config,
                       const std::string& dir) {
  const fs::path root(dir);
  fs::create_directories(root / "submaps");
  fs::create_directories(root / "slices");
  write_tum((root / "causal.tum").string(), result.causal);
  write_tum((root / "final.tum").string(), result.final);
  write_tum((root / "groundtruth.tum").string(), result.ground_truth);
  write_tum((root / "odometry.tum").string(), result.odometry);
  WriteText(root / "metrics.json", metrics_to_json(result.metrics));
  WriteText(root / "timings.json", timings_to_json(result.timings));
  WriteText(root / "config.txt", format_run_config(config));
  for (std::size_t i = 0; i < result.submaps.size(); ++i) {
    const OccupancySubmap& map = *result.submaps[i];
    save_submap(map, (root / "submaps" / Numbered("submap_", i, ".bin")).string());
    if (std::abs(config.slice_height) < 0.5 * map.dimension()) {
      const SliceGrid slice = export_slice(map, config.slice_height);
      write_slice_pgm(slice, (root / "slices" / Numbered("submap_", i, ".pgm")).string());
      write_slice_csv(slice, (root / "slices" / Numbered("submap_", i, ".csv")).string());
    }
  }
}

std::string CompareResult::table() const {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-24s %14s %14s %14s\n", "metric", "baseline", "candidate",
                "delta");
  out << buf;
  for (const CompareRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-24s %14.6g %14.6g %+14.6g\n", r.name.c_str(), r.baseline,
                  r.candidate, r.delta);
    out << buf;
  }
  for (const std::string& r : regressions) out << "REGRESSION " << r << '\n';
  return out.str();
}

CompareResult compare_runs(const std::string& baseline_metrics,
                           const std::string& candidate_metrics, const CompareOptions& options,
                           const std::string& baseline_timings,
                           const std::string& candidate_timings) {
  json base;
  json cand;
  try {
    base = json::parse(baseline_metrics);
    cand = json::parse(candidate_metrics);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed metrics: ") + e.what());
  }
  for (const json* j : {&base, &cand}) {
    if (j->value("version", -1) != RunMetrics::kSchemaVersion) {
      throw ConfigError("unsupported metrics schema version");
    }
  }
  if (base.at("seed") != cand.at("seed")) throw ConfigError("runs use different seeds");
  if (base.at("scene") != cand.at("scene")) throw ConfigError("runs use different scenes");

  CompareResult result;
  auto row = [&](const std::string& name, double b, double c) {
    result.rows.push_back({name, b, c, c - b});
  };
  const double b_ate = base.at("ate").at("final").get<double>();
  const double c_ate = cand.at("ate").at("final").get<double>();
  row("ate.final", b_ate, c_ate);
  row("ate.causal", base.at("ate").at("causal").get<double>(),
      cand.at("ate").at("causal").get<double>());
  const double b_score = base.at("score").at("final").get<double>();
  const double c_score = cand.at("score").at("final").get<double>();
  row("score.final", b_score, c_score);
  row("score.causal", base.at("score").at("causal").get<double>(),
      cand.at("score").at("causal").get<double>());
  row("factors.map_to_map", base.at("factors").at("map_to_map").get<double>(),
      cand.at("factors").at("map_to_map").get<double>());
  if (c_ate > 0.0) {
    const double factor = b_ate / c_ate;
    result.rows.push_back({"ate.improvement_factor", 1.0, factor, factor - 1.0});
  }
  if (!baseline_timings.empty() && !candidate_timings.empty()) {
    const json bt = json::parse(baseline_timings);
    const json ct = json::parse(candidate_timings);
    row("timing.per_frame_ms", bt.at("per_frame_ms").get<double>(),
        ct.at("per_frame_ms").get<double>());
    row("timing.total_s", bt.at("seconds").value("total", 0.0),
        ct.at("seconds").value("total", 0.0));
  }

  if (c_ate > b_ate * (1.0 + options.ate_relative_tolerance) + options.ate_absolute_tolerance) {
    result.regressions.push_back("ate.final grew beyond tolerance");
  }
  if (c_score < b_score - options.score_tolerance) {
    result.regressions.push_back("score.final dropped beyond tolerance");
  }
  result.regression = !result.regressions.empty();
  return result;
}

std::string read_text_file(const std::string& path) { return ReadText(path); }

}  // namespace occslam
