#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "occslam/evaluation.hpp"
#include "occslam/occupancy_map.hpp"
#include "occslam/pipeline.hpp"
#include "occslam/sim.hpp"

namespace fs = std::filesystem;
using namespace occslam;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitRegression = 4;

RunConfig BuildConfig(const std::string& config_path, const std::vector<std::string>& sets) {
  RunConfig config = load_run_config(config_path);
  for (const std::string& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_config_value(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return config;
}

std::string MetricsPath(const std::string& p) {
  return fs::is_directory(p) ? (fs::path(p) / "metrics.json").string() : p;
}

std::string TimingsPath(const std::string& metrics_path) {
  const fs::path t = fs::path(metrics_path).parent_path() / "timings.json";
  return fs::exists(t) ? t.string() : "";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Occupancy-submap LiDAR SLAM back-end on synthetic scenes"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;

  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic dataset");
  simulate->add_option("--config", config_path, "Run configuration file")->required()
      ->check(CLI::ExistingFile);
  simulate->add_option("--seed", seed, "Master seed");
  simulate->add_option("--output", output, "Output directory")->required();
  simulate->add_option("--set", sets, "Override a configuration key (key=value)");

  auto* run = app.add_subcommand("run", "Run the full pipeline on a synthetic scene");
  std::string events_path;
  bool odometry_only = false;
  run->add_option("--config", config_path, "Run configuration file")->required()
      ->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Master seed")->required();
  run->add_option("--output", output, "Output directory")->required();
  run->add_option("--set", sets, "Override a configuration key (key=value)");
  run->add_option("--events", events_path, "Write JSON-lines events to this file");
  run->add_flag("--odometry-only", odometry_only, "Disable LiDAR factors");

  auto* slice = app.add_subcommand("slice", "Export a horizontal slice of a submap");
  std::string submap_path;
  double height = 0.0;
  std::string format = "both";
  slice->add_option("--submap", submap_path, "Submap file")->required()->check(CLI::ExistingFile);
  slice->add_option("--height", height, "Slice height in the submap frame (m)");
  slice->add_option("--output", output, "Output path prefix")->required();
  slice->add_option("--format", format, "pgm, csv or both")
      ->check(CLI::IsMember({"pgm", "csv", "both"}));

  auto* score = app.add_subcommand("score", "ATE and score of a TUM trajectory");
  std::string estimate_path;
  std::string gt_path;
  std::string json_path;
  score->add_option("--estimate", estimate_path, "Estimated trajectory (TUM)")->required()
      ->check(CLI::ExistingFile);
  score->add_option("--groundtruth", gt_path, "Ground truth trajectory (TUM)")->required()
      ->check(CLI::ExistingFile);
  score->add_option("--json", json_path, "Also write the result as JSON");

  auto* compare = app.add_subcommand("compare", "Compare two runs");
  std::string baseline;
  std::string candidate;
  CompareOptions options;
  compare->add_option("--baseline", baseline, "Baseline run directory or metrics.json")
      ->required()->check(CLI::ExistingPath);
  compare->add_option("--candidate", candidate, "Candidate run directory or metrics.json")
      ->required()->check(CLI::ExistingPath);
  compare->add_option("--ate-tolerance", options.ate_relative_tolerance,
                      "Allowed relative ATE growth");
  compare->add_option("--ate-abs-tolerance", options.ate_absolute_tolerance,
                      "Allowed absolute ATE growth (m)");
  compare->add_option("--score-tolerance", options.score_tolerance, "Allowed score drop");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (simulate->parsed()) {
      RunConfig config = BuildConfig(config_path, sets);
      if (simulate->count("--seed") > 0) set_run_seed(config, seed);
      const SimulatedRun sim = simulate_run(config);
      for (const std::string& w : sim.warnings) std::cerr << "warning: " << w << '\n';
      write_simulated_run(sim, config, output);
      std::cout << "wrote " << sim.frames.size() << " frames to " << output << '\n';
    } else if (run->parsed()) {
      RunConfig config = BuildConfig(config_path, sets);
      set_run_seed(config, seed);
      if (odometry_only) config.lidar_factors = false;
      config.output_dir = output;
      std::ofstream events;
      if (!events_path.empty()) {
        events.open(events_path);
        if (!events) throw ConfigError("cannot write " + events_path);
      }
      EventLog log(events_path.empty() ? nullptr : &events);
      const SimulatedRun sim = simulate_run(config);
      for (const std::string& w : sim.warnings) std::cerr << "warning: " << w << '\n';
      const RunResult result = run_pipeline(config, sim, &log);
      const RunMetrics& m = result.metrics;
      std::printf("frames %zu  submaps %zu  octree depth %d\n", m.frames, m.submaps,
                  m.octree_depth);
      std::printf("ATE final %.4f m  causal %.4f m  odometry %.4f m\n", m.ate_final,
                  m.ate_causal, m.ate_odometry);
      std::printf("score final %.2f  causal %.2f  odometry %.2f\n", m.score_final,
                  m.score_causal, m.score_odometry);
    } else if (slice->parsed()) {
      const OccupancySubmap map = load_submap(submap_path);
      const SliceGrid grid = export_slice(map, height);
      if (format != "csv") write_slice_pgm(grid, output + ".pgm");
      if (format != "pgm") write_slice_csv(grid, output + ".csv");
    } else if (score->parsed()) {
      const auto est = read_tum(estimate_path);
      const auto gt = read_tum(gt_path);
      const AteResult a = ate(est, gt);
      const double s = hilti_score(a.errors);
      std::printf("ATE %.6f m over %zu poses, score %.3f\n", a.rmse, a.errors.size(), s);
      if (!json_path.empty()) {
        std::ofstream out(json_path);
        if (!out) throw ConfigError("cannot write " + json_path);
        out << "{\"ate_rmse\": " << a.rmse << ", \"poses\": " << a.errors.size()
            << ", \"score\": " << s << "}\n";
      }
    } else if (compare->parsed()) {
      const std::string b = MetricsPath(baseline);
      const std::string c = MetricsPath(candidate);
      const std::string bt = TimingsPath(b);
      const std::string ct = TimingsPath(c);
      const CompareResult result =
          compare_runs(read_text_file(b), read_text_file(c), options,
                       bt.empty() || ct.empty() ? "" : read_text_file(bt),
                       bt.empty() || ct.empty() ? "" : read_text_file(ct));
      std::cout << result.table();
      if (result.regression) return kExitRegression;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const StageError& e) {
    std::cerr << "runtime failure in stage " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
