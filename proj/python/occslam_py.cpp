#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "occslam/evaluation.hpp"
#include "occslam/lidar_residual.hpp"
#include "occslam/occupancy_map.hpp"
#include "occslam/pipeline.hpp"
#include "occslam/sim.hpp"

namespace py = pybind11;
using namespace occslam;

namespace {

using Points = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<Vec3> ToPoints(const Points& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw std::invalid_argument("expected an (N, 3) array");
  std::vector<Vec3> out(a.shape(0));
  auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i) out[i] = Vec3(r(i, 0), r(i, 1), r(i, 2));
  return out;
}

py::array_t<double> FromPoints(const std::vector<Vec3>& pts) {
  py::array_t<double> out({static_cast<py::ssize_t>(pts.size()), py::ssize_t{3}});
  auto w = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (int k = 0; k < 3; ++k) w(i, k) = pts[i][k];
  }
  return out;
}

py::array_t<double> TrajectoryArray(const std::vector<TimedPose>& poses) {
  // Rows of t, x, y, z, qx, qy, qz, qw as in TUM files.
  py::array_t<double> out({static_cast<py::ssize_t>(poses.size()), py::ssize_t{8}});
  auto w = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const Eigen::Quaterniond& q = poses[i].pose.rotation.quaternion();
    const Vec3& t = poses[i].pose.translation;
    const double row[8] = {poses[i].timestamp, t.x(), t.y(), t.z(), q.x(), q.y(), q.z(), q.w()};
    for (int k = 0; k < 8; ++k) w(i, k) = row[k];
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_occslam, m) {
  m.doc() = "Occupancy-submap LiDAR SLAM back-end";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<StageError>(m, "StageError", PyExc_RuntimeError);

  py::class_<Rotation>(m, "Rotation")
      .def(py::init<>())
      .def(py::init<double, double, double, double>(), py::arg("w"), py::arg("x"), py::arg("y"),
           py::arg("z"))
      .def_static("from_matrix", &Rotation::FromMatrix)
      .def_static("exp", &exp_so3)
      .def("log", [](const Rotation& r) { return log_so3(r); })
      .def("matrix", &Rotation::matrix)
      .def("wxyz", [](const Rotation& r) {
        const Eigen::Quaterniond& q = r.quaternion();
        return Eigen::Vector4d(q.w(), q.x(), q.y(), q.z());
      })
      .def("inverse", &Rotation::inverse)
      .def("angle", [](const Rotation& r) { return rotation_angle(r); })
      .def("__mul__", [](const Rotation& a, const Rotation& b) { return a * b; })
      .def("__mul__", [](const Rotation& a, const Vec3& v) -> Vec3 { return a * v; });

  py::class_<Pose>(m, "Pose")
      .def(py::init<>())
      .def(py::init<const Rotation&, const Vec3&>(), py::arg("rotation"), py::arg("translation"))
      .def_readwrite("rotation", &Pose::rotation)
      .def_readwrite("translation", &Pose::translation)
      .def("matrix", &Pose::matrix)
      .def("inverse", [](const Pose& p) { return inverse(p); })
      .def("transform", [](const Pose& p, const Vec3& v) { return transform_point(p, v); })
      .def("perturb",
           [](const Pose& p, const Vec3& dr, const Vec3& da) {
             return apply_perturbation(p, {dr, da});
           },
           py::arg("delta_r"), py::arg("delta_alpha"))
      .def("__mul__", [](const Pose& a, const Pose& b) { return compose(a, b); })
      .def("__repr__", [](const Pose& p) {
        return "Pose(t=[" + std::to_string(p.translation.x()) + ", " +
               std::to_string(p.translation.y()) + ", " + std::to_string(p.translation.z()) + "])";
      });

  py::class_<SensorModelParams>(m, "SensorModelParams")
      .def(py::init<>())
      .def_readwrite("l_min", &SensorModelParams::l_min)
      .def_readwrite("tau_scale", &SensorModelParams::tau_scale)
      .def_readwrite("tau_min", &SensorModelParams::tau_min)
      .def_readwrite("tau_max", &SensorModelParams::tau_max)
      .def_readwrite("sigma_scale", &SensorModelParams::sigma_scale)
      .def_readwrite("sigma_min", &SensorModelParams::sigma_min)
      .def_readwrite("sigma_max", &SensorModelParams::sigma_max)
      .def_readwrite("w_max", &SensorModelParams::w_max)
      .def_readwrite("sigma_z", &SensorModelParams::sigma_z)
      .def("sigma", &SensorModelParams::sigma)
      .def("tau", &SensorModelParams::tau)
      .def("validate", &SensorModelParams::validate);

  m.def("inverse_sensor_model", &inverse_sensor_model, py::arg("d_r"), py::arg("z_r"),
        py::arg("params") = SensorModelParams{});

  py::class_<OccupancySubmap, std::shared_ptr<OccupancySubmap>>(m, "OccupancySubmap")
      .def(py::init([](int anchor, double resolution, double dimension,
                       const SensorModelParams& params, int brick_level) {
             return std::make_shared<OccupancySubmap>(anchor, resolution, dimension, params,
                                                      brick_level);
           }),
           py::arg("anchor") = 0, py::arg("resolution") = 0.03, py::arg("dimension") = 15.36,
           py::arg("params") = SensorModelParams{}, py::arg("brick_level") = 2)
      .def_property_readonly("depth", &OccupancySubmap::depth)
      .def_property_readonly("resolution", &OccupancySubmap::resolution)
      .def_property_readonly("anchor", &OccupancySubmap::anchor_state_id)
      .def("integrate_scan",
           [](OccupancySubmap& map, const Pose& t_ms, const Points& pts) {
             const std::vector<Vec3> p = ToPoints(pts);
             ScanIntegrationStats s;
             {
               py::gil_scoped_release release;
               s = map.integrate_scan(t_ms, p);
             }
             py::dict d;
             d["integrated"] = s.integrated;
             d["clipped"] = s.clipped;
             d["rejected"] = s.rejected;
             d["voxel_updates"] = s.voxel_updates;
             return d;
           },
           py::arg("pose"), py::arg("points"))
      .def("query", &OccupancySubmap::query_accumulated, py::arg("point"))
      .def("gradient", &OccupancySubmap::query_gradient, py::arg("point"))
      .def("is_observed", py::overload_cast<const Vec3&>(&OccupancySubmap::is_observed, py::const_))
      .def("checksum", &OccupancySubmap::checksum)
      .def("save", [](const OccupancySubmap& map, const std::string& path) { save_submap(map, path); })
      .def_static("load", [](const std::string& path) {
        return std::make_shared<OccupancySubmap>(load_submap(path));
      })
      .def("slice", [](const OccupancySubmap& map, double height) {
        const SliceGrid g = export_slice(map, height);
        py::array_t<std::uint8_t> classes({g.rows, g.width});
        py::array_t<double> values({g.rows, g.width});
        std::copy(g.classes.begin(), g.classes.end(),
                  reinterpret_cast<CellClass*>(classes.mutable_data()));
        std::copy(g.values.begin(), g.values.end(), values.mutable_data());
        py::dict d;
        d["x0"] = g.x0;
        d["y0"] = g.y0;
        d["resolution"] = g.resolution;
        d["classes"] = classes;
        d["values"] = values;
        return d;
      });

  m.def("occupancy_residual", &occupancy_residual, py::arg("log_odds"), py::arg("gradient"),
        py::arg("l_min"), py::arg("sigma_z"));
  m.def("map_distance_and_sigma",
        [](double l, const Vec3& g, double l_min) {
          const MapDistance d = map_distance_and_sigma(l, g, l_min);
          return py::make_tuple(d.distance, d.sigma_map);
        },
        py::arg("log_odds"), py::arg("gradient"), py::arg("l_min"));

  m.def("parse_scene", &parse_scene);
  m.def("raycast",
        [](const std::string& scene_text, const Pose& pose, int beams, double rate,
           double max_range, double noise, std::uint64_t seed, double duration) {
          LidarModel model;
          model.n_beams = beams;
          model.rate = rate;
          model.max_range = max_range;
          model.sigma_range = noise;
          model.seed = seed;
          const LidarScan scan = raycast(parse_scene(scene_text), pose, model, 0.0, duration);
          std::vector<Vec3> pts;
          pts.reserve(scan.points.size());
          for (const auto& p : scan.points) pts.push_back(p.position);
          return FromPoints(pts);
        },
        py::arg("scene"), py::arg("pose"), py::arg("beams") = 64, py::arg("rate") = 400000.0,
        py::arg("max_range") = 20.0, py::arg("noise") = 0.0, py::arg("seed") = 1,
        py::arg("duration") = 0.1);

  m.def("ate",
        [](const Points& est, const Points& gt) {
          const AteResult r = ate(ToPoints(est), ToPoints(gt));
          return py::make_tuple(r.rmse, r.errors);
        },
        py::arg("estimate"), py::arg("ground_truth"));
  m.def("hilti_point_score", &hilti_point_score);
  m.def("hilti_score", [](const std::vector<double>& e) { return hilti_score(e); });

  m.def("load_config",
        [](const std::string& path, const std::map<std::string, std::string>& overrides) {
          RunConfig c = load_run_config(path);
          for (const auto& [k, v] : overrides) apply_config_value(c, k, v);
          c.validate();
          return format_run_config(c);
        },
        py::arg("path"), py::arg("overrides") = std::map<std::string, std::string>{},
        "Resolved configuration text after applying overrides");
  m.def("run",
        [](const std::string& path, const std::map<std::string, std::string>& overrides,
           const std::string& output) {
          RunConfig c = load_run_config(path);
          for (const auto& [k, v] : overrides) apply_config_value(c, k, v);
          c.output_dir = output;
          RunResult r;
          {
            py::gil_scoped_release release;
            r = run_pipeline(c);
          }
          py::dict d;
          d["metrics"] = metrics_to_json(r.metrics);
          d["timings"] = timings_to_json(r.timings);
          d["ground_truth"] = TrajectoryArray(r.ground_truth);
          d["odometry"] = TrajectoryArray(r.odometry);
          d["causal"] = TrajectoryArray(r.causal);
          d["final"] = TrajectoryArray(r.final);
          std::vector<std::shared_ptr<OccupancySubmap>> maps;
          for (const auto& s : r.submaps) maps.push_back(std::const_pointer_cast<OccupancySubmap>(s));
          d["submaps"] = maps;
          return d;
        },
        py::arg("config"), py::arg("overrides") = std::map<std::string, std::string>{},
        py::arg("output") = "");
  m.def("compare",
        [](const std::string& baseline, const std::string& candidate) {
          const CompareResult r = compare_runs(baseline, candidate);
          return py::make_tuple(r.regression, r.table());
        },
        py::arg("baseline_metrics_json"), py::arg("candidate_metrics_json"));
}
