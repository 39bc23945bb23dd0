#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "occslam/sim.hpp"

namespace occslam {

namespace {

std::string Fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Rotation RotationFromValues(const std::vector<double>& v, std::size_t first, int line) {
  const std::size_t extra = v.size() - first;
  if (extra == 0) return {};
  if (extra == 1) {
    return Rotation(Eigen::Quaterniond(
        Eigen::AngleAxisd(v[first] * std::numbers::pi / 180.0, Vec3::UnitZ())));
  }
  if (extra == 4) {
    Eigen::Quaterniond q(v[first], v[first + 1], v[first + 2], v[first + 3]);
    if (q.norm() < 1e-12) {
      throw std::invalid_argument("scene line " + std::to_string(line) + ": zero quaternion");
    }
    return Rotation(q.normalized());
  }
  throw std::invalid_argument("scene line " + std::to_string(line) +
                              ": expected a yaw angle or a quaternion");
}

}  // namespace

Scene parse_scene(const std::string& text) {
  Scene scene;
  bool explicit_bounds = false;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    std::istringstream ls(raw);
    std::string kind;
    if (!(ls >> kind)) continue;
    std::vector<double> v;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw std::invalid_argument("scene line " + std::to_string(line) + ": bad number '" +
                                    tok + "'");
      }
    }
    if (kind == "bounds") {
      if (v.size() != 1) throw std::invalid_argument("scene line " + std::to_string(line));
      scene.bounds = v[0];
      explicit_bounds = true;
      continue;
    }
    Primitive p;
    std::size_t extents = 3;
    if (kind == "box") {
      p.kind = PrimitiveKind::kBox;
    } else if (kind == "room") {
      p.kind = PrimitiveKind::kRoom;
    } else if (kind == "plane") {
      p.kind = PrimitiveKind::kPlane;
      extents = 2;
    } else {
      throw std::invalid_argument("scene line " + std::to_string(line) +
                                  ": unknown primitive '" + kind + "'");
    }
    if (v.size() < 3 + extents) {
      throw std::invalid_argument("scene line " + std::to_string(line) +
                                  ": too few values for " + kind);
    }
    p.pose.translation = Vec3(v[0], v[1], v[2]);
    p.half_extents = Vec3(v[3], v[4], extents == 3 ? v[5] : 0.0);
    p.pose.rotation = RotationFromValues(v, 3 + extents, line);
    scene.primitives.push_back(p);
  }
  if (!explicit_bounds) {
    for (const Primitive& p : scene.primitives) {
      const double reach = p.pose.translation.cwiseAbs().maxCoeff() + p.half_extents.norm();
      scene.bounds = std::max(scene.bounds, reach);
    }
  }
  scene.validate();
  return scene;
}

Scene load_scene(const std::string& path) { return parse_scene(ReadFile(path)); }

std::string format_scene(const Scene& scene) {
  std::ostringstream out;
  out << "bounds " << Fmt(scene.bounds) << '\n';
  for (const Primitive& p : scene.primitives) {
    const char* kind = p.kind == PrimitiveKind::kBox    ? "box"
                       : p.kind == PrimitiveKind::kRoom ? "room"
                                                        : "plane";
    out << kind;
    for (int i = 0; i < 3; ++i) out << ' ' << Fmt(p.pose.translation[i]);
    const int extents = p.kind == PrimitiveKind::kPlane ? 2 : 3;
    for (int i = 0; i < extents; ++i) out << ' ' << Fmt(p.half_extents[i]);
    const Eigen::Quaterniond& q = p.pose.rotation.quaternion();
    out << ' ' << Fmt(q.w()) << ' ' << Fmt(q.x()) << ' ' << Fmt(q.y()) << ' ' << Fmt(q.z())
        << '\n';
  }
  return out.str();
}

void write_tum(std::ostream& out, std::span<const TimedPose> poses) {
  for (const TimedPose& p : poses) {
    const Vec3& t = p.pose.translation;
    const Eigen::Quaterniond& q = p.pose.rotation.quaternion();
    out << Fmt(p.timestamp) << ' ' << Fmt(t.x()) << ' ' << Fmt(t.y()) << ' ' << Fmt(t.z())
        << ' ' << Fmt(q.x()) << ' ' << Fmt(q.y()) << ' ' << Fmt(q.z()) << ' ' << Fmt(q.w())
        << '\n';
  }
}

void write_tum(const std::string& path, std::span<const TimedPose> poses) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_tum(out, poses);
}

std::vector<TimedPose> read_tum(std::istream& in) {
  std::vector<TimedPose> poses;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double t, x, y, z, qx, qy, qz, qw;
    if (!(ls >> t >> x >> y >> z >> qx >> qy >> qz >> qw)) {
      throw std::runtime_error("TUM line " + std::to_string(number) + " is malformed");
    }
    Eigen::Quaterniond q(qw, qx, qy, qz);
    if (q.norm() < 1e-12) throw std::runtime_error("TUM line " + std::to_string(number));
    poses.push_back({t, Pose(Rotation(q.normalized()), Vec3(x, y, z))});
  }
  return poses;
}

std::vector<TimedPose> read_tum(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_tum(in);
}

void write_scan_csv(const std::string& path, const LidarScan& scan) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "t,x,y,z\n";
  for (const TimedPoint& p : scan.points) {
    out << Fmt(p.timestamp) << ',' << Fmt(p.position.x()) << ',' << Fmt(p.position.y()) << ','
        << Fmt(p.position.z()) << '\n';
  }
}

LidarScan read_scan_csv(const std::string& path, const Pose& t_sl) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  LidarScan scan;
  scan.t_sl = t_sl;
  std::string line;
  std::getline(in, line);
  if (line != "t,x,y,z") throw std::runtime_error(path + ": missing 't,x,y,z' header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    double v[4];
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &v[0], &v[1], &v[2], &v[3]) != 4) {
      throw std::runtime_error(path + ": malformed line '" + line + "'");
    }
    scan.points.push_back({Vec3(v[1], v[2], v[3]), v[0]});
  }
  return scan;
}

}  // namespace occslam
