#include <stdexcept>

#include <nlohmann/json.hpp>

#include "occslam/factor_graph.hpp"

namespace occslam {

namespace {

using nlohmann::json;

constexpr int kProblemSchemaVersion = 1;

json PoseToJson(const Pose& pose) {
  const Eigen::Quaterniond& q = pose.rotation.quaternion();
  return {{"p", {pose.translation.x(), pose.translation.y(), pose.translation.z()}},
          {"q", {q.w(), q.x(), q.y(), q.z()}}};
}

Pose PoseFromJson(const json& j) {
  const auto& p = j.at("p");
  const auto& q = j.at("q");
  return {Rotation(q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(),
                   q.at(3).get<double>()),
          Vec3(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>())};
}

const char* RoleName(StateRole role) {
  switch (role) {
    case StateRole::kLive: return "live";
    case StateRole::kKeyframe: return "keyframe";
    case StateRole::kSubmapAnchor: return "submap_anchor";
  }
  return "live";
}

StateRole RoleFromName(const std::string& name) {
  if (name == "live") return StateRole::kLive;
  if (name == "keyframe") return StateRole::kKeyframe;
  if (name == "submap_anchor") return StateRole::kSubmapAnchor;
  throw std::invalid_argument("unknown state role '" + name + "'");
}

}  // namespace

std::string dump_problem(const Problem& problem) {
  json doc;
  doc["version"] = kProblemSchemaVersion;
  json states = json::array();
  for (const StateNode& s : problem.states()) {
    json j = PoseToJson(s.pose);
    j["id"] = s.id;
    j["t"] = s.timestamp;
    j["role"] = RoleName(s.role);
    j["fixed"] = s.fixed;
    states.push_back(std::move(j));
  }
  doc["states"] = std::move(states);

  json relative = json::array();
  for (const RelativePoseFactor& f : problem.relative_pose_factors()) {
    json j = PoseToJson(f.measurement);
    j["r"] = f.state_r;
    j["c"] = f.state_c;
    std::vector<double> info(f.information.data(), f.information.data() + 36);
    j["information"] = info;  // column-major, symmetric
    relative.push_back(std::move(j));
  }
  doc["relative_pose_factors"] = std::move(relative);

  json lidar = json::array();
  for (const LidarFactor& f : problem.lidar_factors()) {
    const LidarFactorTerm& first = f.terms.front();
    json j;
    j["kind"] = f.kind == LidarFactorKind::kFrameToMap ? "frame_to_map" : "map_to_map";
    j["state_a"] = first.state_a;
    j["state_b"] = first.state_b;
    j["submap"] = first.submap->anchor_state_id();
    json points = json::array();
    for (const LidarFactorTerm& t : f.terms) {
      points.push_back({t.p_sb.x(), t.p_sb.y(), t.p_sb.z(), t.sigma_z});
    }
    j["points"] = std::move(points);
    lidar.push_back(std::move(j));
  }
  doc["lidar_factors"] = std::move(lidar);
  return doc.dump(1);
}

Problem load_problem(const std::string& text, const SubmapResolver& resolve) {
  const json doc = json::parse(text);
  if (doc.at("version").get<int>() != kProblemSchemaVersion) {
    throw std::runtime_error("unsupported problem schema version");
  }
  Problem problem;
  for (const json& j : doc.at("states")) {
    const StateId id = problem.add_state(j.at("t").get<double>(), PoseFromJson(j),
                                         RoleFromName(j.at("role").get<std::string>()),
                                         j.at("fixed").get<bool>());
    if (id != j.at("id").get<StateId>()) {
      throw std::runtime_error("state ids must be dense and in order");
    }
  }
  for (const json& j : doc.at("relative_pose_factors")) {
    RelativePoseFactor f;
    f.state_r = j.at("r").get<StateId>();
    f.state_c = j.at("c").get<StateId>();
    f.measurement = PoseFromJson(j);
    const auto info = j.at("information").get<std::vector<double>>();
    if (info.size() != 36) throw std::runtime_error("information matrix must have 36 entries");
    f.information = Eigen::Map<const Mat6>(info.data());
    problem.add_relative_pose_factor(f);
  }
  for (const json& j : doc.at("lidar_factors")) {
    LidarFactor f;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "frame_to_map") {
      f.kind = LidarFactorKind::kFrameToMap;
    } else if (kind == "map_to_map") {
      f.kind = LidarFactorKind::kMapToMap;
    } else {
      throw std::runtime_error("unknown lidar factor kind '" + kind + "'");
    }
    const StateId submap_id = j.at("submap").get<StateId>();
    auto submap = resolve(submap_id);
    if (!submap) throw std::runtime_error("unresolved submap " + std::to_string(submap_id));
    for (const json& p : j.at("points")) {
      LidarFactorTerm t;
      t.p_sb = Vec3(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
      t.sigma_z = p.at(3).get<double>();
      t.state_a = j.at("state_a").get<StateId>();
      t.state_b = j.at("state_b").get<StateId>();
      t.submap = submap;
      f.terms.push_back(std::move(t));
    }
    problem.add_lidar_factor(std::move(f));
  }
  return problem;
}

}  // namespace occslam
