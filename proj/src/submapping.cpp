#include "occslam/submapping.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace occslam {

namespace {

Pose PoseAt(std::span<const TimedPose> trajectory, double t, bool* ok) {
  *ok = false;
  if (trajectory.empty() || t < trajectory.front().timestamp ||
      t > trajectory.back().timestamp) {
    return {};
  }
  auto upper = std::upper_bound(trajectory.begin(), trajectory.end(), t,
                                [](double v, const TimedPose& p) { return v < p.timestamp; });
  *ok = true;
  if (upper == trajectory.begin()) return trajectory.front().pose;
  auto lower = std::prev(upper);
  if (upper == trajectory.end() || lower->timestamp == t) return lower->pose;
  return interpolate_pose(lower->pose, lower->timestamp, upper->pose, upper->timestamp, t);
}

std::uint64_t MixSeed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = seed ^ 0x9E3779B97F4A7C15ULL;
  for (std::uint64_t v : {a, b}) {
    h ^= v + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
    h *= 0xBF58476D1CE4E5B9ULL;
  }
  return h;
}

const char* KindName(LidarFactorKind kind) {
  return kind == LidarFactorKind::kFrameToMap ? "frame_to_map" : "map_to_map";
}

void LogFactor(EventLog* log, const WiredFactor& f) {
  if (log == nullptr) return;
  nlohmann::json j = {{"event", "factor"},
                      {"kind", KindName(f.kind)},
                      {"state_a", f.state_a},
                      {"state_b", f.state_b},
                      {"terms", f.terms}};
  log->emit(j.dump());
}

std::optional<WiredFactor> AddFactor(Problem& problem, LidarFactorKind kind,
                                     const SubmapEntry& target, StateId state_b,
                                     std::span<const Vec3> points_sb, std::size_t budget,
                                     std::uint64_t seed, double sigma_z) {
  const Pose t_sa_sb =
      compose(inverse(problem.state(target.anchor).pose), problem.state(state_b).pose);
  const OccupancySubmap& map = target.map();
  // Only points whose field is known at the current estimate can yield a
  // valid term, so the budget is spent on those.
  std::vector<Vec3> observed;
  observed.reserve(points_sb.size());
  for (const Vec3& p : points_sb) {
    const Vec3 p_sa = transform_point(t_sa_sb, p);
    if (map.is_observed(p_sa) && map.query_field(p_sa)) observed.push_back(p);
  }
  const std::vector<Vec3> picked =
      sample_factor_points<Vec3>(std::span<const Vec3>(observed), budget, seed);
  if (picked.empty()) return std::nullopt;
  LidarFactor factor;
  factor.kind = kind;
  factor.terms.reserve(picked.size());
  for (const Vec3& p : picked) {
    factor.terms.push_back({p, target.anchor, state_b, target.frozen, sigma_z});
  }
  problem.add_lidar_factor(std::move(factor));
  return WiredFactor{kind, target.anchor, state_b, picked.size()};
}

}  // namespace

DeskewResult deskew(const LidarScan& scan, std::span<const TimedPose> trajectory,
                    double reference_time) {
  DeskewResult result;
  bool ok = false;
  const Pose t_ws_ref = PoseAt(trajectory, reference_time, &ok);
  if (!ok) throw std::runtime_error("deskew: reference time is not bracketed by poses");
  const Pose t_sref_w = inverse(t_ws_ref);

  std::vector<TimedPoint> sorted = scan.points;
  std::stable_sort(sorted.begin(), sorted.end(), [](const TimedPoint& a, const TimedPoint& b) {
    return a.timestamp < b.timestamp;
  });
  result.scan.points.reserve(sorted.size());
  for (const TimedPoint& p : sorted) {
    const Pose t_ws = PoseAt(trajectory, p.timestamp, &ok);
    if (!ok || !p.position.allFinite()) {
      ++result.dropped;
      continue;
    }
    const Vec3 world = transform_point(t_ws, transform_point(scan.t_sl, p.position));
    result.scan.points.push_back({transform_point(t_sref_w, world), reference_time});
  }
  if (!sorted.empty() && 2 * result.dropped > sorted.size()) {
    throw std::runtime_error("deskew: more than half of the points are not bracketed");
  }
  return result;
}

double overlap_ratio(const OccupancySubmap& active, const Pose& t_ms,
                     std::span<const Vec3> points_s, int level) {
  if (points_s.empty()) throw std::invalid_argument("overlap ratio of an empty scan");
  std::size_t observed = 0;
  for (const Vec3& p : points_s) {
    if (active.is_observed(transform_point(t_ms, p), level)) ++observed;
  }
  return static_cast<double>(observed) / static_cast<double>(points_s.size());
}

void EventLog::emit(const std::string& json_line) {
  lines_.push_back(json_line);
  if (out_ != nullptr) *out_ << json_line << '\n';
}

bool KeyframeSelector::is_keyframe(const Pose& t_ws) {
  const bool first = !last_position_.has_value();
  ++frames_since_;
  const bool by_count = frames_since_ >= every_frames_;
  const bool by_distance =
      !first && (t_ws.translation - *last_position_).norm() >= every_meters_;
  if (first || by_count || by_distance) {
    frames_since_ = 0;
    last_position_ = t_ws.translation;
    return true;
  }
  return false;
}

SubmapRegistry::SubmapRegistry(SubmappingConfig config, EventLog* log)
    : config_(std::move(config)), log_(log) {
  config_.sensor.validate();
  if (!(config_.lambda_overlap > 0.0 && config_.lambda_overlap < 1.0)) {
    throw std::invalid_argument("lambda_overlap must lie in (0, 1)");
  }
}

void SubmapRegistry::start(StateId anchor) {
  if (started()) throw std::logic_error("submap registry already started");
  SubmapEntry entry;
  entry.anchor = anchor;
  entry.active = std::make_shared<OccupancySubmap>(anchor, config_.resolution,
                                                   config_.dimension, config_.sensor,
                                                   config_.brick_level);
  entries_.push_back(std::move(entry));
  if (log_ != nullptr) {
    log_->emit(nlohmann::json({{"event", "spawn"}, {"submap", 0}, {"anchor", anchor}}).dump());
  }
}

std::optional<std::size_t> SubmapRegistry::last_completed() const {
  if (finished_) return entries_.size() - 1;
  if (entries_.size() < 2) return std::nullopt;
  return entries_.size() - 2;
}

ScanIntegrationStats SubmapRegistry::integrate(StateId source, const Pose& t_ms,
                                               std::span<const Vec3> points_s) {
  if (!started() || finished_) throw std::logic_error("no active submap");
  SubmapEntry& entry = entries_.back();
  const ScanIntegrationStats stats = entry.active->integrate_scan(t_ms, points_s);
  ++entry.scans;
  buffer_.push_back({source, std::vector<Vec3>(points_s.begin(), points_s.end())});
  return stats;
}

CompletionEvent SubmapRegistry::freeze_active() {
  if (!started() || finished_) throw std::logic_error("no active submap");
  SubmapEntry& done = entries_.back();
  done.active->audit_and_propagate();
  done.frozen = std::shared_ptr<const OccupancySubmap>(std::move(done.active));
  done.active.reset();
  done.checksum_at_freeze = done.frozen->checksum();

  CompletionEvent event;
  event.completed_index = entries_.size() - 1;
  event.completed_anchor = done.anchor;
  event.submap = done.frozen;
  event.aggregated = std::move(buffer_);
  buffer_.clear();
  if (log_ != nullptr) {
    log_->emit(nlohmann::json({{"event", "completion"},
                               {"submap", event.completed_index},
                               {"anchor", event.completed_anchor}})
                   .dump());
  }
  return event;
}

CompletionEvent SubmapRegistry::complete_and_spawn(StateId anchor) {
  if (!started() || finished_) throw std::logic_error("no active submap");
  if (anchor <= entries_.back().anchor) {
    throw std::invalid_argument("submap anchors must be strictly increasing");
  }
  CompletionEvent event = freeze_active();
  event.new_anchor = anchor;

  SubmapEntry next;
  next.anchor = anchor;
  next.active = std::make_shared<OccupancySubmap>(anchor, config_.resolution,
                                                  config_.dimension, config_.sensor,
                                                  config_.brick_level);
  entries_.push_back(std::move(next));
  if (log_ != nullptr) {
    log_->emit(nlohmann::json(
                   {{"event", "spawn"}, {"submap", entries_.size() - 1}, {"anchor", anchor}})
                   .dump());
  }
  return event;
}

CompletionEvent SubmapRegistry::finish() {
  CompletionEvent event = freeze_active();
  finished_ = true;
  return event;
}

SpawnDecision maybe_spawn(SubmapRegistry& registry, double ratio,
                          const StateNode& next_keyframe) {
  SpawnDecision decision;
  if (!registry.started() || registry.finished() || registry.active().scans == 0) {
    return decision;
  }
  if (!(ratio < registry.config().lambda_overlap)) return decision;
  decision.completion = registry.complete_and_spawn(next_keyframe.id);
  decision.spawned = true;
  return decision;
}

double submap_overlap_score(const OccupancySubmap& completed, const Pose& t_w_completed,
                            const OccupancySubmap& older, const Pose& t_w_older,
                            std::size_t sample_cap, int level) {
  std::vector<Vec3> occupied;
  completed.for_each_observed_voxel([&](const VoxelIndex& idx, const VoxelData& data) {
    if (data.accumulated() > 0.0) occupied.push_back(completed.voxel_center(idx));
  });
  if (occupied.empty()) return 0.0;
  const std::size_t stride =
      sample_cap > 0 ? std::max<std::size_t>(1, occupied.size() / sample_cap) : 1;
  const Pose t_older_completed = compose(inverse(t_w_older), t_w_completed);
  std::size_t tested = 0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < occupied.size(); i += stride) {
    ++tested;
    if (older.is_observed(transform_point(t_older_completed, occupied[i]), level)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(tested);
}

std::optional<std::size_t> find_most_overlapping(const SubmapRegistry& registry,
                                                 std::size_t completed_index,
                                                 const PoseLookup& anchor_pose) {
  const auto& entries = registry.submaps();
  if (completed_index >= entries.size()) throw std::out_of_range("no such submap");
  const SubmapEntry& completed = entries[completed_index];
  const Pose t_w_completed = anchor_pose(completed.anchor);
  std::optional<std::size_t> best;
  double best_score = -1.0;
  for (std::size_t i = 0; i < completed_index; ++i) {
    const SubmapEntry& older = entries[i];
    const double score =
        submap_overlap_score(completed.map(), t_w_completed, older.map(),
                             anchor_pose(older.anchor), registry.config().overlap_sample_cap,
                             registry.config().overlap_level);
    if (score >= best_score) {
      best_score = score;
      best = i;
    }
  }
  if (!best || best_score < registry.config().theta_geo) return std::nullopt;
  return best;
}

std::vector<WiredFactor> wire_factors(const SubmapRegistry& registry, Problem& problem,
                                      const LiveFrameEvent& event) {
  std::vector<WiredFactor> wired;
  const auto completed = registry.last_completed();
  if (!completed) return wired;
  const SubmapEntry& target = registry.submaps()[*completed];
  const auto f = AddFactor(problem, LidarFactorKind::kFrameToMap, target, event.frame,
                           event.points_s, registry.config().n_frame_to_map,
                           MixSeed(registry.config().seed, event.frame, target.anchor),
                           registry.config().sensor.sigma_z);
  if (f) {
    wired.push_back(*f);
    LogFactor(registry.log(), *f);
  }
  return wired;
}

std::vector<WiredFactor> wire_factors(const SubmapRegistry& registry, Problem& problem,
                                      const CompletionEvent& event) {
  std::vector<WiredFactor> wired;
  if (event.completed_index == 0) return wired;
  const auto& entries = registry.submaps();

  const Pose t_sb_w = inverse(problem.state(event.completed_anchor).pose);
  std::vector<Vec3> points_sb;
  for (const AggregatedCloud& cloud : event.aggregated) {
    const Pose t_sb_sk = compose(t_sb_w, problem.state(cloud.source).pose);
    for (const Vec3& p : cloud.points) points_sb.push_back(transform_point(t_sb_sk, p));
  }

  std::vector<std::size_t> targets = {event.completed_index - 1};
  const auto best = find_most_overlapping(
      registry, event.completed_index,
      [&problem](StateId id) { return problem.state(id).pose; });
  if (best && *best != targets.front()) targets.push_back(*best);

  for (std::size_t index : targets) {
    const SubmapEntry& target = entries[index];
    const auto f = AddFactor(problem, LidarFactorKind::kMapToMap, target,
                             event.completed_anchor, points_sb,
                             registry.config().n_map_to_map,
                             MixSeed(registry.config().seed, event.completed_anchor, target.anchor),
                             registry.config().sensor.sigma_z);
    if (f) {
      wired.push_back(*f);
      LogFactor(registry.log(), *f);
    }
  }
  return wired;
}

}  // namespace occslam
