#include "occslam/occupancy_map.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace occslam {

double SensorModelParams::sigma(double z) const {
  return std::clamp(sigma_scale * z, sigma_min, sigma_max);
}

double SensorModelParams::tau(double z) const {
  return std::clamp(tau_scale * z, tau_min, tau_max);
}

void SensorModelParams::validate() const {
  if (!(l_min < 0.0)) throw std::invalid_argument("l_min must be negative");
  if (w_max < 1) throw std::invalid_argument("w_max must be >= 1");
  if (!(tau_min > 0.0) || !(tau_max >= tau_min) || !(tau_scale >= 0.0)) {
    throw std::invalid_argument("surface thickness clamps must satisfy 0 < min <= max");
  }
  if (!(sigma_min > 0.0) || !(sigma_max >= sigma_min) || !(sigma_scale >= 0.0)) {
    throw std::invalid_argument("range uncertainty clamps must satisfy 0 < min <= max");
  }
  if (!(sigma_z >= 0.0)) throw std::invalid_argument("sigma_z must be non-negative");
}

double inverse_sensor_model(double d_r, double z_r, const SensorModelParams& params) {
  if (!(z_r > 0.0)) throw std::domain_error("invalid measurement: range must be positive");
  const double three_sigma = 3.0 * params.sigma(z_r);
  if (d_r <= -three_sigma) return params.l_min;
  const double slope = -params.l_min / three_sigma;
  const double half_tau = 0.5 * params.tau(z_r);
  return slope * std::min(d_r, half_tau);
}

void VoxelData::update(double log_odds, int w_max) {
  mean_log_odds = (mean_log_odds * weight + log_odds) / (weight + 1);
  weight = std::min(weight + 1, w_max);
}

struct OccupancySubmap::Node {
  VoxelData data;  // payload while the node is a leaf
  NodeSummary summary;
  bool dirty = false;
  std::unique_ptr<std::array<Node, 8>> children;
  std::unique_ptr<VoxelData[]> brick;

  bool is_leaf() const { return !children && !brick; }
};

namespace {

using Node = OccupancySubmap::Node;

int ChildSlot(const VoxelIndex& index, int level) {
  const int shift = level - 1;
  return ((index.x() >> shift) & 1) | (((index.y() >> shift) & 1) << 1) |
         (((index.z() >> shift) & 1) << 2);
}

int BrickSlot(const VoxelIndex& index, int brick_level) {
  const int mask = (1 << brick_level) - 1;
  return (index.x() & mask) +
         ((index.y() & mask) << brick_level) +
         ((index.z() & mask) << (2 * brick_level));
}

VoxelIndex BrickVoxel(const VoxelIndex& brick_origin, int slot, int brick_level) {
  const int mask = (1 << brick_level) - 1;
  return brick_origin + VoxelIndex(slot & mask, (slot >> brick_level) & mask,
                                   (slot >> (2 * brick_level)) & mask);
}

NodeSummary LeafSummary(const VoxelData& data) {
  NodeSummary s;
  if (data.observed()) {
    s.max_log_odds = data.accumulated();
    s.observed = ObservedFraction::kFull;
  }
  return s;
}

NodeSummary BrickSummary(const VoxelData* voxels, int count) {
  NodeSummary s;
  int observed = 0;
  for (int i = 0; i < count; ++i) {
    if (voxels[i].observed()) {
      ++observed;
      s.max_log_odds = std::max(s.max_log_odds, voxels[i].accumulated());
    }
  }
  s.observed = observed == 0       ? ObservedFraction::kNone
               : observed == count ? ObservedFraction::kFull
                                   : ObservedFraction::kPartial;
  return s;
}

NodeSummary ChildrenSummary(const std::array<Node, 8>& children) {
  NodeSummary s;
  int full = 0;
  int none = 0;
  for (const Node& c : children) {
    s.max_log_odds = std::max(s.max_log_odds, c.summary.max_log_odds);
    if (c.summary.observed == ObservedFraction::kFull) ++full;
    if (c.summary.observed == ObservedFraction::kNone) ++none;
  }
  s.observed = full == 8   ? ObservedFraction::kFull
               : none == 8 ? ObservedFraction::kNone
                           : ObservedFraction::kPartial;
  return s;
}

}  // namespace

OccupancySubmap::OccupancySubmap(StateId anchor_state_id, double resolution,
                                 double dimension, SensorModelParams params,
                                 int brick_level)
    : anchor_state_id_(anchor_state_id),
      resolution_(resolution),
      dimension_(dimension),
      params_(params),
      brick_level_(brick_level),
      root_(std::make_unique<Node>()) {
  params_.validate();
  if (!(resolution > 0.0) || !(dimension > 0.0)) {
    throw std::invalid_argument("resolution and dimension must be positive");
  }
  const double ratio = dimension / resolution;
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > 1e-6 * rounded || rounded < 1.0) {
    throw std::invalid_argument("dimension must be a power-of-two multiple of resolution");
  }
  const auto n = static_cast<long long>(rounded);
  if ((n & (n - 1)) != 0 || n > (1LL << 20)) {
    throw std::invalid_argument("dimension / resolution must be a power of two");
  }
  depth_ = 0;
  while ((1LL << depth_) < n) ++depth_;
  if (brick_level_ < 0 || brick_level_ > depth_) {
    throw std::invalid_argument("brick level must lie in [0, depth]");
  }
}

OccupancySubmap::~OccupancySubmap() = default;
OccupancySubmap::OccupancySubmap(OccupancySubmap&&) noexcept = default;
OccupancySubmap& OccupancySubmap::operator=(OccupancySubmap&&) noexcept = default;

bool OccupancySubmap::in_bounds(const VoxelIndex& index) const {
  const int n = voxels_per_side();
  return (index.array() >= 0).all() && (index.array() < n).all();
}

std::optional<VoxelIndex> OccupancySubmap::voxel_index(const Vec3& p_m) const {
  const Vec3 g = (p_m.array() + 0.5 * dimension_) / resolution_;
  if (!g.allFinite()) return std::nullopt;
  const VoxelIndex index(static_cast<int>(std::floor(g.x())),
                         static_cast<int>(std::floor(g.y())),
                         static_cast<int>(std::floor(g.z())));
  if (!in_bounds(index)) return std::nullopt;
  return index;
}

Vec3 OccupancySubmap::voxel_center(const VoxelIndex& index) const {
  return (index.cast<double>().array() + 0.5) * resolution_ - 0.5 * dimension_;
}

const OccupancySubmap::Node* OccupancySubmap::find_leaf(const VoxelIndex& index,
                                                        int* level) const {
  const Node* node = root_.get();
  int l = depth_;
  while (node->children) {
    node = &(*node->children)[ChildSlot(index, l)];
    --l;
  }
  *level = l;
  return node;
}

VoxelData OccupancySubmap::voxel(const VoxelIndex& index) const {
  if (!in_bounds(index)) return {};
  int level = 0;
  const Node* node = find_leaf(index, &level);
  if (node->brick) return node->brick[BrickSlot(index, brick_level_)];
  return node->data;
}

bool OccupancySubmap::is_observed(const Vec3& p_m) const {
  const auto index = voxel_index(p_m);
  return index && voxel(*index).observed();
}

bool OccupancySubmap::is_observed(const Vec3& p_m, int level) const {
  const auto index = voxel_index(p_m);
  if (!index) return false;
  if (level <= 0) return voxel(*index).observed();
  const Node* node = root_.get();
  int l = depth_;
  while (l > level && node->children) {
    node = &(*node->children)[ChildSlot(*index, l)];
    --l;
  }
  if (node->is_leaf()) return node->data.observed();
  return node->summary.observed != ObservedFraction::kNone;
}

OccupancySubmap::Node& OccupancySubmap::mutable_node(int level, const VoxelIndex& index) {
  Node* node = root_.get();
  node->dirty = true;
  int l = depth_;
  while (l > level) {
    if (node->is_leaf()) {
      node->children = std::make_unique<std::array<Node, 8>>();
      const NodeSummary s = LeafSummary(node->data);
      for (Node& c : *node->children) {
        c.data = node->data;
        c.summary = s;
      }
    } else if (!node->children) {
      throw std::logic_error("octree descent reached a brick above the target level");
    }
    node = &(*node->children)[ChildSlot(index, l)];
    node->dirty = true;
    --l;
  }
  return *node;
}

VoxelData& OccupancySubmap::mutable_voxel(const VoxelIndex& index) {
  const VoxelIndex brick(index.x() >> brick_level_, index.y() >> brick_level_,
                         index.z() >> brick_level_);
  if (cached_brick_data_ == nullptr || brick != cached_brick_) {
    Node& node = mutable_node(brick_level_, index);
    if (!node.brick) {
      const int count = 1 << (3 * brick_level_);
      node.brick = std::make_unique<VoxelData[]>(count);
      std::fill_n(node.brick.get(), count, node.data);
    }
    cached_brick_ = brick;
    cached_brick_data_ = node.brick.get();
  }
  return cached_brick_data_[BrickSlot(index, brick_level_)];
}

void OccupancySubmap::set_voxel(const VoxelIndex& index, const VoxelData& data) {
  if (!in_bounds(index)) throw std::out_of_range("voxel index outside the submap");
  mutable_voxel(index) = data;
}

void OccupancySubmap::set_uniform(int level, const VoxelIndex& origin, const VoxelData& data) {
  if (level < brick_level_ || level > depth_) {
    throw std::invalid_argument("uniform nodes must lie between brick level and root");
  }
  if (!in_bounds(origin)) throw std::out_of_range("node origin outside the submap");
  Node& node = mutable_node(level, origin);
  node.children.reset();
  node.brick.reset();
  node.data = data;
  cached_brick_data_ = nullptr;
}

std::size_t OccupancySubmap::integrate_segment(const Vec3& origin, const Vec3& endpoint,
                                               UpdatePass pass, bool* clipped,
                                               bool* hit_map) {
  *clipped = false;
  *hit_map = false;
  const Vec3 ray = endpoint - origin;
  const double range = ray.norm();
  const Vec3 dir = ray / range;
  const double three_sigma = 3.0 * params_.sigma(range);
  const double half_tau = 0.5 * params_.tau(range);
  const double half = 0.5 * dimension_;

  // Clip [0, range + tau/2] against the map cube.
  double t_in = 0.0;
  double t_out = range + half_tau;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dir[a]) < 1e-15) {
      if (origin[a] < -half || origin[a] >= half) return 0;
      continue;
    }
    double ta = (-half - origin[a]) / dir[a];
    double tb = (half - origin[a]) / dir[a];
    if (ta > tb) std::swap(ta, tb);
    t_in = std::max(t_in, ta);
    t_out = std::min(t_out, tb);
  }
  if (!(t_in < t_out)) return 0;
  *hit_map = true;
  *clipped = !voxel_index(endpoint).has_value();

  const int n = voxels_per_side();
  const Vec3 start = (origin + t_in * dir).array() + half;
  VoxelIndex idx;
  VoxelIndex step;
  Vec3 t_max;
  Vec3 t_delta;
  for (int a = 0; a < 3; ++a) {
    idx[a] = std::clamp(static_cast<int>(std::floor(start[a] / resolution_)), 0, n - 1);
    if (dir[a] > 0.0) {
      step[a] = 1;
      t_delta[a] = resolution_ / dir[a];
      t_max[a] = t_in + ((idx[a] + 1) * resolution_ - start[a]) / dir[a];
    } else if (dir[a] < 0.0) {
      step[a] = -1;
      t_delta[a] = -resolution_ / dir[a];
      t_max[a] = t_in + (idx[a] * resolution_ - start[a]) / dir[a];
    } else {
      step[a] = 0;
      t_delta[a] = std::numeric_limits<double>::infinity();
      t_max[a] = std::numeric_limits<double>::infinity();
    }
  }

  const int brick_edge = 1 << brick_level_;
  const double cell_half_diagonal = 0.5 * std::sqrt(3.0) * brick_edge * resolution_;
  VoxelIndex current_cell = VoxelIndex::Constant(-1);
  bool cell_far = false;
  bool cell_fine = true;
  std::size_t updates = 0;

  while (true) {
    const VoxelIndex cell(idx.x() >> brick_level_, idx.y() >> brick_level_,
                          idx.z() >> brick_level_);
    if (cell != current_cell) {
      current_cell = cell;
      const VoxelIndex cell_origin = cell * brick_edge;
      const Vec3 cell_center =
          (cell_origin.cast<double>().array() + 0.5 * brick_edge) * resolution_ - half;
      const double cell_d = (cell_center - origin).dot(dir) - range;
      cell_far = cell_d + cell_half_diagonal < -three_sigma;
      cell_fine = true;
      if (cell_far && pass != UpdatePass::kBandOnly) {
        Node& node = mutable_node(brick_level_, cell_origin);
        if (!node.brick) {
          node.data.update(params_.l_min, params_.w_max);
          ++updates;
          cell_fine = false;
        }
      }
    }

    const bool pass_allows = pass == UpdatePass::kAll ||
                             (pass == UpdatePass::kBandOnly && !cell_far) ||
                             (pass == UpdatePass::kFreeOnly && cell_far);
    if (cell_fine && pass_allows) {
      const double d_r = (voxel_center(idx) - origin).dot(dir) - range;
      if (d_r <= -three_sigma || !*clipped) {
        mutable_voxel(idx).update(inverse_sensor_model(d_r, range, params_), params_.w_max);
        ++updates;
      }
    }

    int axis = 0;
    if (t_max[1] < t_max[axis]) axis = 1;
    if (t_max[2] < t_max[axis]) axis = 2;
    if (t_max[axis] >= t_out) break;
    idx[axis] += step[axis];
    if (idx[axis] < 0 || idx[axis] >= n) break;
    t_max[axis] += t_delta[axis];
  }
  return updates;
}

RayResult OccupancySubmap::integrate_ray(const Vec3& origin_m, const Vec3& endpoint_m) {
  RayResult result;
  const double range = (endpoint_m - origin_m).norm();
  if (!(range > 0.0) || !std::isfinite(range)) return result;
  bool clipped = false;
  bool hit_map = false;
  result.updates = integrate_segment(origin_m, endpoint_m, UpdatePass::kAll, &clipped, &hit_map);
  if (hit_map) result.status = clipped ? RayStatus::kClipped : RayStatus::kIntegrated;
  propagate();
  return result;
}

ScanIntegrationStats OccupancySubmap::integrate_scan(const Pose& t_ms,
                                                     std::span<const Vec3> points_s) {
  ScanIntegrationStats stats;
  const Vec3 origin = t_ms.translation;
  std::vector<Vec3> endpoints;
  endpoints.reserve(points_s.size());
  for (const Vec3& p : points_s) {
    const Vec3 e = transform_point(t_ms, p);
    const double range = (e - origin).norm();
    if (!(range > 0.0) || !std::isfinite(range)) {
      ++stats.rejected;
      continue;
    }
    endpoints.push_back(e);
  }
  // Surface bands first, so that far free-space updates see existing bricks
  // and fall back to per-voxel updates there.
  std::vector<RayStatus> status(endpoints.size(), RayStatus::kRejected);
  for (std::size_t i = 0; i < endpoints.size(); ++i) {
    bool clipped = false;
    bool hit_map = false;
    stats.voxel_updates +=
        integrate_segment(origin, endpoints[i], UpdatePass::kBandOnly, &clipped, &hit_map);
    if (hit_map) status[i] = clipped ? RayStatus::kClipped : RayStatus::kIntegrated;
  }
  for (std::size_t i = 0; i < endpoints.size(); ++i) {
    bool clipped = false;
    bool hit_map = false;
    stats.voxel_updates +=
        integrate_segment(origin, endpoints[i], UpdatePass::kFreeOnly, &clipped, &hit_map);
    switch (status[i]) {
      case RayStatus::kIntegrated: ++stats.integrated; break;
      case RayStatus::kClipped: ++stats.clipped; break;
      case RayStatus::kRejected: ++stats.rejected; break;
    }
  }
  propagate();
  return stats;
}

namespace {

// Lazily fetched 4x4x4 neighbourhood of accumulated log-odds starting at
// base - 1, enough for a trilinear sample and its one-voxel central
// differences.
class Neighbourhood {
 public:
  Neighbourhood(const OccupancySubmap& map, const VoxelIndex& base) : map_(map), base_(base) {}

  std::optional<double> at(int i, int j, int k) {
    const int slot = (i + 1) + 4 * ((j + 1) + 4 * (k + 1));
    if (state_[slot] == 0) {
      const VoxelIndex idx = base_ + VoxelIndex(i, j, k);
      const VoxelData v = map_.in_bounds(idx) ? map_.voxel(idx) : VoxelData{};
      state_[slot] = v.observed() ? 1 : 2;
      values_[slot] = v.accumulated();
    }
    if (state_[slot] == 2) return std::nullopt;
    return values_[slot];
  }

  std::optional<double> trilinear(const VoxelIndex& shift, const Vec3& frac) {
    double c[2][2][2];
    for (int k = 0; k < 2; ++k) {
      for (int j = 0; j < 2; ++j) {
        for (int i = 0; i < 2; ++i) {
          const auto v = at(shift.x() + i, shift.y() + j, shift.z() + k);
          if (!v) return std::nullopt;
          c[i][j][k] = *v;
        }
      }
    }
    const double fx = frac.x();
    const double fy = frac.y();
    const double fz = frac.z();
    const double c00 = c[0][0][0] * (1 - fx) + c[1][0][0] * fx;
    const double c10 = c[0][1][0] * (1 - fx) + c[1][1][0] * fx;
    const double c01 = c[0][0][1] * (1 - fx) + c[1][0][1] * fx;
    const double c11 = c[0][1][1] * (1 - fx) + c[1][1][1] * fx;
    const double c0 = c00 * (1 - fy) + c10 * fy;
    const double c1 = c01 * (1 - fy) + c11 * fy;
    return c0 * (1 - fz) + c1 * fz;
  }

 private:
  const OccupancySubmap& map_;
  VoxelIndex base_;
  std::array<std::uint8_t, 64> state_{};
  std::array<double, 64> values_{};
};

bool Locate(const OccupancySubmap& map, const Vec3& p_m, VoxelIndex* base, Vec3* frac) {
  const Vec3 g = (p_m.array() + 0.5 * map.dimension()) / map.resolution() - 0.5;
  if (!g.allFinite()) return false;
  const Vec3 fl = g.array().floor();
  const double limit = map.voxels_per_side() + 2.0;
  if ((fl.array() < -2.0).any() || (fl.array() > limit).any()) return false;
  *base = fl.cast<int>();
  *frac = g - fl;
  return true;
}

}  // namespace

std::optional<double> OccupancySubmap::query_accumulated(const Vec3& p_m) const {
  VoxelIndex base;
  Vec3 frac;
  if (!Locate(*this, p_m, &base, &frac)) return std::nullopt;
  Neighbourhood nb(*this, base);
  return nb.trilinear(VoxelIndex::Zero(), frac);
}

std::optional<Vec3> OccupancySubmap::query_gradient(const Vec3& p_m) const {
  const auto field = query_field(p_m);
  if (!field) return std::nullopt;
  return field->gradient;
}

std::optional<OccupancySubmap::FieldSample> OccupancySubmap::query_field(
    const Vec3& p_m) const {
  VoxelIndex base;
  Vec3 frac;
  if (!Locate(*this, p_m, &base, &frac)) return std::nullopt;
  Neighbourhood nb(*this, base);
  FieldSample sample;
  const auto center = nb.trilinear(VoxelIndex::Zero(), frac);
  if (!center) return std::nullopt;
  sample.value = *center;
  for (int a = 0; a < 3; ++a) {
    VoxelIndex shift = VoxelIndex::Zero();
    shift[a] = 1;
    const auto plus = nb.trilinear(shift, frac);
    if (!plus) return std::nullopt;
    const auto minus = nb.trilinear(-shift, frac);
    if (!minus) return std::nullopt;
    sample.gradient[a] = (*plus - *minus) / (2.0 * resolution_);
  }
  return sample;
}

namespace {

struct PropagateContext {
  int brick_level;
  bool audit;
  AuditReport* report;
};

std::string DescribeNode(int level, const VoxelIndex& origin) {
  std::ostringstream os;
  os << "level " << level << " at (" << origin.x() << "," << origin.y() << ","
     << origin.z() << ")";
  return os.str();
}

void Recompute(Node& node, int level, const VoxelIndex& origin,
               const PropagateContext& ctx) {
  if (!ctx.audit && !node.dirty) return;
  NodeSummary expected;
  if (node.children) {
    const int half = 1 << (level - 1);
    for (int slot = 0; slot < 8; ++slot) {
      const VoxelIndex child_origin =
          origin + VoxelIndex(slot & 1, (slot >> 1) & 1, (slot >> 2) & 1) * half;
      Recompute((*node.children)[slot], level - 1, child_origin, ctx);
    }
    expected = ChildrenSummary(*node.children);
  } else if (node.brick) {
    expected = BrickSummary(node.brick.get(), 1 << (3 * ctx.brick_level));
  } else {
    expected = LeafSummary(node.data);
  }
  if (ctx.audit && !node.dirty && !(node.summary == expected)) {
    ctx.report->violations.push_back("stale summary at " + DescribeNode(level, origin));
  }
  node.summary = expected;
  node.dirty = false;
}

bool Prunable(const VoxelData& d, int w_max) { return d.weight == 0 || d.weight == w_max; }

std::size_t Prune(Node& node, int level, int brick_level, int w_max) {
  std::size_t pruned = 0;
  if (node.children) {
    for (Node& c : *node.children) pruned += Prune(c, level - 1, brick_level, w_max);
    const Node& first = (*node.children)[0];
    bool uniform = first.is_leaf() && Prunable(first.data, w_max);
    for (const Node& c : *node.children) {
      if (!uniform) break;
      uniform = c.is_leaf() && c.data == first.data;
    }
    if (uniform) {
      node.data = first.data;
      node.children.reset();
      pruned += 8;
    }
  } else if (node.brick) {
    const int count = 1 << (3 * brick_level);
    const VoxelData first = node.brick[0];
    bool uniform = Prunable(first, w_max);
    for (int i = 1; i < count && uniform; ++i) uniform = node.brick[i] == first;
    if (uniform) {
      node.data = first;
      node.brick.reset();
      pruned += 1;
    }
  }
  return pruned;
}

std::size_t CountNodes(const Node& node) {
  std::size_t count = node.brick ? 1 : 0;
  if (node.children) {
    count += 8;
    for (const Node& c : *node.children) count += CountNodes(c);
  }
  return count;
}

void VisitLeaves(const Node& node, int level, const VoxelIndex& origin, int brick_level,
                 const std::function<void(const LeafView&)>& visit) {
  if (node.children) {
    const int half = 1 << (level - 1);
    for (int slot = 0; slot < 8; ++slot) {
      VisitLeaves((*node.children)[slot], level - 1,
                  origin + VoxelIndex(slot & 1, (slot >> 1) & 1, (slot >> 2) & 1) * half,
                  brick_level, visit);
    }
  } else if (node.brick) {
    const int count = 1 << (3 * brick_level);
    for (int slot = 0; slot < count; ++slot) {
      if (!node.brick[slot].observed()) continue;
      visit({0, BrickVoxel(origin, slot, brick_level), node.brick[slot]});
    }
  } else if (node.data.observed()) {
    visit({level, origin, node.data});
  }
}

}  // namespace

void OccupancySubmap::propagate() {
  AuditReport unused;
  Recompute(*root_, depth_, VoxelIndex::Zero(), {brick_level_, false, &unused});
  cached_brick_data_ = nullptr;
}

AuditReport OccupancySubmap::audit_and_propagate() {
  AuditReport report;
  Recompute(*root_, depth_, VoxelIndex::Zero(), {brick_level_, true, &report});
  report.pruned = Prune(*root_, depth_, brick_level_, params_.w_max);
  if (report.pruned > 0) {
    // Pruning preserves every aggregate; recompute to keep flags consistent.
    root_->dirty = true;
    AuditReport unused;
    Recompute(*root_, depth_, VoxelIndex::Zero(), {brick_level_, true, &unused});
  }
  cached_brick_data_ = nullptr;
  report.ok = report.violations.empty();
  report.node_count = node_count();
  return report;
}

NodeSummary OccupancySubmap::root_summary() const { return root_->summary; }

std::size_t OccupancySubmap::node_count() const { return CountNodes(*root_); }

void OccupancySubmap::for_each_leaf(const std::function<void(const LeafView&)>& visit) const {
  VisitLeaves(*root_, depth_, VoxelIndex::Zero(), brick_level_, visit);
}

void OccupancySubmap::for_each_observed_voxel(
    const std::function<void(const VoxelIndex&, const VoxelData&)>& visit) const {
  for_each_leaf([&](const LeafView& leaf) {
    const int edge = 1 << leaf.level;
    for (int k = 0; k < edge; ++k) {
      for (int j = 0; j < edge; ++j) {
        for (int i = 0; i < edge; ++i) visit(leaf.origin + VoxelIndex(i, j, k), leaf.data);
      }
    }
  });
}

std::uint64_t OccupancySubmap::checksum() const {
  std::uint64_t hash = 1469598103934665603ULL;
  auto mix = [&hash](const void* data, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      hash ^= bytes[i];
      hash *= 1099511628211ULL;
    }
  };
  for_each_leaf([&](const LeafView& leaf) {
    mix(&leaf.level, sizeof(leaf.level));
    mix(leaf.origin.data(), 3 * sizeof(int));
    mix(&leaf.data.mean_log_odds, sizeof(double));
    mix(&leaf.data.weight, sizeof(int));
  });
  return hash;
}

}  // namespace occslam
