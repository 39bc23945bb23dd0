#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <stdexcept>

#include "occslam/occupancy_map.hpp"

namespace occslam {

namespace {

constexpr char kMagic[8] = {'O', 'C', 'C', 'S', 'U', 'B', 'M', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void Put(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T Get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("truncated submap stream");
  return value;
}

}  // namespace

void save_submap(const OccupancySubmap& map, std::ostream& out) {
  out.write(kMagic, sizeof(kMagic));
  Put(out, kVersion);
  Put<std::int64_t>(out, map.anchor_state_id());
  Put(out, map.resolution());
  Put(out, map.dimension());
  Put<std::int32_t>(out, map.brick_level());
  const SensorModelParams& p = map.params();
  for (double v : {p.l_min, p.tau_scale, p.tau_min, p.tau_max, p.sigma_scale, p.sigma_min,
                   p.sigma_max}) {
    Put(out, v);
  }
  Put<std::int32_t>(out, p.w_max);
  Put(out, p.sigma_z);

  std::uint64_t count = 0;
  map.for_each_leaf([&count](const LeafView&) { ++count; });
  Put(out, count);
  map.for_each_leaf([&out](const LeafView& leaf) {
    Put<std::uint8_t>(out, static_cast<std::uint8_t>(leaf.level));
    Put<std::int32_t>(out, leaf.origin.x());
    Put<std::int32_t>(out, leaf.origin.y());
    Put<std::int32_t>(out, leaf.origin.z());
    Put(out, leaf.data.mean_log_odds);
    Put<std::int32_t>(out, leaf.data.weight);
  });
  if (!out) throw std::runtime_error("failed to write submap");
}

OccupancySubmap load_submap(std::istream& in) {
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not a submap file");
  }
  const auto version = Get<std::uint32_t>(in);
  if (version != kVersion) throw std::runtime_error("unsupported submap version");
  const auto anchor = Get<std::int64_t>(in);
  const auto resolution = Get<double>(in);
  const auto dimension = Get<double>(in);
  const auto brick_level = Get<std::int32_t>(in);
  SensorModelParams p;
  for (double* v : {&p.l_min, &p.tau_scale, &p.tau_min, &p.tau_max, &p.sigma_scale,
                    &p.sigma_min, &p.sigma_max}) {
    *v = Get<double>(in);
  }
  p.w_max = Get<std::int32_t>(in);
  p.sigma_z = Get<double>(in);

  OccupancySubmap map(anchor, resolution, dimension, p, brick_level);
  const auto count = Get<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    const int level = Get<std::uint8_t>(in);
    VoxelIndex origin;
    origin.x() = Get<std::int32_t>(in);
    origin.y() = Get<std::int32_t>(in);
    origin.z() = Get<std::int32_t>(in);
    VoxelData data;
    data.mean_log_odds = Get<double>(in);
    data.weight = Get<std::int32_t>(in);
    if (level == 0) {
      map.set_voxel(origin, data);
    } else if (level >= map.brick_level()) {
      map.set_uniform(level, origin, data);
    } else {
      // Uniform sub-brick leaves do not occur in files written by save_submap.
      const int edge = 1 << level;
      for (int k = 0; k < edge; ++k)
        for (int j = 0; j < edge; ++j)
          for (int n = 0; n < edge; ++n) map.set_voxel(origin + VoxelIndex(n, j, k), data);
    }
  }
  map.propagate();
  return map;
}

void save_submap(const OccupancySubmap& map, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  save_submap(map, out);
}

OccupancySubmap load_submap(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return load_submap(in);
}

SliceGrid export_slice(const OccupancySubmap& map, double height_m) {
  const double half = 0.5 * map.dimension();
  const int n = map.voxels_per_side();
  const int layer = static_cast<int>(std::floor((height_m + half) / map.resolution()));
  if (!(layer >= 0 && layer < n)) throw std::out_of_range("slice height outside the submap");

  SliceGrid slice;
  slice.x0 = -half;
  slice.y0 = -half;
  slice.resolution = map.resolution();
  slice.height = height_m;
  slice.width = n;
  slice.rows = n;
  slice.classes.assign(static_cast<std::size_t>(n) * n, CellClass::kUnknown);
  slice.values.assign(static_cast<std::size_t>(n) * n,
                      std::numeric_limits<double>::quiet_NaN());
  map.for_each_leaf([&](const LeafView& leaf) {
    const int edge = 1 << leaf.level;
    if (layer < leaf.origin.z() || layer >= leaf.origin.z() + edge) return;
    const double value = leaf.data.accumulated();
    const CellClass cls = value > 0.0 ? CellClass::kOccupied : CellClass::kFree;
    for (int j = 0; j < edge; ++j) {
      const int row = n - 1 - (leaf.origin.y() + j);
      for (int i = 0; i < edge; ++i) {
        const std::size_t cell = static_cast<std::size_t>(row) * n + leaf.origin.x() + i;
        slice.classes[cell] = cls;
        slice.values[cell] = value;
      }
    }
  });
  return slice;
}

void write_slice_pgm(const SliceGrid& slice, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "P2\n" << slice.width << " " << slice.rows << "\n255\n";
  for (int r = 0; r < slice.rows; ++r) {
    for (int c = 0; c < slice.width; ++c) {
      int grey = 128;
      switch (slice.at(r, c)) {
        case CellClass::kOccupied: grey = 0; break;
        case CellClass::kFree: grey = 255; break;
        case CellClass::kUnknown: grey = 128; break;
      }
      out << grey << (c + 1 == slice.width ? '\n' : ' ');
    }
  }
  if (!out) throw std::runtime_error("failed to write " + path);
}

void write_slice_csv(const SliceGrid& slice, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "x0,y0,resolution,height\n";
  out << std::setprecision(17) << slice.x0 << "," << slice.y0 << "," << slice.resolution
      << "," << slice.height << "\n";
  for (int r = 0; r < slice.rows; ++r) {
    for (int c = 0; c < slice.width; ++c) {
      const double v = slice.values[static_cast<std::size_t>(r) * slice.width + c];
      if (std::isnan(v)) {
        out << "nan";
      } else {
        out << v;
      }
      out << (c + 1 == slice.width ? '\n' : ',');
    }
  }
  if (!out) throw std::runtime_error("failed to write " + path);
}

}  // namespace occslam
