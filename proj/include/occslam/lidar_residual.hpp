#pragma once

#include <memory>

#include "occslam/geometry.hpp"
#include "occslam/occupancy_map.hpp"

namespace occslam {

/// One sampled point of a LiDAR factor. The point is expressed in the body
/// frame of `state_b` and is aligned against the frozen occupancy field of
/// the submap anchored at `state_a`.
struct LidarFactorTerm {
  Vec3 p_sb = Vec3::Zero();
  StateId state_a = -1;
  StateId state_b = -1;
  std::shared_ptr<const OccupancySubmap> submap;
  double sigma_z = 0.02;
};

struct LidarResidual {
  double residual = 0.0;
  bool valid = false;
};

struct LidarJacobians {
  Eigen::Matrix<double, 1, 6> j_a = Eigen::Matrix<double, 1, 6>::Zero();
  Eigen::Matrix<double, 1, 6> j_b = Eigen::Matrix<double, 1, 6>::Zero();
  double residual = 0.0;
  bool valid = false;
};

struct MapDistance {
  double distance = 0.0;
  double sigma_map = 0.0;
};

/// Terms whose occupancy gradient norm falls below
/// gradient_gate_fraction * |L_min| / resolution are invalid.
double gradient_gate(const OccupancySubmap& map, double gradient_gate_fraction = 0.1);

/// d = L / |grad L| and sigma_map = |L_min| / (3 |grad L|).
/// Throws std::domain_error for a zero gradient.
MapDistance map_distance_and_sigma(double log_odds, const Vec3& gradient, double l_min);

/// e = L / sqrt(L_min^2 / 9 + sigma_z^2 |grad L|^2).
double occupancy_residual(double log_odds, const Vec3& gradient, double l_min,
                          double sigma_z);

LidarResidual evaluate(const LidarFactorTerm& term, const Pose& t_wsa, const Pose& t_wsb,
                       double gradient_gate_fraction = 0.1);

/// Residual and its 1x6 Jacobians w.r.t. the world-frame perturbations
/// [delta_r, delta_alpha] of T_WSa and T_WSb. The occupancy gradient is held
/// constant, so the denominator is not differentiated.
LidarJacobians jacobians(const LidarFactorTerm& term, const Pose& t_wsa, const Pose& t_wsb,
                         double gradient_gate_fraction = 0.1);

}  // namespace occslam
