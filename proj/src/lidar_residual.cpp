#include "occslam/lidar_residual.hpp"

#include <cmath>
#include <stdexcept>

namespace occslam {

double gradient_gate(const OccupancySubmap& map, double gradient_gate_fraction) {
  return gradient_gate_fraction * std::abs(map.params().l_min) / map.resolution();
}

MapDistance map_distance_and_sigma(double log_odds, const Vec3& gradient, double l_min) {
  const double g = gradient.norm();
  if (!(g > 0.0)) throw std::domain_error("undefined distance: zero occupancy gradient");
  return {log_odds / g, std::abs(l_min) / (3.0 * g)};
}

double occupancy_residual(double log_odds, const Vec3& gradient, double l_min,
                          double sigma_z) {
  return log_odds /
         std::sqrt(l_min * l_min / 9.0 + sigma_z * sigma_z * gradient.squaredNorm());
}

namespace {

struct Linearization {
  Vec3 p_sa;
  OccupancySubmap::FieldSample field;
  bool valid = false;
};

Linearization Linearize(const LidarFactorTerm& term, const Pose& t_wsa, const Pose& t_wsb,
                        double gate_fraction) {
  Linearization lin;
  const Pose t_sa_sb = compose(inverse(t_wsa), t_wsb);
  lin.p_sa = transform_point(t_sa_sb, term.p_sb);
  const auto field = term.submap->query_field(lin.p_sa);
  if (!field) return lin;
  if (field->gradient.norm() < gradient_gate(*term.submap, gate_fraction)) return lin;
  lin.field = *field;
  lin.valid = true;
  return lin;
}

}  // namespace

LidarResidual evaluate(const LidarFactorTerm& term, const Pose& t_wsa, const Pose& t_wsb,
                       double gradient_gate_fraction) {
  const Linearization lin = Linearize(term, t_wsa, t_wsb, gradient_gate_fraction);
  if (!lin.valid) return {};
  return {occupancy_residual(lin.field.value, lin.field.gradient,
                             term.submap->params().l_min, term.sigma_z),
          true};
}

LidarJacobians jacobians(const LidarFactorTerm& term, const Pose& t_wsa, const Pose& t_wsb,
                         double gradient_gate_fraction) {
  LidarJacobians out;
  const Linearization lin = Linearize(term, t_wsa, t_wsb, gradient_gate_fraction);
  if (!lin.valid) return out;
  const double l_min = term.submap->params().l_min;
  const Vec3& grad = lin.field.gradient;
  const double denom =
      std::sqrt(l_min * l_min / 9.0 + term.sigma_z * term.sigma_z * grad.squaredNorm());
  out.residual = lin.field.value / denom;
  out.valid = true;

  const Eigen::RowVector3d de_dp = grad.transpose() / denom;
  const Mat3 c_saw = t_wsa.rotation.inverse().matrix();
  const Vec3 rotated_point = t_wsb.rotation * term.p_sb;
  const Vec3 lever = rotated_point + t_wsb.translation - t_wsa.translation;

  const Eigen::RowVector3d de_dp_world = de_dp * c_saw;
  out.j_a.head<3>() = -de_dp_world;
  out.j_a.tail<3>() = de_dp_world * skew(lever);
  out.j_b.head<3>() = de_dp_world;
  out.j_b.tail<3>() = -de_dp_world * skew(rotated_point);
  return out;
}

}  // namespace occslam
