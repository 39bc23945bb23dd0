#include "occslam/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace occslam {

namespace {

Eigen::Quaterniond Canonical(Eigen::Quaterniond q) {
  q.normalize();
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  return q;
}

}  // namespace

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),  //
      v.z(), 0.0, -v.x(),   //
      -v.y(), v.x(), 0.0;
  return m;
}

Rotation::Rotation(const Eigen::Quaterniond& q) : q_(Canonical(q)) {}

Rotation::Rotation(double w, double x, double y, double z)
    : q_(Canonical(Eigen::Quaterniond(w, x, y, z))) {}

Rotation Rotation::FromMatrix(const Mat3& c) { return Rotation(Eigen::Quaterniond(c)); }

Rotation Rotation::operator*(const Rotation& other) const {
  return Rotation(q_ * other.q_);
}

Rotation Rotation::inverse() const { return Rotation(q_.conjugate()); }

Eigen::Matrix4d Pose::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation.matrix();
  m.topRightCorner<3, 1>() = translation;
  return m;
}

Rotation exp_so3(const Vec3& alpha) {
  const double theta_sq = alpha.squaredNorm();
  const double theta = std::sqrt(theta_sq);
  double w;
  double k;  // sin(theta / 2) / theta
  if (theta < 1e-8) {
    w = 1.0 - theta_sq / 8.0;
    k = 0.5 - theta_sq / 48.0;
  } else {
    w = std::cos(0.5 * theta);
    k = std::sin(0.5 * theta) / theta;
  }
  return Rotation(w, k * alpha.x(), k * alpha.y(), k * alpha.z());
}

Vec3 log_so3(const Rotation& rotation) {
  const Eigen::Quaterniond& q = rotation.quaternion();
  const Vec3 v = q.vec();
  const double n = v.norm();
  if (n < 1e-12) {
    return (2.0 / q.w()) * v;
  }
  // w >= 0 by construction, so the angle is in [0, pi].
  const double theta = 2.0 * std::atan2(n, q.w());
  return (theta / n) * v;
}

double rotation_angle(const Rotation& r) { return log_so3(r).norm(); }

Pose compose(const Pose& t_ab, const Pose& t_bc) {
  return {t_ab.rotation * t_bc.rotation,
          t_ab.rotation * t_bc.translation + t_ab.translation};
}

Pose inverse(const Pose& t) {
  const Rotation inv = t.rotation.inverse();
  return {inv, -(inv * t.translation)};
}

Vec3 transform_point(const Pose& t, const Vec3& p) {
  return t.rotation * p + t.translation;
}

Pose apply_perturbation(const Pose& t, const PosePerturbation& delta) {
  return {exp_so3(delta.delta_alpha) * t.rotation, t.translation + delta.delta_r};
}

Pose interpolate_pose(const Pose& pose0, double t0, const Pose& pose1, double t1,
                      double t) {
  if (!(t0 < t1) || t < t0 || t > t1) {
    throw std::out_of_range("invalid deskew window: t outside [t0, t1]");
  }
  if (t == t0) return pose0;
  if (t == t1) return pose1;
  const double s = (t - t0) / (t1 - t0);
  const Eigen::Quaterniond q =
      pose0.rotation.quaternion().slerp(s, pose1.rotation.quaternion());
  return {Rotation(q), (1.0 - s) * pose0.translation + s * pose1.translation};
}

}  // namespace occslam
