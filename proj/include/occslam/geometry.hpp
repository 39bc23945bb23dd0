#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace occslam {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Skew-symmetric matrix such that skew(a) * b == a.cross(b).
Mat3 skew(const Vec3& v);

/// Unit quaternion rotation. The sign is canonicalized so that w >= 0.
class Rotation {
 public:
  Rotation() = default;
  explicit Rotation(const Eigen::Quaterniond& q);
  Rotation(double w, double x, double y, double z);
  static Rotation FromMatrix(const Mat3& c);

  const Eigen::Quaterniond& quaternion() const { return q_; }
  Mat3 matrix() const { return q_.toRotationMatrix(); }

  Rotation operator*(const Rotation& other) const;
  Vec3 operator*(const Vec3& v) const { return q_ * v; }
  Rotation inverse() const;

 private:
  Eigen::Quaterniond q_ = Eigen::Quaterniond::Identity();
};

/// Rigid transform T_AB mapping points from frame B into frame A.
struct Pose {
  Rotation rotation;
  Vec3 translation = Vec3::Zero();

  Pose() = default;
  Pose(const Rotation& r, const Vec3& t) : rotation(r), translation(t) {}

  static Pose Identity() { return {}; }
  Eigen::Matrix4d matrix() const;
};

/// World-frame pose perturbation: r = r_bar + delta_r, C = Exp(delta_alpha) * C_bar.
struct PosePerturbation {
  Vec3 delta_r = Vec3::Zero();
  Vec3 delta_alpha = Vec3::Zero();

  static PosePerturbation FromVector(const Vec6& v) {
    return {v.head<3>(), v.tail<3>()};
  }
  Vec6 vector() const {
    Vec6 v;
    v << delta_r, delta_alpha;
    return v;
  }
};

Rotation exp_so3(const Vec3& alpha);
Vec3 log_so3(const Rotation& rotation);

Pose compose(const Pose& t_ab, const Pose& t_bc);
Pose inverse(const Pose& t);
Vec3 transform_point(const Pose& t, const Vec3& p);

Pose apply_perturbation(const Pose& t, const PosePerturbation& delta);

/// Lerp on translation, shortest-arc slerp on rotation. Throws
/// std::out_of_range if t lies outside [t0, t1] or the window is empty.
Pose interpolate_pose(const Pose& pose0, double t0, const Pose& pose1, double t1,
                      double t);

/// Rotation angle of r in radians, in [0, pi].
double rotation_angle(const Rotation& r);

}  // namespace occslam
