#include "occslam/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Geometry>

namespace occslam {

AteResult ate(std::span<const Vec3> estimate, std::span<const Vec3> ground_truth) {
  if (estimate.size() != ground_truth.size()) {
    throw std::invalid_argument("ate: estimate and ground truth differ in length");
  }
  if (estimate.size() < 3) throw std::invalid_argument("ate: need at least 3 correspondences");
  const auto n = static_cast<Eigen::Index>(estimate.size());
  Eigen::Matrix3Xd src(3, n);
  Eigen::Matrix3Xd dst(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    src.col(i) = estimate[i];
    dst.col(i) = ground_truth[i];
  }
  const Eigen::Matrix4d t = Eigen::umeyama(src, dst, false);
  AteResult result;
  result.alignment = Pose(Rotation::FromMatrix(t.topLeftCorner<3, 3>()), t.topRightCorner<3, 1>());
  result.errors.reserve(estimate.size());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 aligned = t.topLeftCorner<3, 3>() * src.col(i) + t.topRightCorner<3, 1>();
    const double e = (aligned - dst.col(i)).norm();
    result.errors.push_back(e);
    sum += e * e;
  }
  result.rmse = std::sqrt(sum / static_cast<double>(n));
  return result;
}

AteResult ate(std::span<const TimedPose> estimate, std::span<const TimedPose> ground_truth,
              double time_tolerance) {
  std::vector<Vec3> est;
  std::vector<Vec3> gt;
  for (const TimedPose& e : estimate) {
    auto it = std::lower_bound(ground_truth.begin(), ground_truth.end(),
                               e.timestamp - time_tolerance,
                               [](const TimedPose& p, double t) { return p.timestamp < t; });
    if (it == ground_truth.end() || std::abs(it->timestamp - e.timestamp) > time_tolerance) {
      throw std::invalid_argument("ate: no ground-truth pose at t=" + std::to_string(e.timestamp));
    }
    est.push_back(e.pose.translation);
    gt.push_back(it->pose.translation);
  }
  return ate(std::span<const Vec3>(est), std::span<const Vec3>(gt));
}

double hilti_point_score(double error) {
  if (error < 0.01) return 10.0;
  if (error > 0.10) return 0.0;
  return 10.0 * (0.10 - error) / 0.09;
}

double hilti_score(std::span<const double> errors) {
  if (errors.empty()) return 0.0;
  double sum = 0.0;
  for (double e : errors) sum += hilti_point_score(e);
  return sum / (10.0 * static_cast<double>(errors.size())) * 100.0;
}

}  // namespace occslam
