#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "occslam/geometry.hpp"
#include "occslam/submapping.hpp"

namespace occslam {

struct AteResult {
  double rmse = 0.0;
  std::vector<double> errors;  // per-point translation errors after alignment
  Pose alignment;              // maps the estimate onto the ground truth
};

/// Rigid (no scale) Umeyama alignment of `estimate` onto `ground_truth`,
/// then translation errors. Throws std::invalid_argument for fewer than 3
/// pairs or mismatched sizes.
AteResult ate(std::span<const Vec3> estimate, std::span<const Vec3> ground_truth);

/// Matches poses by timestamp (within `time_tolerance`) before aligning.
/// Throws std::invalid_argument if an estimate has no ground-truth match.
AteResult ate(std::span<const TimedPose> estimate, std::span<const TimedPose> ground_truth,
              double time_tolerance = 1e-6);

/// Per-point score 10 below 1 cm, 0 above 10 cm, linear in between; the
/// total is sum(s) / (10 N) * 100. Empty input scores 0.
double hilti_point_score(double error);
double hilti_score(std::span<const double> errors);

}  // namespace occslam
