#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "occslam/evaluation.hpp"
#include "support.hpp"

using namespace occslam;
using namespace occslam::testing;

namespace {

std::vector<Vec3> Wiggly(int n) {
  std::vector<Vec3> out;
  for (int i = 0; i < n; ++i) {
    const double s = 0.3 * i;
    out.emplace_back(5.0 * std::cos(s), 3.0 * std::sin(s), 0.5 * std::sin(2.0 * s));
  }
  return out;
}

double Rmse(const std::vector<Vec3>& est, const std::vector<Vec3>& gt, const Pose& t) {
  double sum = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) sum += (transform_point(t, est[i]) - gt[i]).squaredNorm();
  return std::sqrt(sum / est.size());
}

}  // namespace

TEST(Ate, PerfectEstimateIsZero) {
  const std::vector<Vec3> gt = Wiggly(30);
  const AteResult r = ate(gt, gt);
  EXPECT_LT(r.rmse, 1e-12);
  EXPECT_EQ(r.errors.size(), 30u);
}

TEST(Ate, InvariantToRigidTransforms) {
  const std::vector<Vec3> gt = Wiggly(40);
  std::mt19937_64 rng(1);
  std::vector<Vec3> noisy;
  for (const Vec3& p : gt) noisy.push_back(p + RandomVec(rng, 0.05));
  const double base = ate(noisy, gt).rmse;
  for (int i = 0; i < 50; ++i) {
    const Pose t = RandomPose(rng, 100.0);
    std::vector<Vec3> moved;
    for (const Vec3& p : noisy) moved.push_back(transform_point(t, p));
    EXPECT_NEAR(ate(moved, gt).rmse, base, 1e-9);
  }
  std::vector<Vec3> moved_gt;
  const Pose t = RandomPose(rng, 10.0);
  for (const Vec3& p : gt) moved_gt.push_back(transform_point(t, p));
  EXPECT_LT(ate(moved_gt, gt).rmse, 1e-9);
}

TEST(Ate, SinglePerturbedPointAgainstBruteForce) {
  const int n = 25;
  const std::vector<Vec3> gt = Wiggly(n);
  std::vector<Vec3> est = gt;
  est[7] += Vec3(0.1, 0.0, 0.0);
  const AteResult r = ate(est, gt);
  EXPECT_NEAR(r.rmse, 0.1 / std::sqrt(n), 0.1 * 0.1 / std::sqrt(n));

  // Local search over rigid transforms never beats the closed form and
  // converges onto it.
  std::mt19937_64 rng(2);
  Pose best;
  double best_rmse = Rmse(est, gt, best);
  for (double scale : {1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5}) {
    for (int k = 0; k < 3000; ++k) {
      const Pose cand = apply_perturbation(best, {RandomVec(rng, scale), RandomVec(rng, scale)});
      const double e = Rmse(est, gt, cand);
      if (e < best_rmse) {
        best_rmse = e;
        best = cand;
      }
    }
  }
  EXPECT_GE(best_rmse, r.rmse - 1e-12);
  EXPECT_NEAR(best_rmse, r.rmse, 1e-6);
  EXPECT_NEAR(Rmse(est, gt, r.alignment), r.rmse, 1e-12);
}

TEST(Ate, TimedVariantMatchesByTimestamp) {
  const std::vector<Vec3> pts = Wiggly(10);
  std::vector<TimedPose> gt, est;
  for (int i = 0; i < 10; ++i) gt.push_back({0.5 * i, Pose(Rotation(), pts[i])});
  for (int i = 9; i >= 0; i -= 2) est.push_back({0.5 * i, Pose(Rotation(), pts[i])});
  EXPECT_LT(ate(est, gt).rmse, 1e-12);
  est.push_back({100.0, Pose()});
  EXPECT_THROW(ate(est, gt), std::invalid_argument);
}

TEST(Ate, NeedsThreePairs) {
  const std::vector<Vec3> two = {Vec3::Zero(), Vec3::UnitX()};
  EXPECT_THROW(ate(two, two), std::invalid_argument);
  const std::vector<Vec3> three = Wiggly(3);
  EXPECT_THROW(ate(three, two), std::invalid_argument);
}

TEST(HiltiScore, PointScoreBoundaries) {
  EXPECT_EQ(hilti_point_score(0.0), 10.0);
  EXPECT_EQ(hilti_point_score(0.0099), 10.0);
  EXPECT_EQ(hilti_point_score(0.1001), 0.0);
  EXPECT_NEAR(hilti_point_score(0.055), 5.0, 1e-12);
  EXPECT_NEAR(hilti_point_score(0.01), 10.0, 1e-12);
  EXPECT_NEAR(hilti_point_score(0.10), 0.0, 1e-12);
}

TEST(HiltiScore, Totals) {
  EXPECT_EQ(hilti_score(std::vector<double>(20, 0.0)), 100.0);
  EXPECT_EQ(hilti_score(std::vector<double>(20, 0.2)), 0.0);
  std::vector<double> half(20, 0.0);
  for (int i = 10; i < 20; ++i) half[i] = 0.5;
  EXPECT_NEAR(hilti_score(half), 50.0, 1e-12);
  EXPECT_EQ(hilti_score(std::vector<double>{}), 0.0);
}
