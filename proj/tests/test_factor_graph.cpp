#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "occslam/evaluation.hpp"
#include "occslam/factor_graph.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace occslam;
using namespace occslam::testing;

namespace {

RelativePoseFactor Between(StateId r, StateId c, const Pose& t_wr, const Pose& t_wc,
                           double sigma_t = 0.01, double sigma_r = 0.01) {
  return {r, c, compose(inverse(t_wr), t_wc), relative_pose_information(sigma_t, sigma_r)};
}

// Poses along a gentle arc.
std::vector<Pose> ArcPoses(int n) {
  std::vector<Pose> out;
  for (int i = 0; i < n; ++i) {
    const double a = 0.1 * i;
    out.emplace_back(Yaw(a), Vec3(3.0 * std::sin(a), 3.0 * (1.0 - std::cos(a)), 0.02 * i));
  }
  return out;
}

Problem Chain(const std::vector<Pose>& truth, const std::vector<Pose>& init) {
  Problem p;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    p.add_state(static_cast<double>(i), init[i], i == 0 ? StateRole::kSubmapAnchor : StateRole::kKeyframe,
                i == 0);
  }
  for (std::size_t i = 1; i < truth.size(); ++i) {
    p.add_relative_pose_factor(Between(i - 1, i, truth[i - 1], truth[i]));
  }
  return p;
}

std::vector<Pose> Perturbed(const std::vector<Pose>& poses, std::uint64_t seed, double t,
                            double r, bool keep_first = true) {
  std::mt19937_64 rng(seed);
  std::vector<Pose> out;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    if (keep_first && i == 0) {
      out.push_back(poses[i]);
      continue;
    }
    out.push_back(apply_perturbation(poses[i], {RandomVec(rng, t), RandomVec(rng, r)}));
  }
  return out;
}

}  // namespace

TEST(RelativePoseError, ZeroAtMeasurement) {
  std::mt19937_64 rng(1);
  const Pose a = RandomPose(rng), b = RandomPose(rng);
  EXPECT_LT(relative_pose_error(Between(0, 1, a, b), a, b).norm(), 1e-12);
}

TEST(RelativePoseError, TranslationOffset) {
  const RelativePoseFactor f{0, 1, Pose(), Mat6::Identity()};
  const Vec6 e = relative_pose_error(f, Pose(), Pose(Rotation(), Vec3(0.01, 0, 0)));
  Vec6 expected;
  expected << 0.01, 0, 0, 0, 0, 0;
  EXPECT_LT((e - expected).norm(), 1e-15);
}

TEST(RelativePoseError, SmallRotationIsTwiceQuaternionVector) {
  const RelativePoseFactor f{0, 1, Pose(), Mat6::Identity()};
  const Vec6 e = relative_pose_error(f, Pose(), Pose(exp_so3(Vec3(0, 0, 0.02)), Vec3::Zero()));
  EXPECT_NEAR(e[5], 2.0 * std::sin(0.01), 1e-15);
}

TEST(RelativePoseError, JacobiansMatchFiniteDifferences) {
  std::mt19937_64 rng(2);
  const double h = 1e-6;
  for (int trial = 0; trial < 50; ++trial) {
    const Pose r = RandomPose(rng, 5.0), c = RandomPose(rng, 5.0);
    const RelativePoseFactor f{0, 1, RandomPose(rng, 1.0, 0.3), Mat6::Identity()};
    // Near the measurement, where the small-angle difference is used.
    const Pose c_near = compose(r, compose(f.measurement, Pose(exp_so3(RandomVec(rng, 0.1)),
                                                               RandomVec(rng, 0.1))));
    for (const Pose& cc : {c, c_near}) {
      const RelativePoseLinearization lin = relative_pose_jacobians(f, r, cc);
      EXPECT_LT((lin.error - relative_pose_error(f, r, cc)).norm(), 1e-15);
      Mat6 fd_r, fd_c;
      for (int k = 0; k < 6; ++k) {
        Vec6 d = Vec6::Zero();
        d[k] = h;
        const auto p = PosePerturbation::FromVector(d), m = PosePerturbation::FromVector(-d);
        fd_r.col(k) = (relative_pose_error(f, apply_perturbation(r, p), cc) -
                       relative_pose_error(f, apply_perturbation(r, m), cc)) / (2 * h);
        fd_c.col(k) = (relative_pose_error(f, r, apply_perturbation(cc, p)) -
                       relative_pose_error(f, r, apply_perturbation(cc, m))) / (2 * h);
      }
      EXPECT_LT((fd_r - lin.j_r).norm(), 1e-5 * std::max(1.0, lin.j_r.norm()));
      EXPECT_LT((fd_c - lin.j_c).norm(), 1e-5 * std::max(1.0, lin.j_c.norm()));
    }
  }
}

TEST(RelativePoseInformation, Diagonal) {
  const Mat6 w = relative_pose_information(0.1, 0.01);
  EXPECT_NEAR(w(0, 0), 100.0, 1e-12);
  EXPECT_NEAR(w(5, 5), 1e4, 1e-8);
  EXPECT_EQ(w(0, 1), 0.0);
}

TEST(TotalCost, EmptyProblem) {
  Problem p;
  p.add_state(0.0, Pose(), StateRole::kSubmapAnchor, true);
  EXPECT_EQ(total_cost(p), 0.0);
}

TEST(TotalCost, SingleFactorIsHalfSquaredError) {
  Problem p;
  p.add_state(0.0, Pose(), StateRole::kSubmapAnchor, true);
  p.add_state(1.0, Pose(Rotation(), Vec3(0.3, -0.4, 0.0)), StateRole::kLive);
  p.add_relative_pose_factor({0, 1, Pose(), Mat6::Identity()});
  EXPECT_NEAR(total_cost(p), 0.5 * 0.25, 1e-15);
}

TEST(TotalCost, IncludesValidLidarTermsOnly) {
  const auto map = SyntheticFieldMap(SyntheticField{Vec3::UnitX(), Vec3::Zero(), 100.0, 0.0, 10});
  Problem p;
  p.add_state(0.0, Pose(), StateRole::kSubmapAnchor, true);
  p.add_state(1.0, Pose(), StateRole::kLive);
  LidarFactor f;
  f.terms.push_back({Vec3(0.05, 0, 0), 0, 1, map, 0.02});
  f.terms.push_back({Vec3(5.0, 0, 0), 0, 1, map, 0.02});  // unknown space
  p.add_lidar_factor(f);
  const double e = evaluate(f.terms[0], Pose(), Pose()).residual;
  EXPECT_NEAR(total_cost(p), 0.5 * e * e, 1e-12);
}

TEST(TotalCost, GroundTruthIsMinimalOverPerturbations) {
  const SyntheticField field;
  const auto map = SyntheticFieldMap(field);
  const std::vector<Pose> truth = {Pose(), Pose(exp_so3(Vec3(0.1, 0.2, -0.3)), Vec3(0.2, -0.1, 0.05))};
  Problem p;
  p.add_state(0.0, truth[0], StateRole::kSubmapAnchor, true);
  p.add_state(1.0, truth[1], StateRole::kLive);
  p.add_relative_pose_factor(Between(0, 1, truth[0], truth[1], 0.05, 0.05));
  std::mt19937_64 rng(3);
  LidarFactor f;
  for (int i = 0; i < 50; ++i) {
    Vec3 q = RandomVec(rng, 0.3);
    q -= field.normal.dot(q - field.p0) * field.normal;  // near the zero set
    f.terms.push_back({transform_point(inverse(truth[1]), q), 0, 1, map, 0.02});
  }
  p.add_lidar_factor(f);
  const double at_truth = total_cost(p);
  for (int i = 0; i < 100; ++i) {
    p.set_pose(1, apply_perturbation(truth[1], {RandomVec(rng, 0.05), RandomVec(rng, 0.05)}));
    EXPECT_LE(at_truth, total_cost(p));
  }
}

TEST(Problem, RejectsMalformedFactors) {
  Problem p;
  p.add_state(0.0, Pose(), StateRole::kSubmapAnchor, true);
  p.add_state(1.0, Pose(), StateRole::kLive);
  EXPECT_THROW(p.add_relative_pose_factor({1, 1, Pose(), Mat6::Identity()}), std::invalid_argument);
  EXPECT_THROW(p.add_relative_pose_factor({0, 7, Pose(), Mat6::Identity()}), std::exception);
  LidarFactor same;
  same.terms.push_back({Vec3::Zero(), 1, 1, SyntheticFieldMap(SyntheticField{}), 0.02});
  EXPECT_THROW(p.add_lidar_factor(same), std::invalid_argument);
  LidarFactor orphan;
  orphan.terms.push_back({Vec3::Zero(), 0, 1, nullptr, 0.02});
  EXPECT_THROW(p.add_lidar_factor(orphan), std::invalid_argument);
}

TEST(Optimize, ZeroErrorTerminatesImmediately) {
  const std::vector<Pose> truth = ArcPoses(5);
  Problem p = Chain(truth, truth);
  const OptimizationReport r = optimize(p, {});
  EXPECT_LE(r.iterations, 1);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    EXPECT_EQ(p.state(i).pose.translation, truth[i].translation);
  }
}

TEST(Optimize, ConsistentChainReachesZeroCost) {
  const std::vector<Pose> truth = ArcPoses(10);
  Problem p = Chain(truth, Perturbed(truth, 4, 0.3, 0.2));
  const OptimizationReport r = optimize(p, {});
  EXPECT_LT(r.final_cost(), 1e-12);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    EXPECT_LT((p.state(i).pose.translation - truth[i].translation).norm(), 1e-6);
  }
}

TEST(Optimize, CostTraceNonIncreasingWithoutLidar) {
  const std::vector<Pose> truth = ArcPoses(10);
  Problem p = Chain(truth, Perturbed(truth, 5, 0.5, 0.3));
  const OptimizationReport r = optimize(p, {});
  ASSERT_GE(r.cost_trace.size(), 2u);
  for (std::size_t i = 1; i < r.cost_trace.size(); ++i) {
    EXPECT_LE(r.cost_trace[i], r.cost_trace[i - 1]);
    EXPECT_EQ(r.compared_costs[i - 1], r.cost_trace[i]);
  }
}

TEST(Optimize, SuperlinearNearOptimum) {
  const std::vector<Pose> truth = ArcPoses(6);
  Problem p = Chain(truth, Perturbed(truth, 6, 0.05, 0.05));
  SolverConfig config;
  config.cost_tolerance = 1e-30;
  const OptimizationReport r = optimize(p, config);
  // Once the quadratic model is accurate each step removes nearly all of
  // the remaining cost.
  std::vector<double> ratios;
  for (std::size_t i = 1; i < r.cost_trace.size(); ++i) {
    if (r.cost_trace[i - 1] > 1e-20) ratios.push_back(r.cost_trace[i] / r.cost_trace[i - 1]);
  }
  ASSERT_GE(ratios.size(), 2u);
  EXPECT_LT(ratios.back(), 1e-2);
  EXPECT_LT(ratios[ratios.size() - 1], ratios[ratios.size() - 2] + 1e-12);
}

TEST(Optimize, AcceptedStepsLowerComparableCost) {
  const SyntheticField field;
  const auto map = SyntheticFieldMap(field);
  std::mt19937_64 rng(7);
  const Pose truth(exp_so3(Vec3(0.0, 0.1, 0.2)), Vec3(0.1, 0.0, 0.0));
  Problem p;
  p.add_state(0.0, Pose(), StateRole::kSubmapAnchor, true);
  p.add_state(1.0, apply_perturbation(truth, {Vec3(0.02, -0.01, 0.01), Vec3(0.01, 0, 0)}),
              StateRole::kLive);
  LidarFactor f;
  for (int i = 0; i < 100; ++i) {
    Vec3 q = RandomVec(rng, 0.25);
    q -= field.normal.dot(q - field.p0) * field.normal;
    f.terms.push_back({transform_point(inverse(truth), q), 0, 1, map, 0.02});
  }
  p.add_lidar_factor(f);
  const OptimizationReport r = optimize(p, {});
  ASSERT_EQ(r.compared_costs.size() + 1, r.cost_trace.size());
  EXPECT_GT(r.accepted_steps, 0);
  for (std::size_t i = 0; i < r.compared_costs.size(); ++i) {
    EXPECT_LT(r.compared_costs[i], r.cost_trace[i]);
  }
  EXPECT_LT(r.final_cost(), r.initial_cost());
}

TEST(Optimize, GaugeInvariance) {
  const std::vector<Pose> truth = ArcPoses(8);
  const std::vector<Pose> init = Perturbed(truth, 8, 0.2, 0.1);
  Problem a = Chain(truth, init);
  // Extra noisy factor so the optimum is not exactly the measurements.
  a.add_relative_pose_factor({0, 7, Pose(Yaw(0.72), Vec3(1.9, 0.7, 0.12)),
                              relative_pose_information(0.05, 0.05)});
  const Pose g(exp_so3(Vec3(0.3, -0.5, 1.0)), Vec3(10.0, -4.0, 2.0));
  std::vector<Pose> moved;
  for (const Pose& t : init) moved.push_back(compose(g, t));
  Problem b = Chain(truth, moved);
  b.add_relative_pose_factor(a.relative_pose_factors().back());
  optimize(a, {});
  optimize(b, {});
  for (std::size_t i = 0; i < truth.size(); ++i) {
    for (std::size_t j = i + 1; j < truth.size(); ++j) {
      const Pose ra = compose(inverse(a.state(i).pose), a.state(j).pose);
      const Pose rb = compose(inverse(b.state(i).pose), b.state(j).pose);
      EXPECT_LT((ra.translation - rb.translation).norm(), 1e-6);
      EXPECT_LT(rotation_angle(ra.rotation * rb.rotation.inverse()), 1e-6);
    }
  }
}

TEST(Optimize, FixedAnchorIsBitIdentical) {
  const std::vector<Pose> truth = ArcPoses(6);
  std::vector<Pose> init = Perturbed(truth, 9, 0.2, 0.1, false);
  Problem p = Chain(truth, init);
  const Pose before = p.state(0).pose;
  optimize(p, {});
  EXPECT_EQ(p.state(0).pose.translation, before.translation);
  EXPECT_EQ(p.state(0).pose.rotation.quaternion().coeffs(), before.rotation.quaternion().coeffs());
}

TEST(Optimize, FixedStatesLeaveTheSystem) {
  const std::vector<Pose> truth = ArcPoses(6);
  Problem p = Chain(truth, Perturbed(truth, 10, 0.1, 0.1));
  EXPECT_EQ(optimize(p, {}).system_dimension, 30u);
  const std::vector<StateId> fix = {1, 2};
  Problem q = marginalize_or_fix(Chain(truth, Perturbed(truth, 10, 0.1, 0.1)), fix);
  EXPECT_TRUE(q.state(1).fixed);
  EXPECT_EQ(optimize(q, {}).system_dimension, 18u);
}

TEST(Optimize, FixingEverythingWarns) {
  const std::vector<Pose> truth = ArcPoses(3);
  const std::vector<StateId> all = {0, 1, 2};
  std::string warning;
  Problem q = marginalize_or_fix(Chain(truth, truth), all, &warning);
  EXPECT_FALSE(warning.empty());
  EXPECT_EQ(optimize(q, {}).termination, Termination::kNoFreeStates);
}

TEST(Optimize, UnanchoredStatesRaiseGaugeError) {
  Problem p;
  p.add_state(0.0, Pose(), StateRole::kSubmapAnchor, true);
  p.add_state(1.0, Pose(), StateRole::kKeyframe);
  p.add_state(2.0, Pose(Rotation(), Vec3(1, 0, 0)), StateRole::kKeyframe);
  p.add_relative_pose_factor({1, 2, Pose(), Mat6::Identity()});
  try {
    optimize(p, {});
    FAIL() << "expected GaugeError";
  } catch (const GaugeError& e) {
    EXPECT_EQ(e.free_states(), (std::vector<StateId>{1, 2}));
  }
}

TEST(Optimize, SlidingWindowTracksFullBatch) {
  const int n = 20;
  const std::vector<Pose> truth = ArcPoses(n);
  std::mt19937_64 rng(11);
  // Noisy odometry plus noisy absolute-ish links to the first state.
  std::vector<RelativePoseFactor> factors;
  auto noisy = [&](StateId r, StateId c, double s) {
    RelativePoseFactor f = Between(r, c, truth[r], truth[c], s, s);
    f.measurement = apply_perturbation(f.measurement, {RandomVec(rng, s), RandomVec(rng, s)});
    return f;
  };
  for (int i = 1; i < n; ++i) factors.push_back(noisy(i - 1, i, 0.01));
  for (int i = 3; i < n; i += 3) factors.push_back(noisy(0, i, 0.03));

  auto build = [&](int upto, const std::vector<Pose>& init) {
    Problem p;
    for (int i = 0; i <= upto; ++i) p.add_state(i, init[i], StateRole::kKeyframe, i == 0);
    for (const auto& f : factors) {
      if (f.state_c <= upto && f.state_r <= upto) p.add_relative_pose_factor(f);
    }
    return p;
  };
  std::vector<Pose> odo = {truth[0]};
  for (int i = 1; i < n; ++i) odo.push_back(compose(odo.back(), factors[i - 1].measurement));

  Problem batch = build(n - 1, odo);
  optimize(batch, {});

  std::vector<Pose> est = odo;
  for (int k = 1; k < n; ++k) {
    est[k] = compose(est[k - 1], factors[k - 1].measurement);
    Problem w = build(k, est);
    for (int i = 0; i <= k - 5; ++i) w.set_fixed(i, true);
    optimize(w, {});
    for (int i = 0; i <= k; ++i) est[i] = w.state(i).pose;
  }
  std::vector<Vec3> gt, bt, wt;
  for (int i = 0; i < n; ++i) {
    gt.push_back(truth[i].translation);
    bt.push_back(batch.state(i).pose.translation);
    wt.push_back(est[i].translation);
  }
  const double ate_batch = ate(bt, gt).rmse, ate_window = ate(wt, gt).rmse;
  EXPECT_LE(ate_window, 2.0 * ate_batch) << ate_window << " vs " << ate_batch;
}

TEST(Optimize, TwoSubmapAlignment) {
  const Scene scene = BoxRoomScene();
  const Pose anchor_b(Yaw(0.4), Vec3(0.5, 0.2, 1.0));
  const std::vector<Pose> views = RoomViewpoints(24, 21);
  const auto map_a = BuildMap(scene, Pose(), {views.begin(), views.begin() + 12}, 100, 0);
  // Points of the second submap's scans, in its anchor frame.
  std::vector<Vec3> surface;
  for (std::size_t v = 12; v < views.size(); ++v) {
    const Pose t_bv = compose(inverse(anchor_b), views[v]);
    for (const Vec3& q : Positions(raycast(scene, views[v], DenseLidar(200 + v), 0.0, 0.1))) {
      surface.push_back(transform_point(t_bv, q));
    }
  }

  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 3; ++trial) {
    const Pose init =
        apply_perturbation(anchor_b, {RandomVec(rng, 1.0).normalized() * 0.2, Vec3::Zero()});
    Problem p;
    p.add_state(0.0, Pose(), StateRole::kSubmapAnchor, true);
    p.add_state(1.0, init, StateRole::kSubmapAnchor);
    std::vector<Vec3> usable;
    for (const Vec3& s : surface) {
      const Vec3 q = transform_point(init, s);
      if (map_a->is_observed(q) && map_a->query_field(q)) usable.push_back(s);
    }
    LidarFactor f;
    f.kind = LidarFactorKind::kMapToMap;
    for (const Vec3& s : sample_factor_points<Vec3>(usable, 1000, trial)) {
      f.terms.push_back({s, 0, 1, map_a, 0.02});
    }
    p.add_lidar_factor(std::move(f));
    optimize(p, {});
    EXPECT_LT((p.state(1).pose.translation - anchor_b.translation).norm(), 0.02) << trial;
  }
}

TEST(Optimize, FrameToMapRecoverySmall) {
  const RecoveryResult r = RunFrameToMapRecovery(3, 24, 31);
  for (const RecoveryTrial& t : r.trials) {
    EXPECT_LT(t.translation_error, 0.01);
    EXPECT_LT(t.rotation_error, 0.5 * M_PI / 180.0);
    EXPECT_LE(t.iterations, 30);
  }
}

TEST(ProblemIo, DumpLoadRoundTrip) {
  const auto map = SyntheticFieldMap(SyntheticField{}, 0);
  const std::vector<Pose> truth = ArcPoses(4);
  Problem p = Chain(truth, Perturbed(truth, 12, 0.1, 0.1));
  LidarFactor f;
  f.kind = LidarFactorKind::kFrameToMap;
  for (int i = 0; i < 5; ++i) f.terms.push_back({Vec3(0.1 * i, 0.0, 0.05), 0, 3, map, 0.02});
  p.add_lidar_factor(f);
  const std::string text = dump_problem(p);
  const Problem q = load_problem(text, [&](StateId id) {
    EXPECT_EQ(id, 0);
    return std::shared_ptr<const OccupancySubmap>(map);
  });
  EXPECT_EQ(dump_problem(q), text);
  EXPECT_EQ(total_cost(q), total_cost(p));
  ASSERT_EQ(q.lidar_factors().size(), 1u);
  EXPECT_EQ(q.lidar_factors()[0].terms.size(), 5u);
  EXPECT_THROW(load_problem("{\"version\": 99}", nullptr), std::exception);
}

TEST(SolverConfig, Validates) {
  SolverConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lambda_up = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}
