#pragma once

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "occslam/geometry.hpp"
#include "occslam/lidar_residual.hpp"

namespace occslam {

enum class StateRole { kLive, kKeyframe, kSubmapAnchor };

struct StateNode {
  StateId id = -1;
  double timestamp = 0.0;
  Pose pose;
  StateRole role = StateRole::kLive;
  bool fixed = false;
};

/// Relative pose error between states r and c with the measurement
/// expressed in frame S^r.
struct RelativePoseFactor {
  StateId state_r = -1;
  StateId state_c = -1;
  Pose measurement;
  Mat6 information = Mat6::Identity();
};

enum class LidarFactorKind { kFrameToMap, kMapToMap };

struct LidarFactor {
  LidarFactorKind kind = LidarFactorKind::kFrameToMap;
  std::vector<LidarFactorTerm> terms;
};

struct SolverConfig {
  int max_iterations = 50;
  double initial_lambda = 1e-4;
  double lambda_up = 10.0;
  double lambda_down = 0.5;
  double max_lambda = 1e12;
  /// Converged once an accepted step lowers the cost by less than this
  /// fraction of the current cost.
  double cost_tolerance = 1e-6;
  /// Stops once a computed step is shorter than this fraction of the norm of
  /// the free translations (checked before the step is evaluated).
  double step_tolerance = 1e-8;
  double gradient_tolerance = 1e-12;
  double gradient_gate_fraction = 0.1;

  void validate() const;
};

enum class Termination {
  kConverged,
  kSmallStep,
  kSmallGradient,
  kMaxIterations,
  kDampingExhausted,
  kNoFreeStates,
};

const char* to_string(Termination t);

struct OptimizationReport {
  std::vector<double> cost_trace;  // initial cost, then one entry per accepted step
  // Per accepted step: its cost over the terms valid before the step, which
  // is what acceptance compared against the previous trace entry.
  std::vector<double> compared_costs;
  int iterations = 0;              // linear solves, accepted or not
  int accepted_steps = 0;
  std::size_t system_dimension = 0;
  Termination termination = Termination::kMaxIterations;

  double initial_cost() const { return cost_trace.front(); }
  double final_cost() const { return cost_trace.back(); }
};

/// Raised when free states are not connected to any fixed state.
class GaugeError : public std::runtime_error {
 public:
  GaugeError(const std::string& what, std::vector<StateId> free_states)
      : std::runtime_error(what), free_states_(std::move(free_states)) {}
  const std::vector<StateId>& free_states() const { return free_states_; }

 private:
  std::vector<StateId> free_states_;
};

/// Pose states plus relative-pose and LiDAR factors. State ids are assigned
/// densely in insertion order.
class Problem {
 public:
  StateId add_state(double timestamp, const Pose& pose, StateRole role, bool fixed = false);
  void add_relative_pose_factor(const RelativePoseFactor& factor);
  /// Throws std::invalid_argument unless all terms share one (a, b) pair with
  /// a != b and reference a submap.
  void add_lidar_factor(LidarFactor factor);

  std::size_t num_states() const { return states_.size(); }
  const std::vector<StateNode>& states() const { return states_; }
  const StateNode& state(StateId id) const;
  void set_pose(StateId id, const Pose& pose);
  void set_fixed(StateId id, bool fixed);
  void set_role(StateId id, StateRole role);

  const std::vector<RelativePoseFactor>& relative_pose_factors() const { return relative_; }
  const std::vector<LidarFactor>& lidar_factors() const { return lidar_; }

 private:
  void check_id(StateId id) const;

  std::vector<StateNode> states_;
  std::vector<RelativePoseFactor> relative_;
  std::vector<LidarFactor> lidar_;
};

struct RelativePoseLinearization {
  Vec6 error = Vec6::Zero();
  Mat6 j_r = Mat6::Zero();
  Mat6 j_c = Mat6::Zero();
};

/// [r_SrSc - r_meas; 2 vec(q_SrSc * q_meas^-1)].
Vec6 relative_pose_error(const RelativePoseFactor& factor, const Pose& t_wsr,
                         const Pose& t_wsc);
RelativePoseLinearization relative_pose_jacobians(const RelativePoseFactor& factor,
                                                  const Pose& t_wsr, const Pose& t_wsc);

/// Information matrix diag(1/sigma_t^2 I3, 1/sigma_theta^2 I3).
Mat6 relative_pose_information(double sigma_translation, double sigma_rotation);

/// 1/2 sum e^T W e over relative-pose factors plus 1/2 sum e^2 over valid
/// LiDAR terms.
double total_cost(const Problem& problem, double gradient_gate_fraction = 0.1);

/// Levenberg-Marquardt on the pose manifold. Factors whose states are all
/// fixed are skipped. Fixed states are never modified.
OptimizationReport optimize(Problem& problem, const SolverConfig& config);

/// Copy of the problem with the listed states held fixed. If that leaves no
/// free state, `warning` (when provided) receives a gauge warning.
Problem marginalize_or_fix(const Problem& problem, std::span<const StateId> states,
                           std::string* warning = nullptr);

using SubmapResolver = std::function<std::shared_ptr<const OccupancySubmap>(StateId)>;

/// JSON problem dump. LiDAR factors reference their submap by anchor state
/// id; `load_problem` resolves those ids through `resolve`.
std::string dump_problem(const Problem& problem);
Problem load_problem(const std::string& text, const SubmapResolver& resolve);

}  // namespace occslam
