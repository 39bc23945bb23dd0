#include "occslam/factor_graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

namespace occslam {

void SolverConfig::validate() const {
  if (max_iterations <= 0 || !(initial_lambda > 0.0) || !(lambda_up > 1.0) ||
      !(lambda_down > 0.0 && lambda_down < 1.0) || !(max_lambda > initial_lambda) ||
      !(cost_tolerance > 0.0) || !(step_tolerance > 0.0) || !(gradient_tolerance > 0.0)) {
    throw std::invalid_argument("solver configuration values must be positive");
  }
}

const char* to_string(Termination t) {
  switch (t) {
    case Termination::kConverged: return "converged";
    case Termination::kSmallStep: return "small_step";
    case Termination::kSmallGradient: return "small_gradient";
    case Termination::kMaxIterations: return "max_iterations";
    case Termination::kDampingExhausted: return "damping_exhausted";
    case Termination::kNoFreeStates: return "no_free_states";
  }
  return "unknown";
}

StateId Problem::add_state(double timestamp, const Pose& pose, StateRole role, bool fixed) {
  const auto id = static_cast<StateId>(states_.size());
  states_.push_back({id, timestamp, pose, role, fixed});
  return id;
}

void Problem::check_id(StateId id) const {
  if (id < 0 || id >= static_cast<StateId>(states_.size())) {
    throw std::out_of_range("unknown state id " + std::to_string(id));
  }
}

const StateNode& Problem::state(StateId id) const {
  check_id(id);
  return states_[id];
}

void Problem::set_pose(StateId id, const Pose& pose) {
  check_id(id);
  states_[id].pose = pose;
}

void Problem::set_fixed(StateId id, bool fixed) {
  check_id(id);
  states_[id].fixed = fixed;
}

void Problem::set_role(StateId id, StateRole role) {
  check_id(id);
  states_[id].role = role;
}

void Problem::add_relative_pose_factor(const RelativePoseFactor& factor) {
  check_id(factor.state_r);
  check_id(factor.state_c);
  if (factor.state_r == factor.state_c) {
    throw std::invalid_argument("relative pose factor must link two distinct states");
  }
  relative_.push_back(factor);
}

void Problem::add_lidar_factor(LidarFactor factor) {
  if (factor.terms.empty()) return;
  const StateId a = factor.terms.front().state_a;
  const StateId b = factor.terms.front().state_b;
  check_id(a);
  check_id(b);
  if (a == b) throw std::invalid_argument("lidar factor must link two distinct states");
  for (const LidarFactorTerm& t : factor.terms) {
    if (t.state_a != a || t.state_b != b) {
      throw std::invalid_argument("lidar factor terms must share one state pair");
    }
    if (!t.submap) throw std::invalid_argument("lidar factor term without submap");
  }
  lidar_.push_back(std::move(factor));
}

namespace {

Eigen::Quaterniond ErrorQuaternion(const Pose& t_sr_sc, const Pose& measurement) {
  Eigen::Quaterniond q =
      t_sr_sc.rotation.quaternion() * measurement.rotation.quaternion().conjugate();
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  return q;
}

}  // namespace

Vec6 relative_pose_error(const RelativePoseFactor& factor, const Pose& t_wsr,
                         const Pose& t_wsc) {
  const Pose rel = compose(inverse(t_wsr), t_wsc);
  Vec6 e;
  e.head<3>() = rel.translation - factor.measurement.translation;
  e.tail<3>() = 2.0 * ErrorQuaternion(rel, factor.measurement).vec();
  return e;
}

RelativePoseLinearization relative_pose_jacobians(const RelativePoseFactor& factor,
                                                  const Pose& t_wsr, const Pose& t_wsc) {
  RelativePoseLinearization lin;
  const Pose rel = compose(inverse(t_wsr), t_wsc);
  const Eigen::Quaterniond q_err = ErrorQuaternion(rel, factor.measurement);
  lin.error.head<3>() = rel.translation - factor.measurement.translation;
  lin.error.tail<3>() = 2.0 * q_err.vec();

  const Mat3 c_srw = t_wsr.rotation.inverse().matrix();
  const Mat3 rot_block = (q_err.w() * Mat3::Identity() - skew(q_err.vec())) * c_srw;
  lin.j_r.topLeftCorner<3, 3>() = -c_srw;
  lin.j_r.topRightCorner<3, 3>() = c_srw * skew(t_wsc.translation - t_wsr.translation);
  lin.j_r.bottomRightCorner<3, 3>() = -rot_block;
  lin.j_c.topLeftCorner<3, 3>() = c_srw;
  lin.j_c.bottomRightCorner<3, 3>() = rot_block;
  return lin;
}

Mat6 relative_pose_information(double sigma_translation, double sigma_rotation) {
  Mat6 w = Mat6::Zero();
  w.diagonal().head<3>().setConstant(1.0 / (sigma_translation * sigma_translation));
  w.diagonal().tail<3>().setConstant(1.0 / (sigma_rotation * sigma_rotation));
  return w;
}

namespace {

struct ActiveSet {
  std::vector<int> column;  // block column per state, -1 when fixed
  std::vector<StateId> free_states;
  std::vector<const RelativePoseFactor*> relative;
  std::vector<const LidarFactor*> lidar;
};

ActiveSet CollectActive(const Problem& problem) {
  ActiveSet set;
  set.column.assign(problem.num_states(), -1);
  for (const StateNode& s : problem.states()) {
    if (!s.fixed) {
      set.column[s.id] = static_cast<int>(set.free_states.size());
      set.free_states.push_back(s.id);
    }
  }
  for (const RelativePoseFactor& f : problem.relative_pose_factors()) {
    if (set.column[f.state_r] >= 0 || set.column[f.state_c] >= 0) set.relative.push_back(&f);
  }
  for (const LidarFactor& f : problem.lidar_factors()) {
    const LidarFactorTerm& t = f.terms.front();
    if (set.column[t.state_a] >= 0 || set.column[t.state_b] >= 0) set.lidar.push_back(&f);
  }
  return set;
}

void CheckGauge(const Problem& problem, const ActiveSet& set) {
  const std::size_t n = problem.num_states();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&parent](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  auto unite = [&](StateId a, StateId b) { parent[find(a)] = find(b); };
  for (const RelativePoseFactor* f : set.relative) unite(f->state_r, f->state_c);
  for (const LidarFactor* f : set.lidar) unite(f->terms.front().state_a, f->terms.front().state_b);

  std::vector<bool> anchored(n, false);
  for (const StateNode& s : problem.states()) {
    if (s.fixed) anchored[find(s.id)] = true;
  }
  std::vector<StateId> unconstrained;
  for (StateId id : set.free_states) {
    if (!anchored[find(id)]) unconstrained.push_back(id);
  }
  if (!unconstrained.empty()) {
    std::ostringstream os;
    os << "unconstrained gauge: free states";
    for (StateId id : unconstrained) os << " " << id;
    os << " are not connected to any fixed state";
    throw GaugeError(os.str(), std::move(unconstrained));
  }
}

// Per-term LiDAR costs in factor order; NaN marks an invalid term.
std::vector<double> LidarCosts(const std::vector<StateNode>& states, const ActiveSet& set,
                               double gate_fraction) {
  std::vector<double> costs;
  for (const LidarFactor* f : set.lidar) {
    for (const LidarFactorTerm& t : f->terms) {
      const LidarResidual r =
          evaluate(t, states[t.state_a].pose, states[t.state_b].pose, gate_fraction);
      costs.push_back(r.valid ? 0.5 * r.residual * r.residual
                              : std::numeric_limits<double>::quiet_NaN());
    }
  }
  return costs;
}

double RelativeCost(const std::vector<StateNode>& states, const ActiveSet& set) {
  double cost = 0.0;
  for (const RelativePoseFactor* f : set.relative) {
    const Vec6 e = relative_pose_error(*f, states[f->state_r].pose, states[f->state_c].pose);
    cost += 0.5 * e.dot(f->information * e);
  }
  return cost;
}

double SumValid(const std::vector<double>& costs) {
  double sum = 0.0;
  for (double c : costs) {
    if (!std::isnan(c)) sum += c;
  }
  return sum;
}

double ActiveCost(const std::vector<StateNode>& states, const ActiveSet& set,
                  double gate_fraction) {
  return RelativeCost(states, set) + SumValid(LidarCosts(states, set, gate_fraction));
}

// Candidate cost over the terms valid at the current iterate. A term that
// leaves the valid region keeps its current cost, so a step is never
// rewarded for pushing points into free or unknown space.
double ComparableLidarCost(const std::vector<double>& current,
                           const std::vector<double>& candidate) {
  double sum = 0.0;
  for (std::size_t i = 0; i < current.size(); ++i) {
    if (std::isnan(current[i])) continue;
    sum += std::isnan(candidate[i]) ? current[i] : candidate[i];
  }
  return sum;
}

class NormalEquations {
 public:
  explicit NormalEquations(std::size_t blocks) : blocks_(blocks), g_(Eigen::VectorXd::Zero(6 * blocks)) {}

  template <typename JA, typename JB, typename W, typename E>
  void add_pair(int ca, int cb, const JA& ja, const JB& jb, const W& w, const E& e) {
    if (ca >= 0) {
      add_block(ca, ca, ja.transpose() * w * ja);
      g_.segment<6>(6 * ca) += ja.transpose() * (w * e);
    }
    if (cb >= 0) {
      add_block(cb, cb, jb.transpose() * w * jb);
      g_.segment<6>(6 * cb) += jb.transpose() * (w * e);
    }
    if (ca >= 0 && cb >= 0) {
      const Mat6 off = ja.transpose() * w * jb;
      add_block(ca, cb, off);
      add_block(cb, ca, off.transpose());
    }
  }

  const Eigen::VectorXd& gradient() const { return g_; }

  Eigen::SparseMatrix<double> damped(double lambda, Eigen::VectorXd* diagonal) const {
    const std::size_t dim = 6 * blocks_;
    diagonal->setZero(dim);
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(entries_.size() * 36);
    for (const auto& [key, block] : entries_) {
      for (int r = 0; r < 6; ++r) {
        for (int c = 0; c < 6; ++c) {
          const int row = 6 * key.first + r;
          const int col = 6 * key.second + c;
          if (row == col) (*diagonal)[row] = block(r, c);
          triplets.emplace_back(row, col, block(r, c));
        }
      }
    }
    const Eigen::VectorXd d = diagonal->cwiseMax(1e-6);
    for (std::size_t i = 0; i < dim; ++i) {
      triplets.emplace_back(static_cast<int>(i), static_cast<int>(i), lambda * d[i]);
    }
    Eigen::SparseMatrix<double> h(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    h.setFromTriplets(triplets.begin(), triplets.end());
    return h;
  }

 private:
  void add_block(int r, int c, const Mat6& m) {
    auto [it, inserted] = entries_.try_emplace({r, c}, m);
    if (!inserted) it->second += m;
  }

  std::size_t blocks_;
  std::map<std::pair<int, int>, Mat6> entries_;
  Eigen::VectorXd g_;
};

NormalEquations Linearize(const std::vector<StateNode>& states, const ActiveSet& set,
                          double gate_fraction) {
  NormalEquations ne(set.free_states.size());
  for (const RelativePoseFactor* f : set.relative) {
    const RelativePoseLinearization lin =
        relative_pose_jacobians(*f, states[f->state_r].pose, states[f->state_c].pose);
    ne.add_pair(set.column[f->state_r], set.column[f->state_c], lin.j_r, lin.j_c,
                f->information, lin.error);
  }
  const Eigen::Matrix<double, 1, 1> unit = Eigen::Matrix<double, 1, 1>::Identity();
  for (const LidarFactor* f : set.lidar) {
    for (const LidarFactorTerm& t : f->terms) {
      const LidarJacobians lin =
          jacobians(t, states[t.state_a].pose, states[t.state_b].pose, gate_fraction);
      if (!lin.valid) continue;
      const Eigen::Matrix<double, 1, 1> e(lin.residual);
      ne.add_pair(set.column[t.state_a], set.column[t.state_b], lin.j_a, lin.j_b, unit, e);
    }
  }
  return ne;
}

}  // namespace

double total_cost(const Problem& problem, double gradient_gate_fraction) {
  ActiveSet all;
  all.column.assign(problem.num_states(), 0);
  for (const RelativePoseFactor& f : problem.relative_pose_factors()) all.relative.push_back(&f);
  for (const LidarFactor& f : problem.lidar_factors()) all.lidar.push_back(&f);
  return ActiveCost(problem.states(), all, gradient_gate_fraction);
}

OptimizationReport optimize(Problem& problem, const SolverConfig& config) {
  config.validate();
  OptimizationReport report;
  const ActiveSet set = CollectActive(problem);
  report.system_dimension = 6 * set.free_states.size();
  std::vector<StateNode> states = problem.states();
  std::vector<double> lidar_costs = LidarCosts(states, set, config.gradient_gate_fraction);
  double cost = RelativeCost(states, set) + SumValid(lidar_costs);
  report.cost_trace.push_back(cost);
  if (set.free_states.empty()) {
    report.termination = Termination::kNoFreeStates;
    return report;
  }
  CheckGauge(problem, set);

  double lambda = config.initial_lambda;
  bool done = false;
  while (!done) {
    const NormalEquations ne = Linearize(states, set, config.gradient_gate_fraction);
    if (cost == 0.0 || ne.gradient().lpNorm<Eigen::Infinity>() < config.gradient_tolerance) {
      report.termination = Termination::kSmallGradient;
      break;
    }
    bool accepted = false;
    while (!accepted) {
      if (report.iterations >= config.max_iterations) {
        report.termination = Termination::kMaxIterations;
        done = true;
        break;
      }
      if (lambda > config.max_lambda) {
        report.termination = Termination::kDampingExhausted;
        done = true;
        break;
      }
      ++report.iterations;
      Eigen::VectorXd diagonal;
      const Eigen::SparseMatrix<double> h = ne.damped(lambda, &diagonal);
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(h);
      if (solver.info() != Eigen::Success) {
        lambda *= config.lambda_up;
        continue;
      }
      const Eigen::VectorXd step = solver.solve(-ne.gradient());
      if (solver.info() != Eigen::Success || !step.allFinite()) {
        lambda *= config.lambda_up;
        continue;
      }
      double state_norm = 0.0;
      for (StateId id : set.free_states) state_norm += states[id].pose.translation.squaredNorm();
      state_norm = std::sqrt(state_norm);
      if (step.norm() < config.step_tolerance * (state_norm + config.step_tolerance)) {
        report.termination = Termination::kSmallStep;
        done = true;
        break;
      }
      std::vector<StateNode> candidate = states;
      for (std::size_t i = 0; i < set.free_states.size(); ++i) {
        StateNode& s = candidate[set.free_states[i]];
        s.pose = apply_perturbation(
            s.pose, PosePerturbation::FromVector(step.segment<6>(6 * static_cast<long>(i))));
      }
      std::vector<double> candidate_lidar =
          LidarCosts(candidate, set, config.gradient_gate_fraction);
      const double relative = RelativeCost(candidate, set);
      const double comparable = relative + ComparableLidarCost(lidar_costs, candidate_lidar);
      const double new_cost = relative + SumValid(candidate_lidar);
      if (comparable < cost) {
        accepted = true;
        const double decrease = cost - comparable;
        states = std::move(candidate);
        lidar_costs = std::move(candidate_lidar);
        report.cost_trace.push_back(new_cost);
        report.compared_costs.push_back(comparable);
        ++report.accepted_steps;
        lambda = std::max(lambda * config.lambda_down, 1e-12);
        if (decrease < config.cost_tolerance * cost) {
          report.termination = Termination::kConverged;
          done = true;
        }
        cost = new_cost;
      } else {
        lambda *= config.lambda_up;
      }
    }
  }
  for (StateId id : set.free_states) problem.set_pose(id, states[id].pose);
  return report;
}

Problem marginalize_or_fix(const Problem& problem, std::span<const StateId> states,
                           std::string* warning) {
  Problem out = problem;
  for (StateId id : states) out.set_fixed(id, true);
  const bool any_free = std::any_of(out.states().begin(), out.states().end(),
                                    [](const StateNode& s) { return !s.fixed; });
  if (!any_free && warning != nullptr) {
    *warning = "gauge warning: every state is fixed, optimization is a no-op";
  }
  return out;
}

}  // namespace occslam
