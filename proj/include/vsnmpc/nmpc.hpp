#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SVD>

#include "vsnmpc/barriers.hpp"
#include "vsnmpc/camera.hpp"
#include "vsnmpc/errors.hpp"
#include "vsnmpc/polygon.hpp"

namespace vsnmpc {

struct SolverParams {
  int max_iterations = 40;
  double gradient_tolerance = 1e-6;  // on the infinity norm of the gradient
  double armijo_c1 = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 40;
  double fd_step = 1e-6;
};

struct OcpConfig {
  int horizon = 10;
  double dt = 0.1;  // s
  Eigen::Vector4d Q{50.0, 50.0, 10.0, 10.0};
  Vector6d R = Vector6d::Constant(0.1);
  Eigen::Vector4d P{500.0, 500.0, 100.0, 100.0};
  StateConstraints constraints;
  InputLimits limits;
  ActuationMask mask;
  DynamicsMode dynamics = DynamicsMode::chain_rule;
  SolverParams solver;
  // Local (terminal) controller: gain in 1/s, pseudo-inverse damping, fraction of the
  // input limits its output is clamped to.
  double local_gain = 1.0;
  double local_damping = 1e-3;
  double local_input_fraction = 0.95;

  int inputs() const { return mask.count(); }

  void validate() const {
    if (horizon < 2) throw InvalidArgument("horizon must be at least 2");
    if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
    if (!(Q.minCoeff() > 0.0) || !(R.minCoeff() > 0.0) || !(P.minCoeff() > 0.0)) {
      throw InvalidArgument("all weights must be positive");
    }
    constraints.visibility.validate();
    constraints.area.validate();
    limits.validate();
    if (mask.count() == 0) throw InvalidArgument("actuation mask is empty");
    if (solver.max_iterations < 0 || solver.max_backtracks < 1) throw InvalidArgument("bad solver iteration limits");
    if (!(solver.fd_step > 0.0) || !(solver.backtrack > 0.0 && solver.backtrack < 1.0)) {
      throw InvalidArgument("bad solver step parameters");
    }
    if (!(local_gain > 0.0) || !(local_input_fraction > 0.0 && local_input_fraction < 1.0)) {
      throw InvalidArgument("bad local controller parameters");
    }
  }
};

// n x M masked velocity commands; row i is applied at step i.
struct HorizonControls {
  Eigen::MatrixXd values;

  static HorizonControls zeros(int steps, int inputs) { return {Eigen::MatrixXd::Zero(steps, inputs)}; }
  int steps() const { return static_cast<int>(values.rows()); }
  int inputs() const { return static_cast<int>(values.cols()); }
  Vector6d full(int i, const ActuationMask& mask) const { return mask.expand(values.row(i).transpose()); }
};

// Everything the OCP needs from the current measurement.
struct OcpProblem {
  PolygonFeatures polygon;
  MomentState state;
  Eigen::Matrix2Xd flow;  // per-vertex image flow held over the horizon; empty = static
  DepthModel depth;
};

struct Trajectory {
  std::vector<MomentState> states;          // n + 1
  std::vector<PolygonFeatures> polygons;    // n + 1
};

struct OcpSolution {
  HorizonControls controls;
  Trajectory predicted;
  double cost = 0.0;
  double warm_start_cost = 0.0;
  int iterations = 0;
  bool converged = false;
  bool stalled = false;  // line search could not make progress
};

inline double quadratic_stage_cost(const Eigen::Vector4d& x_err, const Vector6d& nu, const OcpConfig& cfg) {
  return x_err.dot(cfg.Q.cwiseProduct(x_err)) + nu.dot(cfg.R.cwiseProduct(nu));
}

// F = x^T Q x + nu^T R nu + B_x + B_nu; throws on barrier blow-up.
inline double stage_cost(const MomentState& x, const Vector6d& nu, const OcpConfig& cfg,
                         const RecenteringAnchor& anchor) {
  const Eigen::Vector4d err = x.value - anchor.x_des.value;
  return quadratic_stage_cost(err, nu, cfg) + barrier_Bx(x, anchor, cfg.constraints) + barrier_Bnu(nu, cfg.limits);
}

inline double terminal_cost(const Eigen::Vector4d& x_err, const OcpConfig& cfg) {
  return x_err.dot(cfg.P.cwiseProduct(x_err));
}

namespace detail {

inline void check_problem(const OcpProblem& p, const OcpConfig& cfg) {
  p.polygon.validate();
  p.depth.validate();
  if (p.flow.cols() != 0 && p.flow.cols() != p.polygon.size()) throw InvalidArgument("flow size mismatch");
  (void)cfg;
}

// Allocation-light cost evaluation; +inf marks an infeasible control sequence.
class CostEvaluator {
 public:
  CostEvaluator(const OcpProblem& problem, const OcpConfig& cfg, const RecenteringAnchor& anchor)
      : problem_(problem), cfg_(cfg), anchor_(anchor), limits_(cfg.limits.as_vector()), m_(cfg.inputs()) {
    a_.polygon = problem.polygon;
    b_.polygon = problem.polygon;
  }

  double operator()(const Eigen::VectorXd& u) {
    const int n = cfg_.horizon;
    const PolygonFeatures* cur_s = &problem_.polygon;
    MomentState cur_x = problem_.state;
    PropagatedState* next = &a_;
    PropagatedState* spare = &b_;
    double cost = 0.0;
    for (int i = 0; i < n; ++i) {
      const Vector6d nu = cfg_.mask.expand(u.segment(i * m_, m_));
      const double bnu = barrier_Bnu_or_inf(nu, limits_);
      const double bx = barrier_Bx_or_inf(cur_x, anchor_, cfg_.constraints);
      if (!std::isfinite(bnu) || !std::isfinite(bx)) return std::numeric_limits<double>::infinity();
      cost += quadratic_stage_cost(cur_x.value - anchor_.x_des.value, nu, cfg_) + bx + bnu;
      try {
        propagate_into(*cur_s, cur_x, nu, problem_.flow, cfg_.dt, problem_.depth, cfg_.dynamics, *next);
      } catch (const Error&) {
        return std::numeric_limits<double>::infinity();
      }
      cur_s = &next->polygon;
      cur_x = next->state;
      std::swap(next, spare);
    }
    if (!state_feasible(cur_x, cfg_.constraints)) return std::numeric_limits<double>::infinity();
    return cost + terminal_cost(cur_x.value - anchor_.x_des.value, cfg_);
  }

 private:
  const OcpProblem& problem_;
  const OcpConfig& cfg_;
  const RecenteringAnchor& anchor_;
  Vector6d limits_;
  int m_;
  PropagatedState a_;
  PropagatedState b_;
};

inline Eigen::VectorXd stack(const HorizonControls& c) {
  Eigen::VectorXd u(c.values.size());
  for (int i = 0; i < c.steps(); ++i) u.segment(i * c.inputs(), c.inputs()) = c.values.row(i).transpose();
  return u;
}

inline HorizonControls unstack(const Eigen::VectorXd& u, int steps, int inputs) {
  HorizonControls c = HorizonControls::zeros(steps, inputs);
  for (int i = 0; i < steps; ++i) c.values.row(i) = u.segment(i * inputs, inputs).transpose();
  return c;
}

}  // namespace detail

// Iterates the discrete model over the horizon with the flow held constant. Throws
// InfeasibleRollout (with the offending step) on barrier violation or degeneracy.
inline Trajectory rollout(const OcpProblem& problem, const HorizonControls& controls, const OcpConfig& cfg) {
  detail::check_problem(problem, cfg);
  if (controls.inputs() != cfg.inputs()) throw InvalidArgument("controls do not match the actuation mask");
  Trajectory traj;
  traj.states.reserve(static_cast<std::size_t>(controls.steps()) + 1);
  traj.polygons.reserve(static_cast<std::size_t>(controls.steps()) + 1);
  traj.states.push_back(problem.state);
  traj.polygons.push_back(problem.polygon);
  if (!detail::state_feasible(problem.state, cfg.constraints)) throw InfeasibleRollout("start violates constraints", 0);
  for (int i = 0; i < controls.steps(); ++i) {
    PropagatedState next;
    try {
      propagate_into(traj.polygons.back(), traj.states.back(), controls.full(i, cfg.mask), problem.flow, cfg.dt,
                     problem.depth, cfg.dynamics, next);
    } catch (const InvalidArgument&) {
      throw;
    } catch (const Error& e) {
      throw InfeasibleRollout(std::string("rollout degenerated: ") + e.what(), i + 1);
    }
    if (!detail::state_feasible(next.state, cfg.constraints)) {
      throw InfeasibleRollout("predicted state violates the barrier-safe set", i + 1);
    }
    traj.states.push_back(next.state);
    traj.polygons.push_back(std::move(next.polygon));
  }
  return traj;
}

// J = sum of stage costs over the horizon plus the terminal cost.
inline double total_cost(const OcpProblem& problem, const HorizonControls& controls, const OcpConfig& cfg,
                         const RecenteringAnchor& anchor) {
  const Trajectory traj = rollout(problem, controls, cfg);
  double j = 0.0;
  for (int i = 0; i < controls.steps(); ++i) {
    j += stage_cost(traj.states[static_cast<std::size_t>(i)], controls.full(i, cfg.mask), cfg, anchor);
  }
  return j + terminal_cost(traj.states.back().value - anchor.x_des.value, cfg);
}

// Damped BFGS on the stacked controls with finite-difference gradients and an Armijo
// backtracking line search. Every accepted iterate is strictly feasible.
inline OcpSolution solve_ocp(const OcpProblem& problem, const OcpConfig& cfg, const RecenteringAnchor& anchor,
                             const std::optional<HorizonControls>& warm_start = std::nullopt) {
  detail::check_problem(problem, cfg);
  if (!detail::state_feasible(problem.state, cfg.constraints)) {
    throw InfeasibleStart("initial state violates the barrier-safe set");
  }
  const int n = cfg.horizon;
  const int m = cfg.inputs();
  const int dim = n * m;
  const SolverParams& sp = cfg.solver;
  detail::CostEvaluator cost(problem, cfg, anchor);

  Eigen::VectorXd u = Eigen::VectorXd::Zero(dim);
  double j = std::numeric_limits<double>::infinity();
  if (warm_start) {
    if (warm_start->steps() != n || warm_start->inputs() != m) throw InvalidArgument("warm start has wrong shape");
    u = detail::stack(*warm_start);
    j = cost(u);
  }
  if (!std::isfinite(j)) {
    u.setZero();
    j = cost(u);
  }
  if (!std::isfinite(j)) {
    rollout(problem, HorizonControls::zeros(n, m), cfg);  // throws with the failing step
    throw InfeasibleRollout("no feasible initial control sequence", 0);
  }

  OcpSolution sol;
  sol.warm_start_cost = j;

  const double h = sp.fd_step;
  auto gradient = [&](Eigen::VectorXd& at, double f0) {
    Eigen::VectorXd g(dim);
    for (int k = 0; k < dim; ++k) {
      const double keep = at[k];
      at[k] = keep + h;
      const double fp = cost(at);
      at[k] = keep - h;
      const double fm = cost(at);
      at[k] = keep;
      if (std::isfinite(fp) && std::isfinite(fm)) {
        g[k] = (fp - fm) / (2.0 * h);
      } else if (std::isfinite(fp)) {
        g[k] = (fp - f0) / h;
      } else if (std::isfinite(fm)) {
        g[k] = (f0 - fm) / h;
      } else {
        g[k] = 0.0;
      }
    }
    return g;
  };

  Eigen::VectorXd g = gradient(u, j);
  Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(dim, dim);
  const double min_limit = cfg.limits.as_vector().minCoeff();
  if (g.lpNorm<Eigen::Infinity>() > 0.0) {
    hinv *= std::min(1.0, 0.25 * min_limit / g.lpNorm<Eigen::Infinity>());
  }
  bool scaled = false;

  int iter = 0;
  for (; iter < sp.max_iterations; ++iter) {
    if (g.lpNorm<Eigen::Infinity>() <= sp.gradient_tolerance) {
      sol.converged = true;
      break;
    }
    Eigen::VectorXd p = -hinv * g;
    double slope = g.dot(p);
    if (!(slope < 0.0)) {
      hinv.setIdentity();
      hinv *= std::min(1.0, 0.25 * min_limit / g.lpNorm<Eigen::Infinity>());
      p = -hinv * g;
      slope = g.dot(p);
    }
    double alpha = 1.0;
    bool accepted = false;
    Eigen::VectorXd u_new;
    double j_new = j;
    for (int bt = 0; bt < sp.max_backtracks; ++bt) {
      u_new = u + alpha * p;
      j_new = cost(u_new);
      if (std::isfinite(j_new) && j_new <= j + sp.armijo_c1 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= sp.backtrack;
    }
    if (!accepted) {
      sol.stalled = true;
      break;
    }
    const Eigen::VectorXd g_new = gradient(u_new, j_new);
    const Eigen::VectorXd s = u_new - u;
    const Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        hinv = Eigen::MatrixXd::Identity(dim, dim) * (sy / y.squaredNorm());
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd hy = hinv * y;
      // H+ = (I - rho s y^T) H (I - rho y s^T) + rho s s^T, expanded.
      hinv += rho * ((1.0 + rho * y.dot(hy)) * (s * s.transpose()) - hy * s.transpose() - s * hy.transpose());
    }
    const double decrease = j - j_new;
    u = u_new;
    j = j_new;
    g = g_new;
    if (decrease <= 1e-15 * std::max(1.0, std::abs(j))) {
      sol.converged = true;
      ++iter;
      break;
    }
  }
  if (!sol.converged && g.lpNorm<Eigen::Infinity>() <= sp.gradient_tolerance) sol.converged = true;

  sol.controls = detail::unstack(u, n, m);
  sol.predicted = rollout(problem, sol.controls, cfg);
  sol.cost = j;
  sol.iterations = iter;
  return sol;
}

struct LocalControl {
  Eigen::VectorXd masked;  // M actuated components
  double gain_bound = 0.0; // L_h with |h(x)| <= L_h |x_err| before clamping
  bool rank_deficient = false;
};

// h(x) = clamp(-K g_M^+ x_err) with a damped pseudo-inverse of the masked dynamics matrix.
inline LocalControl local_controller(const MomentState& x, const MomentState& x_des, const PolygonFeatures& s,
                                     const DepthModel& depth, const OcpConfig& cfg) {
  LocalControl out;
  const int m = cfg.inputs();
  out.masked = Eigen::VectorXd::Zero(m);
  Matrix4x6 g;
  try {
    g = dynamics_matrix(s, x, depth, cfg.dynamics);
  } catch (const DegenerateArea&) {
    out.rank_deficient = true;
    return out;
  } catch (const AngleSingularity&) {
    out.rank_deficient = true;
    return out;
  }
  const Eigen::MatrixXd gm = apply_actuation_mask(g, cfg.mask);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(gm);
  const auto& sv = svd.singularValues();
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] > 1e-9 * std::max(1.0, sv[0])) ++rank;
  if (rank < std::min(4, m)) {
    out.rank_deficient = true;
    return out;
  }
  const double lam2 = cfg.local_damping * cfg.local_damping;
  const Eigen::MatrixXd pinv =
      gm.transpose() * (gm * gm.transpose() + lam2 * Eigen::Matrix4d::Identity()).inverse();
  out.gain_bound = cfg.local_gain * Eigen::JacobiSVD<Eigen::MatrixXd>(pinv).singularValues()[0];
  out.masked = -cfg.local_gain * pinv * (x.value - x_des.value);
  const Eigen::VectorXd lim = cfg.mask.select(cfg.limits.as_vector()) * cfg.local_input_fraction;
  out.masked = out.masked.cwiseMax(-lim).cwiseMin(lim);
  return out;
}

struct RecedingResult {
  CameraVelocity applied;
  std::optional<OcpSolution> solution;  // empty in recovery mode
  bool recovery = false;
  bool warm_started = false;
};

// Stateful receding-horizon loop: warm start by shifting the previous optimum one step and
// appending the local controller's action at the previous terminal prediction.
class RecedingHorizonController {
 public:
  RecedingHorizonController(OcpConfig cfg, const MomentState& x_des)
      : cfg_(std::move(cfg)), anchor_(make_anchor(x_des, cfg_.constraints)) {
    cfg_.validate();
  }

  const OcpConfig& config() const { return cfg_; }
  const RecenteringAnchor& anchor() const { return anchor_; }
  const MomentState& desired() const { return anchor_.x_des; }
  const std::optional<OcpSolution>& previous() const { return previous_; }

  void set_desired(const MomentState& x_des) {
    anchor_ = make_anchor(x_des, cfg_.constraints);
    previous_.reset();
  }

  void reset() { previous_.reset(); }

  // Shifted previous solution plus local-controller tail; zeros before the first solve.
  HorizonControls warm_start() const {
    const int n = cfg_.horizon;
    const int m = cfg_.inputs();
    if (!previous_) return HorizonControls::zeros(n, m);
    HorizonControls w = HorizonControls::zeros(n, m);
    w.values.topRows(n - 1) = previous_->controls.values.bottomRows(n - 1);
    const auto& last_state = previous_->predicted.states.back();
    const auto& last_poly = previous_->predicted.polygons.back();
    w.values.row(n - 1) = local_controller(last_state, anchor_.x_des, last_poly, previous_depth_, cfg_).masked.transpose();
    return w;
  }

  RecedingResult step(const PolygonFeatures& s, const MomentState& x, const Eigen::Matrix2Xd& flow,
                      const DepthModel& depth) {
    RecedingResult result;
    const OcpProblem problem{s, x, flow, depth};
    try {
      const HorizonControls warm = warm_start();
      result.warm_started = previous_.has_value();
      OcpSolution sol = solve_ocp(problem, cfg_, anchor_, warm);
      result.applied = CameraVelocity(sol.controls.full(0, cfg_.mask));
      previous_ = std::move(sol);
      previous_depth_ = depth;
      result.solution = previous_;
    } catch (const InfeasibleStart&) {
      recover(result, s, x, depth);
    } catch (const InfeasibleRollout&) {
      recover(result, s, x, depth);
    }
    return result;
  }

 private:
  void recover(RecedingResult& result, const PolygonFeatures& s, const MomentState& x, const DepthModel& depth) {
    result.recovery = true;
    result.applied = CameraVelocity(cfg_.mask.expand(local_controller(x, anchor_.x_des, s, depth, cfg_).masked));
    previous_.reset();
  }

  OcpConfig cfg_;
  RecenteringAnchor anchor_;
  std::optional<OcpSolution> previous_;
  DepthModel previous_depth_;
};

}  // namespace vsnmpc
