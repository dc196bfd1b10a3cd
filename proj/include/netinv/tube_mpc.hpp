#pragma once

#include "netinv/cbf.hpp"
#include "netinv/grid.hpp"
#include "netinv/optim.hpp"
#include "netinv/scenario.hpp"

#include <Eigen/Dense>

#include <vector>

namespace netinv::mpc {

/// Samples each bus waits before it may act (bus index order).
struct DelayStructure {
  std::vector<int> activation;
  std::vector<int> unreachable;  // bus ids that never receive the plan
};

/// BFS hops from `source_id`, ceil(hops / edges_per_step); unreachable buses
/// get `horizon`. Throws Error{kSourceMissing}.
DelayStructure delay_structure(const grid::GridNetwork& net, int source_id, int edges_per_step, int horizon);

/// Discrete deviation model about the target x*: x+ = A x + B (u - u_ss) + E d.
struct PlanProblem {
  Eigen::MatrixXd a, b, e;
  Eigen::VectorXd x0;       // initial deviation from x*
  Eigen::VectorXd u_ss;     // input holding x*
  Eigen::MatrixXd d_hat;    // exogenous prediction, one column per step (empty: zero)
  Eigen::VectorXd u_max;    // |u| <= u_max on the total input
  std::vector<Eigen::Index> capped;  // state rows with |x| <= omega_cap
  double omega_cap = optim::kInf;
  std::vector<int> activation;       // per input
  Eigen::MatrixXd q, r, q_terminal;
  int horizon = 50;
};

struct ReferenceTrajectory {
  Eigen::MatrixXd x_hat;  // deviation from x*, columns 0..T_p (column 0 = x0)
  Eigen::MatrixXd u_hat;  // total input, columns 0..T_p-1
  Eigen::MatrixXd d_hat;
  double cost = 0.0;
  double kkt_residual = 0.0;
  int horizon = 0;
};

/// Condensed QP over the inputs of buses that have already received the plan.
/// Throws Error{kPlanInfeasible} with the step of the first cap violation of
/// the least-violating input sequence as index.
ReferenceTrajectory plan(const PlanProblem& p);

/// Tube cross-section of one node: the RCI of its error dynamics under the
/// given coupling-error bounds.
RciResult error_rci(const contract::NodeModel& node, const Eigen::VectorXd& delta_axis);

/// Infinite-horizon discrete LQR gain, u = K x.
Eigen::MatrixXd lqr_gain(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::MatrixXd& q,
                         const Eigen::MatrixXd& r);

/// u = u_hat + supervise(tube, e = x - x_hat, u0 = k e) over U shifted by u_hat.
/// `w_err` is the measured error signal (coupling error, exogenous error).
/// Throws Error{kSupervisionInfeasible}.
Eigen::VectorXd track(const cbf::BarrierFunction& tube, const LinearSubsystem& sys, const DisturbanceSpec& err_env,
                      const Eigen::VectorXd& x, const Eigen::VectorXd& x_hat, const Eigen::VectorXd& u_hat,
                      const Eigen::VectorXd& w_err, const Eigen::MatrixXd& k, const Polytope& input);

// ---------------------------------------------------------------- pipeline

struct ContingencyOptions {
  int source_bus = 4;
  int edges_per_step = 1;
  int horizon = 50;
  double plan_share = 0.7;  // fraction of U given to the plan, the rest to the tube
  double q_theta = 10.0, q_omega = 100.0, r = 1.0, terminal = 10.0;
  scenario::GridSynthesisOptions tube;  // ts is taken from here
  int points = 9;
  bool ac_polish = true;
};

struct ContingencyPlan {
  grid::ContingencyEvent event;
  grid::GridNetwork post;            // reduced, theta0 = target angles
  std::vector<Eigen::Index> keep;    // reduced bus -> original bus index
  Eigen::VectorXd u_ss;
  DelayStructure delay;
  ReferenceTrajectory ref;
  /// Nominal free response x+ = A x after the horizon (u = u_ss), until it
  /// falls below 1e-12.
  Eigen::MatrixXd tail;
  scenario::GridContract tube;       // error tubes, also the fixed-point contract after the horizon
  std::vector<Eigen::MatrixXd> k_lqr;
  double omega_fb = 0.0, omega_ff = 0.0;
  double ts = 0.05;
  int event_step = 0;

  /// Reference state of reduced bus i at `step` samples after the event
  /// (deviation from target; the tail after the horizon).
  Eigen::VectorXd x_hat(Eigen::Index i, int step) const;
  /// Reference input of reduced bus i (u_ss after the horizon).
  double u_hat(Eigen::Index i, int step) const;
};

/// Builds target, delays, tubes and the reference for one contingency, with
/// the network assumed at its pre-event equilibrium.
ContingencyPlan prepare_contingency(const grid::GridNetwork& pre, const grid::ContingencyEvent& event,
                                    const ContingencyOptions& opt);

struct TrackingStats {
  long breaches = 0;
  long interventions = 0;
};

/// Before the event: `before` (if set). From the event on: reference
/// tracking once a bus has received the plan, zero input before that. After
/// the horizon the legacy controller acts around the target, filtered by the
/// same tubes about the decaying tail.
grid::Controller contingency_controller(const ContingencyPlan& cp, const grid::Controller& before,
                                        const grid::LegacyGains& gains, TrackingStats* stats);

/// Largest tube violation max_k(P e - q) per sample (NaN before the event).
std::vector<double> tube_violation(const ContingencyPlan& cp, const grid::Trace& trace);

/// Largest |theta - theta*| and |omega| over the surviving buses per sample.
std::vector<double> target_distance(const ContingencyPlan& cp, const grid::Trace& trace);

}  // namespace netinv::mpc
