#pragma once

#include "netinv/polytope.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace netinv {

/// Discrete- or continuous-time node model
///   x+ = A x + B u + E1 y_N + E2 d,   y = c x.
/// E1 acts on neighbor outputs (or on one combined axis, see `coupling_scale`),
/// E2 on exogenous disturbances.
struct LinearSubsystem {
  Eigen::MatrixXd a;
  Eigen::MatrixXd b;
  Eigen::MatrixXd e_coupling;
  Eigen::MatrixXd e_exo;
  Eigen::RowVectorXd c;
  double ts = 0.0;  // 0 for continuous-time models
  std::vector<int> neighbors;
  /// Per coupling column: neighbor-output change that moves that column by
  /// one unit (1 for raw neighbor columns, sum of weights for a combined axis).
  Eigen::VectorXd coupling_scale;

  Eigen::Index n_state() const { return a.rows(); }
  Eigen::Index n_input() const { return b.cols(); }
  Eigen::Index n_coupling() const { return e_coupling.cols(); }
  Eigen::Index n_exo() const { return e_exo.cols(); }
  Eigen::Index n_measured() const { return n_coupling() + n_exo(); }
  /// [E1 E2]
  Eigen::MatrixXd e_measured() const;
  /// Throws Error{kDimensionMismatch} on inconsistent sizes or a zero output row.
  void validate() const;
};

/// Disturbance environment of one node.
struct DisturbanceSpec {
  Polytope measured;            // over (y_N, d) stacked
  Eigen::VectorXd unmeasured;   // elementwise bound on w_u (n)
  Polytope input;               // U
  /// Elementwise bound on (true - measured) for each measured component;
  /// empty means exact measurements.
  Eigen::VectorXd measurement_error;
};

struct OneStepResult {
  Eigen::VectorXd q_plus;
  Eigen::MatrixXd k_ff;
  Eigen::MatrixXd k_fb;
};

/// Robust one-step propagation of Poly(P, q) under u = K_ff w_m + K_fb x.
/// `caps` (size L, +inf for none) upper-bounds q+, `floor` lower-bounds it.
/// Throws Error{kInfeasible} with the offending row when no gain exists.
OneStepResult one_step_propagate(const LinearSubsystem& sys, const Eigen::MatrixXd& p,
                                 const Eigen::VectorXd& q, const DisturbanceSpec& dist,
                                 const Eigen::VectorXd& caps = {}, const Eigen::VectorXd& floor = {});

struct RciOptions {
  double eps = 1e-6;
  int max_iter = 500;
  double blowup = 1e4;          // Diverged above blowup * max(q0)
  Eigen::VectorXd caps;         // hard upper bounds on q+ (empty: none)
  Eigen::VectorXd floor;        // lower bounds on q+ (warm start from a smaller set)
  bool certify = true;
};

struct RciResult {
  Polytope set;
  Eigen::MatrixXd k_ff;
  Eigen::MatrixXd k_fb;
  int iterations = 0;
  bool converged = false;
  /// One-step LP confirmed q+ <= q exactly for the returned set.
  bool certified = false;
};

/// Outside-in template iteration from a small seed.
/// Throws Error{kDiverged} or propagates Error{kInfeasible}.
RciResult compute_mrci(const LinearSubsystem& sys, const Eigen::MatrixXd& p, const Eigen::VectorXd& q0,
                       const DisturbanceSpec& dist, const RciOptions& options = {});

/// |B K_ff| restricted to the coupling columns, times omega_max * tau.
Eigen::VectorXd delay_disturbance_bound(const LinearSubsystem& sys, const Eigen::MatrixXd& k_ff,
                                        double omega_max, double tau);

/// Regular fan of L unit normals in the plane (n = 2) or {+1, -1} (n = 1).
/// For n = 2 the rows +-e_2 are appended when the fan misses them.
Eigen::MatrixXd fan_template(Eigen::Index n, int directions);

/// Indices of the template rows equal to +e_axis and -e_axis.
std::pair<Eigen::Index, Eigen::Index> axis_rows(const Eigen::MatrixXd& p, Eigen::Index axis);

}  // namespace netinv
