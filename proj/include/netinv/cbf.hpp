#pragma once

#include "netinv/rci.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace netinv::cbf {

/// h(x) = min_k (q_k - P_k x) / q_k over an RCI Poly(P, q), q > 0.
struct BarrierFunction {
  Polytope set;
  double alpha = 0.5;  // gamma(s) = alpha s

  /// Throws Error{kConfig} unless q > 0 and alpha in [0, 1).
  void validate() const;
};

double h_value(const BarrierFunction& b, const Eigen::VectorXd& x);

/// Argmin |u - u0|^2 over u in U subject to, for every row k,
///   P_k (A x + B u + E w) + worst(w_u, measurement error) <= q_k - alpha q_k h(x),
/// with `w_measured` the measured (coupling, exogenous) vector. u0 is returned
/// unchanged when it already satisfies every row.
/// Throws Error{kSupervisionInfeasible} carrying the most violated row.
Eigen::VectorXd supervise(const BarrierFunction& b, const LinearSubsystem& sys, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& w_measured, const Eigen::VectorXd& u0, const DisturbanceSpec& dist);

/// Per-row slack of the barrier constraint at u (negative = violated).
Eigen::VectorXd barrier_slack(const BarrierFunction& b, const LinearSubsystem& sys, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& w_measured, const Eigen::VectorXd& u, const DisturbanceSpec& dist);

struct Certificate {
  bool ok = false;
  int failed = 0;  // 1: X0 not inside, 2: meets a danger set, 3: supervision infeasible
};

/// Checks the three barrier conditions; condition 3 samples `samples` states
/// with h >= 0 (a quarter of them on the boundary) against extreme measured
/// disturbances. `danger` is a union of polytopes.
Certificate certify_cbf(const BarrierFunction& b, const Polytope& x0, const std::vector<Polytope>& danger,
                        const LinearSubsystem& sys, const DisturbanceSpec& dist, int samples = 500,
                        std::uint64_t seed = 1);

/// Uniform-direction sample of the set: a point on the ray from the origin
/// at fraction `r` of the way to the boundary.
Eigen::VectorXd ray_point(const Polytope& set, const Eigen::VectorXd& direction, double r);

/// A vertex of the measured set maximizing `direction` (LP).
Eigen::VectorXd extreme_point(const Polytope& set, const Eigen::VectorXd& direction);

}  // namespace netinv::cbf
