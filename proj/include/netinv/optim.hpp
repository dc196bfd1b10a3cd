#pragma once

#include <Eigen/Dense>

#include <limits>
#include <optional>

namespace netinv::optim {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Solver tolerances. The defaults are tuned for well-scaled problems of a
/// few hundred variables.
struct Tolerances {
  double feasibility = 1e-8;
  double optimality = 1e-8;
  double zero_pivot = 1e-11;
};

/// min c'x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lower <= x <= upper.
/// Empty `lower`/`upper` mean unbounded in that direction.
struct LpProblem {
  Eigen::VectorXd objective;
  Eigen::MatrixXd a_ub;
  Eigen::VectorXd b_ub;
  Eigen::MatrixXd a_eq;
  Eigen::VectorXd b_eq;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  /// Free variables, no rows.
  static LpProblem with_variables(Eigen::Index n);
  Eigen::Index num_variables() const { return objective.size(); }
  void add_inequality(const Eigen::RowVectorXd& row, double rhs);
  void add_equality(const Eigen::RowVectorXd& row, double rhs);
};

/// min 0.5 x'Hx + f'x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq.
struct QpProblem {
  Eigen::MatrixXd hessian;
  Eigen::VectorXd linear;
  Eigen::MatrixXd a_ub;
  Eigen::VectorXd b_ub;
  Eigen::MatrixXd a_eq;
  Eigen::VectorXd b_eq;

  static QpProblem with_variables(Eigen::Index n);
  Eigen::Index num_variables() const { return linear.size(); }
  void add_inequality(const Eigen::RowVectorXd& row, double rhs);
  void add_equality(const Eigen::RowVectorXd& row, double rhs);
};

enum class Status { kOptimal, kInfeasible, kUnbounded };

/// Farkas certificate of infeasibility over all constraint blocks: the
/// multipliers combine every row to 0 = (negative number).
///   A_ub'y_ub + A_eq'y_eq - y_lower + y_upper = 0,
///   b_ub'y_ub + b_eq'y_eq - l'y_lower + u'y_upper < 0,
/// with y_ub, y_lower, y_upper >= 0.
struct FarkasCertificate {
  Eigen::VectorXd ub;
  Eigen::VectorXd eq;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

/// Multipliers follow the Lagrangian  f(x) + y_ub'(A_ub x - b) + y_eq'(A_eq x - b)
/// - y_lower'(x - l) + y_upper'(x - u); inequality multipliers are >= 0.
struct Solution {
  Status status = Status::kInfeasible;
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd dual_ub;
  Eigen::VectorXd dual_eq;
  Eigen::VectorXd dual_lower;
  Eigen::VectorXd dual_upper;
  std::optional<FarkasCertificate> farkas;
  /// Direction of unbounded descent (LP only).
  std::optional<Eigen::VectorXd> ray;
  int iterations = 0;

  bool optimal() const { return status == Status::kOptimal; }
};

/// Dense revised simplex, two phases, Dantzig pricing with Bland's rule on
/// degenerate stalls.
/// Throws Error{kDimensionMismatch} on malformed input.
Solution solve_lp(const LpProblem& problem, const Tolerances& tol = {});

/// Primal active-set method. Throws Error{kNotPsd} when the Hessian is not
/// positive semidefinite; returns status kInfeasible (with a Farkas
/// certificate over the ub/eq blocks) when the constraints are empty.
Solution solve_qp(const QpProblem& problem, const Tolerances& tol = {},
                  const std::optional<Eigen::VectorXd>& warm_start = std::nullopt);

/// Largest violation among stationarity, primal feasibility, dual sign and
/// complementarity of a QP solution.
double qp_kkt_residual(const QpProblem& problem, const Solution& sol);

/// True when `cert` proves `problem` infeasible within `tol`.
bool farkas_proves_infeasible(const LpProblem& problem, const FarkasCertificate& cert,
                              double tol = 1e-7);

/// Dual objective value of an LP solution (equals the primal value at optimum).
double lp_dual_value(const LpProblem& problem, const Solution& sol);

/// Largest violation of the constraints (ub, eq and bounds) at x.
double lp_primal_residual(const LpProblem& problem, const Eigen::VectorXd& x);

}  // namespace netinv::optim
