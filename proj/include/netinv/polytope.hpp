#pragma once

#include <Eigen/Dense>

namespace netinv {

/// H-representation set {x | P x <= q}.
struct Polytope {
  Eigen::MatrixXd p;
  Eigen::VectorXd q;

  Eigen::Index dim() const { return p.cols(); }
  Eigen::Index rows() const { return p.rows(); }

  /// Axis-aligned box lo <= x <= hi.
  static Polytope box(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);
  /// Box |x_i| <= half_width_i.
  static Polytope symmetric_box(const Eigen::VectorXd& half_width);
};

/// max d'x over the polytope; +inf when unbounded along d.
/// Throws Error{kEmptyPolytope}.
double support(const Polytope& poly, const Eigen::VectorXd& direction);

/// P x <= q + tol elementwise. Throws Error{kDimensionMismatch}.
bool contains(const Polytope& poly, const Eigen::VectorXd& x, double tol = 0.0);

/// Every row of `outer` bounds `inner` within tol.
bool is_subset(const Polytope& inner, const Polytope& outer, double tol = 1e-9);

/// max |c'x| over the polytope.
double output_bound(const Polytope& poly, const Eigen::RowVectorXd& c);

/// True when the polytope has no point (feasibility LP).
bool is_empty(const Polytope& poly);

/// Cartesian product a x b.
Polytope product(const Polytope& a, const Polytope& b);

/// {x | P_a x <= q_a, P_b x <= q_b}.
Polytope intersect(const Polytope& a, const Polytope& b);

}  // namespace netinv
