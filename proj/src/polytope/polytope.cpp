#include "netinv/polytope.hpp"

#include "netinv/error.hpp"
#include "netinv/optim.hpp"

#include <algorithm>

namespace netinv {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Polytope Polytope::box(const VectorXd& lo, const VectorXd& hi) {
  if (lo.size() != hi.size()) throw Error(ErrorCode::kDimensionMismatch, "box bounds");
  const Index n = lo.size();
  Polytope b;
  b.p.resize(2 * n, n);
  b.q.resize(2 * n);
  b.p.topRows(n) = MatrixXd::Identity(n, n);
  b.p.bottomRows(n) = -MatrixXd::Identity(n, n);
  b.q.head(n) = hi;
  b.q.tail(n) = -lo;
  return b;
}

Polytope Polytope::symmetric_box(const VectorXd& half_width) { return box(-half_width, half_width); }

namespace {

void check(const Polytope& poly, Index n) {
  if (poly.p.rows() != poly.q.size() || poly.p.cols() != n)
    throw Error(ErrorCode::kDimensionMismatch, "polytope and vector dimensions differ");
}

}  // namespace

double support(const Polytope& poly, const VectorXd& direction) {
  check(poly, direction.size());
  optim::LpProblem lp = optim::LpProblem::with_variables(poly.dim());
  lp.objective = -direction;
  lp.a_ub = poly.p;
  lp.b_ub = poly.q;
  const optim::Solution s = optim::solve_lp(lp);
  switch (s.status) {
    case optim::Status::kInfeasible:
      throw Error(ErrorCode::kEmptyPolytope, "support of an empty polytope");
    case optim::Status::kUnbounded:
      return optim::kInf;
    case optim::Status::kOptimal:
      break;
  }
  return -s.value;
}

bool contains(const Polytope& poly, const VectorXd& x, double tol) {
  check(poly, x.size());
  if (poly.rows() == 0) return true;
  return ((poly.p * x - poly.q).array() <= tol).all();
}

bool is_subset(const Polytope& inner, const Polytope& outer, double tol) {
  if (inner.dim() != outer.dim()) throw Error(ErrorCode::kDimensionMismatch, "ambient dimensions differ");
  for (Index k = 0; k < outer.rows(); ++k)
    if (support(inner, outer.p.row(k).transpose()) > outer.q(k) + tol) return false;
  return true;
}

double output_bound(const Polytope& poly, const Eigen::RowVectorXd& c) {
  const VectorXd d = c.transpose();
  return std::max(support(poly, d), support(poly, -d));
}

bool is_empty(const Polytope& poly) {
  optim::LpProblem lp = optim::LpProblem::with_variables(poly.dim());
  lp.a_ub = poly.p;
  lp.b_ub = poly.q;
  return optim::solve_lp(lp).status == optim::Status::kInfeasible;
}

Polytope product(const Polytope& a, const Polytope& b) {
  Polytope r;
  r.p = Eigen::MatrixXd::Zero(a.rows() + b.rows(), a.dim() + b.dim());
  r.p.topLeftCorner(a.rows(), a.dim()) = a.p;
  r.p.bottomRightCorner(b.rows(), b.dim()) = b.p;
  r.q.resize(a.rows() + b.rows());
  r.q << a.q, b.q;
  return r;
}

Polytope intersect(const Polytope& a, const Polytope& b) {
  if (a.dim() != b.dim()) throw Error(ErrorCode::kDimensionMismatch, "ambient dimensions differ");
  Polytope r;
  r.p.resize(a.rows() + b.rows(), a.dim());
  r.q.resize(a.rows() + b.rows());
  r.p << a.p, b.p;
  r.q << a.q, b.q;
  return r;
}

}  // namespace netinv
