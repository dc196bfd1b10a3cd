#include "netinv/cbf.hpp"

#include "netinv/error.hpp"
#include "netinv/optim.hpp"

#include <cmath>
#include <random>

namespace netinv::cbf {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

void BarrierFunction::validate() const {
  if (set.rows() == 0) throw Error(ErrorCode::kConfig, "barrier set has no rows");
  if ((set.q.array() <= 0.0).any()) throw Error(ErrorCode::kConfig, "barrier offsets must be positive");
  if (alpha < 0.0 || alpha >= 1.0) throw Error(ErrorCode::kConfig, "alpha must lie in [0, 1)");
}

double h_value(const BarrierFunction& b, const VectorXd& x) {
  if (x.size() != b.set.dim()) throw Error(ErrorCode::kDimensionMismatch, "state dimension");
  return ((b.set.q - b.set.p * x).array() / b.set.q.array()).minCoeff();
}

namespace {

// Worst-case contribution of w_u and of the measurement error to each row.
VectorXd robust_terms(const Polytope& set, const LinearSubsystem& sys, const VectorXd& w, const DisturbanceSpec& dist) {
  const Index n = sys.n_state();
  const VectorXd wu = dist.unmeasured.size() ? dist.unmeasured : VectorXd::Zero(n);
  VectorXd out = set.p.cwiseAbs() * wu;
  const VectorXd& err = dist.measurement_error;
  if (err.size() == 0 || err.maxCoeff() <= 0.0) return out;

  // delta = measured - true, with |delta| <= err and the true value inside
  // the measured set.
  Polytope box = Polytope::symmetric_box(err);
  Polytope consistent = box;
  if (dist.measured.rows() > 0) {
    Polytope shifted{-dist.measured.p, dist.measured.q - dist.measured.p * w};
    consistent = intersect(box, shifted);
  }
  const MatrixXd em = sys.e_measured();
  for (Index k = 0; k < set.rows(); ++k) {
    const VectorXd dir = -(set.p.row(k) * em).transpose();
    double worst;
    try {
      worst = support(consistent, dir);
    } catch (const Error&) {
      worst = dir.cwiseAbs().dot(err);
    }
    out(k) += worst;
  }
  return out;
}

struct Rows {
  MatrixXd lhs;  // P B
  VectorXd rhs;
};

Rows barrier_rows(const BarrierFunction& b, const LinearSubsystem& sys, const VectorXd& x, const VectorXd& w,
                  const DisturbanceSpec& dist) {
  b.validate();
  if (x.size() != sys.n_state() || w.size() != sys.n_measured())
    throw Error(ErrorCode::kDimensionMismatch, "state or measured vector size");
  const Polytope& s = b.set;
  const double h = h_value(b, x);
  VectorXd drift = sys.a * x;
  if (w.size()) drift += sys.e_measured() * w;
  Rows r;
  r.lhs = s.p * sys.b;
  r.rhs = s.q * (1.0 - b.alpha * h) - s.p * drift - robust_terms(s, sys, w, dist);
  return r;
}

}  // namespace

VectorXd barrier_slack(const BarrierFunction& b, const LinearSubsystem& sys, const VectorXd& x, const VectorXd& w,
                       const VectorXd& u, const DisturbanceSpec& dist) {
  const Rows r = barrier_rows(b, sys, x, w, dist);
  return r.rhs - r.lhs * u;
}

VectorXd supervise(const BarrierFunction& b, const LinearSubsystem& sys, const VectorXd& x, const VectorXd& w,
                   const VectorXd& u0, const DisturbanceSpec& dist) {
  const Rows r = barrier_rows(b, sys, x, w, dist);
  const Index m = sys.n_input();
  if (u0.size() != m) throw Error(ErrorCode::kDimensionMismatch, "legacy input size");
  const Polytope& in = dist.input;
  constexpr double kTol = 1e-9;
  const bool barrier_ok = ((r.rhs - r.lhs * u0).array() >= -kTol).all();
  const bool input_ok = in.rows() == 0 || ((in.q - in.p * u0).array() >= -kTol).all();
  if (barrier_ok && input_ok) return u0;

  optim::QpProblem qp = optim::QpProblem::with_variables(m);
  qp.hessian = 2.0 * MatrixXd::Identity(m, m);
  qp.linear = -2.0 * u0;
  for (Index k = 0; k < r.lhs.rows(); ++k) qp.add_inequality(r.lhs.row(k), r.rhs(k));
  for (Index j = 0; j < in.rows(); ++j) qp.add_inequality(in.p.row(j), in.q(j));
  const optim::Solution sol = optim::solve_qp(qp);
  if (sol.optimal()) return sol.x;

  // Locate the row that cannot be met: minimize the largest barrier violation.
  optim::LpProblem lp = optim::LpProblem::with_variables(m + 1);
  lp.objective(m) = 1.0;
  for (Index k = 0; k < r.lhs.rows(); ++k) {
    RowVectorXd row(m + 1);
    row << r.lhs.row(k), -1.0;
    lp.add_inequality(row, r.rhs(k));
  }
  for (Index j = 0; j < in.rows(); ++j) {
    RowVectorXd row(m + 1);
    row << in.p.row(j), 0.0;
    lp.add_inequality(row, in.q(j));
  }
  int worst = -1;
  const optim::Solution ls = optim::solve_lp(lp);
  if (ls.optimal()) {
    Index k;
    (r.lhs * ls.x.head(m) - r.rhs).maxCoeff(&k);
    worst = static_cast<int>(k);
  }
  throw Error(ErrorCode::kSupervisionInfeasible, "no admissible input keeps the barrier condition", worst);
}

VectorXd ray_point(const Polytope& set, const VectorXd& direction, double r) {
  const VectorXd pd = set.p * direction;
  double t = std::numeric_limits<double>::infinity();
  for (Index k = 0; k < pd.size(); ++k) {
    if (pd(k) > 0.0) t = std::min(t, set.q(k) / pd(k));
  }
  if (!std::isfinite(t)) throw Error(ErrorCode::kDegenerate, "set is unbounded along the sampling direction");
  return r * t * direction;
}

VectorXd extreme_point(const Polytope& set, const VectorXd& direction) {
  optim::LpProblem lp = optim::LpProblem::with_variables(set.dim());
  lp.objective = -direction;
  lp.a_ub = set.p;
  lp.b_ub = set.q;
  const optim::Solution sol = optim::solve_lp(lp);
  if (sol.status == optim::Status::kInfeasible) throw Error(ErrorCode::kEmptyPolytope, "measured set is empty");
  if (!sol.optimal()) throw Error(ErrorCode::kDegenerate, "measured set is unbounded");
  return sol.x;
}

Certificate certify_cbf(const BarrierFunction& b, const Polytope& x0, const std::vector<Polytope>& danger,
                        const LinearSubsystem& sys, const DisturbanceSpec& dist, int samples, std::uint64_t seed) {
  b.validate();
  if (!is_subset(x0, b.set)) return {false, 1};
  for (const Polytope& d : danger) {
    if (!is_empty(intersect(b.set, d))) return {false, 2};
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const Index n = sys.n_state(), r = sys.n_measured();
  for (int s = 0; s < samples; ++s) {
    const VectorXd dir = VectorXd::NullaryExpr(n, [&] { return normal(rng); });
    const VectorXd x = ray_point(b.set, dir, s % 4 == 0 ? 1.0 : uni(rng));
    VectorXd w = VectorXd::Zero(r);
    if (r > 0 && dist.measured.rows() > 0)
      w = extreme_point(dist.measured, VectorXd::NullaryExpr(r, [&] { return normal(rng); }));
    try {
      supervise(b, sys, x, w, VectorXd::Zero(sys.n_input()), dist);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kSupervisionInfeasible) return {false, 3};
      throw;
    }
  }
  return {true, 0};
}

}  // namespace netinv::cbf
