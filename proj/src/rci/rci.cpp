#include "netinv/rci.hpp"

#include "netinv/error.hpp"
#include "netinv/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace netinv {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

MatrixXd LinearSubsystem::e_measured() const {
  MatrixXd e(n_state(), n_measured());
  e << e_coupling, e_exo;
  return e;
}

void LinearSubsystem::validate() const {
  const Index n = a.rows();
  auto fail = [](const char* what) { throw Error(ErrorCode::kDimensionMismatch, what); };
  if (a.cols() != n) fail("A must be square");
  if (b.rows() != n) fail("B rows");
  if (e_coupling.rows() != n && e_coupling.cols() > 0) fail("E1 rows");
  if (e_exo.rows() != n && e_exo.cols() > 0) fail("E2 rows");
  if (c.size() != n) fail("output row size");
  if (c.isZero()) fail("output row is zero");
  if (coupling_scale.size() != 0 && coupling_scale.size() != n_coupling()) fail("coupling_scale size");
  if (ts < 0) fail("negative sample time");
}

namespace {

// Dense LP assembled row by row over a fixed variable layout.
class LpBuilder {
 public:
  Index add(Index count, double lo, double hi) {
    const Index start = n_;
    n_ += count;
    lo_.insert(lo_.end(), static_cast<size_t>(count), lo);
    hi_.insert(hi_.end(), static_cast<size_t>(count), hi);
    return start;
  }
  Index size() const { return n_; }
  void set_bounds(Index var, double lo, double hi) {
    lo_[static_cast<size_t>(var)] = lo;
    hi_[static_cast<size_t>(var)] = hi;
  }

  struct Row {
    std::vector<std::pair<Index, double>> terms;
    void add(Index var, double coef) {
      if (coef != 0.0) terms.emplace_back(var, coef);
    }
  };

  void le(const Row& r, double rhs) { ub_.emplace_back(r, rhs); }
  void eq(const Row& r, double rhs) { eq_.emplace_back(r, rhs); }

  optim::LpProblem build(const VectorXd& cost) const {
    optim::LpProblem lp = optim::LpProblem::with_variables(n_);
    lp.objective = cost;
    lp.a_ub = MatrixXd::Zero(static_cast<Index>(ub_.size()), n_);
    lp.b_ub.resize(static_cast<Index>(ub_.size()));
    for (size_t i = 0; i < ub_.size(); ++i) {
      for (const auto& [v, c] : ub_[i].first.terms) lp.a_ub(static_cast<Index>(i), v) += c;
      lp.b_ub(static_cast<Index>(i)) = ub_[i].second;
    }
    lp.a_eq = MatrixXd::Zero(static_cast<Index>(eq_.size()), n_);
    lp.b_eq.resize(static_cast<Index>(eq_.size()));
    for (size_t i = 0; i < eq_.size(); ++i) {
      for (const auto& [v, c] : eq_[i].first.terms) lp.a_eq(static_cast<Index>(i), v) += c;
      lp.b_eq(static_cast<Index>(i)) = eq_[i].second;
    }
    lp.lower = Eigen::Map<const VectorXd>(lo_.data(), n_);
    lp.upper = Eigen::Map<const VectorXd>(hi_.data(), n_);
    return lp;
  }

 private:
  Index n_ = 0;
  std::vector<double> lo_, hi_;
  std::vector<std::pair<Row, double>> ub_, eq_;
};

void check_inputs(const LinearSubsystem& sys, const MatrixXd& p, const VectorXd& q,
                  const DisturbanceSpec& dist) {
  sys.validate();
  auto fail = [](const char* what) { throw Error(ErrorCode::kDimensionMismatch, what); };
  if (p.cols() != sys.n_state() || q.size() != p.rows()) fail("template and q sizes");
  if (dist.measured.rows() > 0 && dist.measured.dim() != sys.n_measured()) fail("measured set dimension");
  if (dist.unmeasured.size() != 0 && dist.unmeasured.size() != sys.n_state()) fail("unmeasured bound size");
  if (dist.input.dim() != sys.n_input() && dist.input.rows() > 0) fail("input set dimension");
  if (dist.measurement_error.size() != 0 && dist.measurement_error.size() != sys.n_measured())
    fail("measurement error size");
}

}  // namespace

OneStepResult one_step_propagate(const LinearSubsystem& sys, const MatrixXd& p, const VectorXd& q,
                                 const DisturbanceSpec& dist, const VectorXd& caps, const VectorXd& floor) {
  check_inputs(sys, p, q, dist);
  const Index n = sys.n_state();
  const Index m = sys.n_input();
  const Index r = sys.n_measured();
  const Index big_l = p.rows();
  const MatrixXd em = sys.e_measured();
  const MatrixXd& g = dist.measured.p;
  const VectorXd& gq = dist.measured.q;
  const Index n_g = r > 0 ? g.rows() : 0;
  const MatrixXd& h = dist.input.p;
  const VectorXd& hq = dist.input.q;
  const VectorXd wu = dist.unmeasured.size() ? dist.unmeasured : VectorXd::Zero(n);

  std::vector<Index> delay_cols;
  for (Index c = 0; c < r; ++c)
    if (dist.measurement_error.size() && dist.measurement_error(c) > 0) delay_cols.push_back(c);
  const Index n_delay = static_cast<Index>(delay_cols.size());

  LpBuilder lb;
  const Index v_q = lb.add(big_l, -optim::kInf, optim::kInf);
  for (Index k = 0; k < big_l; ++k) {
    const double lo = floor.size() ? floor(k) : -optim::kInf;
    const double hi = caps.size() ? caps(k) : optim::kInf;
    lb.set_bounds(v_q + k, lo, hi);
  }
  const Index v_ff = lb.add(m * r, -optim::kInf, optim::kInf);
  const Index v_fb = lb.add(m * n, -optim::kInf, optim::kInf);
  auto kff = [&](Index a, Index c) { return v_ff + a * r + c; };
  auto kfb = [&](Index a, Index t) { return v_fb + a * n + t; };

  // Robust row: max over x in Poly(P,q), w in W_m, delay error, w_u of
  // coef_x'x + coef_w'w, with coef linear in the gains, bounded by rhs.
  auto robust_row = [&](const RowVectorXd& row_b, const RowVectorXd& const_x, const RowVectorXd& const_w,
                        double constant, Index bound_var, double rhs) {
    const Index v_mu = lb.add(big_l, 0.0, optim::kInf);
    const Index v_nu = lb.add(n_g, 0.0, optim::kInf);
    const Index v_d = lb.add(n_delay, 0.0, optim::kInf);
    LpBuilder::Row top;
    for (Index i = 0; i < big_l; ++i) top.add(v_mu + i, q(i));
    for (Index i = 0; i < n_g; ++i) top.add(v_nu + i, gq(i));
    for (Index k = 0; k < n_delay; ++k) top.add(v_d + k, dist.measurement_error(delay_cols[static_cast<size_t>(k)]));
    if (bound_var >= 0) top.add(bound_var, -1.0);
    lb.le(top, rhs - constant);
    for (Index t = 0; t < n; ++t) {
      LpBuilder::Row e;
      for (Index i = 0; i < big_l; ++i) e.add(v_mu + i, p(i, t));
      for (Index a = 0; a < m; ++a) e.add(kfb(a, t), -row_b(a));
      lb.eq(e, const_x(t));
    }
    for (Index c = 0; c < r; ++c) {
      LpBuilder::Row e;
      for (Index i = 0; i < n_g; ++i) e.add(v_nu + i, g(i, c));
      for (Index a = 0; a < m; ++a) e.add(kff(a, c), -row_b(a));
      lb.eq(e, const_w(c));
    }
    for (Index k = 0; k < n_delay; ++k) {
      const Index c = delay_cols[static_cast<size_t>(k)];
      for (double sgn : {1.0, -1.0}) {
        LpBuilder::Row e;
        for (Index a = 0; a < m; ++a) e.add(kff(a, c), sgn * row_b(a));
        e.add(v_d + k, -1.0);
        lb.le(e, 0.0);
      }
    }
  };

  for (Index k = 0; k < big_l; ++k) {
    const RowVectorXd pk = p.row(k);
    robust_row(pk * sys.b, pk * sys.a, r > 0 ? RowVectorXd(pk * em) : RowVectorXd(0), pk.cwiseAbs().dot(wu),
               v_q + k, 0.0);
  }
  for (Index j = 0; j < h.rows(); ++j)
    robust_row(h.row(j), RowVectorXd::Zero(n), RowVectorXd::Zero(r), 0.0, -1, hq(j));

  VectorXd cost = VectorXd::Zero(lb.size());
  cost.segment(v_q, big_l).setOnes();
  const optim::LpProblem lp = lb.build(cost);
  const optim::Solution sol = optim::solve_lp(lp);
  if (sol.status == optim::Status::kInfeasible) {
    int row = -1;
    if (sol.farkas && caps.size()) {
      Index best;
      const double mx = sol.farkas->upper.segment(v_q, big_l).maxCoeff(&best);
      if (mx > 0) row = static_cast<int>(best);
    }
    throw Error(ErrorCode::kInfeasible, "no gain propagates the set within the input and cap constraints", row);
  }
  if (sol.status != optim::Status::kOptimal)
    throw Error(ErrorCode::kInfeasible, "one-step LP is unbounded (template does not bound the set)");

  OneStepResult out;
  out.q_plus = sol.x.segment(v_q, big_l);
  out.k_ff.resize(m, r);
  out.k_fb.resize(m, n);
  for (Index a = 0; a < m; ++a) {
    for (Index c = 0; c < r; ++c) out.k_ff(a, c) = sol.x(kff(a, c));
    for (Index t = 0; t < n; ++t) out.k_fb(a, t) = sol.x(kfb(a, t));
  }
  return out;
}

RciResult compute_mrci(const LinearSubsystem& sys, const MatrixXd& p, const VectorXd& q0,
                       const DisturbanceSpec& dist, const RciOptions& opt) {
  check_inputs(sys, p, q0, dist);
  if ((q0.array() <= 0).any()) throw Error(ErrorCode::kDimensionMismatch, "seed q0 must be positive");
  VectorXd q = q0;
  if (opt.floor.size()) q = q.cwiseMax(opt.floor);
  const double limit = opt.blowup * q0.maxCoeff();

  RciResult res;
  OneStepResult step;
  VectorXd last_inc = VectorXd::Zero(q.size());
  double rho = 0.0;
  for (int it = 1; it <= opt.max_iter; ++it) {
    step = one_step_propagate(sys, p, q, dist, opt.caps, opt.floor);
    res.iterations = it;
    Index worst;
    if (step.q_plus.maxCoeff(&worst) > limit)
      throw Error(ErrorCode::kDiverged, "template offsets exceed the blow-up bound", static_cast<int>(worst));
    const VectorXd inc = step.q_plus - q;
    const double prev_norm = last_inc.lpNorm<Eigen::Infinity>();
    if (prev_norm > 0) rho = std::clamp(inc.lpNorm<Eigen::Infinity>() / prev_norm, 0.0, 0.9999);
    last_inc = inc;
    if ((inc.array() <= opt.eps).all()) {
      res.converged = true;
      break;
    }
    q = step.q_plus;
  }
  res.set.p = p;
  res.set.q = res.converged ? q : step.q_plus;
  res.k_ff = step.k_ff;
  res.k_fb = step.k_fb;
  if (!res.converged || !opt.certify) return res;

  // The iterates approach the fixed point from below roughly along the last
  // increment, shrinking by rho per step: extrapolate the remaining gap
  // rho/(1-rho)*inc and check that the one-step LP maps the set into itself.
  const VectorXd inc = last_inc.cwiseMax(0.0);
  const double tail = rho / (1.0 - rho);
  std::vector<VectorXd> candidates = {q};
  for (double f : {1.02, 1.2, 2.0, 5.0}) candidates.push_back(step.q_plus + f * tail * inc);
  for (double beta : {1.0, 4.0, 16.0, 64.0, 256.0, 1000.0}) candidates.push_back(q.array() + beta * opt.eps);
  for (VectorXd qc : candidates) {
    if (opt.caps.size()) qc = qc.cwiseMin(opt.caps);
    try {
      const OneStepResult s = one_step_propagate(sys, p, qc, dist, qc, opt.floor);
      res.set.q = qc;
      res.k_ff = s.k_ff;
      res.k_fb = s.k_fb;
      res.certified = true;
      return res;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kInfeasible) throw;
    }
  }
  return res;
}

VectorXd delay_disturbance_bound(const LinearSubsystem& sys, const MatrixXd& k_ff, double omega_max, double tau) {
  const Index n = sys.n_state();
  VectorXd out = VectorXd::Zero(n);
  if (tau <= 0 || k_ff.size() == 0) return out;
  const MatrixXd bk = sys.b * k_ff.leftCols(sys.n_coupling());
  for (Index c = 0; c < bk.cols(); ++c) {
    const double scale = sys.coupling_scale.size() ? sys.coupling_scale(c) : 1.0;
    out += bk.col(c).cwiseAbs() * scale;
  }
  return out * omega_max * tau;
}

MatrixXd fan_template(Index n, int directions) {
  if (n == 1) return (MatrixXd(2, 1) << 1.0, -1.0).finished();
  if (n != 2) {
    MatrixXd p(2 * n, n);
    p << MatrixXd::Identity(n, n), -MatrixXd::Identity(n, n);
    return p;
  }
  std::vector<RowVectorXd> rows;
  for (int k = 0; k < directions; ++k) {
    const double ang = 2.0 * std::numbers::pi * k / directions;
    RowVectorXd row(2);
    row << std::cos(ang), std::sin(ang);
    for (Index j = 0; j < 2; ++j)
      if (std::abs(row(j)) < 1e-14) row(j) = 0.0;
    rows.push_back(row);
  }
  for (double s : {1.0, -1.0}) {
    const RowVectorXd axis = (RowVectorXd(2) << 0.0, s).finished();
    if (std::none_of(rows.begin(), rows.end(), [&](const RowVectorXd& r) { return (r - axis).norm() < 1e-12; }))
      rows.push_back(axis);
  }
  MatrixXd p(static_cast<Index>(rows.size()), 2);
  for (size_t i = 0; i < rows.size(); ++i) p.row(static_cast<Index>(i)) = rows[i];
  return p;
}

std::pair<Index, Index> axis_rows(const MatrixXd& p, Index axis) {
  Index pos = -1, neg = -1;
  const RowVectorXd e = RowVectorXd::Unit(p.cols(), axis);
  for (Index k = 0; k < p.rows(); ++k) {
    if ((p.row(k) - e).norm() < 1e-12) pos = k;
    if ((p.row(k) + e).norm() < 1e-12) neg = k;
  }
  return {pos, neg};
}

}  // namespace netinv
