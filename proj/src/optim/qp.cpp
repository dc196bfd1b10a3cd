#include "netinv/error.hpp"
#include "netinv/optim.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace netinv::optim {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

QpProblem QpProblem::with_variables(Index n) {
  QpProblem p;
  p.hessian = MatrixXd::Zero(n, n);
  p.linear = VectorXd::Zero(n);
  p.a_ub.resize(0, n);
  p.a_eq.resize(0, n);
  return p;
}

namespace {

void append_row(MatrixXd& a, VectorXd& b, const Eigen::RowVectorXd& row, double rhs) {
  const Index m = a.rows();
  a.conservativeResize(m + 1, row.size());
  b.conservativeResize(m + 1);
  a.row(m) = row;
  b(m) = rhs;
}

constexpr double kPsdShift = 1e-10;

void check_qp(const QpProblem& p) {
  const Index n = p.linear.size();
  auto fail = [](const char* what) { throw Error(ErrorCode::kDimensionMismatch, what); };
  if (p.hessian.rows() != n || p.hessian.cols() != n) fail("hessian size");
  if (p.a_ub.rows() != p.b_ub.size()) fail("a_ub rows != b_ub size");
  if (p.a_eq.rows() != p.b_eq.size()) fail("a_eq rows != b_eq size");
  if (p.a_ub.rows() > 0 && p.a_ub.cols() != n) fail("a_ub cols");
  if (p.a_eq.rows() > 0 && p.a_eq.cols() != n) fail("a_eq cols");
  if (!p.b_ub.allFinite() || !p.b_eq.allFinite()) fail("non-finite right-hand side");
  if ((p.hessian - p.hessian.transpose()).cwiseAbs().maxCoeff() > 1e-10 * (1.0 + p.hessian.cwiseAbs().maxCoeff()))
    throw Error(ErrorCode::kNotPsd, "hessian is not symmetric");
}

// Equality-constrained subproblem solver for a given working set.
class StepSolver {
 public:
  StepSolver(const MatrixXd& h, const VectorXd& f) : h_(h), f_(f) {
    const Index n = h.rows();
    Eigen::LLT<MatrixXd> llt(h);
    if (llt.info() == Eigen::Success && n > 0) {
      const VectorXd d = MatrixXd(llt.matrixL()).diagonal().cwiseAbs2();
      if (d.minCoeff() > 1e-12 * d.maxCoeff()) {
        range_space_ = true;
        hinv_ = llt.solve(MatrixXd::Identity(n, n));
        x_unc_ = -hinv_ * f;
      }
    }
    if (!range_space_) h_reg_ = h + kPsdShift * MatrixXd::Identity(n, n);
  }

  bool range_space() const { return range_space_; }

  // Minimizer of the objective on {A_W x = b_W} together with its multipliers.
  void solve(const MatrixXd& aw, const VectorXd& bw, VectorXd& x, VectorXd& lambda) const {
    const Index n = f_.size();
    const Index k = aw.rows();
    if (range_space_) {
      if (k == 0) {
        x = x_unc_;
        lambda.resize(0);
        return;
      }
      const MatrixXd v = hinv_ * aw.transpose();
      const MatrixXd s = aw * v;
      lambda = s.ldlt().solve(aw * x_unc_ - bw);
      x = x_unc_ - v * lambda;
      return;
    }
    MatrixXd kkt = MatrixXd::Zero(n + k, n + k);
    kkt.topLeftCorner(n, n) = h_reg_;
    kkt.topRightCorner(n, k) = aw.transpose();
    kkt.bottomLeftCorner(k, n) = aw;
    VectorXd rhs(n + k);
    rhs.head(n) = -f_;
    rhs.tail(k) = bw;
    const VectorXd sol = kkt.partialPivLu().solve(rhs);
    x = sol.head(n);
    lambda = sol.tail(k);
  }

 private:
  const MatrixXd& h_;
  const VectorXd& f_;
  bool range_space_ = false;
  MatrixXd hinv_;
  MatrixXd h_reg_;
  VectorXd x_unc_;
};

double max_violation(const QpProblem& p, const VectorXd& x) {
  double r = 0.0;
  if (p.a_ub.rows() > 0) r = std::max(r, (p.a_ub * x - p.b_ub).maxCoeff());
  if (p.a_eq.rows() > 0) r = std::max(r, (p.a_eq * x - p.b_eq).cwiseAbs().maxCoeff());
  return r;
}

// Linearly independent subset of the equality rows (Gram-Schmidt).
std::vector<Index> independent_rows(const MatrixXd& a) {
  std::vector<Index> keep;
  std::vector<VectorXd> basis;
  for (Index r = 0; r < a.rows(); ++r) {
    VectorXd v = a.row(r).transpose();
    const double scale = v.norm();
    for (const auto& q : basis) v -= q.dot(v) * q;
    if (v.norm() > 1e-9 * std::max(scale, 1e-300)) {
      basis.push_back(v.normalized());
      keep.push_back(r);
    }
  }
  return keep;
}

}  // namespace

void QpProblem::add_inequality(const Eigen::RowVectorXd& row, double rhs) {
  append_row(a_ub, b_ub, row, rhs);
}

void QpProblem::add_equality(const Eigen::RowVectorXd& row, double rhs) {
  append_row(a_eq, b_eq, row, rhs);
}

Solution solve_qp(const QpProblem& problem, const Tolerances& tol,
                  const std::optional<VectorXd>& warm_start) {
  check_qp(problem);
  const Index n = problem.linear.size();
  const Index m_ub = problem.a_ub.rows();
  const Index m_eq = problem.a_eq.rows();
  const MatrixXd h = 0.5 * (problem.hessian + problem.hessian.transpose());
  const VectorXd& f = problem.linear;

  if (n > 0) {
    Eigen::LLT<MatrixXd> psd(h + kPsdShift * MatrixXd::Identity(n, n));
    if (psd.info() != Eigen::Success) throw Error(ErrorCode::kNotPsd, "hessian fails the Cholesky test");
  }

  const StepSolver step(h, f);
  const std::vector<Index> eq_rows = independent_rows(problem.a_eq);
  const Index k_eq = static_cast<Index>(eq_rows.size());
  const double feas = tol.feasibility;

  // Starting point: warm start, else the minimizer on the equality rows,
  // else the nearest feasible point found by a phase-1 LP around it.
  VectorXd x;
  if (warm_start && warm_start->size() == n && max_violation(problem, *warm_start) <= feas) {
    x = *warm_start;
  } else {
    MatrixXd aw(k_eq, n);
    VectorXd bw(k_eq);
    for (Index r = 0; r < k_eq; ++r) {
      aw.row(r) = problem.a_eq.row(eq_rows[static_cast<size_t>(r)]);
      bw(r) = problem.b_eq(eq_rows[static_cast<size_t>(r)]);
    }
    VectorXd lam;
    step.solve(aw, bw, x, lam);
    if (!x.allFinite() || x.norm() > 1e8) x = VectorXd::Zero(n);
    if (max_violation(problem, x) > feas) {
      LpProblem lp = LpProblem::with_variables(n);
      lp.a_ub = problem.a_ub;
      lp.b_ub = problem.b_ub;
      lp.a_eq = problem.a_eq;
      lp.b_eq = problem.b_eq;
      if (m_ub > 0) lp.b_ub -= problem.a_ub * x;
      if (m_eq > 0) lp.b_eq -= problem.a_eq * x;
      const Solution p1 = solve_lp(lp, tol);
      if (p1.status != Status::kOptimal) {
        Solution sol;
        sol.status = Status::kInfeasible;
        if (p1.farkas) {
          FarkasCertificate cert = *p1.farkas;
          cert.lower = VectorXd::Zero(n);
          cert.upper = VectorXd::Zero(n);
          sol.farkas = cert;
        }
        sol.iterations = p1.iterations;
        return sol;
      }
      x += p1.x;
    }
  }

  // Working set: independent equality rows first, then active inequalities.
  std::vector<Index> working;  // inequality row indices
  std::vector<char> in_working(static_cast<size_t>(m_ub), 0);
  auto build = [&](MatrixXd& aw, VectorXd& bw) {
    const Index k = k_eq + static_cast<Index>(working.size());
    aw.resize(k, n);
    bw.resize(k);
    for (Index r = 0; r < k_eq; ++r) {
      aw.row(r) = problem.a_eq.row(eq_rows[static_cast<size_t>(r)]);
      bw(r) = problem.b_eq(eq_rows[static_cast<size_t>(r)]);
    }
    for (size_t i = 0; i < working.size(); ++i) {
      aw.row(k_eq + static_cast<Index>(i)) = problem.a_ub.row(working[i]);
      bw(k_eq + static_cast<Index>(i)) = problem.b_ub(working[i]);
    }
  };

  Solution sol;
  const int guard = 50 * static_cast<int>(n + m_ub + m_eq) + 1000;
  MatrixXd aw;
  VectorXd bw, xw, lambda;
  for (int it = 0;; ++it) {
    if (it >= guard) throw Error(ErrorCode::kDegenerate, "active-set iteration guard reached");
    build(aw, bw);
    step.solve(aw, bw, xw, lambda);
    const VectorXd p = xw - x;
    const double pn = p.lpNorm<Eigen::Infinity>();
    sol.iterations = it + 1;

    if (pn <= 1e-12 * (1.0 + x.lpNorm<Eigen::Infinity>())) {
      Index drop = -1;
      double most_negative = -tol.optimality;
      for (size_t i = 0; i < working.size(); ++i) {
        const double l = lambda(k_eq + static_cast<Index>(i));
        if (l < most_negative) {
          most_negative = l;
          drop = static_cast<Index>(i);
        }
      }
      if (drop < 0) break;
      in_working[static_cast<size_t>(working[static_cast<size_t>(drop)])] = 0;
      working.erase(working.begin() + drop);
      continue;
    }

    double alpha = 1.0;
    Index block = -1;
    for (Index r = 0; r < m_ub; ++r) {
      if (in_working[static_cast<size_t>(r)]) continue;
      const double ap = problem.a_ub.row(r).dot(p);
      if (ap <= tol.zero_pivot * (1.0 + problem.a_ub.row(r).norm() * pn)) continue;
      const double ratio = std::max(problem.b_ub(r) - problem.a_ub.row(r).dot(x), 0.0) / ap;
      if (ratio < alpha) {
        alpha = ratio;
        block = r;
      }
    }
    if (block < 0 && !step.range_space() && pn > 1e7 * (1.0 + x.lpNorm<Eigen::Infinity>())) {
      sol.status = Status::kUnbounded;
      sol.x = x;
      sol.ray = p.normalized();
      sol.value = -kInf;
      return sol;
    }
    x += alpha * p;
    if (block >= 0) {
      working.push_back(block);
      in_working[static_cast<size_t>(block)] = 1;
    }
  }

  sol.status = Status::kOptimal;
  sol.x = x;
  sol.value = 0.5 * x.dot(h * x) + f.dot(x);
  sol.dual_ub = VectorXd::Zero(m_ub);
  sol.dual_eq = VectorXd::Zero(m_eq);
  for (Index r = 0; r < k_eq; ++r) sol.dual_eq(eq_rows[static_cast<size_t>(r)]) = lambda(r);
  for (size_t i = 0; i < working.size(); ++i)
    sol.dual_ub(working[i]) = std::max(lambda(k_eq + static_cast<Index>(i)), 0.0);
  return sol;
}

double qp_kkt_residual(const QpProblem& problem, const Solution& sol) {
  const VectorXd& x = sol.x;
  VectorXd grad = problem.hessian * x + problem.linear;
  double r = 0.0;
  if (problem.a_ub.rows() > 0) {
    grad += problem.a_ub.transpose() * sol.dual_ub;
    const VectorXd slack = problem.a_ub * x - problem.b_ub;
    r = std::max(r, slack.maxCoeff());
    r = std::max(r, -sol.dual_ub.minCoeff());
    r = std::max(r, slack.cwiseProduct(sol.dual_ub).cwiseAbs().maxCoeff());
  }
  if (problem.a_eq.rows() > 0) {
    grad += problem.a_eq.transpose() * sol.dual_eq;
    r = std::max(r, (problem.a_eq * x - problem.b_eq).lpNorm<Eigen::Infinity>());
  }
  return std::max(r, grad.lpNorm<Eigen::Infinity>());
}

}  // namespace netinv::optim
