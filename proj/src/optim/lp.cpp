#include "netinv/error.hpp"
#include "netinv/optim.hpp"
#include "simplex_core.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace netinv::optim {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

LpProblem LpProblem::with_variables(Index n) {
  LpProblem p;
  p.objective = VectorXd::Zero(n);
  p.a_ub.resize(0, n);
  p.a_eq.resize(0, n);
  p.lower = VectorXd::Constant(n, -kInf);
  p.upper = VectorXd::Constant(n, kInf);
  return p;
}

namespace {

template <class Row>
void append_row(MatrixXd& a, VectorXd& b, const Row& row, double rhs) {
  const Index m = a.rows();
  a.conservativeResize(m + 1, Eigen::NoChange);
  b.conservativeResize(m + 1);
  a.row(m) = row;
  b(m) = rhs;
}

}  // namespace

void LpProblem::add_inequality(const Eigen::RowVectorXd& row, double rhs) {
  append_row(a_ub, b_ub, row, rhs);
}

void LpProblem::add_equality(const Eigen::RowVectorXd& row, double rhs) {
  append_row(a_eq, b_eq, row, rhs);
}

namespace {

void check_dimensions(const LpProblem& p) {
  const Index n = p.objective.size();
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kDimensionMismatch, what); };
  if (p.a_ub.rows() != p.b_ub.size()) fail("a_ub rows != b_ub size");
  if (p.a_eq.rows() != p.b_eq.size()) fail("a_eq rows != b_eq size");
  if (p.a_ub.rows() > 0 && p.a_ub.cols() != n) fail("a_ub cols != variable count");
  if (p.a_eq.rows() > 0 && p.a_eq.cols() != n) fail("a_eq cols != variable count");
  if (p.lower.size() != 0 && p.lower.size() != n) fail("lower bound size");
  if (p.upper.size() != 0 && p.upper.size() != n) fail("upper bound size");
  if (!p.b_ub.allFinite() || !p.b_eq.allFinite()) fail("non-finite right-hand side");
  if (!p.objective.allFinite()) fail("non-finite objective");
}

enum class ColumnKind { kShift, kNegShift, kFreePos, kFreeNeg };
enum class RowKind { kIneq, kEq, kUpper };

// Equivalent problem  min c'z  s.t.  A z = b (b >= 0), z >= 0, where the
// first `n_struct` columns of A are structural and the rest are slacks.
struct StandardForm {
  MatrixXd a;
  VectorXd b;
  VectorXd cost;
  Index n_struct = 0;
  std::vector<double> row_sign;
  std::vector<RowKind> row_kind;
  std::vector<Index> row_source;
  std::vector<Index> col_var;
  std::vector<ColumnKind> col_kind;
  std::vector<Index> slack_row;  // per slack column
  VectorXd offset;               // x = offset + T z
  double cost_offset = 0.0;
};

StandardForm to_standard_form(const LpProblem& p, const VectorXd& lo, const VectorXd& up) {
  StandardForm s;
  const Index n = p.objective.size();
  s.offset = VectorXd::Zero(n);

  std::vector<Index> upper_rows;  // variables needing z <= u - l
  for (Index j = 0; j < n; ++j) {
    const bool has_lo = std::isfinite(lo(j));
    const bool has_up = std::isfinite(up(j));
    if (has_lo) {
      s.col_var.push_back(j);
      s.col_kind.push_back(ColumnKind::kShift);
      s.offset(j) = lo(j);
      if (has_up) upper_rows.push_back(j);
    } else if (has_up) {
      s.col_var.push_back(j);
      s.col_kind.push_back(ColumnKind::kNegShift);
      s.offset(j) = up(j);
    } else {
      s.col_var.push_back(j);
      s.col_kind.push_back(ColumnKind::kFreePos);
      s.col_var.push_back(j);
      s.col_kind.push_back(ColumnKind::kFreeNeg);
    }
  }
  s.n_struct = static_cast<Index>(s.col_var.size());

  const Index m_ub = p.a_ub.rows();
  const Index m_eq = p.a_eq.rows();
  const Index m_up = static_cast<Index>(upper_rows.size());
  const Index m = m_ub + m_eq + m_up;
  const Index n_slack = m_ub + m_up;

  s.a = MatrixXd::Zero(m, s.n_struct + n_slack);
  s.b = VectorXd::Zero(m);
  s.cost = VectorXd::Zero(s.n_struct + n_slack);

  auto column_coeff = [&](Index col) {
    switch (s.col_kind[col]) {
      case ColumnKind::kShift:
      case ColumnKind::kFreePos:
        return 1.0;
      default:
        return -1.0;
    }
  };
  for (Index c = 0; c < s.n_struct; ++c) {
    const Index j = s.col_var[c];
    const double sgn = column_coeff(c);
    s.cost(c) = sgn * p.objective(j);
    if (m_ub > 0) s.a.block(0, c, m_ub, 1) = sgn * p.a_ub.col(j);
    if (m_eq > 0) s.a.block(m_ub, c, m_eq, 1) = sgn * p.a_eq.col(j);
  }
  s.cost_offset = p.objective.dot(s.offset);

  Index slack = s.n_struct;
  for (Index r = 0; r < m_ub; ++r) {
    s.b(r) = p.b_ub(r) - p.a_ub.row(r).dot(s.offset);
    s.a(r, slack) = 1.0;
    s.slack_row.push_back(r);
    s.row_kind.push_back(RowKind::kIneq);
    s.row_source.push_back(r);
    ++slack;
  }
  for (Index r = 0; r < m_eq; ++r) {
    s.b(m_ub + r) = p.b_eq(r) - p.a_eq.row(r).dot(s.offset);
    s.row_kind.push_back(RowKind::kEq);
    s.row_source.push_back(r);
  }
  for (Index k = 0; k < m_up; ++k) {
    const Index j = upper_rows[static_cast<size_t>(k)];
    const Index r = m_ub + m_eq + k;
    // structural column of variable j (a kShift column)
    const auto it = std::find(s.col_var.begin(), s.col_var.end(), j);
    s.a(r, it - s.col_var.begin()) = 1.0;
    s.b(r) = up(j) - lo(j);
    s.a(r, slack) = 1.0;
    s.slack_row.push_back(r);
    s.row_kind.push_back(RowKind::kUpper);
    s.row_source.push_back(j);
    ++slack;
  }

  s.row_sign.assign(static_cast<size_t>(m), 1.0);
  for (Index r = 0; r < m; ++r) {
    if (s.b(r) < 0) {
      s.row_sign[static_cast<size_t>(r)] = -1.0;
      s.b(r) = -s.b(r);
      s.a.row(r) *= -1.0;
    }
  }
  return s;
}

// Maps standard-form row multipliers `pi` (Lagrange sign convention of
// c - A'pi >= 0) to the original constraint blocks. Returns the reduced
// cost of every column as well.
struct BlockMultipliers {
  VectorXd ub, eq, lower, upper;
};

BlockMultipliers map_multipliers(const LpProblem& p, const StandardForm& s, const VectorXd& pi,
                                 const VectorXd& struct_cost) {
  const Index n = p.objective.size();
  BlockMultipliers y;
  y.ub = VectorXd::Zero(p.a_ub.rows());
  y.eq = VectorXd::Zero(p.a_eq.rows());
  y.lower = VectorXd::Zero(n);
  y.upper = VectorXd::Zero(n);
  for (Index r = 0; r < s.a.rows(); ++r) {
    const double v = -s.row_sign[static_cast<size_t>(r)] * pi(r);
    const Index src = s.row_source[static_cast<size_t>(r)];
    switch (s.row_kind[static_cast<size_t>(r)]) {
      case RowKind::kIneq:
        y.ub(src) = std::max(v, 0.0);
        break;
      case RowKind::kEq:
        y.eq(src) = v;
        break;
      case RowKind::kUpper:
        y.upper(src) = std::max(v, 0.0);
        break;
    }
  }
  // g = c + A_ub'y_ub + A_eq'y_eq + y_upper must equal y_lower - (extra upper).
  VectorXd g = struct_cost;
  if (p.a_ub.rows() > 0) g += p.a_ub.transpose() * y.ub;
  if (p.a_eq.rows() > 0) g += p.a_eq.transpose() * y.eq;
  g += y.upper;
  for (Index c = 0; c < s.n_struct; ++c) {
    const Index j = s.col_var[static_cast<size_t>(c)];
    switch (s.col_kind[static_cast<size_t>(c)]) {
      case ColumnKind::kShift:
        y.lower(j) = std::max(g(j), 0.0);
        break;
      case ColumnKind::kNegShift:
        y.upper(j) += std::max(-g(j), 0.0);
        break;
      default:
        break;
    }
  }
  return y;
}

VectorXd standard_to_x(const StandardForm& s, const VectorXd& z) {
  VectorXd x = s.offset;
  for (Index c = 0; c < s.n_struct; ++c) {
    const Index j = s.col_var[static_cast<size_t>(c)];
    switch (s.col_kind[static_cast<size_t>(c)]) {
      case ColumnKind::kShift:
      case ColumnKind::kFreePos:
        x(j) += z(c);
        break;
      default:
        x(j) -= z(c);
        break;
    }
  }
  return x;
}

}  // namespace

Solution solve_lp(const LpProblem& problem, const Tolerances& tol) {
  check_dimensions(problem);
  const Index n = problem.objective.size();
  const VectorXd lo = problem.lower.size() ? problem.lower : VectorXd::Constant(n, -kInf);
  const VectorXd up = problem.upper.size() ? problem.upper : VectorXd::Constant(n, kInf);
  for (Index j = 0; j < n; ++j) {
    if (lo(j) > up(j)) {
      // Trivially infeasible bound pair.
      Solution sol;
      sol.status = Status::kInfeasible;
      FarkasCertificate cert;
      cert.ub = VectorXd::Zero(problem.a_ub.rows());
      cert.eq = VectorXd::Zero(problem.a_eq.rows());
      cert.lower = VectorXd::Zero(n);
      cert.upper = VectorXd::Zero(n);
      cert.lower(j) = 1.0;
      cert.upper(j) = 1.0;
      sol.farkas = cert;
      return sol;
    }
  }

  const StandardForm s = to_standard_form(problem, lo, up);
  const Index m = s.a.rows();
  const Index n_cols = s.a.cols();

  // Initial basis: slack where its coefficient is +1, artificial otherwise.
  std::vector<Index> basis(static_cast<size_t>(m), -1);
  for (Index c = s.n_struct; c < n_cols; ++c) {
    const Index r = s.slack_row[static_cast<size_t>(c - s.n_struct)];
    if (s.a(r, c) > 0) basis[static_cast<size_t>(r)] = c;
  }
  std::vector<Index> art_rows;
  for (Index r = 0; r < m; ++r)
    if (basis[static_cast<size_t>(r)] < 0) art_rows.push_back(r);
  const Index n_art = static_cast<Index>(art_rows.size());

  MatrixXd a_full(m, n_cols + n_art);
  a_full.leftCols(n_cols) = s.a;
  a_full.rightCols(n_art).setZero();
  for (Index k = 0; k < n_art; ++k) {
    a_full(art_rows[static_cast<size_t>(k)], n_cols + k) = 1.0;
    basis[static_cast<size_t>(art_rows[static_cast<size_t>(k)])] = n_cols + k;
  }

  detail::SimplexCore core(a_full, s.b, basis, n_cols, tol);
  Solution sol;

  if (n_art > 0) {
    VectorXd phase1_cost = VectorXd::Zero(n_cols + n_art);
    phase1_cost.tail(n_art).setOnes();
    // An artificial that has left the basis is never needed again.
    std::vector<char> can_enter(static_cast<size_t>(n_cols + n_art), 1);
    for (Index k = 0; k < n_art; ++k) can_enter[static_cast<size_t>(n_cols + k)] = 0;
    core.run(phase1_cost, can_enter);
    const double infeas = core.objective(phase1_cost);
    if (infeas > tol.feasibility * (1.0 + s.b.lpNorm<Eigen::Infinity>())) {
      const VectorXd pi = core.row_duals(phase1_cost);
      // Farkas in standard form: A'pi <= 0, b'pi > 0. Rewrite it with the
      // Lagrange sign convention (zero cost) to reuse the block mapping.
      const BlockMultipliers y = map_multipliers(problem, s, pi, VectorXd::Zero(n));
      sol.status = Status::kInfeasible;
      sol.farkas = FarkasCertificate{y.ub, y.eq, y.lower, y.upper};
      sol.iterations = core.iterations();
      return sol;
    }
    core.drive_out_artificials();
  }

  VectorXd phase2_cost = VectorXd::Zero(n_cols + n_art);
  phase2_cost.head(n_cols) = s.cost;
  std::vector<char> can_enter(static_cast<size_t>(n_cols + n_art), 1);
  for (Index k = 0; k < n_art; ++k) can_enter[static_cast<size_t>(n_cols + k)] = 0;
  const auto outcome = core.run(phase2_cost, can_enter);
  sol.iterations = core.iterations();

  if (outcome == detail::SimplexCore::Outcome::kUnbounded) {
    sol.status = Status::kUnbounded;
    const VectorXd dz = core.unbounded_direction();
    VectorXd ray = standard_to_x(s, dz.head(n_cols)) - s.offset;
    sol.ray = ray;
    sol.x = standard_to_x(s, core.primal().head(n_cols));
    sol.value = -kInf;
    return sol;
  }

  const VectorXd z = core.primal();
  sol.status = Status::kOptimal;
  sol.x = standard_to_x(s, z.head(n_cols));
  // Snap onto finite bounds to remove round-off.
  for (Index j = 0; j < n; ++j) sol.x(j) = std::clamp(sol.x(j), lo(j), up(j));
  sol.value = problem.objective.dot(sol.x);
  const VectorXd pi = core.row_duals(phase2_cost);
  const BlockMultipliers y = map_multipliers(problem, s, pi, problem.objective);
  sol.dual_ub = y.ub;
  sol.dual_eq = y.eq;
  sol.dual_lower = y.lower;
  sol.dual_upper = y.upper;
  return sol;
}

bool farkas_proves_infeasible(const LpProblem& p, const FarkasCertificate& cert, double tol) {
  const Index n = p.objective.size();
  if ((cert.ub.array() < -tol).any() || (cert.lower.array() < -tol).any() ||
      (cert.upper.array() < -tol).any())
    return false;
  VectorXd g = VectorXd::Zero(n);
  double rhs = 0.0;
  if (p.a_ub.rows() > 0) {
    g += p.a_ub.transpose() * cert.ub;
    rhs += p.b_ub.dot(cert.ub);
  }
  if (p.a_eq.rows() > 0) {
    g += p.a_eq.transpose() * cert.eq;
    rhs += p.b_eq.dot(cert.eq);
  }
  for (Index j = 0; j < n; ++j) {
    const double l = p.lower.size() ? p.lower(j) : -kInf;
    const double u = p.upper.size() ? p.upper(j) : kInf;
    if (cert.lower(j) > 0) {
      if (!std::isfinite(l)) return false;
      rhs -= l * cert.lower(j);
    }
    if (cert.upper(j) > 0) {
      if (!std::isfinite(u)) return false;
      rhs += u * cert.upper(j);
    }
    g(j) += cert.upper(j) - cert.lower(j);
  }
  const double scale = 1.0 + cert.ub.lpNorm<1>() + cert.eq.lpNorm<1>() + cert.lower.lpNorm<1>() +
                       cert.upper.lpNorm<1>();
  return g.lpNorm<Eigen::Infinity>() <= tol * scale && rhs < -tol * scale * 1e-3;
}

double lp_dual_value(const LpProblem& p, const Solution& sol) {
  double v = 0.0;
  if (p.a_ub.rows() > 0) v -= p.b_ub.dot(sol.dual_ub);
  if (p.a_eq.rows() > 0) v -= p.b_eq.dot(sol.dual_eq);
  for (Index j = 0; j < p.objective.size(); ++j) {
    if (sol.dual_lower(j) != 0.0 && p.lower.size()) v += p.lower(j) * sol.dual_lower(j);
    if (sol.dual_upper(j) != 0.0 && p.upper.size()) v -= p.upper(j) * sol.dual_upper(j);
  }
  return v;
}

double lp_primal_residual(const LpProblem& p, const VectorXd& x) {
  double r = 0.0;
  if (p.a_ub.rows() > 0) r = std::max(r, (p.a_ub * x - p.b_ub).maxCoeff());
  if (p.a_eq.rows() > 0) r = std::max(r, (p.a_eq * x - p.b_eq).cwiseAbs().maxCoeff());
  for (Index j = 0; j < x.size(); ++j) {
    if (p.lower.size()) r = std::max(r, p.lower(j) - x(j));
    if (p.upper.size()) r = std::max(r, x(j) - p.upper(j));
  }
  return std::max(r, 0.0);
}

}  // namespace netinv::optim
