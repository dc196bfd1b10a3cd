#include "simplex_core.hpp"

#include "netinv/error.hpp"

#include <algorithm>
#include <cmath>

namespace netinv::optim::detail {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {
constexpr int kRefactorPeriod = 40;
constexpr int kDegenerateRun = 20;
}

SimplexCore::SimplexCore(const MatrixXd& a, const VectorXd& b, std::vector<Index> basis,
                         Index first_artificial, const Tolerances& tol)
    : a_(a),
      b_(b),
      basis_(std::move(basis)),
      position_(static_cast<size_t>(a.cols()), -1),
      first_artificial_(first_artificial),
      tol_(tol) {
  for (size_t r = 0; r < basis_.size(); ++r) position_[static_cast<size_t>(basis_[r])] =
      static_cast<Index>(r);
  refactor();
}

void SimplexCore::refactor() {
  const Index m = a_.rows();
  if (m == 0) {
    binv_.resize(0, 0);
    xb_.resize(0);
    since_refactor_ = 0;
    return;
  }
  MatrixXd basis_matrix(m, m);
  for (Index r = 0; r < m; ++r) basis_matrix.col(r) = a_.col(basis_[static_cast<size_t>(r)]);
  binv_ = basis_matrix.partialPivLu().inverse();
  xb_ = binv_ * b_;
  if (!binv_.allFinite())
    throw Error(ErrorCode::kSingular, "simplex basis became singular");
  for (Index r = 0; r < m; ++r)
    if (xb_(r) < 0 && xb_(r) > -tol_.feasibility) xb_(r) = 0.0;
  since_refactor_ = 0;
}

void SimplexCore::pivot(Index row, Index col, const VectorXd& w) {
  const double theta = xb_(row) / w(row);
  xb_ -= theta * w;
  xb_(row) = theta;
  const Eigen::RowVectorXd pivot_row = binv_.row(row) / w(row);
  binv_ -= w * pivot_row;
  binv_.row(row) = pivot_row;
  position_[static_cast<size_t>(basis_[static_cast<size_t>(row)])] = -1;
  basis_[static_cast<size_t>(row)] = col;
  position_[static_cast<size_t>(col)] = row;
  ++iterations_;
  if (++since_refactor_ >= kRefactorPeriod) refactor();
}

SimplexCore::Outcome SimplexCore::run(const VectorXd& cost, const std::vector<char>& can_enter) {
  const Index m = a_.rows();
  const Index n = a_.cols();
  const int guard = 200 * static_cast<int>(m + n) + 1000;
  VectorXd cb(m);
  int degenerate_run = 0;
  for (int it = 0; it < guard; ++it) {
    for (Index r = 0; r < m; ++r) cb(r) = cost(basis_[static_cast<size_t>(r)]);
    const VectorXd y = binv_.transpose() * cb;

    // Dantzig pricing; Bland's first improving column after a run of
    // degenerate pivots, until the objective moves again.
    const bool bland = degenerate_run >= kDegenerateRun;
    Index enter = -1;
    double most = -tol_.optimality;
    for (Index j = 0; j < n; ++j) {
      if (position_[static_cast<size_t>(j)] >= 0 || !can_enter[static_cast<size_t>(j)]) continue;
      const double d = cost(j) - y.dot(a_.col(j));
      if (d < most) {
        enter = j;
        if (bland) break;
        most = d;
      }
    }
    if (enter < 0) return Outcome::kOptimal;

    const VectorXd w = binv_ * a_.col(enter);
    // Relative pivot threshold: tiny entries of a large column spoil B^-1.
    const double piv_tol = std::max(tol_.zero_pivot, 1e-9 * w.lpNorm<Eigen::Infinity>());
    Index leave = -1;
    double best = optim::kInf;
    for (Index r = 0; r < m; ++r) {
      double ratio;
      // A zero-valued basic artificial must leave rather than turn nonzero.
      if (is_artificial(basis_[static_cast<size_t>(r)]) && xb_(r) <= tol_.feasibility &&
          std::abs(w(r)) > piv_tol) {
        ratio = 0.0;
      } else if (w(r) > piv_tol) {
        ratio = std::max(xb_(r), 0.0) / w(r);
      } else {
        continue;
      }
      const double slack = 1e-12 * (1.0 + best);
      if (leave < 0 || ratio < best - slack ||
          (ratio <= best + slack && basis_[static_cast<size_t>(r)] < basis_[static_cast<size_t>(leave)])) {
        if (leave < 0 || ratio < best - slack) best = ratio;
        leave = r;
      }
    }
    if (leave < 0) {
      ray_ = VectorXd::Zero(n);
      ray_(enter) = 1.0;
      for (Index r = 0; r < m; ++r) ray_(basis_[static_cast<size_t>(r)]) = -w(r);
      return Outcome::kUnbounded;
    }
    if (xb_(leave) < 0) xb_(leave) = 0.0;
    degenerate_run = best * std::abs(w(leave)) <= tol_.feasibility ? degenerate_run + 1 : 0;
    pivot(leave, enter, w);
  }
  throw Error(ErrorCode::kDegenerate, "simplex iteration guard reached (cycling)");
}

void SimplexCore::drive_out_artificials() {
  const Index m = a_.rows();
  for (Index r = 0; r < m; ++r) {
    if (!is_artificial(basis_[static_cast<size_t>(r)])) continue;
    const Eigen::RowVectorXd row = binv_.row(r) * a_.leftCols(first_artificial_);
    Index best = -1;
    for (Index j = 0; j < first_artificial_; ++j) {
      if (position_[static_cast<size_t>(j)] >= 0) continue;
      if (std::abs(row(j)) > 1e-9 * (1.0 + row.lpNorm<Eigen::Infinity>()) && (best < 0 || std::abs(row(j)) > std::abs(row(best)))) best = j;
    }
    if (best < 0) continue;  // redundant row, the artificial stays basic at zero
    const VectorXd w = binv_ * a_.col(best);
    xb_(r) = 0.0;
    pivot(r, best, w);
  }
}

double SimplexCore::objective(const VectorXd& cost) const {
  double v = 0.0;
  for (size_t r = 0; r < basis_.size(); ++r) v += cost(basis_[r]) * xb_(static_cast<Index>(r));
  return v;
}

VectorXd SimplexCore::primal() const {
  VectorXd z = VectorXd::Zero(a_.cols());
  for (size_t r = 0; r < basis_.size(); ++r)
    z(basis_[r]) = std::max(xb_(static_cast<Index>(r)), 0.0);
  return z;
}

VectorXd SimplexCore::row_duals(const VectorXd& cost) const {
  VectorXd cb(static_cast<Index>(basis_.size()));
  for (size_t r = 0; r < basis_.size(); ++r) cb(static_cast<Index>(r)) = cost(basis_[r]);
  return binv_.transpose() * cb;
}

}  // namespace netinv::optim::detail
