#pragma once

#include "netinv/optim.hpp"

#include <Eigen/Dense>

#include <vector>

namespace netinv::optim::detail {

// Revised simplex on  A z = b, z >= 0  with an explicit dense basis inverse.
// Columns with index >= `first_artificial` are artificial: once they leave
// the basis they never re-enter, and while basic they are held at zero.
class SimplexCore {
 public:
  enum class Outcome { kOptimal, kUnbounded };

  SimplexCore(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, std::vector<Eigen::Index> basis,
              Eigen::Index first_artificial, const Tolerances& tol);

  /// Dantzig pricing, Bland's rule after a run of degenerate pivots.
  /// Throws Error{kDegenerate} if the iteration guard trips.
  Outcome run(const Eigen::VectorXd& cost, const std::vector<char>& can_enter);

  /// Pivot basic artificials out on any admissible column (degenerate pivots).
  void drive_out_artificials();

  double objective(const Eigen::VectorXd& cost) const;
  Eigen::VectorXd primal() const;
  Eigen::VectorXd row_duals(const Eigen::VectorXd& cost) const;
  Eigen::VectorXd unbounded_direction() const { return ray_; }
  int iterations() const { return iterations_; }

 private:
  void refactor();
  void pivot(Eigen::Index row, Eigen::Index col, const Eigen::VectorXd& w);
  bool is_artificial(Eigen::Index col) const { return col >= first_artificial_; }

  const Eigen::MatrixXd& a_;
  Eigen::VectorXd b_;
  std::vector<Eigen::Index> basis_;
  std::vector<Eigen::Index> position_;  // row of a basic column, -1 otherwise
  Eigen::Index first_artificial_;
  Tolerances tol_;
  Eigen::MatrixXd binv_;
  Eigen::VectorXd xb_;
  Eigen::VectorXd ray_;
  int iterations_ = 0;
  int since_refactor_ = 0;
};

}  // namespace netinv::optim::detail
