#pragma once

#include "netinv/rci.hpp"
#include "netinv/stl.hpp"

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

namespace netinv::contract {

/// One node as seen by contract synthesis. The coupling columns of `sys`
/// are "axes": axis bound = axis_weights * (neighbor output bounds). With one
/// column per neighbor the weights are the identity; a summable combination
/// has a single row of positive weights.
struct NodeModel {
  int id = 0;
  LinearSubsystem sys;  // discrete time
  std::vector<int> neighbors;
  Eigen::MatrixXd axis_weights;  // n_coupling x |neighbors|
  Polytope exo;                  // exogenous disturbance set, over d
  Eigen::VectorXd unmeasured;
  Polytope input;
  Eigen::VectorXd measurement_error;  // per measured column (axes then exo)
  Eigen::MatrixXd templ;              // RCI template P
  Eigen::VectorXd q0;
  RciOptions rci;

  Eigen::Index n_axes() const { return sys.n_coupling(); }
  /// Axis bounds implied by the network bound vector y.
  Eigen::VectorXd axes(const Eigen::VectorXd& y) const;
  /// Disturbance environment with the coupling box set to `axis_bounds`.
  DisturbanceSpec environment(const Eigen::VectorXd& axis_bounds) const;
};

/// RCI for the given coupling axis bounds. `floor` warm-starts from a
/// smaller-bound result (see compute_mrci).
RciResult synthesize(const NodeModel& node, const Eigen::VectorXd& axis_bounds, const Eigen::VectorXd& floor = {});

/// max |c x| over the RCI for the given axis bounds.
double eval_lambda(const NodeModel& node, const Eigen::VectorXd& axis_bounds);

/// Sum of bounds of summable signals.
double combine_summable(const std::vector<double>& bounds);

/// Weights b_j with E1[:, j] = b_j E1[:, 0]; throws Error{kNotSummable}
/// when the columns are not positive multiples of one another (rel. 1e-9).
Eigen::VectorXd summable_weights(const Eigen::MatrixXd& e1, double tol = 1e-9);

struct LambdaSamples {
  int node = 0;
  std::vector<std::vector<double>> axes;  // sorted grid per axis, starting at 0
  std::vector<double> values;             // row-major over the grid, axis 0 slowest
  std::vector<char> finite;               // 0 where the RCI run diverged or was infeasible
  std::vector<RciResult> rcis;
  bool monotone = true;

  Eigen::Index size() const { return static_cast<Eigen::Index>(values.size()); }
  Eigen::Index flat(const std::vector<Eigen::Index>& idx) const;
  std::vector<Eigen::Index> unflat(Eigen::Index k) const;
};

/// Grid {0, .., axis_max(a)} with `points` values per axis; points past a
/// divergent one along any axis are marked divergent without a run.
LambdaSamples sample_epigraph(const NodeModel& node, const Eigen::VectorXd& axis_max, int points);

/// sample_epigraph for every node, `jobs` threads.
std::vector<LambdaSamples> sample_all(const std::vector<NodeModel>& nodes, const std::vector<Eigen::VectorXd>& axis_max,
                                      int points, int jobs = 1);

/// Flat index of the componentwise-smallest grid point >= query.
/// Throws Error{kOutOfRange} above the grid.
Eigen::Index ceiling_index(const LambdaSamples& s, const Eigen::VectorXd& query);

/// Axis values of the ceiling grid point.
Eigen::VectorXd ceiling_point(const LambdaSamples& s, const Eigen::VectorXd& query);

/// Value at the ceiling grid point. Throws Error{kOutOfRange} or
/// Error{kNoGuarantee} at a divergent point.
double lambda_inner(const LambdaSamples& s, const Eigen::VectorXd& query);

/// Lambda(y): network bound vector to guaranteed bound vector.
using LambdaMap = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Throws carry the node index.
LambdaMap sampled_map(const std::vector<NodeModel>& nodes, const std::vector<LambdaSamples>& samples);
LambdaMap exact_map(const std::vector<NodeModel>& nodes);

/// Lambda(y) <= y + tol elementwise.
bool check_validity(const LambdaMap& lambda, const Eigen::VectorXd& y, double tol = 1e-9);

struct ContractState {
  Eigen::VectorXd y_max;
  std::vector<Eigen::VectorXd> iterates;  // y[0] = Lambda(0), ...
  std::vector<RciResult> rcis;            // filled by deploy()
};

/// Kleene iteration y <- Lambda(y) from Lambda(0) until y[k+1] <= y[k] + 1e-9.
/// Throws Error{kNoValidContract} carrying the escaping node.
ContractState search_contract(const LambdaMap& lambda, Eigen::Index n_nodes, int max_iter = 1000);

/// RCIs computed at each node's ceiling grid point for the contract bound.
std::vector<RciResult> deploy(const std::vector<NodeModel>& nodes, const std::vector<LambdaSamples>& samples,
                              const Eigen::VectorXd& y);

/// Parameterized STL contract: formulas are built from parameter vectors.
struct StlContract {
  std::function<stl::FormulaPtr(const Eigen::VectorXd&)> assume_feedback;
  std::function<stl::FormulaPtr(const Eigen::VectorXd&)> guarantee;
  stl::FormulaPtr assume_env;  // fixed
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> lambda_hat;  // p_af -> p_g
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gamma;       // p_g -> next p_af
};

/// p_g[k] = lambda_hat(p_af[k]), p_af[k+1] = gamma(p_g[k]) for k < steps.
std::vector<Eigen::VectorXd> iterate_contract(const StlContract& c, const Eigen::VectorXd& p_af0, int steps);

/// Bound contract over output channels: feedback assumption and guarantee
/// are always |y_i| <= p_i, gamma is the identity.
StlContract bound_contract(const std::vector<std::string>& outputs, LambdaMap lambda,
                           stl::FormulaPtr assume_env = stl::truth());

/// Closed-form small-gain bounds for y1 <= mu1 d1 + nu1 y2, y2 <= mu2 d2 + nu2 y1.
/// Throws Error{kSmallGainViolated} when nu1 nu2 >= 1.
std::pair<double, double> small_gain_bounds(double mu1, double mu2, double nu1, double nu2, double d1, double d2);

}  // namespace netinv::contract
