#pragma once

#include "netinv/cbf.hpp"
#include "netinv/contract.hpp"
#include "netinv/grid.hpp"
#include "netinv/stl.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace netinv::scenario {

struct GridSynthesisOptions {
  double ts = 0.05;
  int fan_directions = 8;
  /// A priori per-bus bound on |theta - theta0| at all times, used for the
  /// intra-sample and linearization-error terms. Checked after the search.
  Eigen::VectorXd theta_a;
  double comm_delay = 0.0;
  /// Bound the coupling and load drift between samples as unmeasured
  /// disturbance. Off: coupling is treated as held over the sample.
  bool intra_sample = false;
  double seed = 1e-4;
  double alpha = 0.0;
  RciOptions rci;
};

/// Quantities derived from the a priori angle bounds.
struct AprioriBounds {
  Eigen::VectorXd accel;      // generators: |omega'| bound
  Eigen::VectorXd rate;       // loads: |theta'| bound
  Eigen::VectorXd line_dev;   // per line: |delta theta_i - delta theta_j|
  Eigen::VectorXd lin_error;  // per bus, continuous, last state row

  /// Bound on |theta_i(t + s) - theta_i(t)| for 0 <= s <= Ts.
  double drift(const grid::Bus& bus, Eigen::Index i, double omega_max, double s) const;
};

AprioriBounds apriori_bounds(const grid::GridNetwork& net, const Eigen::VectorXd& theta_a);

/// Per-bus node models (discrete, one combined coupling axis weighted by
/// B_ij) about net.theta0. Node index = bus index.
std::vector<contract::NodeModel> grid_nodes(const grid::GridNetwork& net, const GridSynthesisOptions& opt);

struct GridContract {
  std::vector<contract::NodeModel> nodes;
  std::vector<contract::LambdaSamples> samples;
  contract::ContractState state;
  std::vector<Eigen::VectorXd> axis_bounds;  // ceiling axis value per node
  std::vector<RciResult> rcis;
  std::vector<cbf::BarrierFunction> barriers;
  AprioriBounds apriori;
  /// y* + drift over one sample stays within theta_a for every bus.
  bool apriori_ok = false;

  DisturbanceSpec environment(Eigen::Index i) const { return nodes[static_cast<size_t>(i)].environment(axis_bounds[static_cast<size_t>(i)]); }
};

/// Samples every node's gain map on `points` per axis up to `axis_max(i)`
/// (combined-axis units), runs the contract search and deploys the RCIs.
GridContract synthesize(const grid::GridNetwork& net, const GridSynthesisOptions& opt, const Eigen::VectorXd& axis_max,
                        int points, int jobs = 1);

/// Local state of bus i relative to theta0 (theta, omega for generators).
Eigen::VectorXd local_state(const grid::GridNetwork& net, const grid::Measurement& m, Eigen::Index i);
/// Measured (combined coupling axis, exogenous) vector of bus i.
Eigen::VectorXd local_measurement(const grid::GridNetwork& net, const contract::NodeModel& node,
                                  const grid::Measurement& m, Eigen::Index i);

struct SupervisionStats {
  long interventions = 0;
  long breaches = 0;  // supervision infeasible: legacy input applied
};

/// Legacy droop controller, optionally filtered per bus by the barrier QP.
grid::Controller supervised_controller(const grid::GridNetwork& net, const GridContract& gc,
                                       const grid::LegacyGains& gains, bool supervise, SupervisionStats* stats);

struct GuaranteeVerdict {
  std::string name;
  std::string formula;
  bool holds = false;
  double first_violation = -1.0;  // time of the first false sample, -1 if none
};

/// Samples omega_<id> (generators) and dtheta_<id> = theta - theta0 of the
/// in-service buses.
stl::SampledTrace stl_trace(const grid::GridNetwork& net, const grid::Trace& trace);

/// always |omega_i| <= omega_max over the generators, and, when `y_max` is
/// given, always |dtheta_i| <= y_max_i over all buses.
std::vector<GuaranteeVerdict> check_guarantees(const grid::GridNetwork& net, const grid::Trace& trace,
                                               const Eigen::VectorXd& y_max = {});

}  // namespace netinv::scenario
