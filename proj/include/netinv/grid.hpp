#pragma once

#include "netinv/rci.hpp"

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

namespace netinv::grid {

enum class BusKind { kGenerator, kLoad };

struct Bus {
  int id = 0;
  BusKind kind = BusKind::kLoad;
  double m = 0.0;  // inertia, generators only
  double d = 1.0;  // damping
  double v = 1.0;  // voltage magnitude, p.u.
  double p_in = 0.0;
  double r = 0.0;  // uncontrollable load
  double u_max = 0.0;
  double d_max = 0.0;   // bound on the exogenous power deviation
  double d_rate = 0.0;  // bound on its time derivative
  bool in_service = true;

  bool generator() const { return kind == BusKind::kGenerator; }
  Eigen::Index states() const { return generator() ? 2 : 1; }
};

struct Line {
  int from = 0;
  int to = 0;
  double x = 0.0;  // reactance
  bool in_service = true;
};

struct Neighbor {
  Eigen::Index bus;
  double coef;  // V_i V_j / X_ij
};

/// Buses are addressed by position; `Bus::id` is the external label.
struct GridNetwork {
  std::vector<Bus> buses;
  std::vector<Line> lines;
  Eigen::VectorXd theta0;
  double omega_max = 0.05;

  Eigen::Index size() const { return static_cast<Eigen::Index>(buses.size()); }
  /// Throws Error{kConfig} for an unknown id.
  Eigen::Index index_of(int id) const;
  std::vector<std::vector<Neighbor>> adjacency() const;
  /// P_in - r per bus.
  Eigen::VectorXd injection() const;
  /// Sum_j c_ij sin(theta_i - theta_j) per bus.
  Eigen::VectorXd flows(const Eigen::VectorXd& theta) const;
  /// max_i |injection_i - flows_i| over in-service buses.
  double balance_residual(const Eigen::VectorXd& theta) const;
  /// Connected components of the in-service buses.
  std::vector<std::vector<Eigen::Index>> islands() const;
  /// Throws Error{kDimensionMismatch} / Error{kConfig} on inconsistent data.
  void validate() const;

  /// Offset of each bus in the stacked network state (theta[, omega] per bus).
  std::vector<Eigen::Index> state_offsets() const;
  Eigen::Index state_dim() const;
};

/// Newton solve of the sine power flow (reference: last bus of each island
/// at angle 0). Injections per island must sum to zero.
Eigen::VectorXd solve_power_flow(const GridNetwork& net, const Eigen::VectorXd& guess = {});

/// Continuous-time per-bus models about theta0: coupling columns follow
/// the adjacency order, one exogenous column (power deviation).
/// Throws Error{kNotAnEquilibrium} when the balance residual exceeds 1e-6.
std::vector<LinearSubsystem> linearize(const GridNetwork& net, const Eigen::VectorXd& theta0);

/// Whole-network linear model x' = A x + B u + E d about theta0.
struct NetworkModel {
  Eigen::MatrixXd a, b, e;
};
NetworkModel linearize_network(const GridNetwork& net, const Eigen::VectorXd& theta0);

/// Network-level bound on the per-step mismatch between the nonlinear step
/// and the discretized network model, given per-bus continuous error bounds
/// (as returned by linearization_error_bound).
Eigen::VectorXd step_error_bound(const GridNetwork& net, const NetworkModel& cont, const Eigen::VectorXd& bus_error,
                                 double ts);

/// Exact zero-order hold of every input column.
LinearSubsystem discretize(const LinearSubsystem& sys, double ts);
NetworkModel discretize(const NetworkModel& m, double ts);

/// int_0^T |e^{A(T-s)} col| w(s) ds elementwise (composite Simpson, then a
/// 1% margin so the result bounds the integral).
Eigen::VectorXd integrated_abs(const Eigen::MatrixXd& a, const Eigen::VectorXd& col, double ts,
                               const std::function<double(double)>& weight);

/// max over |delta| <= dev of |sin(t0 + delta) - sin(t0) - cos(t0) delta| by a
/// dense scan.
double sine_linearization_error(double theta0_diff, double dev, int points = 10000);

/// Continuous-time per-bus bound on the linearization error entering the
/// bus's last state row (omega for generators, theta for loads), given an
/// angle-difference bound per line (same order as net.lines).
Eigen::VectorXd linearization_error_bound(const GridNetwork& net, const Eigen::VectorXd& line_dev);

// ---------------------------------------------------------------- control

struct LegacyGains {
  double kp = 1.0;       // generators: droop on omega
  double ki = 0.5;       // generators: on integrated omega (= angle deviation)
  double kp_load = 1.0;  // loads: on angle deviation
};

/// Droop-plus-integral stand-in for the legacy controller, saturated to
/// [-u_max, u_max]. The integral of omega is the angle deviation itself.
double legacy_control(const Bus& bus, const LegacyGains& g, double theta_dev, double omega);

// ---------------------------------------------------------------- simulation

enum class EventKind { kBusLoss, kLineTrip, kInjectionStep };

struct ContingencyEvent {
  double time = 0.0;
  EventKind kind = EventKind::kInjectionStep;
  int bus = 0;  // bus id (line: from)
  int to = 0;   // line: to
  double dp = 0.0;
};

/// Applies one event to the network (by id).
void apply_event(GridNetwork& net, const ContingencyEvent& ev);

struct Measurement {
  Eigen::Index k = 0;
  double t = 0.0;
  Eigen::VectorXd theta;          // per bus, this sample
  Eigen::VectorXd omega;          // per bus (theta rate for loads)
  Eigen::VectorXd theta_delayed;  // per bus, as seen by neighbours
  Eigen::VectorXd d;              // exogenous deviation at this sample
  const GridNetwork* net = nullptr;
};

struct ControlAction {
  Eigen::VectorXd u0;  // legacy
  Eigen::VectorXd u;   // applied
};

using Controller = std::function<ControlAction(const Measurement&)>;
using Disturbance = std::function<Eigen::VectorXd(double t)>;

struct Trace {
  std::vector<int> bus_ids;
  std::vector<char> generator;
  std::vector<double> t;
  std::vector<Eigen::VectorXd> theta, omega, u0, u, d;
  std::vector<std::string> event;
  bool islanded = false;
  double ts = 0.0;

  Eigen::Index samples() const { return static_cast<Eigen::Index>(t.size()); }
  void write_csv(std::ostream& os) const;
};

struct SimOptions {
  double ts = 0.05;
  double t_end = 10.0;
  int substeps = 10;
  double comm_delay = 0.0;  // seconds, rounded to substeps
};

/// Fixed-step RK4 of the swing model with sampled-and-held control.
/// `x0` is the stacked network state (see state_offsets), absolute angles.
Trace simulate(GridNetwork net, const Eigen::VectorXd& x0, const Controller& ctrl, const Disturbance& dist,
               std::vector<ContingencyEvent> events, const SimOptions& opt);

/// State derivative of the nonlinear model (absolute angles).
Eigen::VectorXd dynamics(const GridNetwork& net, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                         const Eigen::VectorXd& d);
/// One sample of the plant: `substeps` RK4 steps with u held and d(t).
Eigen::VectorXd step(const GridNetwork& net, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                     const Disturbance& dist, double t0, double ts, int substeps = 10);

/// Equilibrium stacked state for the given angles (zero frequency).
Eigen::VectorXd equilibrium_state(const GridNetwork& net, const Eigen::VectorXd& theta);

// ---------------------------------------------------------------- contingencies

struct OperatingPoint {
  Eigen::VectorXd theta;
  Eigen::VectorXd p_in;
};

/// Spreads the imbalance over generators in proportion to inertia and
/// solves B theta = P per island (reference: last bus of the island).
/// With `ac_polish` the sine power flow is solved from the DC point.
/// Throws Error{kSingular} for an island without a generator.
OperatingPoint new_operating_point(const GridNetwork& net, bool ac_polish = false);

/// Copy without out-of-service buses and lines.
GridNetwork reduced(const GridNetwork& net);

/// BFS hop count from `source` (id) over in-service lines; -1 if unreachable.
std::vector<int> hop_distance(const GridNetwork& net, int source);

}  // namespace netinv::grid
