#pragma once

#include "netinv/contract.hpp"
#include "netinv/grid.hpp"
#include "netinv/scenario.hpp"
#include "netinv/tube_mpc.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <vector>

namespace netinv::io {

enum class ConfigKind { kGrid, kAbstract };

/// Sinusoidal load deviation amplitude * d_max_i * sin(2 pi f t + phase_i) on
/// every bus with d_max > 0. Phases are the bus index unless randomized.
struct SinusoidSpec {
  double amplitude = 1.0;
  double frequency = 0.5;
  bool random_phase = false;
};

struct ScenarioConfig {
  std::string name;
  ConfigKind kind = ConfigKind::kGrid;
  unsigned seed = 1;
  int points = 9;

  // kGrid
  grid::GridNetwork net;  // theta0 from the power flow
  scenario::GridSynthesisOptions synth;
  Eigen::VectorXd axis_max;  // per bus, combined-axis units
  grid::LegacyGains legacy;
  grid::SimOptions sim;
  bool supervise = true;
  SinusoidSpec disturbance;
  std::vector<grid::ContingencyEvent> contingencies;
  mpc::ContingencyOptions mpc;
  int grace_steps = 1;
  double settle_tol = 1e-3;
  double settle_after = 5.0;  // seconds after the horizon ends

  // kAbstract: discrete scalar nodes, coupling axes given per node
  std::vector<contract::NodeModel> nodes;
  std::vector<Eigen::VectorXd> node_axis_max;
};

/// Reads a JSON scenario; relative file references resolve against the
/// config's directory. Throws Error{kConfig} on missing files or invalid
/// values and Error{kParse} on malformed JSON.
ScenarioConfig load_config(const std::string& path);
ScenarioConfig parse_config(const std::string& text, const std::string& base_dir = ".");

/// Network description (buses, lines, omega_max), theta0 left empty.
grid::GridNetwork parse_network(const std::string& text);

grid::Disturbance make_disturbance(const ScenarioConfig& cfg);

/// "rows cols" then the row-major matrix, then q, one row per line.
void write_polytope(std::ostream& os, const Polytope& p);
Polytope read_polytope(std::istream& is);

/// Reference trajectory per reduced bus: step, t, then theta/omega and u
/// columns labelled by bus id.
void write_reference(std::ostream& os, const mpc::ContingencyPlan& cp);

}  // namespace netinv::io
