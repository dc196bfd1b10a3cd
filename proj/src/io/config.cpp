#include "netinv/config.hpp"

#include "netinv/error.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

namespace netinv::io {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::kConfig, what); }

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    bad(std::string("field '") + key + "': " + e.what());
  }
}

double positive(const json& j, const char* key, double fallback) {
  const double v = get_or(j, key, fallback);
  if (!(v > 0.0)) bad(std::string("'") + key + "' must be positive");
  return v;
}

double nonnegative(const json& j, const char* key, double fallback) {
  const double v = get_or(j, key, fallback);
  if (!(v >= 0.0)) bad(std::string("'") + key + "' must be nonnegative");
  return v;
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParse, e.what(), static_cast<int>(e.byte));
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) bad("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Scalar or per-entry list.
VectorXd vector_field(const json& j, const char* key, Index n, double fallback) {
  if (!j.contains(key)) return VectorXd::Constant(n, fallback);
  const json& v = j.at(key);
  if (v.is_number()) return VectorXd::Constant(n, v.get<double>());
  if (!v.is_array() || static_cast<Index>(v.size()) != n)
    bad(std::string("'") + key + "' needs a number or " + std::to_string(n) + " entries");
  VectorXd out(n);
  for (Index i = 0; i < n; ++i) out(i) = v[static_cast<size_t>(i)].get<double>();
  return out;
}

grid::Bus parse_bus(const json& j) {
  grid::Bus b;
  b.id = get_or(j, "id", 0);
  const std::string kind = get_or<std::string>(j, "kind", "load");
  if (kind == "generator") b.kind = grid::BusKind::kGenerator;
  else if (kind == "load") b.kind = grid::BusKind::kLoad;
  else bad("bus " + std::to_string(b.id) + ": unknown kind '" + kind + "'");
  if (b.generator()) b.m = positive(j, "m", 1.0);
  b.d = positive(j, "d", 1.0);
  b.v = positive(j, "v", 1.0);
  b.p_in = get_or(j, "p_in", 0.0);
  b.r = get_or(j, "r", 0.0);
  b.u_max = nonnegative(j, "u_max", 0.0);
  b.d_max = nonnegative(j, "d_max", 0.0);
  // Unset: derived from the disturbance block.
  b.d_rate = j.contains("d_rate") ? nonnegative(j, "d_rate", 0.0) : -1.0;
  return b;
}

grid::GridNetwork network_from(const json& j) {
  grid::GridNetwork net;
  net.omega_max = positive(j, "omega_max", 0.05);
  if (!j.contains("buses") || !j.at("buses").is_array() || j.at("buses").empty()) bad("network has no buses");
  for (const json& b : j.at("buses")) net.buses.push_back(parse_bus(b));
  if (j.contains("lines")) {
    for (const json& l : j.at("lines")) {
      grid::Line line;
      if (l.is_array()) {
        if (l.size() != 3) bad("line needs [from, to, x]");
        line.from = l[0].get<int>();
        line.to = l[1].get<int>();
        line.x = l[2].get<double>();
      } else {
        line.from = get_or(l, "from", 0);
        line.to = get_or(l, "to", 0);
        line.x = get_or(l, "x", 0.0);
      }
      if (!(line.x > 0.0)) bad("line reactance must be positive");
      net.lines.push_back(line);
    }
  }
  return net;
}

grid::ContingencyEvent parse_event(const json& j) {
  grid::ContingencyEvent ev;
  ev.time = nonnegative(j, "time", 0.0);
  const std::string kind = get_or<std::string>(j, "kind", "");
  if (kind == "bus_loss") ev.kind = grid::EventKind::kBusLoss;
  else if (kind == "line_trip") ev.kind = grid::EventKind::kLineTrip;
  else if (kind == "injection_step") ev.kind = grid::EventKind::kInjectionStep;
  else bad("unknown contingency kind '" + kind + "'");
  ev.bus = get_or(j, "bus", 0);
  ev.to = get_or(j, "to", 0);
  ev.dp = get_or(j, "dp", 0.0);
  return ev;
}

// x+ = a x + b u + sum_j e_j y_j + e_exo d, |d| <= d_max, |u| <= u_max, y = x.
contract::NodeModel abstract_node(const json& j, Index index) {
  contract::NodeModel n;
  n.id = get_or(j, "id", static_cast<int>(index));
  const double a = get_or(j, "a", 0.0);
  const double b = get_or(j, "b", 0.0);
  const double e_exo = get_or(j, "e_exo", 0.0);
  const double u_max = nonnegative(j, "u_max", 0.0);
  const double d_max = nonnegative(j, "d_max", 1.0);
  n.neighbors = get_or(j, "neighbors", std::vector<int>{});
  const VectorXd e = vector_field(j, "e_coupling", static_cast<Index>(n.neighbors.size()), 0.0);
  n.sys.a = MatrixXd::Constant(1, 1, a);
  n.sys.b = b != 0.0 && u_max > 0.0 ? MatrixXd::Constant(1, 1, b) : MatrixXd(1, 0);
  n.sys.e_coupling = e.transpose();
  n.sys.e_exo = e_exo != 0.0 ? MatrixXd::Constant(1, 1, e_exo) : MatrixXd(1, 0);
  n.sys.c = Eigen::RowVectorXd::Ones(1);
  n.sys.ts = 1.0;
  if (e_exo != 0.0) n.exo = Polytope::symmetric_box(VectorXd::Constant(1, d_max));
  if (n.sys.n_input() > 0) n.input = Polytope::symmetric_box(VectorXd::Constant(1, u_max));
  n.unmeasured = VectorXd::Constant(1, nonnegative(j, "unmeasured", 0.0));
  n.templ = fan_template(1, 2);
  n.q0 = VectorXd::Constant(2, positive(j, "seed", 1e-3));
  return n;
}

}  // namespace

grid::GridNetwork parse_network(const std::string& text) { return network_from(parse_json(text)); }

ScenarioConfig parse_config(const std::string& text, const std::string& base_dir) {
  const json j = parse_json(text);
  if (!j.is_object()) bad("config must be an object");
  ScenarioConfig cfg;
  cfg.name = get_or<std::string>(j, "name", "scenario");
  cfg.seed = get_or(j, "seed", 1u);
  cfg.points = get_or(j, "points", 9);
  if (cfg.points < 2) bad("'points' must be at least 2");
  const std::string kind = get_or<std::string>(j, "kind", "grid");

  if (kind == "abstract") {
    cfg.kind = ConfigKind::kAbstract;
    if (!j.contains("nodes") || !j.at("nodes").is_array() || j.at("nodes").empty()) bad("abstract config has no nodes");
    const auto& nodes = j.at("nodes");
    for (size_t i = 0; i < nodes.size(); ++i) {
      cfg.nodes.push_back(abstract_node(nodes[i], static_cast<Index>(i)));
      for (int nb : cfg.nodes.back().neighbors)
        if (nb < 0 || nb >= static_cast<int>(nodes.size())) bad("neighbor index out of range at node " + std::to_string(i));
      cfg.node_axis_max.push_back(vector_field(nodes[i], "axis_max", cfg.nodes.back().n_axes(), 1.0));
    }
    return cfg;
  }
  if (kind != "grid") bad("unknown config kind '" + kind + "'");

  if (!j.contains("network")) bad("missing 'network'");
  const json& nj = j.at("network");
  if (nj.is_string()) {
    const std::filesystem::path p = std::filesystem::path(base_dir) / nj.get<std::string>();
    if (!std::filesystem::exists(p)) bad("network file not found: " + p.string());
    cfg.net = parse_network(read_file(p));
  } else {
    cfg.net = network_from(nj);
  }
  const double scale = nonnegative(j, "load_scale", 1.0);
  for (grid::Bus& b : cfg.net.buses) {
    b.p_in *= scale;
    b.r *= scale;
  }

  const json dj = j.value("disturbance", json::object());
  cfg.disturbance.amplitude = nonnegative(dj, "amplitude", 1.0);
  cfg.disturbance.frequency = nonnegative(dj, "frequency", 0.5);
  cfg.disturbance.random_phase = get_or(dj, "random_phase", false);
  for (grid::Bus& b : cfg.net.buses)
    if (b.d_rate < 0.0) b.d_rate = b.d_max * 2.0 * M_PI * cfg.disturbance.frequency;

  try {
    cfg.net.validate();
    cfg.net.theta0 = grid::solve_power_flow(cfg.net);
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, std::string("network: ") + e.what(), e.index());
  }
  const Index n = cfg.net.size();

  const json sj = j.value("synthesis", json::object());
  cfg.synth.ts = positive(sj, "ts", 0.05);
  cfg.synth.fan_directions = get_or(sj, "fan_directions", 8);
  cfg.synth.theta_a = vector_field(sj, "theta_a", n, 0.02);
  cfg.synth.comm_delay = nonnegative(sj, "comm_delay", 0.0);
  cfg.synth.intra_sample = get_or(sj, "intra_sample", false);
  cfg.synth.seed = positive(sj, "seed", 1e-4);
  cfg.synth.alpha = nonnegative(sj, "alpha", 0.0);
  if (cfg.synth.alpha >= 1.0) bad("'alpha' must be below 1");
  if (sj.contains("axis_max")) {
    cfg.axis_max = vector_field(sj, "axis_max", n, 0.0);
  } else {
    // Neighbours within their a priori bounds.
    const auto nodes = scenario::grid_nodes(cfg.net, cfg.synth);
    cfg.axis_max = VectorXd::Zero(n);
    for (Index i = 0; i < n; ++i) {
      const auto& nd = nodes[static_cast<size_t>(i)];
      for (size_t k = 0; k < nd.neighbors.size(); ++k)
        cfg.axis_max(i) += nd.axis_weights(0, static_cast<Index>(k)) * cfg.synth.theta_a(nd.neighbors[k]);
    }
  }

  const json lj = j.value("legacy", json::object());
  cfg.legacy.kp = get_or(lj, "kp", 1.0);
  cfg.legacy.ki = get_or(lj, "ki", 0.5);
  cfg.legacy.kp_load = get_or(lj, "kp_load", 1.0);

  const json simj = j.value("simulation", json::object());
  cfg.sim.ts = cfg.synth.ts;
  cfg.sim.t_end = positive(simj, "t_end", 10.0);
  cfg.sim.substeps = get_or(simj, "substeps", 10);
  if (cfg.sim.substeps < 1) bad("'substeps' must be positive");
  cfg.sim.comm_delay = cfg.synth.comm_delay;
  cfg.supervise = get_or(simj, "supervise", true);

  if (j.contains("contingencies"))
    for (const json& e : j.at("contingencies")) cfg.contingencies.push_back(parse_event(e));

  const json mj = j.value("mpc", json::object());
  cfg.mpc.source_bus = get_or(mj, "source_bus", 4);
  cfg.mpc.edges_per_step = get_or(mj, "edges_per_step", 1);
  if (cfg.mpc.edges_per_step < 1) bad("'edges_per_step' must be positive");
  cfg.mpc.horizon = get_or(mj, "horizon", 50);
  if (cfg.mpc.horizon < 1) bad("'horizon' must be positive");
  cfg.mpc.plan_share = get_or(mj, "plan_share", 0.7);
  if (!(cfg.mpc.plan_share > 0.0 && cfg.mpc.plan_share < 1.0)) bad("'plan_share' must lie in (0, 1)");
  cfg.mpc.q_theta = nonnegative(mj, "q_theta", 10.0);
  cfg.mpc.q_omega = nonnegative(mj, "q_omega", 100.0);
  cfg.mpc.r = positive(mj, "r", 1.0);
  cfg.mpc.terminal = nonnegative(mj, "terminal", 10.0);
  cfg.mpc.ac_polish = get_or(mj, "ac_polish", true);
  cfg.mpc.points = cfg.points;
  cfg.mpc.tube = cfg.synth;
  cfg.grace_steps = get_or(mj, "grace_steps", 1);
  cfg.settle_tol = positive(mj, "settle_tol", 1e-3);
  cfg.settle_after = nonnegative(mj, "settle_after", 5.0);
  return cfg;
}

ScenarioConfig load_config(const std::string& path) {
  const std::filesystem::path p(path);
  if (!std::filesystem::exists(p)) bad("config not found: " + path);
  return parse_config(read_file(p), p.parent_path().string());
}

grid::Disturbance make_disturbance(const ScenarioConfig& cfg) {
  const Index n = cfg.net.size();
  VectorXd amp(n), phase(n);
  std::mt19937 rng(cfg.seed);
  std::uniform_real_distribution<double> unif(0.0, 2.0 * M_PI);
  for (Index i = 0; i < n; ++i) {
    amp(i) = cfg.disturbance.amplitude * cfg.net.buses[static_cast<size_t>(i)].d_max;
    phase(i) = cfg.disturbance.random_phase ? unif(rng) : static_cast<double>(i);
  }
  const double w = 2.0 * M_PI * cfg.disturbance.frequency;
  return [amp, phase, w](double t) {
    VectorXd d(amp.size());
    for (Index i = 0; i < amp.size(); ++i) d(i) = amp(i) == 0.0 ? 0.0 : amp(i) * std::sin(w * t + phase(i));
    return d;
  };
}

void write_polytope(std::ostream& os, const Polytope& p) {
  os << p.rows() << ' ' << p.dim() << '\n' << std::setprecision(17);
  for (Index r = 0; r < p.rows(); ++r) {
    for (Index c = 0; c < p.dim(); ++c) os << (c ? " " : "") << p.p(r, c);
    os << '\n';
  }
  for (Index r = 0; r < p.rows(); ++r) os << p.q(r) << '\n';
}

Polytope read_polytope(std::istream& is) {
  Index rows = 0, cols = 0;
  if (!(is >> rows >> cols) || rows < 0 || cols < 0) throw Error(ErrorCode::kParse, "polytope header");
  Polytope p{MatrixXd(rows, cols), VectorXd(rows)};
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c)
      if (!(is >> p.p(r, c))) throw Error(ErrorCode::kParse, "polytope matrix", static_cast<int>(r));
  for (Index r = 0; r < rows; ++r)
    if (!(is >> p.q(r))) throw Error(ErrorCode::kParse, "polytope offsets", static_cast<int>(r));
  return p;
}

void write_reference(std::ostream& os, const mpc::ContingencyPlan& cp) {
  os << "step,t";
  for (const grid::Bus& b : cp.post.buses) {
    os << ",theta_" << b.id;
    if (b.generator()) os << ",omega_" << b.id;
  }
  for (const grid::Bus& b : cp.post.buses) os << ",u_" << b.id;
  os << '\n' << std::setprecision(12);
  for (int k = 0; k <= cp.ref.horizon; ++k) {
    os << k << ',' << cp.event.time + k * cp.ts;
    for (Index i = 0; i < cp.post.size(); ++i) {
      const VectorXd x = cp.x_hat(i, k);
      os << ',' << cp.post.theta0(i) + x(0);
      if (x.size() > 1) os << ',' << x(1);
    }
    for (Index i = 0; i < cp.post.size(); ++i) os << ',' << cp.u_hat(i, k);
    os << '\n';
  }
}

}  // namespace netinv::io
