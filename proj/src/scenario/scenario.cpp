#include "netinv/scenario.hpp"

#include "netinv/error.hpp"

#include <cmath>

namespace netinv::scenario {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

double AprioriBounds::drift(const grid::Bus& bus, Index i, double omega_max, double s) const {
  if (bus.generator()) return omega_max * s + 0.5 * accel(i) * s * s;
  return rate(i) * s;
}

AprioriBounds apriori_bounds(const grid::GridNetwork& net, const VectorXd& theta_a) {
  if (theta_a.size() != net.size()) throw Error(ErrorCode::kDimensionMismatch, "theta_a size");
  const auto adj = net.adjacency();
  AprioriBounds a;
  a.accel = VectorXd::Zero(net.size());
  a.rate = VectorXd::Zero(net.size());
  for (Index i = 0; i < net.size(); ++i) {
    const grid::Bus& b = net.buses[static_cast<size_t>(i)];
    // |sin(x0 + dx) - sin(x0)| <= |dx| bounds the flow deviation.
    double flow = 0.0;
    for (const auto& nb : adj[static_cast<size_t>(i)]) flow += nb.coef * (theta_a(i) + theta_a(nb.bus));
    const double push = flow + b.u_max + b.d_max;
    if (b.generator()) a.accel(i) = (push + b.d * net.omega_max) / b.m;
    else a.rate(i) = push / b.d;
  }
  a.line_dev = VectorXd::Zero(static_cast<Index>(net.lines.size()));
  for (size_t l = 0; l < net.lines.size(); ++l)
    a.line_dev(static_cast<Index>(l)) = theta_a(net.index_of(net.lines[l].from)) + theta_a(net.index_of(net.lines[l].to));
  a.lin_error = grid::linearization_error_bound(net, a.line_dev);
  return a;
}

std::vector<contract::NodeModel> grid_nodes(const grid::GridNetwork& net, const GridSynthesisOptions& opt) {
  const auto cont = grid::linearize(net, net.theta0);
  const AprioriBounds ap = apriori_bounds(net, opt.theta_a);
  const double ts = opt.ts;
  std::vector<contract::NodeModel> nodes;
  for (Index i = 0; i < net.size(); ++i) {
    const grid::Bus& bus = net.buses[static_cast<size_t>(i)];
    const LinearSubsystem& c = cont[static_cast<size_t>(i)];
    const Index n = c.n_state();
    const VectorXd bij = c.e_coupling.row(n - 1).transpose() * (bus.generator() ? bus.m : bus.d);
    if (bij.size()) contract::summable_weights(c.e_coupling);

    // One power-unit column drives both the combined axis and the exogenous input.
    VectorXd unit = VectorXd::Zero(n);
    unit(n - 1) = 1.0 / (bus.generator() ? bus.m : bus.d);
    LinearSubsystem s = c;
    s.e_coupling = bij.size() ? MatrixXd(unit) : MatrixXd(n, 0);
    s.e_exo = unit;
    s.coupling_scale = VectorXd::Ones(s.n_coupling());
    s = grid::discretize(s, ts);

    VectorXd last = VectorXd::Zero(n);
    last(n - 1) = 1.0;
    auto coupling_drift = [&](double t) {
      double r = 0.0;
      for (Index j = 0; j < bij.size(); ++j) {
        const Index nb = c.neighbors[static_cast<size_t>(j)];
        r += bij(j) * ap.drift(net.buses[static_cast<size_t>(nb)], nb, net.omega_max, t);
      }
      return r;
    };
    VectorXd wu = VectorXd::Zero(n);
    if (opt.intra_sample) wu += grid::integrated_abs(c.a, unit, ts, coupling_drift);
    if (bus.d_rate > 0) wu += grid::integrated_abs(c.a, unit, ts, [&](double t) { return bus.d_rate * t; });
    if (ap.lin_error(i) > 0) wu += grid::integrated_abs(c.a, last, ts, [&](double) { return ap.lin_error(i); });

    contract::NodeModel node;
    node.id = bus.id;
    node.sys = s;
    node.neighbors = c.neighbors;
    node.axis_weights = bij.size() ? MatrixXd(bij.transpose()) : MatrixXd(0, 0);
    node.exo = Polytope::symmetric_box(VectorXd::Constant(1, bus.d_max));
    node.unmeasured = wu;
    node.input = Polytope::symmetric_box(VectorXd::Constant(1, bus.u_max));
    if (opt.comm_delay > 0 && bij.size()) {
      node.measurement_error = VectorXd::Zero(s.n_measured());
      node.measurement_error(0) = coupling_drift(opt.comm_delay);
    }
    node.templ = fan_template(n, opt.fan_directions);
    node.q0 = VectorXd::Constant(node.templ.rows(), opt.seed);
    node.rci = opt.rci;
    if (bus.generator()) {
      const auto [pos, neg] = axis_rows(node.templ, 1);
      // Fan over (theta, Ts omega): both coordinates in radians per sample.
      // An unscaled fan lets the LP trade the angle for tiny omega rows.
      node.templ.col(1) *= ts;
      node.rci.caps = VectorXd::Constant(node.templ.rows(), std::numeric_limits<double>::infinity());
      node.rci.caps(pos) = node.rci.caps(neg) = net.omega_max * ts * (1.0 - 1e-9);
    }
    nodes.push_back(std::move(node));
  }
  return nodes;
}

GridContract synthesize(const grid::GridNetwork& net, const GridSynthesisOptions& opt, const VectorXd& axis_max,
                        int points, int jobs) {
  GridContract gc;
  gc.nodes = grid_nodes(net, opt);
  gc.apriori = apriori_bounds(net, opt.theta_a);
  std::vector<VectorXd> maxes;
  for (size_t i = 0; i < gc.nodes.size(); ++i)
    maxes.push_back(VectorXd::Constant(gc.nodes[i].n_axes(), axis_max(static_cast<Index>(i))));
  gc.samples = contract::sample_all(gc.nodes, maxes, points, jobs);
  gc.state = contract::search_contract(contract::sampled_map(gc.nodes, gc.samples), net.size());
  gc.rcis = contract::deploy(gc.nodes, gc.samples, gc.state.y_max);
  gc.state.rcis = gc.rcis;
  gc.apriori_ok = true;
  for (Index i = 0; i < net.size(); ++i) {
    const auto& node = gc.nodes[static_cast<size_t>(i)];
    gc.axis_bounds.push_back(contract::ceiling_point(gc.samples[static_cast<size_t>(i)], node.axes(gc.state.y_max)));
    gc.barriers.push_back({gc.rcis[static_cast<size_t>(i)].set, opt.alpha});
    const double reach = gc.state.y_max(i) + gc.apriori.drift(net.buses[static_cast<size_t>(i)], i, net.omega_max, opt.ts);
    if (reach > opt.theta_a(i)) gc.apriori_ok = false;
  }
  return gc;
}

VectorXd local_state(const grid::GridNetwork& net, const grid::Measurement& m, Index i) {
  const grid::Bus& b = net.buses[static_cast<size_t>(i)];
  VectorXd x(b.states());
  x(0) = m.theta(i) - net.theta0(i);
  if (b.generator()) x(1) = m.omega(i);
  return x;
}

VectorXd local_measurement(const grid::GridNetwork& net, const contract::NodeModel& node, const grid::Measurement& m,
                           Index i) {
  VectorXd w(node.sys.n_measured());
  Index k = 0;
  if (node.n_axes() > 0) {
    double axis = 0.0;
    for (size_t j = 0; j < node.neighbors.size(); ++j) {
      const Index nb = node.neighbors[j];
      axis += node.axis_weights(0, static_cast<Index>(j)) * (m.theta_delayed(nb) - net.theta0(nb));
    }
    w(k++) = axis;
  }
  w(k) = m.d(i);
  return w;
}

grid::Controller supervised_controller(const grid::GridNetwork& net, const GridContract& gc,
                                       const grid::LegacyGains& gains, bool supervise, SupervisionStats* stats) {
  std::vector<DisturbanceSpec> envs;
  for (Index i = 0; i < net.size(); ++i) envs.push_back(gc.environment(i));
  return [net, &gc, gains, supervise, stats, envs](const grid::Measurement& m) {
    const Index n = net.size();
    grid::ControlAction act{VectorXd::Zero(n), VectorXd::Zero(n)};
    for (Index i = 0; i < n; ++i) {
      const grid::Bus& b = net.buses[static_cast<size_t>(i)];
      if (!m.net->buses[static_cast<size_t>(i)].in_service) continue;
      const VectorXd x = local_state(net, m, i);
      act.u0(i) = grid::legacy_control(b, gains, x(0), b.generator() ? x(1) : 0.0);
      act.u(i) = act.u0(i);
      if (!supervise) continue;
      const auto& node = gc.nodes[static_cast<size_t>(i)];
      const VectorXd w = local_measurement(net, node, m, i);
      try {
        const VectorXd u = cbf::supervise(gc.barriers[static_cast<size_t>(i)], node.sys, x, w,
                                          VectorXd::Constant(1, act.u0(i)), envs[static_cast<size_t>(i)]);
        if (stats && u(0) != act.u0(i)) ++stats->interventions;
        act.u(i) = u(0);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kSupervisionInfeasible) throw;
        if (stats) ++stats->breaches;
      }
    }
    return act;
  };
}

stl::SampledTrace stl_trace(const grid::GridNetwork& net, const grid::Trace& trace) {
  std::vector<std::string> names;
  std::vector<std::vector<double>> ch;
  for (Index i = 0; i < net.size(); ++i) {
    const grid::Bus& b = net.buses[static_cast<size_t>(i)];
    if (!b.in_service) continue;
    names.push_back("dtheta_" + std::to_string(b.id));
    ch.emplace_back();
    for (const VectorXd& th : trace.theta) ch.back().push_back(th(i) - net.theta0(i));
    if (!b.generator()) continue;
    names.push_back("omega_" + std::to_string(b.id));
    ch.emplace_back();
    for (const VectorXd& w : trace.omega) ch.back().push_back(w(i));
  }
  return stl::SampledTrace(trace.ts, std::move(names), std::move(ch));
}

std::vector<GuaranteeVerdict> check_guarantees(const grid::GridNetwork& net, const grid::Trace& trace,
                                               const VectorXd& y_max) {
  const stl::SampledTrace st = stl_trace(net, trace);
  auto verdict = [&](std::string name, std::vector<stl::FormulaPtr> parts) {
    const stl::FormulaPtr body = stl::conj(std::move(parts));
    const stl::FormulaPtr f = stl::always(0.0, stl::kUnbounded, body);
    GuaranteeVerdict v;
    v.name = std::move(name);
    v.formula = stl::to_string(*f);
    v.holds = stl::check(*f, st).value == stl::Tri::kTrue;
    const auto per_sample = stl::monitor(*body, st);
    for (size_t k = 0; k < per_sample.size(); ++k) {
      if (per_sample[k] == stl::Tri::kFalse) {
        v.first_violation = trace.t[k];
        break;
      }
    }
    return v;
  };
  std::vector<GuaranteeVerdict> out;
  std::vector<stl::FormulaPtr> omega;
  for (const grid::Bus& b : net.buses)
    if (b.in_service && b.generator()) omega.push_back(stl::abs_le("omega_" + std::to_string(b.id), net.omega_max));
  out.push_back(verdict("omega_bound", std::move(omega)));
  if (y_max.size()) {
    std::vector<stl::FormulaPtr> theta;
    for (Index i = 0; i < net.size(); ++i) {
      const grid::Bus& b = net.buses[static_cast<size_t>(i)];
      if (b.in_service) theta.push_back(stl::abs_le("dtheta_" + std::to_string(b.id), y_max(i)));
    }
    out.push_back(verdict("theta_bound", std::move(theta)));
  }
  return out;
}

}  // namespace netinv::scenario
