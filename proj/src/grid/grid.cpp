#include "netinv/grid.hpp"

#include "netinv/error.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

namespace netinv::grid {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Index GridNetwork::index_of(int id) const {
  for (Index i = 0; i < size(); ++i) {
    if (buses[static_cast<size_t>(i)].id == id) return i;
  }
  throw Error(ErrorCode::kConfig, "unknown bus id " + std::to_string(id), id);
}

std::vector<std::vector<Neighbor>> GridNetwork::adjacency() const {
  std::vector<std::vector<Neighbor>> adj(buses.size());
  auto add = [&](Index i, Index j, double c) {
    auto& list = adj[static_cast<size_t>(i)];
    for (auto& nb : list) {
      if (nb.bus == j) {
        nb.coef += c;
        return;
      }
    }
    list.push_back({j, c});
  };
  for (const Line& l : lines) {
    if (!l.in_service) continue;
    const Index i = index_of(l.from);
    const Index j = index_of(l.to);
    const Bus& bi = buses[static_cast<size_t>(i)];
    const Bus& bj = buses[static_cast<size_t>(j)];
    if (!bi.in_service || !bj.in_service) continue;
    const double c = bi.v * bj.v / l.x;
    add(i, j, c);
    add(j, i, c);
  }
  return adj;
}

VectorXd GridNetwork::injection() const {
  VectorXd p(size());
  for (Index i = 0; i < size(); ++i) {
    const Bus& b = buses[static_cast<size_t>(i)];
    p(i) = b.in_service ? b.p_in - b.r : 0.0;
  }
  return p;
}

VectorXd GridNetwork::flows(const VectorXd& theta) const {
  const auto adj = adjacency();
  VectorXd f = VectorXd::Zero(size());
  for (Index i = 0; i < size(); ++i) {
    for (const auto& nb : adj[static_cast<size_t>(i)]) f(i) += nb.coef * std::sin(theta(i) - theta(nb.bus));
  }
  return f;
}

double GridNetwork::balance_residual(const VectorXd& theta) const {
  if (theta.size() != size()) throw Error(ErrorCode::kDimensionMismatch, "theta size");
  return (injection() - flows(theta)).lpNorm<Eigen::Infinity>();
}

std::vector<std::vector<Index>> GridNetwork::islands() const {
  const auto adj = adjacency();
  std::vector<int> seen(buses.size(), 0);
  std::vector<std::vector<Index>> out;
  for (Index s = 0; s < size(); ++s) {
    if (seen[static_cast<size_t>(s)] || !buses[static_cast<size_t>(s)].in_service) continue;
    std::vector<Index> comp;
    std::deque<Index> queue{s};
    seen[static_cast<size_t>(s)] = 1;
    while (!queue.empty()) {
      const Index i = queue.front();
      queue.pop_front();
      comp.push_back(i);
      for (const auto& nb : adj[static_cast<size_t>(i)]) {
        if (!seen[static_cast<size_t>(nb.bus)]) {
          seen[static_cast<size_t>(nb.bus)] = 1;
          queue.push_back(nb.bus);
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    out.push_back(std::move(comp));
  }
  return out;
}

void GridNetwork::validate() const {
  std::set<int> ids;
  for (size_t i = 0; i < buses.size(); ++i) {
    const Bus& b = buses[i];
    if (!ids.insert(b.id).second) throw Error(ErrorCode::kConfig, "duplicate bus id", b.id);
    if (b.generator() && !(b.m > 0.0)) throw Error(ErrorCode::kConfig, "generator inertia must be positive", b.id);
    if (!(b.d > 0.0)) throw Error(ErrorCode::kConfig, "damping must be positive", b.id);
    if (!(b.v > 0.0)) throw Error(ErrorCode::kConfig, "voltage must be positive", b.id);
    if (b.u_max < 0.0 || b.d_max < 0.0 || b.d_rate < 0.0) throw Error(ErrorCode::kConfig, "negative bound", b.id);
  }
  for (size_t l = 0; l < lines.size(); ++l) {
    index_of(lines[l].from);
    index_of(lines[l].to);
    if (lines[l].from == lines[l].to) throw Error(ErrorCode::kConfig, "self loop", static_cast<Index>(l));
    if (!(lines[l].x > 0.0)) throw Error(ErrorCode::kConfig, "reactance must be positive", static_cast<Index>(l));
  }
  if (theta0.size() != 0 && theta0.size() != size()) throw Error(ErrorCode::kDimensionMismatch, "theta0 size");
  if (!(omega_max > 0.0)) throw Error(ErrorCode::kConfig, "omega_max must be positive");
}

std::vector<Index> GridNetwork::state_offsets() const {
  std::vector<Index> off(buses.size());
  Index k = 0;
  for (size_t i = 0; i < buses.size(); ++i) {
    off[i] = k;
    k += buses[i].states();
  }
  return off;
}

Index GridNetwork::state_dim() const {
  Index k = 0;
  for (const Bus& b : buses) k += b.states();
  return k;
}

VectorXd solve_power_flow(const GridNetwork& net, const VectorXd& guess) {
  VectorXd theta = guess.size() == net.size() ? guess : VectorXd::Zero(net.size());
  const VectorXd p = net.injection();
  for (const auto& island : net.islands()) {
    const Index n = static_cast<Index>(island.size());
    double total = 0.0;
    for (Index i : island) total += p(i);
    if (std::abs(total) > 1e-9) throw Error(ErrorCode::kNotAnEquilibrium, "island injections do not sum to zero");
    const Index ref = island.back();
    for (Index i : island) theta(i) -= theta(ref);
    if (n == 1) continue;
    const auto adj = net.adjacency();
    for (int it = 0; it < 50; ++it) {
      VectorXd res(n - 1);
      MatrixXd jac = MatrixXd::Zero(n - 1, n - 1);
      for (Index a = 0; a + 1 < n; ++a) {
        const Index i = island[static_cast<size_t>(a)];
        res(a) = p(i);
        for (const auto& nb : adj[static_cast<size_t>(i)]) {
          const double dt = theta(i) - theta(nb.bus);
          res(a) -= nb.coef * std::sin(dt);
          jac(a, a) += nb.coef * std::cos(dt);
          const auto pos = std::find(island.begin(), island.end(), nb.bus) - island.begin();
          if (pos + 1 < n) jac(a, pos) -= nb.coef * std::cos(dt);
        }
      }
      if (res.lpNorm<Eigen::Infinity>() < 1e-12) break;
      const VectorXd step = jac.partialPivLu().solve(res);
      if (!step.allFinite()) throw Error(ErrorCode::kSingular, "power-flow Jacobian is singular");
      for (Index a = 0; a + 1 < n; ++a) theta(island[static_cast<size_t>(a)]) += step(a);
      if (it == 49) throw Error(ErrorCode::kDiverged, "power flow did not converge");
    }
  }
  return theta;
}

namespace {

void require_equilibrium(const GridNetwork& net, const VectorXd& theta0) {
  if (theta0.size() != net.size()) throw Error(ErrorCode::kDimensionMismatch, "theta0 size");
  const VectorXd r = net.injection() - net.flows(theta0);
  for (Index i = 0; i < r.size(); ++i) {
    if (std::abs(r(i)) > 1e-6) throw Error(ErrorCode::kNotAnEquilibrium, "power balance residual too large", i);
  }
}

double coupling(const VectorXd& theta0, Index i, const Neighbor& nb) {
  return nb.coef * std::cos(theta0(i) - theta0(nb.bus));
}

}  // namespace

std::vector<LinearSubsystem> linearize(const GridNetwork& net, const VectorXd& theta0) {
  require_equilibrium(net, theta0);
  const auto adj = net.adjacency();
  std::vector<LinearSubsystem> out;
  for (Index i = 0; i < net.size(); ++i) {
    const Bus& b = net.buses[static_cast<size_t>(i)];
    const auto& nbs = adj[static_cast<size_t>(i)];
    const Index k = static_cast<Index>(nbs.size());
    LinearSubsystem s;
    VectorXd bij(k);
    for (Index j = 0; j < k; ++j) bij(j) = coupling(theta0, i, nbs[static_cast<size_t>(j)]);
    const double sum = bij.sum();
    if (b.generator()) {
      s.a.resize(2, 2);
      s.a << 0.0, 1.0, -sum / b.m, -b.d / b.m;
      s.b = MatrixXd::Zero(2, 1);
      s.b(1, 0) = -1.0 / b.m;
      s.e_coupling = MatrixXd::Zero(2, k);
      s.e_coupling.row(1) = bij.transpose() / b.m;
      s.e_exo = MatrixXd::Zero(2, 1);
      s.e_exo(1, 0) = 1.0 / b.m;
      s.c = Eigen::RowVectorXd::Zero(2);
      s.c(0) = 1.0;
    } else {
      s.a = MatrixXd::Constant(1, 1, -sum / b.d);
      s.b = MatrixXd::Constant(1, 1, -1.0 / b.d);
      s.e_coupling = bij.transpose() / b.d;
      s.e_exo = MatrixXd::Constant(1, 1, 1.0 / b.d);
      s.c = Eigen::RowVectorXd::Ones(1);
    }
    for (const auto& nb : nbs) s.neighbors.push_back(static_cast<int>(nb.bus));
    s.coupling_scale = VectorXd::Ones(k);
    out.push_back(std::move(s));
  }
  return out;
}

NetworkModel linearize_network(const GridNetwork& net, const VectorXd& theta0) {
  require_equilibrium(net, theta0);
  const auto adj = net.adjacency();
  const auto off = net.state_offsets();
  const Index n = net.state_dim();
  NetworkModel m;
  m.a = MatrixXd::Zero(n, n);
  m.b = MatrixXd::Zero(n, net.size());
  m.e = MatrixXd::Zero(n, net.size());
  for (Index i = 0; i < net.size(); ++i) {
    const Bus& b = net.buses[static_cast<size_t>(i)];
    const Index th = off[static_cast<size_t>(i)];
    Index row = th;
    double scale = 1.0 / b.d;
    if (b.generator()) {
      m.a(th, th + 1) = 1.0;
      row = th + 1;
      scale = 1.0 / b.m;
      m.a(row, row) = -b.d / b.m;
    }
    if (!b.in_service) {
      m.a.row(row).setZero();
      continue;
    }
    for (const auto& nb : adj[static_cast<size_t>(i)]) {
      const double bij = coupling(theta0, i, nb);
      m.a(row, th) -= bij * scale;
      m.a(row, off[static_cast<size_t>(nb.bus)]) += bij * scale;
    }
    m.b(row, i) = -scale;
    m.e(row, i) = scale;
  }
  return m;
}

namespace {

// [A_d, G] with G = int_0^T e^{As} ds * inputs.
std::pair<MatrixXd, MatrixXd> zoh(const MatrixXd& a, const MatrixXd& inputs, double ts) {
  if (!(ts > 0.0)) throw Error(ErrorCode::kConfig, "sampling time must be positive");
  const Index n = a.rows();
  const Index m = inputs.cols();
  MatrixXd aug = MatrixXd::Zero(n + m, n + m);
  aug.topLeftCorner(n, n) = a * ts;
  aug.topRightCorner(n, m) = inputs * ts;
  const MatrixXd e = aug.exp();
  return {e.topLeftCorner(n, n), e.topRightCorner(n, m)};
}

}  // namespace

LinearSubsystem discretize(const LinearSubsystem& sys, double ts) {
  const Index nu = sys.n_input(), nc = sys.n_coupling(), ne = sys.n_exo();
  MatrixXd inputs(sys.n_state(), nu + nc + ne);
  inputs << sys.b, sys.e_coupling, sys.e_exo;
  auto [ad, g] = zoh(sys.a, inputs, ts);
  LinearSubsystem d = sys;
  d.a = ad;
  d.b = g.leftCols(nu);
  d.e_coupling = g.middleCols(nu, nc);
  d.e_exo = g.rightCols(ne);
  d.ts = ts;
  return d;
}

NetworkModel discretize(const NetworkModel& m, double ts) {
  MatrixXd inputs(m.a.rows(), m.b.cols() + m.e.cols());
  inputs << m.b, m.e;
  auto [ad, g] = zoh(m.a, inputs, ts);
  return {ad, g.leftCols(m.b.cols()), g.rightCols(m.e.cols())};
}

VectorXd integrated_abs(const MatrixXd& a, const VectorXd& col, double ts,
                        const std::function<double(double)>& weight) {
  constexpr int kIntervals = 1000;
  const double h = ts / kIntervals;
  const MatrixXd step = (a * h).exp();
  // v_j = e^{A j h} col, evaluated at s = T - j h.
  VectorXd v = col;
  VectorXd acc = VectorXd::Zero(col.size());
  for (int j = 0; j <= kIntervals; ++j) {
    const double w = (j == 0 || j == kIntervals) ? 1.0 : (j % 2 ? 4.0 : 2.0);
    acc += w * weight(ts - j * h) * v.cwiseAbs();
    v = step * v;
  }
  return 1.01 * acc * h / 3.0;
}

double sine_linearization_error(double theta0_diff, double dev, int points) {
  if (dev <= 0.0) return 0.0;
  const double s0 = std::sin(theta0_diff), c0 = std::cos(theta0_diff);
  double worst = 0.0;
  for (int k = 0; k < points; ++k) {
    const double delta = -dev + 2.0 * dev * k / (points - 1);
    worst = std::max(worst, std::abs(std::sin(theta0_diff + delta) - s0 - c0 * delta));
  }
  return worst;
}

VectorXd linearization_error_bound(const GridNetwork& net, const VectorXd& line_dev) {
  if (line_dev.size() != static_cast<Index>(net.lines.size()))
    throw Error(ErrorCode::kDimensionMismatch, "one deviation bound per line");
  const VectorXd theta0 = net.theta0.size() == net.size() ? net.theta0 : VectorXd::Zero(net.size());
  VectorXd out = VectorXd::Zero(net.size());
  for (size_t l = 0; l < net.lines.size(); ++l) {
    const Line& line = net.lines[l];
    if (!line.in_service) continue;
    const Index i = net.index_of(line.from), j = net.index_of(line.to);
    const Bus& bi = net.buses[static_cast<size_t>(i)];
    const Bus& bj = net.buses[static_cast<size_t>(j)];
    if (!bi.in_service || !bj.in_service) continue;
    const double err = bi.v * bj.v / line.x * sine_linearization_error(theta0(i) - theta0(j), line_dev(static_cast<Index>(l)));
    out(i) += err / (bi.generator() ? bi.m : bi.d);
    out(j) += err / (bj.generator() ? bj.m : bj.d);
  }
  return out;
}

VectorXd step_error_bound(const GridNetwork& net, const NetworkModel& cont, const VectorXd& bus_error, double ts) {
  const auto off = net.state_offsets();
  VectorXd out = VectorXd::Zero(cont.a.rows());
  for (Index i = 0; i < net.size(); ++i) {
    if (bus_error(i) == 0.0) continue;
    const Bus& b = net.buses[static_cast<size_t>(i)];
    VectorXd col = VectorXd::Zero(cont.a.rows());
    col(off[static_cast<size_t>(i)] + b.states() - 1) = 1.0;
    out += bus_error(i) * integrated_abs(cont.a, col, ts, [](double) { return 1.0; });
  }
  return out;
}

double legacy_control(const Bus& bus, const LegacyGains& g, double theta_dev, double omega) {
  const double u = bus.generator() ? g.kp * omega + g.ki * theta_dev : g.kp_load * theta_dev;
  return std::clamp(u, -bus.u_max, bus.u_max);
}

void apply_event(GridNetwork& net, const ContingencyEvent& ev) {
  if (ev.time < 0.0) throw Error(ErrorCode::kConfig, "event time must be nonnegative");
  switch (ev.kind) {
    case EventKind::kBusLoss:
      net.buses[static_cast<size_t>(net.index_of(ev.bus))].in_service = false;
      break;
    case EventKind::kLineTrip: {
      bool found = false;
      for (Line& l : net.lines) {
        if ((l.from == ev.bus && l.to == ev.to) || (l.from == ev.to && l.to == ev.bus)) {
          l.in_service = false;
          found = true;
        }
      }
      if (!found) throw Error(ErrorCode::kConfig, "no line between the given buses", ev.bus);
      break;
    }
    case EventKind::kInjectionStep:
      net.buses[static_cast<size_t>(net.index_of(ev.bus))].p_in += ev.dp;
      break;
  }
}

VectorXd dynamics(const GridNetwork& net, const VectorXd& x, const VectorXd& u, const VectorXd& d) {
  const auto off = net.state_offsets();
  const auto adj = net.adjacency();
  VectorXd theta(net.size());
  for (Index i = 0; i < net.size(); ++i) theta(i) = x(off[static_cast<size_t>(i)]);
  VectorXd dx = VectorXd::Zero(x.size());
  for (Index i = 0; i < net.size(); ++i) {
    const Bus& b = net.buses[static_cast<size_t>(i)];
    if (!b.in_service) continue;
    const Index k = off[static_cast<size_t>(i)];
    double rhs = b.p_in - b.r + d(i) - u(i);
    for (const auto& nb : adj[static_cast<size_t>(i)]) rhs -= nb.coef * std::sin(theta(i) - theta(nb.bus));
    if (b.generator()) {
      dx(k) = x(k + 1);
      dx(k + 1) = (rhs - b.d * x(k + 1)) / b.m;
    } else {
      dx(k) = rhs / b.d;
    }
  }
  return dx;
}

namespace {

VectorXd rk4(const GridNetwork& net, const VectorXd& x, const VectorXd& u, const Disturbance& dist, double t,
             double h) {
  const VectorXd d0 = dist(t), dm = dist(t + 0.5 * h), d1 = dist(t + h);
  const VectorXd k1 = dynamics(net, x, u, d0);
  const VectorXd k2 = dynamics(net, x + 0.5 * h * k1, u, dm);
  const VectorXd k3 = dynamics(net, x + 0.5 * h * k2, u, dm);
  const VectorXd k4 = dynamics(net, x + h * k3, u, d1);
  return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

VectorXd step(const GridNetwork& net, const VectorXd& x, const VectorXd& u, const Disturbance& dist, double t0,
              double ts, int substeps) {
  VectorXd y = x;
  const double h = ts / substeps;
  for (int s = 0; s < substeps; ++s) y = rk4(net, y, u, dist, t0 + s * h, h);
  return y;
}

VectorXd equilibrium_state(const GridNetwork& net, const VectorXd& theta) {
  const auto off = net.state_offsets();
  VectorXd x = VectorXd::Zero(net.state_dim());
  for (Index i = 0; i < net.size(); ++i) x(off[static_cast<size_t>(i)]) = theta(i);
  return x;
}

void Trace::write_csv(std::ostream& os) const {
  os << "t";
  for (int id : bus_ids) os << ",theta_" << id;
  for (size_t i = 0; i < bus_ids.size(); ++i) {
    if (generator[i]) os << ",omega_" << bus_ids[i];
  }
  for (int id : bus_ids) os << ",u0_" << id;
  for (int id : bus_ids) os << ",u_" << id;
  for (int id : bus_ids) os << ",d_" << id;
  os << ",event\n";
  os.precision(12);
  for (size_t k = 0; k < t.size(); ++k) {
    os << t[k];
    for (Index i = 0; i < theta[k].size(); ++i) os << ',' << theta[k](i);
    for (Index i = 0; i < omega[k].size(); ++i) {
      if (generator[static_cast<size_t>(i)]) os << ',' << omega[k](i);
    }
    for (Index i = 0; i < u0[k].size(); ++i) os << ',' << u0[k](i);
    for (Index i = 0; i < u[k].size(); ++i) os << ',' << u[k](i);
    for (Index i = 0; i < d[k].size(); ++i) os << ',' << d[k](i);
    os << ',' << event[k] << '\n';
  }
}

Trace simulate(GridNetwork net, const VectorXd& x0, const Controller& ctrl, const Disturbance& dist,
               std::vector<ContingencyEvent> events, const SimOptions& opt) {
  net.validate();
  if (x0.size() != net.state_dim()) throw Error(ErrorCode::kDimensionMismatch, "initial state size");
  if (!(opt.ts > 0.0) || opt.substeps < 1) throw Error(ErrorCode::kConfig, "bad sampling options");
  std::stable_sort(events.begin(), events.end(),
                   [](const ContingencyEvent& a, const ContingencyEvent& b) { return a.time < b.time; });
  const auto off = net.state_offsets();
  const Index n = net.size();
  const auto samples = static_cast<Index>(std::llround(opt.t_end / opt.ts));
  const double h = opt.ts / opt.substeps;
  const auto delay_sub = static_cast<size_t>(std::llround(opt.comm_delay / h));

  Trace tr;
  tr.ts = opt.ts;
  for (const Bus& b : net.buses) {
    tr.bus_ids.push_back(b.id);
    tr.generator.push_back(b.generator() ? 1 : 0);
  }

  auto angles = [&](const VectorXd& x) {
    VectorXd th(n);
    for (Index i = 0; i < n; ++i) th(i) = x(off[static_cast<size_t>(i)]);
    return th;
  };
  std::deque<VectorXd> history;  // substep angle history, newest last
  VectorXd x = x0;
  history.push_back(angles(x));
  size_t next_event = 0;

  for (Index k = 0; k <= samples; ++k) {
    const double t = k * opt.ts;
    std::string marker;
    while (next_event < events.size() && events[next_event].time <= t + 1e-9) {
      apply_event(net, events[next_event]);
      std::ostringstream m;
      const auto& ev = events[next_event];
      m << (ev.kind == EventKind::kBusLoss ? "bus_loss:" : ev.kind == EventKind::kLineTrip ? "line_trip:" : "injection_step:")
        << ev.bus;
      if (ev.kind == EventKind::kLineTrip) m << '-' << ev.to;
      if (!marker.empty()) marker += ';';
      marker += m.str();
      ++next_event;
      if (net.islands().size() > 1) tr.islanded = true;
    }

    Measurement meas;
    meas.k = k;
    meas.t = t;
    meas.theta = angles(x);
    meas.d = dist(t);
    meas.net = &net;
    meas.omega.resize(n);
    for (Index i = 0; i < n; ++i) {
      const Bus& b = net.buses[static_cast<size_t>(i)];
      const Index o = off[static_cast<size_t>(i)];
      meas.omega(i) = b.generator() ? x(o + 1) : 0.0;
    }
    meas.theta_delayed = history.size() > delay_sub ? history[history.size() - 1 - delay_sub] : history.front();

    ControlAction act = ctrl(meas);
    if (act.u.size() != n || act.u0.size() != n) throw Error(ErrorCode::kDimensionMismatch, "controller output size");
    for (Index i = 0; i < n; ++i) {
      const Bus& b = net.buses[static_cast<size_t>(i)];
      act.u(i) = b.in_service ? std::clamp(act.u(i), -b.u_max, b.u_max) : 0.0;
    }
    // Load "frequency" is the angle rate under the applied input.
    const VectorXd rate = dynamics(net, x, act.u, meas.d);
    for (Index i = 0; i < n; ++i) {
      if (!net.buses[static_cast<size_t>(i)].generator()) meas.omega(i) = rate(off[static_cast<size_t>(i)]);
    }

    tr.t.push_back(t);
    tr.theta.push_back(meas.theta);
    tr.omega.push_back(meas.omega);
    tr.u0.push_back(act.u0);
    tr.u.push_back(act.u);
    tr.d.push_back(meas.d);
    tr.event.push_back(marker);

    if (k == samples) break;
    for (int s = 0; s < opt.substeps; ++s) {
      x = rk4(net, x, act.u, dist, t + s * h, h);
      history.push_back(angles(x));
      if (history.size() > delay_sub + opt.substeps + 1) history.pop_front();
    }
    if (!x.allFinite()) throw Error(ErrorCode::kDiverged, "simulation state is not finite", k);
  }
  return tr;
}

OperatingPoint new_operating_point(const GridNetwork& net, bool ac_polish) {
  OperatingPoint op;
  op.p_in.resize(net.size());
  for (Index i = 0; i < net.size(); ++i) op.p_in(i) = net.buses[static_cast<size_t>(i)].p_in;
  const VectorXd theta0 = net.theta0.size() == net.size() ? net.theta0 : VectorXd::Zero(net.size());
  if (net.balance_residual(theta0) <= 1e-9) {
    op.theta = theta0;
    return op;
  }

  GridNetwork adj_net = net;
  const auto adj = net.adjacency();
  op.theta = VectorXd::Zero(net.size());
  for (const auto& island : net.islands()) {
    double imbalance = 0.0, inertia = 0.0;
    for (Index i : island) {
      const Bus& b = net.buses[static_cast<size_t>(i)];
      imbalance += b.p_in - b.r;
      if (b.generator()) inertia += b.m;
    }
    if (inertia <= 0.0) throw Error(ErrorCode::kSingular, "island without a generator", net.buses[static_cast<size_t>(island.front())].id);
    for (Index i : island) {
      Bus& b = adj_net.buses[static_cast<size_t>(i)];
      if (b.generator()) {
        b.p_in -= imbalance * b.m / inertia;
        op.p_in(i) = b.p_in;
      }
    }
    const Index n = static_cast<Index>(island.size());
    if (n == 1) continue;
    MatrixXd bmat = MatrixXd::Zero(n - 1, n - 1);
    VectorXd rhs(n - 1);
    for (Index a = 0; a + 1 < n; ++a) {
      const Index i = island[static_cast<size_t>(a)];
      const Bus& b = adj_net.buses[static_cast<size_t>(i)];
      rhs(a) = b.p_in - b.r;
      for (const auto& nb : adj[static_cast<size_t>(i)]) {
        bmat(a, a) += nb.coef;
        const auto pos = std::find(island.begin(), island.end(), nb.bus) - island.begin();
        if (pos + 1 < n) bmat(a, pos) -= nb.coef;
      }
    }
    const VectorXd sol = bmat.ldlt().solve(rhs);
    if (!sol.allFinite() || (bmat * sol - rhs).lpNorm<Eigen::Infinity>() > 1e-9)
      throw Error(ErrorCode::kSingular, "DC power-flow matrix is singular");
    for (Index a = 0; a + 1 < n; ++a) op.theta(island[static_cast<size_t>(a)]) = sol(a);
  }
  if (ac_polish) op.theta = solve_power_flow(adj_net, op.theta);
  return op;
}

GridNetwork reduced(const GridNetwork& net) {
  GridNetwork out;
  out.omega_max = net.omega_max;
  std::vector<Index> keep;
  for (Index i = 0; i < net.size(); ++i) {
    if (net.buses[static_cast<size_t>(i)].in_service) {
      keep.push_back(i);
      out.buses.push_back(net.buses[static_cast<size_t>(i)]);
    }
  }
  for (const Line& l : net.lines) {
    if (!l.in_service) continue;
    if (!net.buses[static_cast<size_t>(net.index_of(l.from))].in_service) continue;
    if (!net.buses[static_cast<size_t>(net.index_of(l.to))].in_service) continue;
    out.lines.push_back(l);
  }
  if (net.theta0.size() == net.size()) {
    out.theta0.resize(static_cast<Index>(keep.size()));
    for (size_t k = 0; k < keep.size(); ++k) out.theta0(static_cast<Index>(k)) = net.theta0(keep[k]);
  }
  return out;
}

std::vector<int> hop_distance(const GridNetwork& net, int source) {
  const auto adj = net.adjacency();
  std::vector<int> dist(net.buses.size(), -1);
  const Index s = net.index_of(source);
  dist[static_cast<size_t>(s)] = 0;
  std::deque<Index> queue{s};
  while (!queue.empty()) {
    const Index i = queue.front();
    queue.pop_front();
    for (const auto& nb : adj[static_cast<size_t>(i)]) {
      if (dist[static_cast<size_t>(nb.bus)] < 0) {
        dist[static_cast<size_t>(nb.bus)] = dist[static_cast<size_t>(i)] + 1;
        queue.push_back(nb.bus);
      }
    }
  }
  return dist;
}

}  // namespace netinv::grid
