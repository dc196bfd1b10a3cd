#include "netinv/tube_mpc.hpp"

#include "netinv/error.hpp"
#include "netinv/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace netinv::mpc {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

DelayStructure delay_structure(const grid::GridNetwork& net, int source_id, int edges_per_step, int horizon) {
  if (edges_per_step < 1) throw Error(ErrorCode::kConfig, "edges_per_step must be positive");
  const auto it = std::find_if(net.buses.begin(), net.buses.end(), [&](const grid::Bus& b) { return b.id == source_id; });
  if (it == net.buses.end() || !it->in_service)
    throw Error(ErrorCode::kSourceMissing, "source bus " + std::to_string(source_id) + " is not in the network", source_id);
  const std::vector<int> hops = grid::hop_distance(net, source_id);
  DelayStructure d;
  for (size_t i = 0; i < hops.size(); ++i) {
    if (hops[i] < 0) {
      d.activation.push_back(horizon);
      d.unreachable.push_back(net.buses[i].id);
    } else {
      d.activation.push_back((hops[i] + edges_per_step - 1) / edges_per_step);
    }
  }
  return d;
}

namespace {

// x(t) = c[t] + g[t] z for t = 0..T.
struct Prediction {
  std::vector<VectorXd> c;
  std::vector<MatrixXd> g;
};

void check_plan(const PlanProblem& p) {
  const Index n = p.a.rows(), m = p.b.cols();
  auto fail = [](const char* what) { throw Error(ErrorCode::kDimensionMismatch, what); };
  if (p.a.cols() != n || p.b.rows() != n) fail("plan model sizes");
  if (p.x0.size() != n || p.u_ss.size() != m || p.u_max.size() != m) fail("plan vector sizes");
  if (static_cast<Index>(p.activation.size()) != m) fail("activation per input");
  if (p.q.rows() != n || p.q_terminal.rows() != n || p.r.rows() != m) fail("plan weights");
  if (p.d_hat.size() && (p.e.rows() != n || p.d_hat.rows() != p.e.cols() || p.d_hat.cols() < p.horizon))
    fail("disturbance prediction");
  if (p.horizon < 1) throw Error(ErrorCode::kConfig, "horizon must be positive");
}

}  // namespace

ReferenceTrajectory plan(const PlanProblem& p) {
  check_plan(p);
  const Index n = p.a.rows(), m = p.b.cols();
  const int horizon = p.horizon;

  // One variable per (step, input) whose bus already holds the plan.
  std::vector<Index> var(static_cast<size_t>(horizon * m), -1);
  Index nv = 0;
  for (int t = 0; t < horizon; ++t)
    for (Index j = 0; j < m; ++j)
      if (t >= p.activation[static_cast<size_t>(j)]) var[static_cast<size_t>(t * m + j)] = nv++;

  Prediction pr;
  pr.c.push_back(p.x0);
  pr.g.push_back(MatrixXd::Zero(n, nv));
  for (int t = 0; t < horizon; ++t) {
    VectorXd c = p.a * pr.c.back() - p.b * p.u_ss;
    if (p.d_hat.size()) c += p.e * p.d_hat.col(t);
    MatrixXd g = p.a * pr.g.back();
    for (Index j = 0; j < m; ++j) {
      const Index v = var[static_cast<size_t>(t * m + j)];
      if (v >= 0) g.col(v) += p.b.col(j);
    }
    pr.c.push_back(std::move(c));
    pr.g.push_back(std::move(g));
  }

  optim::QpProblem qp = optim::QpProblem::with_variables(nv);
  qp.hessian = MatrixXd::Zero(nv, nv);
  double constant = 0.0;
  for (int t = 1; t <= horizon; ++t) {
    const MatrixXd& q = t == horizon ? p.q_terminal : p.q;
    const MatrixXd qg = q * pr.g[static_cast<size_t>(t)];
    qp.hessian += 2.0 * pr.g[static_cast<size_t>(t)].transpose() * qg;
    qp.linear += 2.0 * qg.transpose() * pr.c[static_cast<size_t>(t)];
    constant += pr.c[static_cast<size_t>(t)].dot(q * pr.c[static_cast<size_t>(t)]);
  }
  // (u - u_ss)' R (u - u_ss) with u = 0 on inputs not yet reached.
  for (int t = 0; t < horizon; ++t) {
    MatrixXd sel = MatrixXd::Zero(m, nv);
    for (Index j = 0; j < m; ++j) {
      const Index v = var[static_cast<size_t>(t * m + j)];
      if (v >= 0) sel(j, v) = 1.0;
    }
    const VectorXd v0 = -p.u_ss;
    qp.hessian += 2.0 * sel.transpose() * p.r * sel;
    qp.linear += 2.0 * sel.transpose() * p.r * v0;
    constant += v0.dot(p.r * v0);
  }
  for (int t = 0; t < horizon; ++t) {
    for (Index j = 0; j < m; ++j) {
      const Index v = var[static_cast<size_t>(t * m + j)];
      if (v < 0) continue;
      const RowVectorXd row = RowVectorXd::Unit(nv, v);
      qp.add_inequality(row, p.u_max(j));
      qp.add_inequality(-row, p.u_max(j));
    }
  }
  // Caps on steps 1..last; `slack` (if >= 0) relaxes all of them uniformly.
  auto add_caps = [&](optim::QpProblem& prob, Index slack, int last) {
    for (int t = 1; t <= last; ++t) {
      for (Index i : p.capped) {
        RowVectorXd row = RowVectorXd::Zero(prob.num_variables());
        row.head(nv) = pr.g[static_cast<size_t>(t)].row(i);
        if (slack >= 0) row(slack) = -1.0;
        const double c = pr.c[static_cast<size_t>(t)](i);
        prob.add_inequality(row, p.omega_cap - c);
        row.head(nv) *= -1.0;
        prob.add_inequality(row, p.omega_cap + c);
      }
    }
  };
  const Index n_input_rows = qp.a_ub.rows();
  if (std::isfinite(p.omega_cap)) add_caps(qp, -1, horizon);

  const optim::Solution sol = optim::solve_qp(qp);
  if (!sol.optimal()) {
    // Smallest relaxation of the caps up to `last`, inputs kept hard.
    auto min_slack = [&](int last) {
      optim::QpProblem shell = optim::QpProblem::with_variables(nv + 1);
      for (Index r = 0; r < n_input_rows; ++r) {
        RowVectorXd row = RowVectorXd::Zero(nv + 1);
        row.head(nv) = qp.a_ub.row(r);
        shell.add_inequality(row, qp.b_ub(r));
      }
      add_caps(shell, nv, last);
      shell.add_inequality(-RowVectorXd::Unit(nv + 1, nv), 0.0);
      optim::LpProblem lp = optim::LpProblem::with_variables(nv + 1);
      lp.objective(nv) = 1.0;
      lp.a_ub = shell.a_ub;
      lp.b_ub = shell.b_ub;
      return optim::solve_lp(lp);
    };
    // Infeasibility is monotone in the number of capped steps.
    int lo = 1, hi = horizon;
    while (lo < hi) {
      const int mid = (lo + hi) / 2;
      const optim::Solution r = min_slack(mid);
      if (r.optimal() && r.x(nv) <= 1e-9) lo = mid + 1;
      else hi = mid;
    }
    const optim::Solution r = min_slack(lo);
    Index row = -1;
    if (r.optimal()) {
      double worst = -optim::kInf;
      for (Index i : p.capped) {
        const double x = std::abs(pr.c[static_cast<size_t>(lo)](i) + pr.g[static_cast<size_t>(lo)].row(i).dot(r.x.head(nv)));
        if (x > worst) {
          worst = x;
          row = i;
        }
      }
    }
    throw Error(ErrorCode::kPlanInfeasible,
                "frequency cap unreachable under the delay pattern (step " + std::to_string(lo) + ", state row " +
                    std::to_string(row) + ")",
                lo);
  }

  ReferenceTrajectory ref;
  ref.horizon = horizon;
  ref.d_hat = p.d_hat;
  ref.x_hat.resize(n, horizon + 1);
  for (int t = 0; t <= horizon; ++t)
    ref.x_hat.col(t) = pr.c[static_cast<size_t>(t)] + pr.g[static_cast<size_t>(t)] * sol.x;
  ref.u_hat = MatrixXd::Zero(m, horizon);
  for (int t = 0; t < horizon; ++t)
    for (Index j = 0; j < m; ++j) {
      const Index v = var[static_cast<size_t>(t * m + j)];
      if (v >= 0) ref.u_hat(j, t) = sol.x(v);
    }
  ref.cost = sol.value + constant;
  ref.kkt_residual = optim::qp_kkt_residual(qp, sol);
  return ref;
}

RciResult error_rci(const contract::NodeModel& node, const VectorXd& delta_axis) {
  return contract::synthesize(node, delta_axis);
}

MatrixXd lqr_gain(const MatrixXd& a, const MatrixXd& b, const MatrixXd& q, const MatrixXd& r) {
  if (a.rows() != a.cols() || b.rows() != a.rows() || q.rows() != a.rows() || r.rows() != b.cols())
    throw Error(ErrorCode::kDimensionMismatch, "LQR sizes");
  MatrixXd p = q;
  for (int it = 0; it < 100000; ++it) {
    const MatrixXd bp = b.transpose() * p;
    const MatrixXd next = q + a.transpose() * p * a - (bp * a).transpose() * (r + bp * b).ldlt().solve(bp * a);
    const double change = (next - p).lpNorm<Eigen::Infinity>();
    p = next;
    if (change <= 1e-12 * (1.0 + p.lpNorm<Eigen::Infinity>())) {
      const MatrixXd bp2 = b.transpose() * p;
      return -(r + bp2 * b).ldlt().solve(bp2 * a);
    }
  }
  throw Error(ErrorCode::kDiverged, "Riccati iteration did not converge");
}

namespace {

VectorXd supervise_error(const cbf::BarrierFunction& tube, const LinearSubsystem& sys, DisturbanceSpec env,
                         const VectorXd& e, const VectorXd& u_hat, const VectorXd& w_err, const VectorXd& du0,
                         const Polytope& input) {
  env.input = Polytope{input.p, input.q - input.p * u_hat};
  return u_hat + cbf::supervise(tube, sys, e, w_err, du0, env);
}

}  // namespace

VectorXd track(const cbf::BarrierFunction& tube, const LinearSubsystem& sys, const DisturbanceSpec& err_env,
               const VectorXd& x, const VectorXd& x_hat, const VectorXd& u_hat, const VectorXd& w_err, const MatrixXd& k,
               const Polytope& input) {
  const VectorXd e = x - x_hat;
  return supervise_error(tube, sys, err_env, e, u_hat, w_err, k * e, input);
}

// ---------------------------------------------------------------- pipeline

VectorXd ContingencyPlan::x_hat(Index i, int step) const {
  const auto off = post.state_offsets();
  const Index dim = post.buses[static_cast<size_t>(i)].states();
  if (step < 0) return VectorXd::Zero(dim);
  if (step <= ref.horizon) return ref.x_hat.col(step).segment(off[static_cast<size_t>(i)], dim);
  const Index k = step - ref.horizon - 1;
  if (k >= tail.cols()) return VectorXd::Zero(dim);
  return tail.col(k).segment(off[static_cast<size_t>(i)], dim);
}

double ContingencyPlan::u_hat(Index i, int step) const {
  if (step < 0 || step >= ref.horizon) return u_ss(i);
  return ref.u_hat(i, step);
}

ContingencyPlan prepare_contingency(const grid::GridNetwork& pre, const grid::ContingencyEvent& event,
                                    const ContingencyOptions& opt) {
  const double ts = opt.tube.ts;
  ContingencyPlan cp;
  cp.event = event;
  cp.ts = ts;
  cp.event_step = static_cast<int>(std::llround(event.time / ts));

  grid::GridNetwork after = pre;
  grid::apply_event(after, event);
  for (Index i = 0; i < after.size(); ++i)
    if (after.buses[static_cast<size_t>(i)].in_service) cp.keep.push_back(i);
  grid::GridNetwork post = grid::reduced(after);

  const grid::OperatingPoint op = grid::new_operating_point(post, opt.ac_polish);
  // The target is fixed up to a rotation per island; take the one closest to
  // the pre-event angles.
  VectorXd theta = op.theta;
  VectorXd pre_theta(post.size());
  for (size_t k = 0; k < cp.keep.size(); ++k) pre_theta(static_cast<Index>(k)) = pre.theta0(cp.keep[k]);
  for (const auto& island : post.islands()) {
    double shift = 0.0;
    for (Index i : island) shift += pre_theta(i) - theta(i);
    shift /= static_cast<double>(island.size());
    for (Index i : island) theta(i) += shift;
  }
  cp.u_ss = VectorXd::Zero(post.size());
  for (Index i = 0; i < post.size(); ++i) {
    grid::Bus& b = post.buses[static_cast<size_t>(i)];
    cp.u_ss(i) = b.p_in - op.p_in(i);
    b.p_in = op.p_in(i);
    if (std::abs(cp.u_ss(i)) > opt.plan_share * b.u_max + 1e-12)
      throw Error(ErrorCode::kPlanInfeasible, "target needs more input than the plan share at bus " + std::to_string(b.id), b.id);
  }
  post.theta0 = theta;
  cp.post = post;

  // Tubes on the error dynamics, which share the linear model about x*.
  grid::GridNetwork tube_net = post;
  for (grid::Bus& b : tube_net.buses) b.u_max *= 1.0 - opt.plan_share;
  scenario::GridSynthesisOptions topt = opt.tube;
  if (topt.theta_a.size() != post.size()) {
    const double a = topt.theta_a.size() ? topt.theta_a.maxCoeff() : 0.02;
    topt.theta_a = VectorXd::Constant(post.size(), a);
  }
  const auto nodes = scenario::grid_nodes(tube_net, topt);
  VectorXd axis_max(post.size());
  for (Index i = 0; i < post.size(); ++i) {
    const auto& nd = nodes[static_cast<size_t>(i)];
    axis_max(i) = nd.axis_weights.size() ? nd.axis_weights.sum() * topt.theta_a.maxCoeff() : 0.0;
  }
  cp.tube = scenario::synthesize(tube_net, topt, axis_max, opt.points);

  cp.omega_fb = 0.0;
  for (Index i = 0; i < post.size(); ++i) {
    if (!post.buses[static_cast<size_t>(i)].generator()) continue;
    const Polytope& s = cp.tube.rcis[static_cast<size_t>(i)].set;
    cp.omega_fb = std::max({cp.omega_fb, support(s, VectorXd::Unit(2, 1)), support(s, -VectorXd::Unit(2, 1))});
  }
  cp.omega_ff = post.omega_max - cp.omega_fb;
  if (cp.omega_ff <= 0.0) throw Error(ErrorCode::kPlanInfeasible, "tube leaves no frequency margin for the plan");

  cp.delay = delay_structure(post, opt.source_bus, opt.edges_per_step, opt.horizon);

  const grid::NetworkModel model = grid::discretize(grid::linearize_network(post, post.theta0), ts);
  const auto off = post.state_offsets();
  const Index n = post.state_dim();
  PlanProblem pp;
  pp.a = model.a;
  pp.b = model.b;
  pp.e = model.e;
  pp.x0 = VectorXd::Zero(n);
  pp.q = MatrixXd::Zero(n, n);
  pp.u_max.resize(post.size());
  for (Index i = 0; i < post.size(); ++i) {
    const grid::Bus& b = post.buses[static_cast<size_t>(i)];
    const Index o = off[static_cast<size_t>(i)];
    pp.x0(o) = pre_theta(i) - post.theta0(i);
    pp.q(o, o) = opt.q_theta;
    if (b.generator()) {
      pp.q(o + 1, o + 1) = opt.q_omega;
      pp.capped.push_back(o + 1);
    }
    pp.u_max(i) = opt.plan_share * b.u_max;
  }
  pp.u_ss = cp.u_ss;
  pp.omega_cap = cp.omega_ff;
  pp.activation = cp.delay.activation;
  pp.r = opt.r * MatrixXd::Identity(post.size(), post.size());
  pp.q_terminal = opt.terminal * pp.q;
  pp.horizon = opt.horizon;
  cp.ref = plan(pp);
  std::vector<VectorXd> tail;
  VectorXd x = cp.ref.x_hat.col(opt.horizon);
  while (tail.size() < 100000) {
    x = pp.a * x;
    if (x.lpNorm<Eigen::Infinity>() < 1e-12) break;
    tail.push_back(x);
  }
  cp.tail.resize(n, static_cast<Index>(tail.size()));
  for (size_t k = 0; k < tail.size(); ++k) cp.tail.col(static_cast<Index>(k)) = tail[k];

  for (Index i = 0; i < post.size(); ++i) {
    const auto& sys = cp.tube.nodes[static_cast<size_t>(i)].sys;
    MatrixXd q = MatrixXd::Identity(sys.n_state(), sys.n_state()) * opt.q_theta;
    if (sys.n_state() > 1) q(1, 1) = opt.q_omega;
    cp.k_lqr.push_back(lqr_gain(sys.a, sys.b, q, MatrixXd::Identity(1, 1) * opt.r));
  }
  return cp;
}

namespace {

// Local error state of reduced bus i at `step` samples after the event.
VectorXd error_state(const ContingencyPlan& cp, Index i, int step, const VectorXd& theta, const VectorXd& omega) {
  const Index o = cp.keep[static_cast<size_t>(i)];
  const grid::Bus& b = cp.post.buses[static_cast<size_t>(i)];
  VectorXd x(b.states());
  x(0) = theta(o) - cp.post.theta0(i);
  if (b.generator()) x(1) = omega(o);
  return x - cp.x_hat(i, step);
}

}  // namespace

grid::Controller contingency_controller(const ContingencyPlan& cp, const grid::Controller& before,
                                        const grid::LegacyGains& gains, TrackingStats* stats) {
  std::vector<DisturbanceSpec> envs;
  for (Index i = 0; i < cp.post.size(); ++i) envs.push_back(cp.tube.environment(i));
  return [&cp, before, gains, stats, envs](const grid::Measurement& m) {
    const Index n = m.theta.size();
    if (m.k < cp.event_step) {
      if (before) return before(m);
      return grid::ControlAction{VectorXd::Zero(n), VectorXd::Zero(n)};
    }
    const int step = static_cast<int>(m.k) - cp.event_step;
    grid::ControlAction act{VectorXd::Zero(n), VectorXd::Zero(n)};
    for (Index i = 0; i < cp.post.size(); ++i) {
      if (step < cp.ref.horizon && step < cp.delay.activation[static_cast<size_t>(i)]) continue;
      const Index o = cp.keep[static_cast<size_t>(i)];
      const grid::Bus& b = cp.post.buses[static_cast<size_t>(i)];
      const auto& node = cp.tube.nodes[static_cast<size_t>(i)];
      const VectorXd e = error_state(cp, i, step, m.theta, m.omega);

      VectorXd w(node.sys.n_measured());
      Index k = 0;
      if (node.n_axes() > 0) {
        double axis = 0.0;
        for (size_t j = 0; j < node.neighbors.size(); ++j) {
          const Index nb = node.neighbors[j];
          const double ref = cp.post.theta0(nb) + cp.x_hat(nb, step)(0);
          axis += node.axis_weights(0, static_cast<Index>(j)) * (m.theta_delayed(cp.keep[static_cast<size_t>(nb)]) - ref);
        }
        w(k++) = axis;
      }
      w(k) = m.d(o);

      const VectorXd u_hat = VectorXd::Constant(1, cp.u_hat(i, step));
      VectorXd du0;
      if (step < cp.ref.horizon) du0 = cp.k_lqr[static_cast<size_t>(i)] * e;
      else {
        const VectorXd dev = e + cp.x_hat(i, step);
        du0 = VectorXd::Constant(1, grid::legacy_control(b, gains, dev(0), b.generator() ? dev(1) : 0.0));
      }
      act.u0(o) = u_hat(0) + du0(0);
      const Polytope input = Polytope::symmetric_box(VectorXd::Constant(1, b.u_max));
      try {
        const VectorXd u = supervise_error(cp.tube.barriers[static_cast<size_t>(i)], node.sys,
                                           envs[static_cast<size_t>(i)], e, u_hat, w, du0, input);
        if (stats && u(0) != act.u0(o)) ++stats->interventions;
        act.u(o) = u(0);
      } catch (const Error& err) {
        if (err.code() != ErrorCode::kSupervisionInfeasible) throw;
        if (stats) ++stats->breaches;
        act.u(o) = act.u0(o);
      }
    }
    return act;
  };
}

std::vector<double> tube_violation(const ContingencyPlan& cp, const grid::Trace& trace) {
  std::vector<double> out(trace.t.size(), std::numeric_limits<double>::quiet_NaN());
  for (size_t k = 0; k < trace.t.size(); ++k) {
    const int step = static_cast<int>(k) - cp.event_step;
    if (step < 0) continue;
    double worst = -std::numeric_limits<double>::infinity();
    for (Index i = 0; i < cp.post.size(); ++i) {
      const VectorXd e = error_state(cp, i, step, trace.theta[k], trace.omega[k]);
      const Polytope& s = cp.tube.rcis[static_cast<size_t>(i)].set;
      worst = std::max(worst, (s.p * e - s.q).maxCoeff());
    }
    out[k] = worst;
  }
  return out;
}

std::vector<double> target_distance(const ContingencyPlan& cp, const grid::Trace& trace) {
  std::vector<double> out;
  for (size_t k = 0; k < trace.t.size(); ++k) {
    double d = 0.0;
    for (Index i = 0; i < cp.post.size(); ++i) {
      const Index o = cp.keep[static_cast<size_t>(i)];
      d = std::max(d, std::abs(trace.theta[k](o) - cp.post.theta0(i)));
      if (cp.post.buses[static_cast<size_t>(i)].generator()) d = std::max(d, std::abs(trace.omega[k](o)));
    }
    out.push_back(d);
  }
  return out;
}

}  // namespace netinv::mpc
