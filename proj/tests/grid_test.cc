#include "netinv/error.hpp"
#include "netinv/grid.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace netinv;
using namespace netinv::grid;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

Bus gen(int id, double m, double d, double p) {
  Bus b;
  b.id = id;
  b.kind = BusKind::kGenerator;
  b.m = m;
  b.d = d;
  b.p_in = p;
  b.u_max = 1.0;
  return b;
}

Bus load(int id, double d, double r) {
  Bus b;
  b.id = id;
  b.kind = BusKind::kLoad;
  b.d = d;
  b.r = r;
  b.u_max = 1.0;
  return b;
}

GridNetwork two_bus(double p = 0.0) {
  GridNetwork net;
  net.buses = {gen(1, 0.2, 1.0, p), load(2, 2.0, p)};
  net.lines = {{1, 2, 0.5}};
  net.theta0 = VectorXd::Zero(2);
  return net;
}

GridNetwork triangle() {
  GridNetwork net;
  net.buses = {gen(1, 0.15, 1.0, 0.6), gen(2, 0.1, 0.8, 0.3), load(3, 2.0, 0.9)};
  net.lines = {{1, 2, 0.2}, {2, 3, 0.25}, {1, 3, 0.3}};
  net.theta0 = solve_power_flow(net);
  return net;
}

Disturbance zero_dist(Eigen::Index n) {
  return [n](double) { return VectorXd::Zero(n); };
}

Controller zero_ctrl(Eigen::Index n) {
  return [n](const Measurement&) { return ControlAction{VectorXd::Zero(n), VectorXd::Zero(n)}; };
}

}  // namespace

TEST(Linearize, CouplingCoefficient) {
  const auto subs = linearize(two_bus(), VectorXd::Zero(2));
  ASSERT_EQ(subs.size(), 2u);
  // B_12 = V V / X cos 0 = 2, generator column scaled by 1/M.
  EXPECT_NEAR(subs[0].e_coupling(1, 0) * 0.2, 2.0, 1e-12);
  EXPECT_NEAR(subs[0].a(1, 0), -2.0 / 0.2, 1e-12);
  EXPECT_NEAR(subs[0].b(1, 0), -1.0 / 0.2, 1e-12);
  EXPECT_NEAR(subs[1].a(0, 0), -2.0 / 2.0, 1e-12);
  EXPECT_EQ(subs[0].neighbors, std::vector<int>{1});
}

TEST(Linearize, LoadRowSumsNeighbours) {
  GridNetwork net = triangle();
  const auto subs = linearize(net, net.theta0);
  const auto& s = subs[2];
  ASSERT_EQ(s.n_state(), 1);
  ASSERT_EQ(s.n_coupling(), 2);
  EXPECT_NEAR(s.a(0, 0), -s.e_coupling.sum(), 1e-12);
  const double b13 = 1.0 / 0.3 * std::cos(net.theta0(0) - net.theta0(2));
  const double b23 = 1.0 / 0.25 * std::cos(net.theta0(1) - net.theta0(2));
  EXPECT_NEAR(s.a(0, 0), -(b13 + b23) / 2.0, 1e-12);
}

TEST(Linearize, RejectsNonEquilibrium) {
  GridNetwork net = two_bus(0.5);
  try {
    linearize(net, VectorXd::Zero(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotAnEquilibrium);
  }
}

TEST(Discretize, MatchesSeriesOracle) {
  const GridNetwork net = triangle();
  const auto subs = linearize(net, net.theta0);
  const double ts = 0.05;
  const auto d = discretize(subs[0], ts);
  EXPECT_LT((d.a - oracle::expm(subs[0].a * ts)).norm(), 1e-13);
  // Augmented-matrix identity for the input integral.
  MatrixXd aug = MatrixXd::Zero(3, 3);
  aug.topLeftCorner(2, 2) = subs[0].a * ts;
  aug.topRightCorner(2, 1) = subs[0].b * ts;
  EXPECT_LT((d.b - oracle::expm(aug).topRightCorner(2, 1)).norm(), 1e-13);
}

TEST(Discretize, ZeroAndScalar) {
  LinearSubsystem s;
  s.a = MatrixXd::Zero(1, 1);
  s.b = MatrixXd::Constant(1, 1, 3.0);
  s.e_coupling = MatrixXd::Zero(1, 0);
  s.e_exo = MatrixXd::Constant(1, 1, 1.0);
  s.c = Eigen::RowVectorXd::Ones(1);
  auto d = discretize(s, 0.1);
  EXPECT_NEAR(d.a(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(d.b(0, 0), 0.3, 1e-14);
  s.a(0, 0) = -2.0;
  d = discretize(s, 0.1);
  EXPECT_NEAR(d.a(0, 0), std::exp(-0.2), 1e-14);
  EXPECT_NEAR(d.e_exo(0, 0), (1.0 - std::exp(-0.2)) / 2.0, 1e-14);
  EXPECT_DOUBLE_EQ(d.ts, 0.1);
}

TEST(LinearizationError, SineScan) {
  EXPECT_EQ(sine_linearization_error(0.0, 0.0), 0.0);
  const double e = sine_linearization_error(0.0, 0.2);
  EXPECT_NEAR(e, 0.2 - std::sin(0.2), 1e-12);
  EXPECT_NEAR(e, 1.331e-3, 1e-6);
  EXPECT_LE(e, std::pow(0.2, 3) / 6.0);
  double prev = 0.0;
  for (double dev = 0.0; dev <= 0.5; dev += 0.05) {
    const double v = sine_linearization_error(0.3, dev);
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(LinearizationError, AggregatesPerBus) {
  const GridNetwork net = two_bus();
  const VectorXd b = linearization_error_bound(net, VectorXd::Constant(1, 0.2));
  const double line = 2.0 * (0.2 - std::sin(0.2));
  EXPECT_NEAR(b(0), line / 0.2, 1e-10);
  EXPECT_NEAR(b(1), line / 2.0, 1e-10);
  EXPECT_EQ(linearization_error_bound(net, VectorXd::Zero(1)).norm(), 0.0);
}

TEST(OperatingPoint, TwoBusDc) {
  GridNetwork net = two_bus();
  net.buses[0].p_in = 1.0;
  net.buses[1].r = 1.0;
  const OperatingPoint op = new_operating_point(net);
  EXPECT_NEAR(op.theta(0), 0.5, 1e-12);
  EXPECT_NEAR(op.theta(1), 0.0, 1e-12);
  EXPECT_NEAR(op.p_in(0), 1.0, 1e-12);
}

TEST(OperatingPoint, NoEventKeepsTheta) {
  const GridNetwork net = triangle();
  const OperatingPoint op = new_operating_point(net);
  EXPECT_EQ(op.theta, net.theta0);
}

TEST(OperatingPoint, RebalancesByInertia) {
  GridNetwork net = triangle();
  net.buses[2].r += 0.25;
  const OperatingPoint op = new_operating_point(net, true);
  EXPECT_NEAR(op.p_in(0) - 0.6, 0.25 * 0.15 / 0.25, 1e-12);
  EXPECT_NEAR(op.p_in(1) - 0.3, 0.25 * 0.10 / 0.25, 1e-12);
  GridNetwork after = net;
  after.buses[0].p_in = op.p_in(0);
  after.buses[1].p_in = op.p_in(1);
  EXPECT_LT(after.balance_residual(op.theta), 1e-10);
}

TEST(OperatingPoint, BusLossWithZeroInjection) {
  GridNetwork net;
  net.buses = {gen(1, 0.2, 1.0, 1.0), load(2, 2.0, 1.0), load(3, 2.0, 0.0)};
  net.lines = {{1, 2, 0.5}, {2, 3, 0.5}, {1, 3, 0.5}};
  net.theta0 = solve_power_flow(net);
  apply_event(net, {0.0, EventKind::kBusLoss, 3, 0, 0.0});
  const OperatingPoint op = new_operating_point(net);
  EXPECT_NEAR(op.p_in(0), 1.0, 1e-12);
  EXPECT_NEAR(op.theta(0), 0.5, 1e-12);
  EXPECT_NEAR(op.theta(1), 0.0, 1e-12);
}

TEST(OperatingPoint, IslandWithoutGenerator) {
  GridNetwork net = two_bus();
  net.buses[1].r = 0.3;
  apply_event(net, {0.0, EventKind::kLineTrip, 1, 2, 0.0});
  EXPECT_EQ(net.islands().size(), 2u);
  try {
    new_operating_point(net);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSingular);
  }
}

TEST(PowerFlow, NewtonBalances) {
  const GridNetwork net = triangle();
  EXPECT_LT(net.balance_residual(net.theta0), 1e-10);
  EXPECT_EQ(net.theta0(2), 0.0);
}

TEST(Simulate, EquilibriumIsConstant) {
  const GridNetwork net = triangle();
  const VectorXd x0 = equilibrium_state(net, net.theta0);
  SimOptions opt;
  opt.t_end = 10.0;
  const Trace tr = simulate(net, x0, zero_ctrl(3), zero_dist(3), {}, opt);
  ASSERT_EQ(tr.samples(), 201);
  for (Eigen::Index k = 0; k < tr.samples(); ++k) {
    EXPECT_LT((tr.theta[static_cast<size_t>(k)] - net.theta0).lpNorm<Eigen::Infinity>(), 1e-9);
    EXPECT_LT(tr.omega[static_cast<size_t>(k)].lpNorm<Eigen::Infinity>(), 1e-9);
  }
}

TEST(Simulate, InjectionStepSettles) {
  const GridNetwork net = two_bus();
  SimOptions opt;
  opt.t_end = 40.0;
  const double dp = 0.01;
  const Trace tr = simulate(net, equilibrium_state(net, net.theta0), zero_ctrl(2), zero_dist(2),
                            {{1.0, EventKind::kInjectionStep, 1, 0, dp}}, opt);
  EXPECT_EQ(tr.event[20], "injection_step:1");
  EXPECT_GT(tr.omega[22](0), 0.0);
  // Without control the pair settles at the common frequency dp / (D1 + D2).
  const double w_inf = dp / (1.0 + 2.0);
  EXPECT_NEAR(tr.omega.back()(0), w_inf, 1e-6);
  EXPECT_NEAR(tr.omega.back()(1), w_inf, 1e-6);
}

TEST(Simulate, EnergyNonincreasing) {
  const GridNetwork net = triangle();
  VectorXd x = equilibrium_state(net, net.theta0);
  x(0) += 0.1;
  x(1) = 0.05;
  x(3) = -0.04;
  const auto adj = net.adjacency();
  const VectorXd p = net.injection();
  auto energy = [&](const VectorXd& s) {
    const VectorXd th = (VectorXd(3) << s(0), s(2), s(4)).finished();
    double w = 0.5 * 0.15 * s(1) * s(1) + 0.5 * 0.1 * s(3) * s(3) - p.dot(th);
    for (Eigen::Index i = 0; i < 3; ++i) {
      for (const auto& nb : adj[static_cast<size_t>(i)]) w += 0.5 * nb.coef * (1.0 - std::cos(th(i) - th(nb.bus)));
    }
    return w;
  };
  double prev = energy(x);
  for (int k = 0; k < 200; ++k) {
    x = step(net, x, VectorXd::Zero(3), zero_dist(3), 0.05 * k, 0.05);
    const double w = energy(x);
    EXPECT_LE(w, prev + 1e-8);
    prev = w;
  }
}

TEST(Simulate, LinearRegimeMatchesDiscreteModel) {
  const GridNetwork net = triangle();
  const double ts = 0.05;
  const NetworkModel dm = discretize(linearize_network(net, net.theta0), ts);
  const VectorXd xe = equilibrium_state(net, net.theta0);
  VectorXd x = xe;
  VectorXd z = VectorXd::Zero(xe.size());
  const VectorXd u = (VectorXd(3) << 1e-4, -5e-5, 2e-5).finished();
  const VectorXd d = (VectorXd(3) << 0.0, 1e-4, -1e-4).finished();
  const Disturbance dist = [&](double) { return d; };
  for (int k = 0; k < 100; ++k) {
    x = step(net, x, u, dist, k * ts, ts);
    z = dm.a * z + dm.b * u + dm.e * d;
    EXPECT_LT((x - xe - z).lpNorm<Eigen::Infinity>(), 1e-6);
  }
}

TEST(Simulate, FiniteDifferenceJacobian) {
  const GridNetwork net = triangle();
  const double ts = 0.05;
  const NetworkModel dm = discretize(linearize_network(net, net.theta0), ts);
  const VectorXd xe = equilibrium_state(net, net.theta0);
  const Eigen::Index n = xe.size();
  const double h = 1e-6;
  MatrixXd jac(n, n), jb(n, 3), je(n, 3);
  const VectorXd zu = VectorXd::Zero(3);
  for (Eigen::Index j = 0; j < n; ++j) {
    VectorXd dx = VectorXd::Zero(n);
    dx(j) = h;
    jac.col(j) = (step(net, xe + dx, zu, zero_dist(3), 0, ts) - step(net, xe - dx, zu, zero_dist(3), 0, ts)) / (2 * h);
  }
  for (Eigen::Index j = 0; j < 3; ++j) {
    VectorXd du = VectorXd::Zero(3);
    du(j) = h;
    const Disturbance dp = [&](double) { return du; };
    const Disturbance dm_ = [&](double) -> VectorXd { return -du; };
    jb.col(j) = (step(net, xe, du, zero_dist(3), 0, ts) - step(net, xe, -du, zero_dist(3), 0, ts)) / (2 * h);
    je.col(j) = (step(net, xe, zu, dp, 0, ts) - step(net, xe, zu, dm_, 0, ts)) / (2 * h);
  }
  EXPECT_LT((jac - dm.a).lpNorm<Eigen::Infinity>(), 1e-6);
  EXPECT_LT((jb - dm.b).lpNorm<Eigen::Infinity>(), 1e-6);
  EXPECT_LT((je - dm.e).lpNorm<Eigen::Infinity>(), 1e-6);
}

TEST(Simulate, MismatchWithinErrorBound) {
  const GridNetwork net = triangle();
  const double ts = 0.05, box = 0.1;
  const NetworkModel cm = linearize_network(net, net.theta0);
  const NetworkModel dm = discretize(cm, ts);
  const VectorXd xe = equilibrium_state(net, net.theta0);
  // Angle rate over the step is below 2 rad/s for these states; lines see
  // at most 2 (box + 2 ts) of relative motion.
  const VectorXd dev = VectorXd::Constant(3, 2.0 * (box + 2.0 * ts));
  const VectorXd bound = step_error_bound(net, cm, linearization_error_bound(net, dev), ts);
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  double worst_ratio = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    VectorXd dx(xe.size());
    for (Eigen::Index i = 0; i < dx.size(); ++i) dx(i) = box * uni(rng);
    const VectorXd u = VectorXd::NullaryExpr(3, [&] { return 0.2 * uni(rng); });
    const VectorXd nl = step(net, xe + dx, u, zero_dist(3), 0, ts) - xe;
    const VectorXd lin = dm.a * dx + dm.b * u;
    const VectorXd mismatch = (nl - lin).cwiseAbs();
    for (Eigen::Index i = 0; i < dx.size(); ++i) {
      EXPECT_LE(mismatch(i), bound(i) + 1e-12) << "state " << i;
      if (bound(i) > 0) worst_ratio = std::max(worst_ratio, mismatch(i) / bound(i));
    }
  }
  EXPECT_GT(worst_ratio, 0.01);  // bound is not vacuous
}

TEST(Legacy, ZeroAndSaturation) {
  const Bus g = gen(1, 0.2, 1.0, 0.0);
  const LegacyGains k;
  EXPECT_EQ(legacy_control(g, k, 0.0, 0.0), 0.0);
  EXPECT_EQ(legacy_control(g, k, 0.0, 1e6), g.u_max);
  EXPECT_EQ(legacy_control(g, k, -1e6, 0.0), -g.u_max);
  const Bus l = load(2, 2.0, 0.0);
  EXPECT_NEAR(legacy_control(l, k, 0.1, 0.0), 0.1 * k.kp_load, 1e-15);
}

TEST(Legacy, TwoBusClosedLoopStable) {
  const GridNetwork net = two_bus();
  const NetworkModel m = linearize_network(net, net.theta0);
  const LegacyGains k;
  // u = K x over the state (theta1, omega1, theta2).
  MatrixXd gain = MatrixXd::Zero(2, 3);
  gain(0, 0) = k.ki;
  gain(0, 1) = k.kp;
  gain(1, 2) = k.kp_load;
  const MatrixXd acl = m.a + m.b * gain;
  const Eigen::VectorXcd ev = acl.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) EXPECT_LT(ev(i).real(), 0.0);
}

TEST(Network, TopologyHelpers) {
  GridNetwork net = triangle();
  EXPECT_EQ(net.islands().size(), 1u);
  EXPECT_EQ(hop_distance(net, 1), (std::vector<int>{0, 1, 1}));
  apply_event(net, {0.0, EventKind::kBusLoss, 3, 0, 0.0});
  const GridNetwork r = reduced(net);
  EXPECT_EQ(r.size(), 2);
  EXPECT_EQ(r.lines.size(), 1u);
  EXPECT_EQ(hop_distance(net, 1)[2], -1);
}

TEST(Network, ValidateRejectsBadData) {
  GridNetwork net = two_bus();
  net.lines[0].x = 0.0;
  EXPECT_THROW(net.validate(), Error);
  net = two_bus();
  net.buses[1].id = 1;
  EXPECT_THROW(net.validate(), Error);
  net = two_bus();
  EXPECT_THROW(net.index_of(7), Error);
}

TEST(Trace, CsvColumns) {
  const GridNetwork net = two_bus();
  SimOptions opt;
  opt.t_end = 0.1;
  const Trace tr = simulate(net, equilibrium_state(net, net.theta0), zero_ctrl(2), zero_dist(2), {}, opt);
  std::ostringstream os;
  tr.write_csv(os);
  std::string header;
  std::istringstream is(os.str());
  std::getline(is, header);
  EXPECT_EQ(header, "t,theta_1,theta_2,omega_1,u0_1,u0_2,u_1,u_2,d_1,d_2,event");
  int rows = 0;
  for (std::string line; std::getline(is, line);) ++rows;
  EXPECT_EQ(rows, 3);
}
