#include "netinv/cbf.hpp"
#include "netinv/error.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace netinv;
using namespace netinv::cbf;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

LinearSubsystem integrator() {
  LinearSubsystem s;
  s.a = MatrixXd::Ones(1, 1);
  s.b = MatrixXd::Ones(1, 1);
  s.e_coupling = MatrixXd(1, 0);
  s.e_exo = MatrixXd(1, 0);
  s.c = Eigen::RowVectorXd::Ones(1);
  s.ts = 1.0;
  return s;
}

BarrierFunction unit_box(Eigen::Index n, double alpha) {
  return {Polytope::symmetric_box(VectorXd::Ones(n)), alpha};
}

struct Oscillator {
  LinearSubsystem sys;
  DisturbanceSpec env;
  RciResult rci;
  Oscillator() {
    sys.a = (MatrixXd(2, 2) << 1.0, 0.1, -0.5, 0.6).finished();
    sys.b = (MatrixXd(2, 1) << 0.0, -0.1).finished();
    sys.e_coupling = (MatrixXd(2, 1) << 0.0, 0.05).finished();
    sys.e_exo = (MatrixXd(2, 1) << 0.0, 0.1).finished();
    sys.c = (Eigen::RowVectorXd(2) << 1.0, 0.0).finished();
    sys.ts = 0.1;
    env.measured = Polytope::symmetric_box((VectorXd(2) << 0.3, 0.5).finished());
    env.unmeasured = (VectorXd(2) << 0.001, 0.002).finished();
    env.input = Polytope::symmetric_box(VectorXd::Constant(1, 0.2));
    env.measurement_error = (VectorXd(2) << 0.02, 0.0).finished();
    rci = compute_mrci(sys, fan_template(2, 8), VectorXd::Constant(8, 1e-3), env);
  }
};

}  // namespace

TEST(HValue, Examples) {
  const BarrierFunction b = unit_box(2, 0.0);
  EXPECT_DOUBLE_EQ(h_value(b, VectorXd::Zero(2)), 1.0);
  EXPECT_DOUBLE_EQ(h_value(b, VectorXd::Ones(2)), 0.0);
  // Twice the boundary point along +e1: (1 - 2) / 1.
  EXPECT_DOUBLE_EQ(h_value(b, (VectorXd(2) << 2.0, 0.0).finished()), -1.0);
  BarrierFunction skew{{(MatrixXd(2, 1) << 1.0, -1.0).finished(), (VectorXd(2) << 2.0, 0.5).finished()}, 0.0};
  EXPECT_DOUBLE_EQ(h_value(skew, VectorXd::Constant(1, 0.25)), std::min((2.0 - 0.25) / 2.0, (0.5 + 0.25) / 0.5));
}

TEST(Supervise, HoldsTheBoundary) {
  DisturbanceSpec env;
  env.input = Polytope::symmetric_box(VectorXd::Constant(1, 2.0));
  const VectorXd u = supervise(unit_box(1, 0.0), integrator(), VectorXd::Ones(1), VectorXd(0), VectorXd::Ones(1), env);
  EXPECT_NEAR(u(0), 0.0, 1e-12);
}

TEST(Supervise, FeasibleLegacyIsUntouched) {
  DisturbanceSpec env;
  env.input = Polytope::symmetric_box(VectorXd::Constant(1, 2.0));
  const VectorXd u0 = VectorXd::Constant(1, 0.1);
  const VectorXd u = supervise(unit_box(1, 0.5), integrator(), VectorXd::Constant(1, 0.2), VectorXd(0), u0, env);
  EXPECT_EQ(u, u0);
}

TEST(Supervise, AlphaTightensTheStep) {
  // x = 0.5, alpha = 0.5: h(x+) >= 0.25 means |x+| <= 0.75.
  DisturbanceSpec env;
  const VectorXd u = supervise(unit_box(1, 0.5), integrator(), VectorXd::Constant(1, 0.5), VectorXd(0),
                               VectorXd::Constant(1, 1.0), env);
  EXPECT_NEAR(u(0), 0.25, 1e-12);
}

TEST(Supervise, InfeasibleReportsRow) {
  DisturbanceSpec env;
  env.input = Polytope::symmetric_box(VectorXd::Constant(1, 0.1));
  try {
    supervise(unit_box(1, 0.0), integrator(), VectorXd::Constant(1, 1.5), VectorXd(0), VectorXd::Zero(1), env);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSupervisionInfeasible);
    EXPECT_EQ(e.index(), 0);  // the +x row
  }
}

TEST(Supervise, OneStepBarrierCondition) {
  Oscillator f;
  ASSERT_TRUE(f.rci.certified);
  const BarrierFunction b{f.rci.set, 0.0};
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 1000; ++trial) {
    const VectorXd x = ray_point(b.set, VectorXd::NullaryExpr(2, [&] { return normal(rng); }),
                                 trial % 3 ? std::abs(unif(rng)) : 1.0);
    VectorXd w(2), delay(2), wu(2);
    for (int j = 0; j < 2; ++j) {
      w(j) = (trial % 2 ? unif(rng) : (rng() % 2 ? 1.0 : -1.0)) * f.env.measured.q(j);
      delay(j) = unif(rng) * f.env.measurement_error(j);
      wu(j) = unif(rng) * f.env.unmeasured(j);
    }
    const VectorXd u0 = VectorXd::Constant(1, 0.5 * unif(rng));
    const VectorXd u = supervise(b, f.sys, x, w - delay, u0, f.env);
    EXPECT_LE(std::abs(u(0)), 0.2 + 1e-8);
    const VectorXd next = f.sys.a * x + f.sys.b * u + f.sys.e_measured() * w + wu;
    EXPECT_GE(h_value(b, next), b.alpha * h_value(b, x) - 1e-8) << trial;
  }
}

TEST(Supervise, PositiveAlphaOnLooseSet) {
  // x+ = x + u + w, |w| <= 0.5 unmeasured, |u| <= 3, box [-2, 2].
  LinearSubsystem s = integrator();
  DisturbanceSpec env;
  env.unmeasured = VectorXd::Constant(1, 0.5);
  env.input = Polytope::symmetric_box(VectorXd::Constant(1, 3.0));
  const BarrierFunction b{Polytope::symmetric_box(VectorXd::Constant(1, 2.0)), 0.5};
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const VectorXd x = VectorXd::Constant(1, 2.0 * unif(rng));
    const VectorXd u = supervise(b, s, x, VectorXd(0), VectorXd::Constant(1, 3.0 * unif(rng)), env);
    const VectorXd next = x + u + VectorXd::Constant(1, 0.5 * unif(rng));
    EXPECT_GE(h_value(b, next), 0.5 * h_value(b, x) - 1e-8);
  }
}

TEST(Supervise, MinimalInterventionAndIdempotence) {
  Oscillator f;
  const BarrierFunction b{f.rci.set, 0.0};
  std::mt19937 rng(12);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  int untouched = 0, modified = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const VectorXd x = ray_point(b.set, VectorXd::NullaryExpr(2, [&] { return unif(rng); }),
                                 0.8 + 0.2 * std::abs(unif(rng)));
    const VectorXd w = (VectorXd(2) << 0.3 * unif(rng), 0.5 * unif(rng)).finished();
    const VectorXd u0 = VectorXd::Constant(1, 0.2 * unif(rng));
    const VectorXd u = supervise(b, f.sys, x, w, u0, f.env);
    if (barrier_slack(b, f.sys, x, w, u0, f.env).minCoeff() > 1e-6) {
      EXPECT_LE((u - u0).norm(), 1e-8);
      ++untouched;
    } else {
      ++modified;
    }
    EXPECT_EQ(supervise(b, f.sys, x, w, u, f.env), u);
  }
  EXPECT_GT(untouched, 0);
  EXPECT_GT(modified, 0);
}

TEST(Certify, Conditions) {
  Oscillator f;
  const BarrierFunction b{f.rci.set, 0.0};
  const Polytope half{b.set.p, 0.5 * b.set.q};
  // Danger: the second state beyond the set's extent along +e2.
  const double reach = support(b.set, (VectorXd(2) << 0.0, 1.0).finished());
  const Polytope beyond{(MatrixXd(1, 2) << 0.0, -1.0).finished(), VectorXd::Constant(1, -(reach + 1e-6))};
  const Certificate ok = certify_cbf(b, half, {beyond}, f.sys, f.env);
  EXPECT_TRUE(ok.ok);
  EXPECT_EQ(ok.failed, 0);

  const Polytope inside{beyond.p, VectorXd::Constant(1, -0.5 * reach)};
  EXPECT_EQ(certify_cbf(b, half, {inside}, f.sys, f.env).failed, 2);

  const Polytope big{b.set.p, 2.0 * b.set.q};
  EXPECT_EQ(certify_cbf(b, big, {beyond}, f.sys, f.env).failed, 1);

  DisturbanceSpec inflated = f.env;
  inflated.unmeasured *= 10.0;
  EXPECT_EQ(certify_cbf(b, half, {beyond}, f.sys, inflated).failed, 3);
}

TEST(BarrierFunction, Validation) {
  BarrierFunction b = unit_box(1, 1.0);
  EXPECT_THROW(b.validate(), Error);
  b.alpha = 0.0;
  b.set.q(0) = 0.0;
  EXPECT_THROW(b.validate(), Error);
}
