#include "netinv/error.hpp"
#include "netinv/optim.hpp"
#include "oracles.hpp"
#include "random_problems.hpp"

#include <gtest/gtest.h>

#include <random>

namespace netinv::optim {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double complementarity(const LpProblem& p, const Solution& s) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < p.a_ub.rows(); ++i)
    worst = std::max(worst, std::abs(s.dual_ub(i) * (p.b_ub(i) - p.a_ub.row(i).dot(s.x))));
  for (Eigen::Index j = 0; j < p.num_variables(); ++j) {
    if (std::isfinite(p.lower(j))) worst = std::max(worst, std::abs(s.dual_lower(j) * (s.x(j) - p.lower(j))));
    if (std::isfinite(p.upper(j))) worst = std::max(worst, std::abs(s.dual_upper(j) * (p.upper(j) - s.x(j))));
  }
  return worst;
}

GTEST_TEST(LpTest, SingleActiveBound) {
  LpProblem lp = LpProblem::with_variables(1);
  lp.objective << 1.0;
  lp.add_inequality(Eigen::RowVectorXd::Constant(1, -1.0), -3.0);
  const Solution s = solve_lp(lp);
  ASSERT_TRUE(s.optimal());
  EXPECT_NEAR(s.value, 3.0, 1e-12);
  EXPECT_NEAR(s.x(0), 3.0, 1e-12);
  EXPECT_NEAR(s.dual_ub(0), 1.0, 1e-12);
}

GTEST_TEST(LpTest, BoxSupportFunction) {
  std::mt19937 rng(3);
  std::normal_distribution<double> gauss;
  for (int n = 1; n <= 6; ++n) {
    LpProblem lp = LpProblem::with_variables(n);
    for (int j = 0; j < n; ++j) lp.objective(j) = gauss(rng);
    lp.lower = VectorXd::Constant(n, -1.0);
    lp.upper = VectorXd::Constant(n, 1.0);
    const Solution s = solve_lp(lp);
    ASSERT_TRUE(s.optimal());
    EXPECT_NEAR(s.value, -lp.objective.lpNorm<1>(), 1e-12);
  }
}

GTEST_TEST(LpTest, MatchesVertexEnumeration) {
  std::mt19937 rng(11);
  int infeasible = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const RandomLp r = random_lp(rng, true);
    const auto expected = oracle::lp_min(r.lp.objective, r.g, r.h, MatrixXd(0, r.g.cols()), VectorXd(0));
    const Solution s = solve_lp(r.lp);
    if (!expected) {
      ++infeasible;
      ASSERT_EQ(s.status, Status::kInfeasible) << "trial " << trial;
      ASSERT_TRUE(s.farkas.has_value());
      EXPECT_TRUE(farkas_proves_infeasible(r.lp, *s.farkas)) << "trial " << trial;
      continue;
    }
    ASSERT_TRUE(s.optimal()) << "trial " << trial;
    EXPECT_NEAR(s.value, *expected, 1e-8) << "trial " << trial;
    EXPECT_LE(lp_primal_residual(r.lp, s.x), 1e-8);
    EXPECT_NEAR(lp_dual_value(r.lp, s), s.value, 1e-7);
    EXPECT_LE(complementarity(r.lp, s), 1e-8);
  }
  EXPECT_GT(infeasible, 5);
}

GTEST_TEST(LpTest, EqualityRowsMatchOracle) {
  std::mt19937 rng(5);
  std::normal_distribution<double> gauss;
  for (int trial = 0; trial < 100; ++trial) {
    RandomLp r = random_lp(rng, false);
    const auto n = r.lp.num_variables();
    if (n < 2) continue;
    Eigen::RowVectorXd row(n);
    for (int j = 0; j < n; ++j) row(j) = gauss(rng);
    r.lp.add_equality(row, 0.1 * gauss(rng));
    const auto expected = oracle::lp_min(r.lp.objective, r.g, r.h, r.lp.a_eq, r.lp.b_eq);
    const Solution s = solve_lp(r.lp);
    if (!expected) {
      EXPECT_EQ(s.status, Status::kInfeasible);
      continue;
    }
    ASSERT_TRUE(s.optimal());
    EXPECT_NEAR(s.value, *expected, 1e-8);
    EXPECT_NEAR(lp_dual_value(r.lp, s), s.value, 1e-7);
  }
}

GTEST_TEST(LpTest, UnboundedReturnsRay) {
  LpProblem lp = LpProblem::with_variables(2);
  lp.objective << -1.0, -1.0;
  lp.add_inequality((Eigen::RowVectorXd(2) << 1.0, -1.0).finished(), 1.0);
  lp.lower = VectorXd::Zero(2);
  const Solution s = solve_lp(lp);
  ASSERT_EQ(s.status, Status::kUnbounded);
  ASSERT_TRUE(s.ray.has_value());
  const VectorXd& d = *s.ray;
  EXPECT_LT(lp.objective.dot(d), 0.0);
  EXPECT_LE((lp.a_ub * d).maxCoeff(), 1e-12);
  EXPECT_GE(d.minCoeff(), -1e-12);
}

GTEST_TEST(LpTest, ScalingObjectiveKeepsArgmin) {
  std::mt19937 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    RandomLp r = random_lp(rng, false);
    const Solution s = solve_lp(r.lp);
    ASSERT_TRUE(s.optimal());
    LpProblem scaled = r.lp;
    scaled.objective *= 7.5;
    const Solution t = solve_lp(scaled);
    ASSERT_TRUE(t.optimal());
    EXPECT_NEAR(t.value, 7.5 * s.value, 1e-7);
    EXPECT_NEAR(scaled.objective.dot(s.x), t.value, 1e-7);
  }
}

GTEST_TEST(LpTest, DegenerateVertexTerminates) {
  // Many constraints through the same vertex.
  LpProblem lp = LpProblem::with_variables(2);
  lp.objective << -1.0, -1.0;
  for (int k = 0; k < 12; ++k) {
    const double a = 0.1 + 0.05 * k;
    lp.add_inequality((Eigen::RowVectorXd(2) << a, 1.0 - a).finished(), 1.0 * 1.0);
  }
  lp.lower = VectorXd::Zero(2);
  const Solution s = solve_lp(lp);
  ASSERT_TRUE(s.optimal());
  EXPECT_NEAR(s.value, -2.0, 1e-9);
}

GTEST_TEST(LpTest, TriviallyInfeasibleBounds) {
  LpProblem lp = LpProblem::with_variables(1);
  lp.lower << 1.0;
  lp.upper << 0.0;
  const Solution s = solve_lp(lp);
  ASSERT_EQ(s.status, Status::kInfeasible);
  EXPECT_TRUE(farkas_proves_infeasible(lp, *s.farkas));
}

GTEST_TEST(LpTest, DimensionMismatchThrows) {
  LpProblem lp = LpProblem::with_variables(2);
  lp.a_ub = MatrixXd::Ones(1, 3);
  lp.b_ub = VectorXd::Ones(1);
  try {
    solve_lp(lp);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
}

GTEST_TEST(QpTest, UnconstrainedProjection) {
  QpProblem qp = QpProblem::with_variables(3);
  qp.hessian = 2.0 * MatrixXd::Identity(3, 3);
  const VectorXd u0 = (VectorXd(3) << 0.3, -1.0, 2.0).finished();
  qp.linear = -2.0 * u0;
  const Solution s = solve_qp(qp);
  ASSERT_TRUE(s.optimal());
  EXPECT_LE((s.x - u0).norm(), 1e-12);
}

GTEST_TEST(QpTest, SingleActiveConstraint) {
  QpProblem qp = QpProblem::with_variables(1);
  qp.hessian << 2.0;
  qp.linear << -4.0;
  qp.add_inequality(Eigen::RowVectorXd::Ones(1), 1.0);
  const Solution s = solve_qp(qp);
  ASSERT_TRUE(s.optimal());
  EXPECT_NEAR(s.x(0), 1.0, 1e-12);
  EXPECT_NEAR(s.dual_ub(0), 2.0, 1e-12);
}

GTEST_TEST(QpTest, MatchesActiveSetEnumeration) {
  std::mt19937 rng(23);
  int compared = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const QpProblem qp = random_qp(rng);
    const auto expected = oracle::qp_min(qp.hessian, qp.linear, qp.a_ub, qp.b_ub);
    const Solution s = solve_qp(qp);
    if (!expected) {
      EXPECT_EQ(s.status, Status::kInfeasible) << trial;
      continue;
    }
    ++compared;
    ASSERT_TRUE(s.optimal()) << trial;
    EXPECT_LE((s.x - expected->x).lpNorm<Eigen::Infinity>(), 1e-8) << trial;
    EXPECT_LE((qp.a_ub * s.x - qp.b_ub).maxCoeff(), 1e-8);
    const VectorXd stat = qp.hessian * s.x + qp.linear + qp.a_ub.transpose() * s.dual_ub;
    EXPECT_LE(stat.lpNorm<Eigen::Infinity>(), 1e-8);
    EXPECT_LE((s.dual_ub.array() * (qp.b_ub - qp.a_ub * s.x).array()).abs().maxCoeff(), 1e-8);
  }
  EXPECT_GT(compared, 250);
}

GTEST_TEST(QpTest, RowPermutationInvariant) {
  std::mt19937 rng(29);
  std::normal_distribution<double> gauss;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 3, m = 6;
    QpProblem qp = QpProblem::with_variables(n);
    qp.hessian = random_pd(rng, n);
    for (int j = 0; j < n; ++j) qp.linear(j) = 3.0 * gauss(rng);
    for (int i = 0; i < m; ++i) {
      Eigen::RowVectorXd row(n);
      for (int j = 0; j < n; ++j) row(j) = gauss(rng);
      qp.add_inequality(row, 0.5 + std::abs(gauss(rng)));
    }
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(m);
    perm.setIdentity();
    std::shuffle(perm.indices().data(), perm.indices().data() + m, rng);
    QpProblem shuffled = qp;
    shuffled.a_ub = perm * qp.a_ub;
    shuffled.b_ub = perm * qp.b_ub;
    const Solution a = solve_qp(qp), b = solve_qp(shuffled);
    ASSERT_TRUE(a.optimal() && b.optimal());
    EXPECT_LE((a.x - b.x).lpNorm<Eigen::Infinity>(), 1e-8);
  }
}

GTEST_TEST(QpTest, EqualityConstrained) {
  QpProblem qp = QpProblem::with_variables(2);
  qp.hessian = MatrixXd::Identity(2, 2);
  qp.add_equality((Eigen::RowVectorXd(2) << 1.0, 1.0).finished(), 2.0);
  qp.add_equality((Eigen::RowVectorXd(2) << 2.0, 2.0).finished(), 4.0);  // redundant
  const Solution s = solve_qp(qp);
  ASSERT_TRUE(s.optimal());
  EXPECT_NEAR(s.x(0), 1.0, 1e-12);
  EXPECT_NEAR(s.x(1), 1.0, 1e-12);
}

GTEST_TEST(QpTest, SemidefiniteHessian) {
  // min (x0 - 1)^2 - x1  s.t. x1 <= 2: flat in x1, bounded by the row.
  QpProblem qp = QpProblem::with_variables(2);
  qp.hessian << 2.0, 0.0, 0.0, 0.0;
  qp.linear << -2.0, -1.0;
  qp.add_inequality((Eigen::RowVectorXd(2) << 0.0, 1.0).finished(), 2.0);
  const Solution s = solve_qp(qp);
  ASSERT_TRUE(s.optimal());
  EXPECT_NEAR(s.x(0), 1.0, 1e-8);
  EXPECT_NEAR(s.x(1), 2.0, 1e-8);

  QpProblem open = qp;
  open.a_ub.resize(0, 2);
  open.b_ub.resize(0);
  EXPECT_EQ(solve_qp(open).status, Status::kUnbounded);
}

GTEST_TEST(QpTest, InfeasibleReportsCertificate) {
  QpProblem qp = QpProblem::with_variables(1);
  qp.hessian << 1.0;
  qp.add_inequality(Eigen::RowVectorXd::Ones(1), -1.0);
  qp.add_inequality(-Eigen::RowVectorXd::Ones(1), -1.0);
  const Solution s = solve_qp(qp);
  ASSERT_EQ(s.status, Status::kInfeasible);
  ASSERT_TRUE(s.farkas.has_value());
  EXPECT_GT(s.farkas->ub.sum(), 0.0);
}

GTEST_TEST(QpTest, IndefiniteHessianThrows) {
  QpProblem qp = QpProblem::with_variables(2);
  qp.hessian << 1.0, 0.0, 0.0, -1e-6;
  try {
    solve_qp(qp);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotPsd);
  }
}

GTEST_TEST(QpTest, WarmStartGivesSameAnswer) {
  std::mt19937 rng(31);
  std::normal_distribution<double> gauss;
  QpProblem qp = QpProblem::with_variables(4);
  qp.hessian = random_pd(rng, 4);
  for (int j = 0; j < 4; ++j) qp.linear(j) = 4.0 * gauss(rng);
  for (int i = 0; i < 8; ++i) {
    Eigen::RowVectorXd row(4);
    for (int j = 0; j < 4; ++j) row(j) = gauss(rng);
    qp.add_inequality(row, 1.0);
  }
  const Solution cold = solve_qp(qp);
  const Solution warm = solve_qp(qp, {}, VectorXd::Zero(4));
  ASSERT_TRUE(cold.optimal() && warm.optimal());
  EXPECT_LE((cold.x - warm.x).norm(), 1e-9);
}

}  // namespace
}  // namespace netinv::optim
