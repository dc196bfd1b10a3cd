#include "netinv/error.hpp"
#include "netinv/stl.hpp"
#include "stl_oracle.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace netinv::stl {
namespace {

SampledTrace one(std::vector<double> x, double ts = 1.0) { return SampledTrace(ts, {"x"}, {std::move(x)}); }

GTEST_TEST(StlTest, AlwaysOnIncreasingTrace) {
  EXPECT_TRUE(evaluate(*always(0, 2, ge("x", 0)), one({1, 2, 3})));
}

GTEST_TEST(StlTest, EventuallyReachesThree) {
  EXPECT_TRUE(evaluate(*eventually(0, 2, ge("x", 3)), one({1, 2, 3})));
  EXPECT_FALSE(evaluate(*eventually(0, 1, ge("x", 3)), one({1, 2, 3})));
}

GTEST_TEST(StlTest, EventuallyIsTrueUntil) {
  const auto tr = one({1, 2, 3, 0, 5});
  for (Eigen::Index t = 0; t < 2; ++t)
    EXPECT_EQ(evaluate(*eventually(0, 2, ge("x", 3)), tr, t), evaluate(*until(0, 2, truth(), ge("x", 3)), tr, t));
}

GTEST_TEST(StlTest, UntilNeedsLhsThroughWitness) {
  // lhs fails at the witness sample itself
  const SampledTrace tr(1.0, {"x", "y"}, {{1, 1, -1}, {0, 0, 1}});
  EXPECT_FALSE(evaluate(*until(0, 2, ge("x", 0), ge("y", 1)), tr));
  const SampledTrace ok(1.0, {"x", "y"}, {{1, 1, 1}, {0, 0, 1}});
  EXPECT_TRUE(evaluate(*until(0, 2, ge("x", 0), ge("y", 1)), ok));
}

GTEST_TEST(StlTest, InsufficientHorizonOnlyWhenUndetermined) {
  const auto tr = one({1, 2, 3});
  try {
    evaluate(*always(0, 5, ge("x", 0)), tr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientHorizon);
  }
  EXPECT_FALSE(evaluate(*always(0, 5, ge("x", 2)), tr));  // already violated
  EXPECT_TRUE(evaluate(*eventually(0, 5, ge("x", 3)), tr));
}

GTEST_TEST(StlTest, UnboundedIntervalIsClippedWithFlag) {
  const Verdict v = check(*parse("(always 0 inf (ge x 0))"), one({1, 2, 3}));
  EXPECT_EQ(v.value, Tri::kTrue);
  EXPECT_TRUE(v.clipped);
  EXPECT_FALSE(check(*always(0, 1, ge("x", 0)), one({1, 2, 3})).clipped);
}

GTEST_TEST(StlTest, IntervalRounding) {
  // a rounds down, b rounds up
  EXPECT_EQ(interval_steps(0.25, 0.75, 0.5), (std::pair<Eigen::Index, Eigen::Index>{0, 2}));
  EXPECT_EQ(interval_steps(0.1, 0.3, 0.1), (std::pair<Eigen::Index, Eigen::Index>{1, 3}));
}

GTEST_TEST(StlTest, ParseRoundTrip) {
  const char* text = "(and (always 0 inf (ge omega_2 -0.05)) (until 0.5 1 (not (lt x 1)) (or true (gt y 2))))";
  const FormulaPtr f = parse(text);
  EXPECT_EQ(to_string(*parse(to_string(*f))), to_string(*f));
  for (const char* bad : {"(always 1 0 true)", "(ge x)", "(foo x 1)", "(and)", "(ge x 1", "(ge x nan)"}) {
    try {
      parse(bad);
      ADD_FAILURE() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kParse) << bad;
    }
  }
}

GTEST_TEST(StlTest, NonUniformTimestampsRejected) {
  EXPECT_THROW(SampledTrace::from_timestamps({0, 1, 2.5}, {"x"}, {{0, 0, 0}}), Error);
  EXPECT_EQ(SampledTrace::from_timestamps({0, 0.1, 0.2}, {"x"}, {{0, 0, 0}}).ts(), 0.1);
}

GTEST_TEST(StlTest, EntailsThresholdWeakening) {
  std::vector<SampledTrace> traces{one({1.5, 1.5, 1.5}), one({3, 2, 1}), one({0, 5, 5})};
  const auto f1 = always(0, 2, ge("x", 1));
  const auto f2 = always(0, 2, ge("x", 0));
  EXPECT_TRUE(entails(*f1, *f2, traces));
  EXPECT_TRUE(entails(*f1, *f1, traces));
  EXPECT_FALSE(entails(*f1, *always(0, 2, ge("x", 2)), traces));  // x = 1.5 is a witness
}

GTEST_TEST(StlTest, MatchesBruteForceSemantics) {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    const FormulaPtr f = random_formula(rng, 3);
    const SampledTrace tr = random_trace(rng);
    const std::vector<Tri> got = monitor(*f, tr);
    for (Eigen::Index t = 0; t < tr.size(); ++t)
      ASSERT_EQ(got[static_cast<size_t>(t)], brute(*f, tr, static_cast<long>(t))) << to_string(*f) << " t=" << t;
  }
}

GTEST_TEST(StlTest, DeMorganAndDuality) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const FormulaPtr f1 = random_formula(rng, 2);
    const FormulaPtr f2 = random_formula(rng, 2);
    const SampledTrace tr = random_trace(rng);
    EXPECT_EQ(monitor(*neg(conj({f1, f2})), tr), monitor(*disj({neg(f1), neg(f2)}), tr));
    EXPECT_EQ(monitor(*always(0.5, 1.5, f1), tr), monitor(*neg(eventually(0.5, 1.5, neg(f1))), tr));
  }
}

GTEST_TEST(StlTest, RaisingThresholdNeverHelpsAlways) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const SampledTrace tr = random_trace(rng);
    const double lo = std::uniform_real_distribution<double>(-1, 1)(rng);
    const double hi = lo + std::uniform_real_distribution<double>(0, 1)(rng);
    const Tri a = check(*always(0, kUnbounded, ge("x", lo)), tr).value;
    const Tri b = check(*always(0, kUnbounded, ge("x", hi)), tr).value;
    EXPECT_FALSE(a == Tri::kFalse && b == Tri::kTrue);
  }
}

}  // namespace
}  // namespace netinv::stl
