#include <gtest/gtest.h>

#include "thermistor/coefficients.hpp"

using namespace thermistor;

namespace {

CoefficientSpec baseline(double sigma_minus = 1.5) {
  const Grid2D g(17);
  return {ScalarLaw::affine_clamped(2.0, 1.0, 1.5, 4.0), sigma_minus, 1.0, ScalarLaw::constant(0.1), 0.1,
          ScalarField::constant(g, 1.0), 1.0, 10.0};
}

}  // namespace

TEST(ScalarLaw, FamiliesEvaluate) {
  const auto a = ScalarLaw::affine_clamped(2.0, 1.0, 1.5, 4.0);
  EXPECT_EQ(a(0.0), 2.0);
  EXPECT_EQ(a(-5.0), 1.5);
  EXPECT_EQ(a(5.0), 4.0);
  const auto t = ScalarLaw::tabulated({0.0, 1.0, 3.0}, {2.0, 4.0, 3.0});
  EXPECT_EQ(t(-1.0), 2.0);
  EXPECT_DOUBLE_EQ(t(0.5), 3.0);
  EXPECT_DOUBLE_EQ(t(2.0), 3.5);
  EXPECT_EQ(t(9.0), 3.0);
  EXPECT_THROW(ScalarLaw::tabulated({0.0, 0.0}, {1.0, 2.0}), Error);
  EXPECT_THROW(ScalarLaw::affine_clamped(0.0, 1.0, 2.0, 1.0), Error);
}

TEST(ScalarLaw, ExactBoundsAndRescaling) {
  const auto a = ScalarLaw::affine_clamped(2.0, 1.0, 1.5, 4.0);
  EXPECT_EQ(a.sup_abs(), 4.0);
  EXPECT_EQ(a.lipschitz(), 1.0);
  const auto k = a.compose_input(3.0).scale_output(0.5);
  EXPECT_DOUBLE_EQ(k(0.2), 0.5 * a(0.6));
  EXPECT_DOUBLE_EQ(k.lipschitz(), 1.5);
  EXPECT_DOUBLE_EQ(k.sup_abs(), 2.0);
  const auto bp = a.compose_input(2.0).breakpoints();
  ASSERT_EQ(bp.size(), 2u);
  EXPECT_DOUBLE_EQ(bp[0], -0.25);
  EXPECT_DOUBLE_EQ(bp[1], 1.0);
  const auto t = ScalarLaw::tabulated({0.0, 1.0, 3.0}, {2.0, 4.0, 3.0});
  EXPECT_EQ(t.lipschitz(), 2.0);
  EXPECT_EQ(t.sup_abs(), 4.0);
}

TEST(Validate, LowerBoundExamples) {
  EXPECT_TRUE(validate_assumptions(baseline(1.5), 2).find("sigma_lower_bound").passed);
  EXPECT_FALSE(validate_assumptions(baseline(0.9), 2).find("sigma_lower_bound").passed);
  // 2d/(d+2) = 4/3 at d = 4 and the bound is strict.
  auto s = baseline(4.0 / 3.0);
  s.sigma = ScalarLaw::affine_clamped(2.0, 1.0, 4.0 / 3.0, 4.0);
  EXPECT_FALSE(validate_assumptions(s, 4).find("sigma_lower_bound").passed);
  EXPECT_TRUE(validate_assumptions(s, 2).find("sigma_lower_bound").passed);
}

TEST(Validate, LowerBoundViolationReportsProbe) {
  auto s = baseline(1.5);
  s.sigma = ScalarLaw::affine_clamped(2.0, 1.0, 1.2, 4.0);
  const auto c = validate_assumptions(s, 2).find("sigma_lower_bound");
  EXPECT_FALSE(c.passed);
  ASSERT_TRUE(c.probe.has_value());
  EXPECT_LT(s.sigma(*c.probe), 1.5);
}

TEST(Validate, LipschitzViolation) {
  auto s = baseline();
  s.C_sigma = 0.5;
  const auto c = validate_assumptions(s, 2).find("sigma_lipschitz");
  EXPECT_FALSE(c.passed);
  ASSERT_TRUE(c.probe.has_value());
  EXPECT_GE(*c.probe, -0.5 - 1e-5);
  EXPECT_LE(*c.probe, 2.0 + 1e-5);
  s.C_sigma = 1.0;
  EXPECT_TRUE(validate_assumptions(s, 2).find("sigma_lipschitz").passed);
  s.sigma = ScalarLaw::tabulated({0.0, 0.1, 5.0}, {2.0, 2.3, 3.0});
  EXPECT_FALSE(validate_assumptions(s, 2).find("sigma_lipschitz").passed);
  s.C_sigma = 3.0;
  EXPECT_TRUE(validate_assumptions(s, 2).find("sigma_lipschitz").passed);
}

TEST(Validate, ResistanceAndSourceBounds) {
  auto s = baseline();
  s.lambda_plus = 0.05;
  EXPECT_FALSE(validate_assumptions(s, 2).find("lambda_bound").passed);
  s.lambda_plus = 0.1;
  s.C_f = 0.5;
  const auto c = validate_assumptions(s, 2).find("source_bound");
  EXPECT_FALSE(c.passed);
  EXPECT_EQ(*c.probe, 1.0);
}

TEST(Validate, EveryAssumptionGetsAVerdict) {
  ProbeOptions opt;
  opt.random_count = 200;
  opt.seed = 3;
  const auto r = validate_assumptions(baseline(), 2, opt);
  ASSERT_EQ(r.checks.size(), 4u);
  EXPECT_TRUE(r.passed());
  EXPECT_THROW(validate_assumptions(baseline(), 1), Error);
  EXPECT_THROW(r.find("no_such_check"), Error);
}

TEST(Scaling, SmallResistanceLeavesSystemUnchanged) {
  const auto s = baseline();
  const auto scaled = scale_system(s, 0.2);
  EXPECT_EQ(scaled.transform.K, 1.0);
  EXPECT_EQ(scaled.spec.sigma, s.sigma);
  EXPECT_EQ(scaled.spec.lambda, s.lambda);
}

TEST(Scaling, DoubleDeltaGivesFactorTwo) {
  auto s = baseline();
  s.lambda = ScalarLaw::constant(0.1);
  const auto scaled = scale_system(s, 0.05);
  EXPECT_EQ(scaled.transform.K, 2.0);
  EXPECT_DOUBLE_EQ(scaled.spec.lambda(0.3), 0.05);
  EXPECT_DOUBLE_EQ(scaled.spec.lambda.sup_abs(), 0.05);
  EXPECT_DOUBLE_EQ(scaled.spec.sigma(0.7), s.sigma(1.4));
  EXPECT_DOUBLE_EQ(scaled.spec.C_sigma, 2.0);
  EXPECT_DOUBLE_EQ(scaled.spec.lambda_plus, 0.05);
  EXPECT_THROW(scale_system(s, 0.0), Error);
}
