#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "thermistor/regularity.hpp"

using namespace thermistor;
using namespace thermistor::regularity;

namespace {

const Point kCenter{0.5, 0.5};

ScalarField saddle(const Grid2D& g) {
  return ScalarField::from_function(g, [](double x, double y) {
    return (x - 0.5) * (x - 0.5) - (y - 0.5) * (y - 0.5) + 0.75 * (x - 0.5) * (y - 0.5);
  });
}

ScalarField loglip_field(const Grid2D& g) {
  return ScalarField::from_function(g, [](double x, double y) {
    const double r = std::hypot(x - 0.5, y - 0.5);
    return r > 0.0 ? r * r * std::log(1.0 / r) : 0.0;
  });
}

CoefficientSpec baseline(int n) {
  const Grid2D g(n);
  return {ScalarLaw::affine_clamped(2.0, 1.0, 1.5, 4.0), 1.5, 1.0, ScalarLaw::constant(0.1), 0.1,
          ScalarField::constant(g, 1.0), 1.0, 10.0};
}

}  // namespace

TEST(LeastSquares, ExactLineAndGuards) {
  const std::vector<double> x{1, 2, 3, 4}, y{5, 3, 1, -1};
  const auto f = least_squares(x, y);
  EXPECT_NEAR(f.slope, -2.0, 1e-14);
  EXPECT_NEAR(f.intercept, 7.0, 1e-14);
  EXPECT_THROW(least_squares(std::vector<double>{1}, std::vector<double>{1}), Error);
  EXPECT_THROW(least_squares(std::vector<double>{2, 2}, std::vector<double>{1, 3}), Error);
}

TEST(Paraboloid, EvaluatesAboutCenter) {
  const Paraboloid p{1.0, {2.0, -1.0}, {2.0, 0.5, -2.0}};
  EXPECT_DOUBLE_EQ(p({0.0, 0.0}), 1.0);
  EXPECT_DOUBLE_EQ(p({1.0, 2.0}), 1.0 + 2.0 - 2.0 + 0.5 * (2.0 + 2 * 0.5 * 2.0 - 2.0 * 4.0));
}

TEST(Approximation, HarmonicInputHasZeroDistance) {
  const Grid2D g(65);
  const auto r = approximation_experiment(saddle(g), box_around(g, kCenter, 0.25));
  EXPECT_LT(r.distance, 1e-12);
  EXPECT_EQ(r.harmonic.grid().nx(), 33);
}

TEST(Approximation, TorsionOracle) {
  // |x - c|^2 minus its harmonic extension is the torsion function of the box.
  const Grid2D g(65);
  const auto th = ScalarField::from_function(g, [](double x, double y) { return (x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5); });
  const NodeBox box = box_around(g, kCenter, 0.25);
  const auto r = approximation_experiment(th, box);
  const auto w = poisson::solve_poisson(ScalarField::constant(box.grid_in(g), 4.0));
  EXPECT_NEAR(r.distance, sup_norm(w.theta), 1e-12);
}

TEST(FirstParaboloid, HarmonicQuadraticIsReproduced) {
  const Grid2D g(65);
  const auto fp = first_paraboloid(saddle(g), kCenter, 0.25);
  EXPECT_NEAR(fp.P.a, 0.0, 1e-13);
  EXPECT_NEAR(fp.P.b.norm(), 0.0, 1e-11);
  EXPECT_NEAR(fp.P.M.xx, 2.0, 1e-9);
  EXPECT_NEAR(fp.P.M.xy, 0.75, 1e-9);
  EXPECT_NEAR(fp.P.M.yy, -2.0, 1e-9);
  EXPECT_LE(std::abs(fp.trace_residual), fp.trace_tol);
  EXPECT_LT(fp.sup_error, 1e-10);
}

TEST(FirstParaboloid, AffineHasNoCurvature) {
  const Grid2D g(65);
  const auto th = ScalarField::from_function(g, [](double x, double y) { return 1 + 2 * x - y; });
  const auto fp = first_paraboloid(th, kCenter, 0.25);
  EXPECT_NEAR(fp.P.a, 1.5, 1e-11);
  EXPECT_NEAR(fp.P.b.x, 2.0, 1e-11);
  EXPECT_NEAR(fp.P.b.y, -1.0, 1e-11);
  EXPECT_NEAR(fp.P.M.frobenius(), 0.0, 1e-9);
  EXPECT_LT(fp.sup_error, 1e-10);
}

TEST(FirstParaboloid, LargeTraceIsRejected) {
  const Grid2D g(65);
  const auto bump = ScalarField::from_function(g, [](double x, double y) {
    return std::exp(-100 * ((x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5)));
  });
  CascadeOptions strict;
  strict.trace_factor = 1e-12;
  try {
    first_paraboloid(bump, kCenter, 0.125, strict);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::TraceTooLarge);
  }
  EXPECT_NO_THROW(first_paraboloid(saddle(g), kCenter, 0.125));
}

TEST(Cascade, HarmonicQuadraticIsExact) {
  const Grid2D g(129);
  const auto rep = dyadic_cascade(saddle(g), kCenter, 0.5, 4);
  ASSERT_EQ(rep.levels.size(), 4u);
  const double interp = g.h() * g.h() / 8 * rep.levels[0].P.M.frobenius();
  for (const auto& lv : rep.levels) {
    EXPECT_LE(lv.sup_error, 10 * interp);
    EXPECT_LE(std::abs(lv.trace_residual), lv.trace_tol);
    if (lv.n > 1) {
      EXPECT_LT(lv.increment, 1e-10);
    }
  }
  EXPECT_TRUE(rep.decay_exact);
  EXPECT_EQ(rep.M_growth_power, 0.0);
  EXPECT_FALSE(rep.truncated_at.has_value());
}

TEST(Cascade, TelescopesToMachinePrecision) {
  const Grid2D g(129);
  const auto rep = dyadic_cascade(loglip_field(g), kCenter, 0.5, 4);
  Paraboloid prev;
  for (const auto& lv : rep.levels) {
    const double r = lv.radius;
    const Paraboloid inc{r * r * lv.rescaled.a, r * lv.rescaled.b, lv.rescaled.M};
    const Paraboloid sum = prev + inc;
    EXPECT_NEAR(sum.a, lv.P.a, 1e-15 * (1 + std::abs(lv.P.a)));
    EXPECT_NEAR((sum.b - lv.P.b).norm(), 0.0, 1e-14 * (1 + lv.P.b.norm()));
    EXPECT_NEAR((sum.M - lv.P.M).frobenius(), 0.0, 1e-14 * (1 + lv.P.M.frobenius()));
    prev = lv.P;
  }
}

TEST(Cascade, SupErrorMatchesBruteForce) {
  const Grid2D g(65);
  const auto th = loglip_field(g);
  const auto rep = dyadic_cascade(th, kCenter, 0.5, 3);
  for (const auto& lv : rep.levels) {
    const auto resid = ScalarField::from_function(g, [&](double x, double y) {
      return th(g.nearest_node({x, y}).first, g.nearest_node({x, y}).second) - lv.P(Point{x, y} - kCenter);
    });
    const auto s = sample_ball(resid, kCenter, lv.radius, 2000);
    EXPECT_NEAR(lv.sup_error, sup_norm(std::span<const Sample>(s)), 1e-14);
  }
}

TEST(Cascade, TruncatesBelowResolution) {
  const Grid2D g(65);
  const auto rep = dyadic_cascade(saddle(g), kCenter, 0.5, 6);
  EXPECT_EQ(rep.levels.size(), 3u);
  ASSERT_TRUE(rep.truncated_at.has_value());
  EXPECT_EQ(*rep.truncated_at, 4);
  ASSERT_FALSE(rep.notes.empty());
  EXPECT_NE(rep.notes.front().find("ResolutionExhausted"), std::string::npos);
  EXPECT_THROW(dyadic_cascade(saddle(g), kCenter, 1.0, 3), Error);
}

TEST(Cascade, CsvHeaderAndRows) {
  const Grid2D g(65);
  const auto rep = dyadic_cascade(saddle(g), kCenter, 0.5, 3);
  const std::string csv = cascade_csv(rep);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "n,a,b1,b2,M11,M12,M22,trace_residual,sup_error,increment");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

TEST(CoefficientLimits, QuadraticLimitsAreImmediate) {
  const Grid2D g(129);
  const auto th = saddle(g);
  const auto rep = dyadic_cascade(th, kCenter, 0.5, 4);
  const auto lim = coefficient_limits(rep, th, kCenter);
  for (double v : lim.a_residual) EXPECT_LT(v, 1e-12);
  for (double v : lim.b_residual) EXPECT_LT(v, 1e-9);
  EXPECT_TRUE(lim.a_ok);
  EXPECT_TRUE(lim.b_ok);
}

TEST(Modulus, AffineFieldHasZeroOscillation) {
  const Grid2D g(129);
  const auto th = ScalarField::from_function(g, [](double x, double y) { return 3 - x + 4 * y; });
  const auto rep = loglip_modulus(th, kCenter, {0.25, 0.125, 0.1});
  for (double o : rep.oscillation) EXPECT_LT(o, 1e-12);
}

TEST(Modulus, QuadraticOscillationIsRadiusSquared) {
  const Grid2D g(129);
  const auto th = ScalarField::from_function(g, [](double x, double y) { return (x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5); });
  const std::vector<double> radii{0.25, 0.2, 0.1};
  const auto rep = loglip_modulus(th, kCenter, radii);
  for (std::size_t k = 0; k < radii.size(); ++k) {
    EXPECT_NEAR(rep.oscillation[k], radii[k] * radii[k], g.h() * g.h());
  }
}

TEST(Modulus, SyntheticLogLipschitzRatioNearOne) {
  const Grid2D g(257);
  const std::vector<double> radii{0.25, 0.2, 0.16, 0.125, 0.1, 0.08, 0.0625, 0.05, 0.04};
  const auto rep = loglip_modulus(loglip_field(g), kCenter, radii);
  for (double q : rep.loglip_ratio) {
    EXPECT_GE(q, 0.85);
    EXPECT_LE(q, 1.15);
  }
  for (std::size_t k = 1; k < rep.oscillation.size(); ++k) {
    EXPECT_LE(rep.oscillation[k], rep.oscillation[k - 1]);
  }
  EXPECT_NEAR(ratio_growth(rep), 0.0, 0.05);
  const std::string csv = modulus_csv(rep);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "r,oscillation,ratio");
}

TEST(Modulus, RejectsUnresolvedRadii) {
  const Grid2D g(65);
  try {
    loglip_modulus(loglip_field(g), kCenter, {0.25, 8 * g.h()});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::RadiusBelowResolution);
  }
  EXPECT_THROW(loglip_modulus(loglip_field(g), kCenter, {}), Error);
}

TEST(ModulusInequalities, ReferenceValues) {
  const std::vector<double> s{0.01};
  const auto t = modulus_inequalities(0.5, s);
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_NEAR(t.rows[0].middle, 0.046052, 1e-6);
  EXPECT_NEAR(t.rows[0].right, 0.073576, 1e-6);
  EXPECT_TRUE(t.passed());
}

TEST(ModulusInequalities, EqualityAtInverseE) {
  const std::vector<double> s{std::exp(-1.0)};
  const auto t = modulus_inequalities(0.25, s);
  EXPECT_TRUE(t.passed());
  EXPECT_NEAR(t.rows[0].middle, t.rows[0].sigma, 1e-16);
}

TEST(ModulusInequalities, HoldOnLogGridForAllGammas) {
  const auto sig = log_grid(1e-8, std::exp(-1.0), 1000);
  ASSERT_EQ(sig.size(), 1000u);
  EXPECT_EQ(sig.back(), std::exp(-1.0));
  for (double gamma : {0.1, 0.25, 0.5, 0.75, 0.9, 0.99}) {
    EXPECT_TRUE(modulus_inequalities(gamma, sig).passed()) << gamma;
  }
  const std::vector<double> bad{0.5};
  EXPECT_FALSE(modulus_inequalities(0.5, bad).passed());
  EXPECT_THROW(modulus_inequalities(1.0, bad), Error);
}

TEST(Stability, ZeroResistanceGivesHarmonicTemperature) {
  const auto s = baseline(33);
  const std::vector<double> scales{0.0};
  const auto rep = stability_regression(s, scales, box_around(s.f.grid(), kCenter, 0.25));
  ASSERT_EQ(rep.rows.size(), 1u);
  EXPECT_EQ(rep.rows[0].distance, 0.0);
  EXPECT_TRUE(std::isnan(rep.fitted_order));
}

TEST(Stability, DistanceIsLinearInResistance) {
  const auto s = baseline(33);
  const std::vector<double> scales{1.0, 0.5, 0.25, 0.125};
  const auto rep = stability_regression(s, scales, box_around(s.f.grid(), kCenter, 0.25));
  EXPECT_NEAR(rep.fitted_order, 1.0, 0.05);
  for (std::size_t k = 1; k < rep.rows.size(); ++k) EXPECT_LT(rep.rows[k].distance, rep.rows[k - 1].distance);
  const std::string csv = stability_csv(rep);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "scale,distance");
}

TEST(Perturbation, PotentialMovesWithTheSource) {
  const auto s = baseline(33);
  const std::vector<double> etas{0.01, 0.1, 0.001};
  const auto t = source_perturbation_trend(s, etas);
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_TRUE(t.monotone);
  EXPECT_NEAR(t.rows[0].size, 0.1, 1e-12);
  EXPECT_NEAR(t.rows[2].size, 0.001, 1e-12);
}
