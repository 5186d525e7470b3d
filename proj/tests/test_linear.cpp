#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "thermistor/linear_solver.hpp"
#include "thermistor/poisson.hpp"

using namespace thermistor;

TEST(FivePointOperator, LaplaceMatchesStencil) {
  const Grid2D g(17);
  const auto mask = DirichletMask::boundary(g);
  const auto a = FivePointOperator::laplace(mask);
  std::vector<double> x(g.size(), 0.0), y(g.size());
  x[g.index(5, 5)] = 1.0;
  a.apply(x, y);
  EXPECT_EQ(y[g.index(5, 5)], 4.0);
  EXPECT_EQ(y[g.index(6, 5)], -1.0);
  EXPECT_EQ(y[g.index(5, 4)], -1.0);
  EXPECT_EQ(y[g.index(0, 5)], 0.0);
}

TEST(ConjugateGradient, SolvesVariableCoefficientSystem) {
  const Grid2D g(33);
  const auto mask = DirichletMask::boundary(g);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> c(1e-3, 10.0);
  std::vector<double> east(g.size()), north(g.size());
  for (auto& v : east) v = c(rng);
  for (auto& v : north) v = c(rng);
  const FivePointOperator a(mask, east, north);
  std::vector<double> xs(g.size(), 0.0), b(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!mask.fixed(k)) xs[k] = std::sin(0.37 * static_cast<double>(k));
  }
  a.apply(xs, b);
  std::vector<double> x(g.size(), 0.0);
  const CgResult r = conjugate_gradient(a, b, x, 1e-12, 2000);
  ASSERT_TRUE(r.converged);
  double err = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) err = std::max(err, std::abs(x[k] - xs[k]));
  EXPECT_LT(err, 1e-8);
}

TEST(ConjugateGradient, ZeroRightHandSideGivesZero) {
  const Grid2D g(17);
  const auto a = FivePointOperator::laplace(DirichletMask::boundary(g));
  std::vector<double> b(g.size(), 0.0), x(g.size(), 5.0);
  const CgResult r = conjugate_gradient(a, b, x, 1e-12, 10);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 0);
  for (double v : x) EXPECT_EQ(v, 0.0);
}

TEST(ConjugateGradient, PreconditionerKeepsIterationsLow) {
  const Grid2D g(129);
  const auto a = FivePointOperator::laplace(DirichletMask::boundary(g));
  std::vector<double> b(g.size(), 1.0), x(g.size(), 0.0);
  const CgResult r = conjugate_gradient(a, b, x, 1e-10, 10000);
  ASSERT_TRUE(r.converged);
  EXPECT_LT(r.iterations, 80);
}

TEST(Poisson, ManufacturedSecondOrder) {
  double prev = 0.0;
  for (int n : {33, 65}) {
    const Grid2D g(n);
    const double pi = std::numbers::pi;
    const auto rhs = ScalarField::from_function(
        g, [&](double x, double y) { return 2 * pi * pi * std::sin(pi * x) * std::sin(pi * y); });
    const auto sol = poisson::solve_poisson(rhs);
    EXPECT_LT(sol.residual_sup, 1e-8);
    double err = 0.0;
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        const Point p = g.node(i, j);
        err = std::max(err, std::abs(sol.theta(i, j) - std::sin(pi * p.x) * std::sin(pi * p.y)));
      }
    }
    if (prev > 0.0) {
      EXPECT_NEAR(prev / err, 4.0, 0.1);
    }
    prev = err;
  }
}

TEST(Poisson, HarmonicExtensionReproducesHarmonicQuadratic) {
  const Grid2D g(33, 0.5, {0.25, 0.25});
  const auto phi = ScalarField::from_function(g, [](double x, double y) { return x * x - y * y + 3 * x * y - y; });
  ScalarField boundary_only(g);
  for (int j = 0; j < g.ny(); ++j) {
    for (int i = 0; i < g.nx(); ++i) {
      if (g.on_boundary(i, j)) boundary_only(i, j) = phi(i, j);
    }
  }
  const auto h = poisson::harmonic_extension(boundary_only);
  EXPECT_LT(max_abs_diff(h.theta, phi), 1e-12);
}

TEST(Poisson, DerivativesAtNodeAndOffNode) {
  const Grid2D g(65);
  auto f = [](double x, double y) { return x * x * x - 2 * x * y * y + 0.5 * y * y + x; };
  const auto phi = ScalarField::from_function(g, f);
  for (Point c : {Point{0.5, 0.5}, Point{0.4321, 0.5678}}) {
    const auto t = poisson::derivatives_at(phi, c);
    EXPECT_NEAR(t.value, f(c.x, c.y), 1e-12);
    EXPECT_NEAR(t.grad.x, 3 * c.x * c.x - 2 * c.y * c.y + 1, 1e-9);
    EXPECT_NEAR(t.grad.y, -4 * c.x * c.y + c.y, 1e-9);
    EXPECT_NEAR(t.hess.xx, 6 * c.x, 1e-7);
    EXPECT_NEAR(t.hess.xy, -4 * c.y, 1e-7);
    EXPECT_NEAR(t.hess.yy, -4 * c.x + 1, 1e-7);
  }
}

TEST(Poisson, DerivativesNearBoundaryThrow) {
  const Grid2D g(65);
  const ScalarField phi(g);
  try {
    poisson::derivatives_at(phi, {3 * g.h(), 0.5});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::TooCloseToBoundary);
  }
  EXPECT_NO_THROW(poisson::derivatives_at(phi, {4 * g.h(), 0.5}));
}

TEST(Poisson, NonHarmonicBoundaryDataMatchTorsionOracle) {
  const Grid2D g(33);
  const auto phi = ScalarField::from_function(g, [](double x, double y) { return x * x + y * y; });
  const auto h = poisson::harmonic_extension(phi);
  // h - phi vanishes on the boundary and solves -lap(h - phi) = 4.
  const auto w = poisson::solve_poisson(ScalarField::constant(g, 4.0));
  EXPECT_NEAR(max_abs_diff(phi, h.theta), sup_norm(w.theta), 1e-12);
  EXPECT_LT(max_abs_diff(combine(1.0, h.theta, -1.0, phi), w.theta), 1e-12);
}

TEST(Poisson, MaximumPrincipleAndLinearity) {
  const Grid2D g(33);
  const auto g1 = ScalarField::from_function(g, [](double x, double y) { return std::exp(x) * y * y; });
  const auto g2 = ScalarField::from_function(g, [](double x, double y) { return std::cos(5 * x * y); });
  const auto t1 = poisson::solve_poisson(g1);
  const auto t2 = poisson::solve_poisson(g2);
  for (double v : t1.theta.values()) EXPECT_GE(v, -10 * 1e-12);
  const auto t12 = poisson::solve_poisson(combine(2.0, g1, -3.0, g2));
  EXPECT_LT(max_abs_diff(t12.theta, combine(2.0, t1.theta, -3.0, t2.theta)), 1e-10);
  EXPECT_EQ(sup_norm(poisson::solve_poisson(ScalarField(g)).theta), 0.0);

  const auto b = ScalarField::from_function(g, [](double x, double y) { return std::sin(3 * x) + y; });
  const auto h = poisson::harmonic_extension(b);
  double bmax = -1e300, bmin = 1e300;
  for (int j = 0; j < g.ny(); ++j) {
    for (int i = 0; i < g.nx(); ++i) {
      if (g.on_boundary(i, j)) {
        bmax = std::max(bmax, b(i, j));
        bmin = std::min(bmin, b(i, j));
      }
    }
  }
  for (double v : h.theta.values()) {
    EXPECT_LE(v, bmax + 10 * 1e-12);
    EXPECT_GE(v, bmin - 10 * 1e-12);
  }
}

TEST(Poisson, DerivativesOfSineProduct) {
  const Grid2D g(129);
  const double pi = std::numbers::pi;
  const auto phi = ScalarField::from_function(g, [&](double x, double y) { return std::sin(pi * x) * std::sin(pi * y); });
  const auto t = poisson::derivatives_at(phi, {0.5, 0.5});
  EXPECT_NEAR(t.value, 1.0, 1e-15);
  EXPECT_NEAR(t.grad.norm(), 0.0, 1e-12);
  EXPECT_NEAR(t.hess.xx, -pi * pi, 1e-6);
  EXPECT_NEAR(t.hess.yy, -pi * pi, 1e-6);
  EXPECT_NEAR(t.hess.xy, 0.0, 1e-12);
}
