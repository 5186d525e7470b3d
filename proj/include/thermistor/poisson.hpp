#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "thermistor/error.hpp"
#include "thermistor/field_ops.hpp"
#include "thermistor/grid.hpp"
#include "thermistor/linear_solver.hpp"

namespace thermistor::poisson {

struct PoissonResult {
  ScalarField theta;
  double residual_sup = 0.0;  ///< sup over interior nodes of the five-point residual
  int iterations = 0;
};

struct PoissonOptions {
  double tol = 1e-12;  ///< relative residual of the linear system
  int max_iters = 0;   ///< 0 selects 10 * (number of nodes)
};

namespace detail {

inline int iteration_cap(const PoissonOptions& opt, const Grid2D& g) {
  return opt.max_iters > 0 ? opt.max_iters : static_cast<int>(10 * g.size());
}

/// sup over interior nodes of |-lap(theta) - rhs|.
inline double interior_residual(const ScalarField& theta, const ScalarField& rhs) {
  const ScalarField lap = laplacian(theta);
  const int n = theta.grid().nx();
  double m = 0.0;
  for (int j = 1; j < n - 1; ++j) {
    for (int i = 1; i < n - 1; ++i) m = std::max(m, std::abs(-lap(i, j) - rhs(i, j)));
  }
  return m;
}

}  // namespace detail

/// Solves -lap(theta) = g with theta = 0 on the boundary.
inline PoissonResult solve_poisson(const ScalarField& g, const PoissonOptions& opt = {}) {
  const Grid2D& grid = g.grid();
  const DirichletMask mask = DirichletMask::boundary(grid);
  const FivePointOperator a = FivePointOperator::laplace(mask);
  const double h2 = grid.h() * grid.h();
  std::vector<double> b(grid.size()), x(grid.size(), 0.0);
  for (std::size_t k = 0; k < b.size(); ++k) b[k] = mask.fixed(k) ? 0.0 : h2 * g[k];
  const CgResult cg = conjugate_gradient(a, b, x, opt.tol, detail::iteration_cap(opt, grid));
  if (!cg.converged) {
    throw Error(Errc::MaxIterationsExceeded,
                "Poisson CG stopped at relative residual " + std::to_string(cg.relative_residual));
  }
  ScalarField theta(grid, std::move(x));
  const double res = detail::interior_residual(theta, g);
  return {std::move(theta), res, cg.iterations};
}

/// Discrete harmonic function taking the boundary values of `boundary_data`
/// (interior entries of the argument are ignored).
inline PoissonResult harmonic_extension(const ScalarField& boundary_data,
                                        const PoissonOptions& opt = {}) {
  const Grid2D& grid = boundary_data.grid();
  const int n = grid.nx();
  const DirichletMask mask = DirichletMask::boundary(grid);
  const FivePointOperator a = FivePointOperator::laplace(mask);
  // Lift: w = theta - lift vanishes on the boundary and solves A w = -A lift.
  ScalarField lift(grid);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      if (grid.on_boundary(i, j)) lift(i, j) = boundary_data(i, j);
    }
  }
  std::vector<double> b(grid.size(), 0.0), x(grid.size(), 0.0);
  for (int j = 1; j < n - 1; ++j) {
    for (int i = 1; i < n - 1; ++i) {
      double s = 0.0;
      if (i == 1) s += lift(0, j);
      if (i == n - 2) s += lift(n - 1, j);
      if (j == 1) s += lift(i, 0);
      if (j == n - 2) s += lift(i, n - 1);
      b[grid.index(i, j)] = s;
    }
  }
  const CgResult cg = conjugate_gradient(a, b, x, opt.tol, detail::iteration_cap(opt, grid));
  if (!cg.converged) {
    throw Error(Errc::MaxIterationsExceeded, "harmonic extension CG stopped at relative residual " +
                                                 std::to_string(cg.relative_residual));
  }
  for (std::size_t k = 0; k < x.size(); ++k) x[k] += lift[k];
  ScalarField theta(grid, std::move(x));
  const double res = detail::interior_residual(theta, ScalarField(grid));
  return {std::move(theta), res, cg.iterations};
}

/// Second-order Taylor data of a discrete field at a point.
struct Taylor2 {
  double value = 0.0;
  Vec2 grad;
  Sym2 hess;
};

namespace detail {

inline Taylor2 node_stencils(const ScalarField& f, int i, int j) {
  static constexpr std::array<double, 5> d1{1.0 / 12, -8.0 / 12, 0.0, 8.0 / 12, -1.0 / 12};
  static constexpr std::array<double, 5> d2{-1.0 / 12, 16.0 / 12, -30.0 / 12, 16.0 / 12, -1.0 / 12};
  const double h = f.grid().h();
  Taylor2 t;
  t.value = f(i, j);
  double gx = 0, gy = 0, hxx = 0, hyy = 0, hxy = 0;
  for (int a = -2; a <= 2; ++a) {
    gx += d1[a + 2] * f(i + a, j);
    gy += d1[a + 2] * f(i, j + a);
    hxx += d2[a + 2] * f(i + a, j);
    hyy += d2[a + 2] * f(i, j + a);
    for (int b = -2; b <= 2; ++b) hxy += d1[a + 2] * d1[b + 2] * f(i + a, j + b);
  }
  t.grad = {gx / h, gy / h};
  t.hess = {hxx / (h * h), hxy / (h * h), hyy / (h * h)};
  return t;
}

/// Cubic Lagrange weights on the nodes -1, 0, 1, 2 at offset s in [0, 1).
inline std::array<double, 4> cubic_weights(double s) {
  return {-s * (s - 1.0) * (s - 2.0) / 6.0, (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0,
          -(s + 1.0) * s * (s - 2.0) / 2.0, (s + 1.0) * s * (s - 1.0) / 6.0};
}

}  // namespace detail

/// Value, gradient and Hessian at `center` from fourth-order central stencils;
/// off-node centers interpolate the nodal stencils with cubic Lagrange weights.
inline Taylor2 derivatives_at(const ScalarField& f, Point center) {
  const Grid2D& g = f.grid();
  const double h = g.h();
  const double margin = 4.0 * h * (1.0 - 1e-9);
  if (center.x - g.origin().x < margin || center.y - g.origin().y < margin ||
      g.origin().x + g.extent() - center.x < margin || g.origin().y + g.extent() - center.y < margin) {
    throw Error(Errc::TooCloseToBoundary, "derivative center must be at least 4h from the boundary");
  }
  const double sx = (center.x - g.origin().x) / h;
  const double sy = (center.y - g.origin().y) / h;
  const double rx = std::round(sx);
  const double ry = std::round(sy);
  if (std::abs(sx - rx) < 1e-10 && std::abs(sy - ry) < 1e-10) {
    return detail::node_stencils(f, static_cast<int>(rx), static_cast<int>(ry));
  }
  const int i0 = static_cast<int>(std::floor(sx));
  const int j0 = static_cast<int>(std::floor(sy));
  const auto wx = detail::cubic_weights(sx - i0);
  const auto wy = detail::cubic_weights(sy - j0);
  Taylor2 out;
  for (int b = 0; b < 4; ++b) {
    for (int a = 0; a < 4; ++a) {
      const double w = wx[a] * wy[b];
      const Taylor2 t = detail::node_stencils(f, i0 - 1 + a, j0 - 1 + b);
      out.value += w * t.value;
      out.grad = out.grad + w * t.grad;
      out.hess = {out.hess.xx + w * t.hess.xx, out.hess.xy + w * t.hess.xy,
                  out.hess.yy + w * t.hess.yy};
    }
  }
  return out;
}

}  // namespace thermistor::poisson
