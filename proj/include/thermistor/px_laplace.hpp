#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "thermistor/error.hpp"
#include "thermistor/field_ops.hpp"
#include "thermistor/grid.hpp"
#include "thermistor/linear_solver.hpp"

// Discretization: every cell is split into four corner triangles (the union of
// both diagonal splittings, each at half weight). The gradient on the corner
// triangle at (a, b) combines the cell's x-edge on row j+b with its y-edge on
// column i+a. This keeps the scheme invariant under the square's symmetries and
// makes the lagged operator a five-point M-matrix.

namespace thermistor::px {

/// Regularized flux (|g|^2 + eps^2)^((p-2)/2) g.
inline Vec2 flux(Vec2 g, double p, double eps) {
  if (eps < 0.0) throw Error(Errc::InvalidArgument, "regularization must be non-negative");
  const double s = g.norm2() + eps * eps;
  if (s == 0.0) {
    if (p < 2.0) throw Error(Errc::SingularFlux, "flux with p < 2 at zero gradient and eps = 0");
    return {0.0, 0.0};
  }
  return std::pow(s, 0.5 * (p - 2.0)) * g;
}

/// Composite exponent p(x) with its bounds.
struct ExponentField {
  ScalarField p;
  double p_min = 0.0;
  double p_max = 0.0;
  int clamp_count = 0;  ///< nodes lowered to the configured ceiling

  /// Clamps raw exponents to `ceiling` and checks the lower bound 2d/(d+2).
  static ExponentField make(ScalarField raw, double ceiling = 10.0, int d = 2) {
    ExponentField out{std::move(raw), 0.0, 0.0, 0};
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (double& v : out.p.values()) {
      if (v > ceiling) {
        v = ceiling;
        ++out.clamp_count;
      }
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double threshold = 2.0 * d / (d + 2.0);
    if (!(lo > threshold)) {
      throw Error(Errc::InvalidArgument, "exponent minimum " + std::to_string(lo) +
                                             " does not exceed 2d/(d+2) = " +
                                             std::to_string(threshold));
    }
    if (out.clamp_count > 0) {
      spdlog::warn("exponent clamp active: {} node(s) lowered to pMax = {}", out.clamp_count,
                   ceiling);
    }
    out.p_min = lo;
    out.p_max = hi;
    return out;
  }

  static ExponentField constant(const Grid2D& grid, double p) {
    return make(ScalarField::constant(grid, p), std::max(10.0, p));
  }
};

/// Strictly decreasing positive continuation ladder.
class RegularizationSchedule {
 public:
  RegularizationSchedule() : eps_{1e-2, 1e-4, 1e-6, 1e-8} {}
  explicit RegularizationSchedule(std::vector<double> eps) : eps_(std::move(eps)) {
    if (eps_.empty()) throw Error(Errc::InvalidArgument, "empty regularization schedule");
    for (std::size_t k = 0; k < eps_.size(); ++k) {
      if (!(eps_[k] > 0.0) || (k > 0 && !(eps_[k] < eps_[k - 1]))) {
        throw Error(Errc::InvalidArgument, "schedule must be positive and strictly decreasing");
      }
    }
  }
  const std::vector<double>& epsilons() const { return eps_; }
  double final_eps() const { return eps_.back(); }

  friend bool operator==(const RegularizationSchedule&, const RegularizationSchedule&) = default;

 private:
  std::vector<double> eps_;
};

namespace detail {

/// Mean exponent of each cell's four corner nodes, indexed by the lower-left node.
inline std::vector<double> cell_exponents(const ScalarField& p) {
  const int n = p.grid().nx();
  std::vector<double> out(p.size(), 0.0);
  for (int j = 0; j + 1 < n; ++j) {
    for (int i = 0; i + 1 < n; ++i) {
      out[p.grid().index(i, j)] = 0.25 * (p(i, j) + p(i + 1, j) + p(i, j + 1) + p(i + 1, j + 1));
    }
  }
  return out;
}

/// Invokes fn(cell, i, j, gx, gy, b, a) for the four corner triangles of every
/// cell: gx is taken on the bottom (b = 0) or top (b = 1) x-edge, gy on the left
/// (a = 0) or right (a = 1) y-edge.
template <class Fn>
void for_each_corner(const ScalarField& u, Fn&& fn) {
  const Grid2D& g = u.grid();
  const int n = g.nx();
  const double inv_h = 1.0 / g.h();
  for (int j = 0; j + 1 < n; ++j) {
    for (int i = 0; i + 1 < n; ++i) {
      const std::size_t k = g.index(i, j);
      const double u00 = u[k], u10 = u[k + 1], u01 = u[k + n], u11 = u[k + n + 1];
      const double gx[2] = {(u10 - u00) * inv_h, (u11 - u01) * inv_h};
      const double gy[2] = {(u01 - u00) * inv_h, (u11 - u10) * inv_h};
      for (int b = 0; b < 2; ++b) {
        for (int a = 0; a < 2; ++a) fn(k, i, j, gx[b], gy[a], b, a);
      }
    }
  }
}

inline void require_same_grid(const ScalarField& u, const ExponentField& pf, const ScalarField& f) {
  if (!(u.grid() == pf.p.grid()) || !(u.grid() == f.grid())) {
    throw Error(Errc::InvalidArgument, "u, p and f must share a grid");
  }
}

}  // namespace detail

/// E[u] = sum over corner triangles of (h^2/4)(1/p)(|Du|^2 + eps^2)^(p/2) - sum_nodes h^2 f u.
inline double energy(const ScalarField& u, const ExponentField& pf, const ScalarField& f, double eps) {
  detail::require_same_grid(u, pf, f);
  const double h2 = u.grid().h() * u.grid().h();
  const std::vector<double> pc = detail::cell_exponents(pf.p);
  const double eps2 = eps * eps;
  double e = 0.0;
  detail::for_each_corner(u, [&](std::size_t k, int, int, double gx, double gy, int, int) {
    const double p = pc[k];
    e += std::pow(gx * gx + gy * gy + eps2, 0.5 * p) / p;
  });
  e *= 0.25 * h2;
  double src = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) src += f[k] * u[k];
  e -= h2 * src;
  if (!std::isfinite(e)) {
    throw Error(Errc::NonfiniteEnergy, "energy overflow; pMax is too large for the field scale");
  }
  return e;
}

/// E[u + t d] - E[u] evaluated term by term without cancellation.
inline double energy_change(const ScalarField& u, const ScalarField& d, double t,
                            const ExponentField& pf, const ScalarField& f, double eps) {
  detail::require_same_grid(u, pf, f);
  const Grid2D& g = u.grid();
  const int n = g.nx();
  const double h2 = g.h() * g.h();
  const double inv_h = 1.0 / g.h();
  const std::vector<double> pc = detail::cell_exponents(pf.p);
  const double eps2 = eps * eps;
  double de = 0.0;
  detail::for_each_corner(u, [&](std::size_t k, int, int, double gx, double gy, int b, int a) {
    const double dx = b == 0 ? (d[k + 1] - d[k]) * inv_h : (d[k + n + 1] - d[k + n]) * inv_h;
    const double dy = a == 0 ? (d[k + n] - d[k]) * inv_h : (d[k + n + 1] - d[k + 1]) * inv_h;
    const double p = pc[k];
    const double s0 = gx * gx + gy * gy + eps2;
    const double ds = 2.0 * t * (gx * dx + gy * dy) + t * t * (dx * dx + dy * dy);
    if (s0 == 0.0) {
      de += std::pow(std::max(ds, 0.0), 0.5 * p) / p;
    } else {
      de += std::pow(s0, 0.5 * p) * std::expm1(0.5 * p * std::log1p(ds / s0)) / p;
    }
  });
  de *= 0.25 * h2;
  double src = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) src += f[k] * d[k];
  de -= t * h2 * src;
  if (!std::isfinite(de)) throw Error(Errc::NonfiniteEnergy, "energy change is not finite");
  return de;
}

/// Lagged five-point operator: edge conductance is the sum of w/4 over the corner
/// triangles sharing the edge, with w = (|Du|^2 + eps^2)^((p-2)/2) frozen at u.
inline FivePointOperator lagged_operator(const ScalarField& u, const ExponentField& pf, double eps,
                                         const DirichletMask& mask) {
  const Grid2D& g = u.grid();
  const int n = g.nx();
  const std::vector<double> pc = detail::cell_exponents(pf.p);
  const double eps2 = eps * eps;
  std::vector<double> east(g.size(), 0.0), north(g.size(), 0.0);
  detail::for_each_corner(u, [&](std::size_t k, int, int, double gx, double gy, int b, int a) {
    const double s = gx * gx + gy * gy + eps2;
    const double p = pc[k];
    if (s == 0.0 && p < 2.0) {
      throw Error(Errc::SingularFlux, "singular weight at zero gradient with eps = 0");
    }
    const double w = 0.25 * std::pow(s, 0.5 * (p - 2.0));
    east[b == 0 ? k : k + n] += w;
    north[a == 0 ? k : k + 1] += w;
  });
  return FivePointOperator(mask, std::move(east), std::move(north));
}

/// Node-wise first variation dE/du; zero on fixed nodes.
inline ScalarField energy_gradient(const ScalarField& u, const ExponentField& pf,
                                   const ScalarField& f, double eps,
                                   const std::optional<DirichletMask>& mask = std::nullopt) {
  detail::require_same_grid(u, pf, f);
  const DirichletMask m = mask ? *mask : DirichletMask::boundary(u.grid());
  const FivePointOperator a = lagged_operator(u, pf, eps, m);
  const double h2 = u.grid().h() * u.grid().h();
  std::vector<double> out(u.size(), 0.0);
  a.apply(u.values(), out);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = m.fixed(k) ? 0.0 : out[k] - h2 * f[k];
  for (double v : out) {
    if (!std::isfinite(v)) throw Error(Errc::NonfiniteEnergy, "energy gradient is not finite");
  }
  return ScalarField(u.grid(), std::move(out));
}

struct PxOptions {
  RegularizationSchedule schedule;
  double tol = 1e-8;
  int max_iters = 500;  ///< Picard steps per regularization stage
  double cg_tol = 1e-10;
  int cg_max_iters = 0;  ///< 0 selects 10 * (number of nodes)
  std::optional<DirichletMask> mask;
};

struct EnergyRecord {
  int stage = 0;
  double energy = 0.0;
  double change = 0.0;  ///< accurate E_new - E_old of the accepted step
  double step = 0.0;
};

struct PxSolveResult {
  ScalarField u;
  VectorField grad_u;
  double energy = 0.0;
  double residual_sup = 0.0;
  int iterations = 0;
  bool converged = false;
  double final_eps = 0.0;
  std::vector<EnergyRecord> energy_log;
};

/// Minimizes the regularized energy by lagged-diffusivity Picard iteration with
/// backtracking on the energy, once per rung of the continuation ladder.
inline PxSolveResult solve_px(const ExponentField& pf, const ScalarField& f, const PxOptions& opt = {},
                              const std::optional<ScalarField>& initial = std::nullopt) {
  const Grid2D& g = f.grid();
  if (!(pf.p.grid() == g)) throw Error(Errc::InvalidArgument, "p and f must share a grid");
  const DirichletMask mask = opt.mask ? *opt.mask : DirichletMask::boundary(g);
  const double h2 = g.h() * g.h();
  const double f_sup = sup_norm(f);
  const double final_eps = opt.schedule.final_eps();

  if (f_sup == 0.0) {
    ScalarField zero(g);
    return {zero, VectorField(g), energy(zero, pf, f, final_eps), 0.0, 0, true, final_eps, {}};
  }

  ScalarField u = initial ? *initial : ScalarField(g);
  for (std::size_t k = 0; k < u.size(); ++k) {
    if (mask.fixed(k)) u[k] = 0.0;
  }
  const double target = opt.tol * (1.0 + f_sup) * h2;
  const int cg_cap = opt.cg_max_iters > 0 ? opt.cg_max_iters : static_cast<int>(10 * g.size());
  std::vector<double> rhs(g.size(), 0.0);
  for (std::size_t k = 0; k < rhs.size(); ++k) rhs[k] = mask.fixed(k) ? 0.0 : h2 * f[k];

  PxSolveResult out{u, VectorField(g), 0.0, 0.0, 0, false, final_eps, {}};
  bool all_converged = true;
  double residual = 0.0;
  const auto& ladder = opt.schedule.epsilons();
  for (std::size_t stage = 0; stage < ladder.size(); ++stage) {
    const double eps = ladder[stage];
    bool stage_done = false;
    for (int it = 0; it <= opt.max_iters; ++it) {
      const FivePointOperator a = lagged_operator(u, pf, eps, mask);
      std::vector<double> grad(g.size(), 0.0);
      a.apply(u.values(), grad);
      residual = 0.0;
      for (std::size_t k = 0; k < grad.size(); ++k) {
        grad[k] = mask.fixed(k) ? 0.0 : grad[k] - rhs[k];
        residual = std::max(residual, std::abs(grad[k]));
      }
      if (!std::isfinite(residual)) throw Error(Errc::NonfiniteEnergy, "residual is not finite");
      if (residual <= target) {
        stage_done = true;
        break;
      }
      if (it == opt.max_iters) break;

      std::vector<double> next = u.values();
      conjugate_gradient(a, rhs, next, opt.cg_tol, cg_cap);
      ScalarField dir(g);
      double slope = 0.0;
      for (std::size_t k = 0; k < dir.size(); ++k) {
        dir[k] = next[k] - u[k];
        slope += grad[k] * dir[k];
      }
      if (!(slope < 0.0)) {
        // Roundoff-level direction: fall back to steepest descent.
        slope = 0.0;
        for (std::size_t k = 0; k < dir.size(); ++k) {
          dir[k] = -grad[k] / std::max(a.diag(k), 1e-300);
          slope += grad[k] * dir[k];
        }
        if (!(slope < 0.0)) break;
      }
      double t = 1.0;
      double change = energy_change(u, dir, t, pf, f, eps);
      while (change > 1e-4 * t * slope && t > 1e-12) {
        t *= 0.5;
        change = energy_change(u, dir, t, pf, f, eps);
      }
      if (change > 0.0) break;  // line search stalled
      for (std::size_t k = 0; k < u.size(); ++k) u[k] += t * dir[k];
      ++out.iterations;
      out.energy_log.push_back({static_cast<int>(stage), energy(u, pf, f, eps), change, t});
    }
    if (!stage_done) {
      all_converged = false;
      spdlog::warn("px solve: stage eps = {} stopped at residual {} (target {})", eps, residual,
                   target);
      break;
    }
  }

  out.converged = all_converged;
  out.residual_sup = residual;
  out.energy = energy(u, pf, f, final_eps);
  out.grad_u = gradient(u);
  out.u = std::move(u);
  return out;
}

}  // namespace thermistor::px
