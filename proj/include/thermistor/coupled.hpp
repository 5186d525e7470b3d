#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "thermistor/coefficients.hpp"
#include "thermistor/error.hpp"
#include "thermistor/field_io.hpp"
#include "thermistor/field_ops.hpp"
#include "thermistor/grid.hpp"
#include "thermistor/poisson.hpp"
#include "thermistor/px_laplace.hpp"

namespace thermistor::coupled {

struct CoupledOptions {
  px::PxOptions px;
  poisson::PoissonOptions poisson;
};

/// One application of the map theta* -> theta.
struct TStep {
  ScalarField theta;
  ScalarField u;
  VectorField grad_u;
  double px_residual = 0.0;
  double poisson_residual = 0.0;
  double energy = 0.0;
  int clamp_count = 0;
  bool px_converged = false;
};

/// Exponent sigma(theta*) on the grid, clamped to spec.p_max.
inline px::ExponentField exponent_of(const ScalarField& theta_star, const CoefficientSpec& spec) {
  ScalarField p(theta_star.grid());
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = spec.sigma(theta_star[k]);
  return px::ExponentField::make(std::move(p), spec.p_max, 2);
}

/// Freezes p = sigma(theta*), solves the px problem for u, then solves
/// -lap(theta) = lambda(theta*) (|Du|^2 + eps^2)^(p/2) with theta = 0 on the boundary,
/// eps being the px solver's final regularization. A zero source short-circuits
/// to u = 0 and theta = 0.
inline TStep apply_T(const ScalarField& theta_star, const CoefficientSpec& spec,
                     const CoupledOptions& opt = {}) {
  const Grid2D& g = theta_star.grid();
  if (!(spec.f.grid() == g)) throw Error(Errc::InvalidArgument, "theta* and f must share a grid");
  const px::ExponentField pf = exponent_of(theta_star, spec);
  px::PxSolveResult sol = px::solve_px(pf, spec.f, opt.px);
  const double eps = opt.px.schedule.final_eps();
  const bool trivial = sup_norm(spec.f) == 0.0;

  ScalarField rhs(g);
  for (int j = 1; j < g.ny() - 1; ++j) {
    for (int i = 1; i < g.nx() - 1; ++i) {
      const std::size_t k = g.index(i, j);
      const double lam = spec.lambda(theta_star[k]);
      if (lam == 0.0 || trivial) continue;
      const double s = sol.grad_u.at(i, j).norm2() + eps * eps;
      rhs[k] = lam * std::pow(s, 0.5 * pf.p[k]);
    }
  }
  poisson::PoissonResult th = poisson::solve_poisson(rhs, opt.poisson);
  return {std::move(th.theta), std::move(sol.u),       std::move(sol.grad_u), sol.residual_sup,
          th.residual_sup,     sol.energy,             pf.clamp_count,        sol.converged};
}

struct OuterRecord {
  int iter = 0;
  double theta_diff_sup = 0.0;
  double px_residual = 0.0;
  double poisson_residual = 0.0;
  int clamp_count = 0;
};

struct CoupledSolution {
  ScalarField u;
  ScalarField theta;
  VectorField grad_u;
  int outer_iterations = 0;
  std::vector<OuterRecord> history;
  bool converged = false;
  double energy = 0.0;

  double final_diff() const { return history.empty() ? 0.0 : history.back().theta_diff_sup; }
};

struct FixedPointOptions {
  double omega = 1.0;  ///< relaxation in (0, 1]
  double outer_tol = 1e-8;
  int max_outer = 50;
  CoupledOptions inner;
};

/// Relaxed iteration theta* <- (1 - omega) theta* + omega T(theta*) from theta* = 0.
/// A run that does not reach outer_tol returns its last iterate with converged = false.
inline CoupledSolution fixed_point(const CoefficientSpec& spec, const FixedPointOptions& opt = {}) {
  if (!(opt.omega > 0.0 && opt.omega <= 1.0)) {
    throw Error(Errc::InvalidArgument, "relaxation must lie in (0, 1]");
  }
  const Grid2D& g = spec.f.grid();
  ScalarField theta_star(g);
  CoupledSolution out{ScalarField(g), ScalarField(g), VectorField(g), 0, {}, false, 0.0};
  for (int k = 1; k <= opt.max_outer; ++k) {
    TStep step = apply_T(theta_star, spec, opt.inner);
    ScalarField next = opt.omega == 1.0 ? std::move(step.theta)
                                         : combine(1.0 - opt.omega, theta_star, opt.omega, step.theta);
    const double diff = max_abs_diff(next, theta_star);
    if (!std::isfinite(diff)) throw Error(Errc::NonfiniteValue, "outer difference is not finite");
    out.history.push_back({k, diff, step.px_residual, step.poisson_residual, step.clamp_count});
    out.u = std::move(step.u);
    out.grad_u = std::move(step.grad_u);
    out.energy = step.energy;
    out.outer_iterations = k;
    theta_star = std::move(next);
    if (diff <= opt.outer_tol) {
      out.converged = true;
      break;
    }
  }
  out.theta = std::move(theta_star);
  if (!out.converged) {
    spdlog::warn("fixed point: no convergence after {} outer iterations (last diff {})",
                 out.outer_iterations, out.final_diff());
  }
  return out;
}

/// CSV "iter,theta_diff_sup,px_residual,poisson_residual,clamp_count".
inline std::string history_csv(const CoupledSolution& sol) {
  std::string out = "iter,theta_diff_sup,px_residual,poisson_residual,clamp_count\n";
  for (const auto& r : sol.history) {
    out += fmt::format("{},{},{},{},{}\n", r.iter, io::num(r.theta_diff_sup), io::num(r.px_residual),
                       io::num(r.poisson_residual), r.clamp_count);
  }
  return out;
}

struct LambdaSweepRow {
  double lambda_plus = 0.0;
  bool converged = false;
  int outer_iterations = 0;
  double final_diff = 0.0;
};

struct LambdaSweep {
  std::vector<LambdaSweepRow> rows;
  std::optional<double> first_failing;
};

/// Doubles the resistance law (and lambda_plus) from `start` until the outer
/// iteration first fails or `max_doublings` is reached.
inline LambdaSweep lambda_threshold_sweep(const CoefficientSpec& spec, const FixedPointOptions& opt,
                                          double start, int max_doublings) {
  LambdaSweep sweep;
  const double base = spec.lambda.sup_abs();
  if (!(base > 0.0)) throw Error(Errc::InvalidArgument, "sweep needs a nonzero lambda law");
  double level = start;
  for (int k = 0; k <= max_doublings; ++k, level *= 2.0) {
    CoefficientSpec s = spec;
    s.lambda = spec.lambda.scale_output(level / base);
    s.lambda_plus = level;
    LambdaSweepRow row{level, false, 0, 0.0};
    try {
      const CoupledSolution sol = fixed_point(s, opt);
      row.converged = sol.converged;
      row.outer_iterations = sol.outer_iterations;
      row.final_diff = sol.final_diff();
    } catch (const Error& e) {
      spdlog::info("lambda sweep: lambda_plus = {} failed: {}", level, e.what());
    }
    sweep.rows.push_back(row);
    if (!row.converged) {
      sweep.first_failing = level;
      break;
    }
  }
  return sweep;
}

struct BallInvarianceReport {
  double alpha = 0.0;
  double sup_theta = 0.0;
  double sup_grad = 0.0;
  double holder = 0.0;      ///< alpha-Hoelder quotient of D theta over dyadic node pairs
  double proxy_norm = 0.0;  ///< sup_theta + sup_grad + holder
  bool inside_unit_ball = false;
};

/// Discrete C^{1,alpha} proxy norm. Pairs are (x, x + 2^k h e) for e in
/// {(1,0), (0,1), (1,1), (1,-1)} and every dyadic separation inside the grid.
inline BallInvarianceReport ball_invariance_check(const ScalarField& theta, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(Errc::InvalidArgument, "alpha must lie in (0, 1]");
  const Grid2D& g = theta.grid();
  const int n = g.nx();
  const VectorField d = gradient(theta);
  BallInvarianceReport rep;
  rep.alpha = alpha;
  rep.sup_theta = sup_norm(theta);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) rep.sup_grad = std::max(rep.sup_grad, d.at(i, j).norm());
  }
  static constexpr int dirs[4][2] = {{1, 0}, {0, 1}, {1, 1}, {1, -1}};
  for (int s = 1; s < n; s *= 2) {
    for (const auto& e : dirs) {
      const double dist = g.h() * s * std::hypot(e[0], e[1]);
      const double inv = 1.0 / std::pow(dist, alpha);
      for (int j = 0; j < n; ++j) {
        const int j2 = j + s * e[1];
        if (j2 < 0 || j2 >= n) continue;
        for (int i = 0; i + s * e[0] < n; ++i) {
          const double q = (d.at(i + s * e[0], j2) - d.at(i, j)).norm() * inv;
          rep.holder = std::max(rep.holder, q);
        }
      }
    }
  }
  rep.proxy_norm = rep.sup_theta + rep.sup_grad + rep.holder;
  rep.inside_unit_ball = rep.proxy_norm <= 1.0;
  return rep;
}

}  // namespace thermistor::coupled
