#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "thermistor/coefficients.hpp"
#include "thermistor/coupled.hpp"
#include "thermistor/error.hpp"
#include "thermistor/field_io.hpp"
#include "thermistor/field_ops.hpp"
#include "thermistor/grid.hpp"
#include "thermistor/poisson.hpp"

namespace thermistor::regularity {

/// P(x) = a + b.(x - c) + (x - c)^T M (x - c) / 2 about a fixed center c.
struct Paraboloid {
  double a = 0.0;
  Vec2 b;
  Sym2 M;

  double operator()(Vec2 v) const { return a + b.dot(v) + 0.5 * M.quad(v); }
  Paraboloid operator+(const Paraboloid& o) const { return {a + o.a, b + o.b, M + o.M}; }
  bool operator==(const Paraboloid&) const = default;
};

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Ordinary least squares y = slope x + intercept; needs two distinct abscissae.
inline LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw Error(Errc::EmptyInput, "least squares needs at least two points");
  }
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    sxy += (x[k] - mx) * (y[k] - my);
  }
  if (sxx == 0.0) throw Error(Errc::InvalidArgument, "least squares abscissae coincide");
  return {sxy / sxx, my - (sxy / sxx) * mx};
}

// ---------------------------------------------------------------------------
// Harmonic approximation

struct Approximation {
  ScalarField harmonic;  ///< on the subdomain grid
  double distance = 0.0;
};

/// Harmonic extension of theta's values on the boundary of `box` and the sup
/// distance to theta over the box nodes.
inline Approximation approximation_experiment(const ScalarField& theta, const NodeBox& box,
                                              const poisson::PoissonOptions& opt = {}) {
  const ScalarField local = restrict_to(theta, box);
  poisson::PoissonResult h = poisson::harmonic_extension(local, opt);
  const double dist = max_abs_diff(local, h.theta);
  return {std::move(h.theta), dist};
}

// ---------------------------------------------------------------------------
// Paraboloid cascade

struct CascadeOptions {
  int samples = 2000;           ///< ball samples per level
  double trace_factor = 10.0;   ///< scales the trace tolerance
  double min_radius_cells = 8;  ///< levels with radius below this many cells are truncated
  poisson::PoissonOptions poisson;
};

struct CascadeLevel {
  int n = 0;
  double radius = 0.0;
  Paraboloid P;           ///< cumulative P_n
  Paraboloid rescaled;    ///< replacement data (h(0), Dh(0), D^2 h(0)) on the unit ball
  double trace_residual = 0.0;  ///< Tr of the replacement Hessian before projection
  double trace_tol = 0.0;
  double sup_error = 0.0;       ///< sup over ball samples of |theta - P_n|
  double inc_a = 0.0;
  double inc_b = 0.0;
  double inc_M = 0.0;
  double increment = 0.0;  ///< |a_n - a_{n-1}| + rho^{n-1}|b_n - b_{n-1}| + rho^{2(n-1)}|M_n - M_{n-1}|
};

struct CascadeReport {
  double rho = 0.5;
  Point center;
  double h = 0.0;
  std::vector<CascadeLevel> levels;
  double fitted_decay_exponent = std::numeric_limits<double>::quiet_NaN();
  bool decay_exact = false;  ///< every fitted level error lies below the roundoff floor
  double error_floor = 0.0;
  double M_growth_slope = std::numeric_limits<double>::quiet_NaN();  ///< d|M_n|/dn
  double M_growth_power = std::numeric_limits<double>::quiet_NaN();  ///< d ln|M_n| / d ln n
  double increment_C = 0.0;  ///< max_n increment_n / rho^{2(n-1)}
  double increment_growth = std::numeric_limits<double>::quiet_NaN();  ///< d ln(increment/rho^{2(n-1)}) / dn
  std::optional<int> truncated_at;
  std::vector<std::string> notes;
};

namespace detail {

struct LevelOutcome {
  Paraboloid increment;  ///< unscaled Taylor data of the harmonic replacement
  double trace_residual = 0.0;
  double trace_tol = 0.0;
  double sup_error = 0.0;
};

/// One harmonic replacement of theta - prev on the node box of half-width
/// radius around center; the Hessian is projected to trace-free.
inline LevelOutcome replace_level(const ScalarField& theta, Point center, double radius,
                                  const Paraboloid& prev, const CascadeOptions& opt) {
  const Grid2D& g = theta.grid();
  const NodeBox box = box_around(g, center, radius);
  const Grid2D sub = box.grid_in(g);
  ScalarField r(sub);
  double scale = 0.0;
  for (int j = 0; j < sub.ny(); ++j) {
    for (int i = 0; i < sub.nx(); ++i) {
      const double t = theta(box.ic - box.m + i, box.jc - box.m + j);
      scale = std::max(scale, std::abs(t));
      r(i, j) = t - prev(sub.node(i, j) - center);
    }
  }
  const poisson::PoissonResult H = poisson::harmonic_extension(r, opt.poisson);
  const poisson::Taylor2 t = poisson::derivatives_at(H.theta, center);

  const double h = g.h();
  const double s = box.m * h;
  const double tr = t.hess.trace();
  const double structural = opt.trace_factor * (h / s) * (h / s) *
                            std::max(t.hess.frobenius(), sup_norm(H.theta) / (s * s));
  const double roundoff = 64.0 * std::numeric_limits<double>::epsilon() * scale / (h * h);
  const double tol = std::max(structural, roundoff);
  if (std::abs(tr) > tol) {
    throw Error(Errc::TraceTooLarge,
                fmt::format("|Tr M| = {:.3e} exceeds trace_tol = {:.3e} at radius {}", std::abs(tr),
                            tol, radius));
  }
  const Sym2 M{t.hess.xx - 0.5 * tr, t.hess.xy, t.hess.yy - 0.5 * tr};
  const Paraboloid inc{t.value, t.grad, M};
  const Paraboloid next = prev + inc;

  ScalarField resid(sub);
  for (int j = 0; j < sub.ny(); ++j) {
    for (int i = 0; i < sub.nx(); ++i) {
      resid(i, j) = theta(box.ic - box.m + i, box.jc - box.m + j) - next(sub.node(i, j) - center);
    }
  }
  const auto samples = sample_ball(resid, center, radius, opt.samples);
  return {inc, tr, tol, sup_norm(std::span<const Sample>(samples))};
}

/// Fit of ln(values) against n over entries above floor; nullopt when fewer
/// than two remain.
inline std::optional<LinearFit> log_fit(const std::vector<int>& ns, const std::vector<double>& values,
                                        double floor) {
  std::vector<double> x, y;
  for (std::size_t k = 0; k < ns.size(); ++k) {
    if (values[k] > floor) {
      x.push_back(ns[k]);
      y.push_back(std::log(values[k]));
    }
  }
  if (x.size() < 2) return std::nullopt;
  return least_squares(x, y);
}

}  // namespace detail

struct FirstParaboloid {
  Paraboloid P;
  double sup_error = 0.0;
  double trace_residual = 0.0;
  double trace_tol = 0.0;
};

/// P from the harmonic replacement of theta on the node box bounding
/// B(center, rho); sup_error over sampled B(center, rho).
inline FirstParaboloid first_paraboloid(const ScalarField& theta, Point center, double rho,
                                        const CascadeOptions& opt = {}) {
  const detail::LevelOutcome o = detail::replace_level(theta, center, rho, {}, opt);
  return {o.increment, o.sup_error, o.trace_residual, o.trace_tol};
}

/// Levels n = 1..n_max on balls of radius rho^n. Level n replaces
/// theta - P_{n-1} harmonically on the box of half-width rho^n and adds the
/// replacement's Taylor paraboloid. Fits use levels n >= 2.
inline CascadeReport dyadic_cascade(const ScalarField& theta, Point center, double rho, int n_max,
                                    const CascadeOptions& opt = {}) {
  if (!(rho > 0.0 && rho < 1.0)) throw Error(Errc::InvalidArgument, "rho must lie in (0, 1)");
  if (n_max < 1) throw Error(Errc::InvalidArgument, "n_max must be positive");
  const Grid2D& g = theta.grid();
  CascadeReport rep;
  rep.rho = rho;
  rep.center = center;
  rep.h = g.h();
  Paraboloid P;
  double box_scale = 0.0;
  for (int n = 1; n <= n_max; ++n) {
    const double radius = std::pow(rho, n);
    if (radius < opt.min_radius_cells * g.h() * (1.0 - 1e-12)) {
      rep.truncated_at = n;
      rep.notes.push_back(fmt::format("{}: level {} radius {} is below {} h; cascade truncated",
                                      errc_name(Errc::ResolutionExhausted), n, radius,
                                      opt.min_radius_cells));
      spdlog::info("cascade truncated at level {} (radius {} < {} h)", n, radius,
                   opt.min_radius_cells);
      break;
    }
    if (n == 1) box_scale = sup_norm(restrict_to(theta, box_around(g, center, radius)));
    const detail::LevelOutcome o = detail::replace_level(theta, center, radius, P, opt);
    const Paraboloid next = P + o.increment;
    CascadeLevel lv;
    lv.n = n;
    lv.radius = radius;
    lv.P = next;
    lv.rescaled = {o.increment.a / (radius * radius), (1.0 / radius) * o.increment.b, o.increment.M};
    lv.trace_residual = o.trace_residual;
    lv.trace_tol = o.trace_tol;
    lv.sup_error = o.sup_error;
    lv.inc_a = std::abs(next.a - P.a);
    lv.inc_b = (next.b - P.b).norm();
    lv.inc_M = (next.M - P.M).frobenius();
    const double rn1 = std::pow(rho, n - 1);
    lv.increment = lv.inc_a + rn1 * lv.inc_b + rn1 * rn1 * lv.inc_M;
    rep.levels.push_back(lv);
    P = next;
  }

  rep.error_floor = 1e-12 * std::max(box_scale, std::numeric_limits<double>::min());
  std::vector<int> ns;
  std::vector<double> errs, scaled_inc;
  for (const auto& lv : rep.levels) {
    const double w = std::pow(rho, 2 * (lv.n - 1));
    rep.increment_C = std::max(rep.increment_C, lv.increment / w);
    if (lv.n < 2) continue;
    ns.push_back(lv.n);
    errs.push_back(lv.sup_error);
    scaled_inc.push_back(lv.increment / w);
  }
  if (!ns.empty() && std::all_of(errs.begin(), errs.end(),
                                 [&](double e) { return e <= rep.error_floor; })) {
    rep.decay_exact = true;
    rep.fitted_decay_exponent = std::numeric_limits<double>::infinity();
  } else if (auto fit = detail::log_fit(ns, errs, rep.error_floor)) {
    rep.fitted_decay_exponent = -fit->slope / std::log(1.0 / rho);
  } else {
    rep.notes.push_back("fewer than two usable levels for the decay fit");
  }
  if (ns.size() >= 2) {
    std::vector<double> x, y;
    for (std::size_t k = 0; k < ns.size(); ++k) {
      x.push_back(ns[k]);
      y.push_back(rep.levels[static_cast<std::size_t>(ns[k] - 1)].P.M.frobenius());
    }
    rep.M_growth_slope = least_squares(x, y).slope;
    // Hessians at roundoff level carry no growth information.
    std::vector<double> lx, ly;
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double r = rep.levels[static_cast<std::size_t>(ns[k] - 1)].radius;
      if (y[k] <= 1e-10 * box_scale / (r * r)) continue;
      lx.push_back(std::log(x[k]));
      ly.push_back(std::log(y[k]));
    }
    rep.M_growth_power = lx.size() >= 2 ? least_squares(lx, ly).slope : 0.0;
  }
  if (auto fit = detail::log_fit(ns, scaled_inc, rep.error_floor)) {
    rep.increment_growth = fit->slope;
  } else {
    rep.increment_growth = 0.0;
  }
  return rep;
}

/// CSV "n,a,b1,b2,M11,M12,M22,trace_residual,sup_error,increment".
inline std::string cascade_csv(const CascadeReport& rep) {
  std::string out = "n,a,b1,b2,M11,M12,M22,trace_residual,sup_error,increment\n";
  for (const auto& lv : rep.levels) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", lv.n, io::num(lv.P.a), io::num(lv.P.b.x),
                       io::num(lv.P.b.y), io::num(lv.P.M.xx), io::num(lv.P.M.xy),
                       io::num(lv.P.M.yy), io::num(lv.trace_residual), io::num(lv.sup_error),
                       io::num(lv.increment));
  }
  return out;
}

struct CoefficientLimits {
  double theta_c = 0.0;
  Vec2 grad_c;
  std::vector<double> a_residual;  ///< |a_n - theta(c)|
  std::vector<double> b_residual;  ///< |b_n - D theta(c)|
  double a_slope = 0.0;  ///< fitted d ln(a_residual)/dn, -inf when at roundoff
  double b_slope = 0.0;
  double a_constant = 0.0;  ///< max_n a_residual / rho^{2n}
  double b_constant = 0.0;  ///< max_n b_residual / rho^n
  bool a_ok = false;  ///< a_slope <= -2 ln(1/rho) within 10%
  bool b_ok = false;  ///< b_slope <= -ln(1/rho) within 10%
};

/// Compares the cascade's a_n and b_n with fourth-order point values of theta
/// at the center.
inline CoefficientLimits coefficient_limits(const CascadeReport& rep, const ScalarField& theta,
                                            Point center) {
  const poisson::Taylor2 t = poisson::derivatives_at(theta, center);
  CoefficientLimits out;
  out.theta_c = t.value;
  out.grad_c = t.grad;
  std::vector<int> ns;
  for (const auto& lv : rep.levels) {
    ns.push_back(lv.n);
    out.a_residual.push_back(std::abs(lv.P.a - t.value));
    out.b_residual.push_back((lv.P.b - t.grad).norm());
    out.a_constant = std::max(out.a_constant, out.a_residual.back() / std::pow(rep.rho, 2 * lv.n));
    out.b_constant = std::max(out.b_constant, out.b_residual.back() / std::pow(rep.rho, lv.n));
  }
  const double L = std::log(1.0 / rep.rho);
  const double scale = std::max({std::abs(t.value), rep.error_floor * 1e12,
                                 std::numeric_limits<double>::min()});
  // Derivative stencils amplify roundoff by 1/h.
  const double floor_a = 1e-12 * scale;
  const double floor_b = 1e-12 * std::max(scale / rep.h, t.grad.norm());
  std::vector<int> fit_ns;
  std::vector<double> fa, fb;
  for (std::size_t k = 0; k < ns.size(); ++k) {
    if (ns[k] < 2) continue;
    fit_ns.push_back(ns[k]);
    fa.push_back(out.a_residual[k]);
    fb.push_back(out.b_residual[k]);
  }
  // Fewer than two levels above the floor means the residuals sit at roundoff.
  const auto slope_of = [&](const std::vector<double>& v, double floor) {
    const auto fit = detail::log_fit(fit_ns, v, floor);
    return fit ? fit->slope : -std::numeric_limits<double>::infinity();
  };
  out.a_slope = slope_of(fa, floor_a);
  out.b_slope = slope_of(fb, floor_b);
  out.a_ok = out.a_slope <= -2.0 * L * 0.9;
  out.b_ok = out.b_slope <= -L * 0.9;
  return out;
}

// ---------------------------------------------------------------------------
// Log-Lipschitz modulus

struct ModulusReport {
  Point center;
  std::vector<double> radii;        ///< decreasing
  std::vector<double> oscillation;  ///< sup over samples in B_r of |theta - theta(c) - D theta(c).(x - c)|
  std::vector<double> loglip_ratio; ///< oscillation / (r^2 ln(1/r))
  double max_ratio = 0.0;
};

/// Radii are sorted decreasing. Every radius must lie in (8h, 1). The sample
/// set for radius r is the union of the ring layouts of all radii <= r, so the
/// oscillation is non-decreasing in r.
inline ModulusReport loglip_modulus(const ScalarField& theta, Point center, std::vector<double> radii,
                                    int samples = 2000) {
  const Grid2D& g = theta.grid();
  if (radii.empty()) throw Error(Errc::EmptyInput, "no radii");
  for (double r : radii) {
    if (!(r > 8.0 * g.h())) {
      throw Error(Errc::RadiusBelowResolution,
                  fmt::format("radius {} is not above 8h = {}", r, 8.0 * g.h()));
    }
    if (!(r < 1.0)) throw Error(Errc::InvalidArgument, "radii must be below 1");
  }
  std::sort(radii.begin(), radii.end(), std::greater<>());
  const poisson::Taylor2 t = poisson::derivatives_at(theta, center);
  ModulusReport rep;
  rep.center = center;
  rep.radii = radii;
  rep.oscillation.assign(radii.size(), 0.0);
  double running = 0.0;
  for (std::size_t k = radii.size(); k-- > 0;) {
    for (const Sample& s : sample_ball(theta, center, radii[k], samples)) {
      running = std::max(running, std::abs(s.value - t.value - t.grad.dot(s.at - center)));
    }
    rep.oscillation[k] = running;
  }
  for (std::size_t k = 0; k < radii.size(); ++k) {
    const double r = radii[k];
    rep.loglip_ratio.push_back(rep.oscillation[k] / (r * r * std::log(1.0 / r)));
    rep.max_ratio = std::max(rep.max_ratio, rep.loglip_ratio.back());
  }
  return rep;
}

/// CSV "r,oscillation,ratio".
inline std::string modulus_csv(const ModulusReport& rep) {
  std::string out = "r,oscillation,ratio\n";
  for (std::size_t k = 0; k < rep.radii.size(); ++k) {
    out += fmt::format("{},{},{}\n", io::num(rep.radii[k]), io::num(rep.oscillation[k]),
                       io::num(rep.loglip_ratio[k]));
  }
  return out;
}

/// d ln(ratio) / d ln(1/r); positive values indicate growth toward the center.
inline double ratio_growth(const ModulusReport& rep) {
  std::vector<double> x, y;
  for (std::size_t k = 0; k < rep.radii.size(); ++k) {
    if (!(rep.loglip_ratio[k] > 0.0)) continue;
    x.push_back(std::log(1.0 / rep.radii[k]));
    y.push_back(std::log(rep.loglip_ratio[k]));
  }
  if (x.size() < 2) return 0.0;
  return least_squares(x, y).slope;
}

// ---------------------------------------------------------------------------
// Elementary modulus inequalities: s <= s ln(1/s) <= s^gamma / ((1 - gamma) e)

struct ModulusRow {
  double sigma = 0.0;
  double middle = 0.0;  ///< sigma ln(1/sigma)
  double right = 0.0;   ///< sigma^gamma / ((1 - gamma) e)
  bool left_ok = false;
  bool right_ok = false;
};

struct ModulusTable {
  double gamma = 0.0;
  std::vector<ModulusRow> rows;
  bool passed() const {
    return std::all_of(rows.begin(), rows.end(), [](const ModulusRow& r) { return r.left_ok && r.right_ok; });
  }
};

/// Sigmas outside (0, 1/e] are reported as failing rows.
inline ModulusTable modulus_inequalities(double gamma, std::span<const double> sigmas,
                                         double rel_slack = 1e-12) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw Error(Errc::InvalidArgument, "gamma must lie in (0, 1)");
  ModulusTable t;
  t.gamma = gamma;
  const double inv_e = std::exp(-1.0);
  for (double s : sigmas) {
    ModulusRow row;
    row.sigma = s;
    row.middle = s * std::log(1.0 / s);
    row.right = std::pow(s, gamma) / ((1.0 - gamma) * std::numbers::e);
    const bool in_range = s > 0.0 && s <= inv_e * (1.0 + 1e-15);
    row.left_ok = in_range && s <= row.middle * (1.0 + rel_slack);
    row.right_ok = in_range && row.middle <= row.right * (1.0 + rel_slack);
    t.rows.push_back(row);
  }
  return t;
}

/// count points, geometric, in (lo, hi] with hi included.
inline std::vector<double> log_grid(double lo, double hi, int count) {
  if (!(lo > 0.0 && hi > lo) || count < 1) throw Error(Errc::InvalidArgument, "bad log grid");
  std::vector<double> out;
  const double a = std::log(lo), b = std::log(hi);
  for (int k = 1; k <= count; ++k) out.push_back(k == count ? hi : std::exp(a + (b - a) * k / count));
  return out;
}

// ---------------------------------------------------------------------------
// Stability under vanishing resistance

struct StabilityRow {
  double scale = 0.0;
  double distance = 0.0;
  bool converged = false;
};

struct StabilityReport {
  std::vector<StabilityRow> rows;
  double fitted_order = std::numeric_limits<double>::quiet_NaN();  ///< d ln(distance) / d ln(scale)
};

/// For each scale s solves the coupled system with lambda -> s lambda and
/// measures theta_s against the harmonic extension of its values on `box`.
inline StabilityReport stability_regression(const CoefficientSpec& spec,
                                            std::span<const double> scales, const NodeBox& box,
                                            const coupled::FixedPointOptions& opt = {}) {
  StabilityReport rep;
  std::vector<double> x, y;
  for (double s : scales) {
    if (!(s >= 0.0)) throw Error(Errc::InvalidArgument, "lambda scales must be non-negative");
    CoefficientSpec scaled = spec;
    scaled.lambda = spec.lambda.scale_output(s);
    scaled.lambda_plus = spec.lambda_plus * s;
    const coupled::CoupledSolution sol = coupled::fixed_point(scaled, opt);
    const Approximation ap = approximation_experiment(sol.theta, box, opt.inner.poisson);
    rep.rows.push_back({s, ap.distance, sol.converged});
    if (s > 0.0 && ap.distance > 0.0) {
      x.push_back(std::log(s));
      y.push_back(std::log(ap.distance));
    }
  }
  if (x.size() >= 2) rep.fitted_order = least_squares(x, y).slope;
  return rep;
}

/// CSV "scale,distance".
inline std::string stability_csv(const StabilityReport& rep) {
  std::string out = "scale,distance\n";
  for (const auto& r : rep.rows) out += fmt::format("{},{}\n", io::num(r.scale), io::num(r.distance));
  return out;
}

struct PerturbationRow {
  double size = 0.0;      ///< sup |f_eta - f|
  double u_distance = 0.0;  ///< sup |u_eta - u|
};

struct PerturbationTrend {
  std::vector<PerturbationRow> rows;
  bool monotone = false;  ///< distances shrink along with the perturbation
};

/// Adds eta * bump(x) to f for each eta (largest first) and tracks how far the
/// coupled potential moves. bump = 16 x(1-x) y(1-y) on the unit square, scaled
/// to the grid.
inline PerturbationTrend source_perturbation_trend(const CoefficientSpec& spec,
                                                   std::span<const double> etas,
                                                   const coupled::FixedPointOptions& opt = {}) {
  const Grid2D& g = spec.f.grid();
  const coupled::CoupledSolution base = coupled::fixed_point(spec, opt);
  const ScalarField bump = ScalarField::from_function(g, [&](double x, double y) {
    const double s = (x - g.origin().x) / g.extent(), t = (y - g.origin().y) / g.extent();
    return 16.0 * s * (1.0 - s) * t * (1.0 - t);
  });
  std::vector<double> sorted(etas.begin(), etas.end());
  std::sort(sorted.begin(), sorted.end(), [](double a, double b) { return std::abs(a) > std::abs(b); });
  PerturbationTrend out;
  for (double eta : sorted) {
    CoefficientSpec s = spec;
    s.f = combine(1.0, spec.f, eta, bump);
    s.C_f = spec.C_f + std::abs(eta);
    const coupled::CoupledSolution sol = coupled::fixed_point(s, opt);
    out.rows.push_back({max_abs_diff(s.f, spec.f), max_abs_diff(sol.u, base.u)});
  }
  out.monotone = true;
  for (std::size_t k = 1; k < out.rows.size(); ++k) {
    if (!(out.rows[k].u_distance < out.rows[k - 1].u_distance)) out.monotone = false;
  }
  return out;
}

}  // namespace thermistor::regularity
