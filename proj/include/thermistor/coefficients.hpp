#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <fmt/format.h>

#include "thermistor/error.hpp"
#include "thermistor/field_ops.hpp"
#include "thermistor/grid.hpp"

namespace thermistor {

struct ConstantLaw {
  double value = 0.0;
  friend bool operator==(const ConstantLaw&, const ConstantLaw&) = default;
};

/// t -> clamp(s0 + s1 t, lo, hi)
struct AffineClampedLaw {
  double s0 = 0.0;
  double s1 = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  friend bool operator==(const AffineClampedLaw&, const AffineClampedLaw&) = default;
};

/// Piecewise linear through (t[k], v[k]); constant beyond the end points.
struct TabulatedLaw {
  std::vector<double> t;
  std::vector<double> v;
  friend bool operator==(const TabulatedLaw&, const TabulatedLaw&) = default;
};

/// A real function of one variable from a closed family, optionally rescaled as
/// t -> out_scale * base(in_scale * t).
class ScalarLaw {
 public:
  using Base = std::variant<ConstantLaw, AffineClampedLaw, TabulatedLaw>;

  ScalarLaw() : base_(ConstantLaw{}) {}

  static ScalarLaw constant(double c) { return ScalarLaw(ConstantLaw{c}); }

  static ScalarLaw affine_clamped(double s0, double s1, double lo, double hi) {
    if (!(lo <= hi)) throw Error(Errc::InvalidArgument, "affine law needs lo <= hi");
    return ScalarLaw(AffineClampedLaw{s0, s1, lo, hi});
  }

  static ScalarLaw tabulated(std::vector<double> t, std::vector<double> v) {
    if (t.size() < 2 || t.size() != v.size()) {
      throw Error(Errc::InvalidArgument, "tabulated law needs at least two (t, v) pairs");
    }
    for (std::size_t k = 1; k < t.size(); ++k) {
      if (!(t[k] > t[k - 1])) throw Error(Errc::InvalidArgument, "table abscissae must increase");
    }
    return ScalarLaw(TabulatedLaw{std::move(t), std::move(v)});
  }

  double operator()(double t) const { return out_scale_ * eval_base(in_scale_ * t); }

  /// t -> law(k t)
  ScalarLaw compose_input(double k) const {
    ScalarLaw out = *this;
    out.in_scale_ *= k;
    return out;
  }

  /// t -> s law(t)
  ScalarLaw scale_output(double s) const {
    ScalarLaw out = *this;
    out.out_scale_ *= s;
    return out;
  }

  /// Exact supremum of |law| over the real line.
  double sup_abs() const {
    const double base_sup = std::visit(
        [](const auto& law) -> double {
          using T = std::decay_t<decltype(law)>;
          if constexpr (std::is_same_v<T, ConstantLaw>) {
            return std::abs(law.value);
          } else if constexpr (std::is_same_v<T, AffineClampedLaw>) {
            if (law.s1 == 0.0) return std::abs(std::clamp(law.s0, law.lo, law.hi));
            return std::max(std::abs(law.lo), std::abs(law.hi));
          } else {
            double m = 0.0;
            for (double v : law.v) m = std::max(m, std::abs(v));
            return m;
          }
        },
        base_);
    return std::abs(out_scale_) * base_sup;
  }

  /// Exact Lipschitz constant.
  double lipschitz() const {
    const double base_lip = std::visit(
        [](const auto& law) -> double {
          using T = std::decay_t<decltype(law)>;
          if constexpr (std::is_same_v<T, ConstantLaw>) {
            return 0.0;
          } else if constexpr (std::is_same_v<T, AffineClampedLaw>) {
            return law.lo < law.hi ? std::abs(law.s1) : 0.0;
          } else {
            double m = 0.0;
            for (std::size_t k = 1; k < law.t.size(); ++k) {
              m = std::max(m, std::abs((law.v[k] - law.v[k - 1]) / (law.t[k] - law.t[k - 1])));
            }
            return m;
          }
        },
        base_);
    return std::abs(out_scale_ * in_scale_) * base_lip;
  }

  /// Kink locations in the law's own variable.
  std::vector<double> breakpoints() const {
    std::vector<double> raw = std::visit(
        [](const auto& law) -> std::vector<double> {
          using T = std::decay_t<decltype(law)>;
          if constexpr (std::is_same_v<T, ConstantLaw>) {
            return {};
          } else if constexpr (std::is_same_v<T, AffineClampedLaw>) {
            if (law.s1 == 0.0) return {};
            return {(law.lo - law.s0) / law.s1, (law.hi - law.s0) / law.s1};
          } else {
            return law.t;
          }
        },
        base_);
    if (in_scale_ == 0.0) return {};
    for (double& t : raw) t /= in_scale_;
    std::sort(raw.begin(), raw.end());
    return raw;
  }

  const Base& base() const { return base_; }
  double in_scale() const { return in_scale_; }
  double out_scale() const { return out_scale_; }

  std::string describe() const {
    std::string body = std::visit(
        [](const auto& law) -> std::string {
          using T = std::decay_t<decltype(law)>;
          if constexpr (std::is_same_v<T, ConstantLaw>) {
            return fmt::format("constant({})", law.value);
          } else if constexpr (std::is_same_v<T, AffineClampedLaw>) {
            return fmt::format("clamp({} + {} t, {}, {})", law.s0, law.s1, law.lo, law.hi);
          } else {
            return fmt::format("table({} points)", law.t.size());
          }
        },
        base_);
    if (in_scale_ != 1.0 || out_scale_ != 1.0) {
      body = fmt::format("{} * [{}](t * {})", out_scale_, body, in_scale_);
    }
    return body;
  }

  friend bool operator==(const ScalarLaw&, const ScalarLaw&) = default;

 private:
  explicit ScalarLaw(Base b) : base_(std::move(b)) {}

  double eval_base(double t) const {
    return std::visit(
        [t](const auto& law) -> double {
          using T = std::decay_t<decltype(law)>;
          if constexpr (std::is_same_v<T, ConstantLaw>) {
            return law.value;
          } else if constexpr (std::is_same_v<T, AffineClampedLaw>) {
            return std::clamp(law.s0 + law.s1 * t, law.lo, law.hi);
          } else {
            if (t <= law.t.front()) return law.v.front();
            if (t >= law.t.back()) return law.v.back();
            const auto it = std::upper_bound(law.t.begin(), law.t.end(), t);
            const std::size_t k = static_cast<std::size_t>(it - law.t.begin());
            const double w = (t - law.t[k - 1]) / (law.t[k] - law.t[k - 1]);
            return (1.0 - w) * law.v[k - 1] + w * law.v[k];
          }
        },
        base_);
  }

  Base base_;
  double in_scale_ = 1.0;
  double out_scale_ = 1.0;
};

/// Exponent law sigma, resistance law lambda, source f and their declared bounds.
struct CoefficientSpec {
  ScalarLaw sigma;
  double sigma_minus = 0.0;
  double C_sigma = 0.0;
  ScalarLaw lambda;
  double lambda_plus = 0.0;
  ScalarField f;
  double C_f = 0.0;
  double p_max = 10.0;  ///< ceiling applied to sigma(theta) on the grid
};

struct AssumptionCheck {
  std::string id;
  std::string title;
  bool passed = false;
  std::string detail;
  std::optional<double> probe;  ///< violating argument (or node value) when failing
};

struct ValidationReport {
  int dimension = 2;
  std::vector<AssumptionCheck> checks;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
  }
  const AssumptionCheck& find(const std::string& id) const {
    for (const auto& c : checks) {
      if (c.id == id) return c;
    }
    throw Error(Errc::InvalidArgument, "no assumption check " + id);
  }
};

struct ProbeOptions {
  double range = 10.0;
  int count = 4001;
  int random_count = 0;     ///< extra uniform draws over the probe range
  std::uint64_t seed = 0;
};

/// Probe abscissae: a uniform grid over [-R, R] merged with the law kinks and
/// their immediate neighbours.
inline std::vector<double> probe_set(const ScalarLaw& law, const ProbeOptions& opt) {
  std::vector<double> bps = law.breakpoints();
  double reach = opt.range;
  for (double b : bps) reach = std::max(reach, 1.5 * std::abs(b));
  std::vector<double> t;
  const int count = std::max(opt.count, 3);
  for (int k = 0; k < count; ++k) t.push_back(-reach + 2.0 * reach * k / (count - 1));
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> draw(-reach, reach);
  for (int k = 0; k < opt.random_count; ++k) t.push_back(draw(rng));
  for (double b : bps) {
    const double d = 1e-6 * std::max(1.0, std::abs(b));
    t.insert(t.end(), {b - d, b, b + d});
  }
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  return t;
}

/// Classifies every assumption on the data as pass or fail.
inline ValidationReport validate_assumptions(const CoefficientSpec& spec, int d,
                                             const ProbeOptions& opt = {}) {
  if (d < 2) throw Error(Errc::InvalidArgument, "dimension must be at least 2");
  ValidationReport rep{d, {}};
  const double threshold = 2.0 * d / (d + 2.0);

  {
    AssumptionCheck c{"sigma_lower_bound", "uniform lower bound on sigma", true, "", std::nullopt};
    if (!(spec.sigma_minus > threshold)) {
      c.passed = false;
      c.detail = fmt::format("sigma_minus = {} does not exceed 2d/(d+2) = {}", spec.sigma_minus,
                             threshold);
    } else {
      for (double t : probe_set(spec.sigma, opt)) {
        if (spec.sigma(t) < spec.sigma_minus) {
          c.passed = false;
          c.probe = t;
          c.detail = fmt::format("sigma({}) = {} < sigma_minus = {}", t, spec.sigma(t),
                                 spec.sigma_minus);
          break;
        }
      }
      if (c.passed) {
        c.detail = fmt::format("2d/(d+2) = {} < sigma_minus = {} <= sigma on probes", threshold,
                               spec.sigma_minus);
      }
    }
    rep.checks.push_back(std::move(c));
  }

  {
    AssumptionCheck c{"sigma_lipschitz", "Lipschitz bound on sigma", true, "", std::nullopt};
    const std::vector<double> t = probe_set(spec.sigma, opt);
    double worst = 0.0;
    for (std::size_t k = 1; k < t.size(); ++k) {
      const double ratio = std::abs(spec.sigma(t[k]) - spec.sigma(t[k - 1])) / (t[k] - t[k - 1]);
      if (ratio > worst) {
        worst = ratio;
        if (ratio > spec.C_sigma * (1.0 + 1e-9)) {
          c.passed = false;
          c.probe = t[k - 1];
        }
      }
    }
    c.detail = fmt::format("sampled Lipschitz ratio {} vs C_sigma = {}", worst, spec.C_sigma);
    rep.checks.push_back(std::move(c));
  }

  {
    AssumptionCheck c{"lambda_bound", "uniform bound on lambda", true, "", std::nullopt};
    double worst = 0.0;
    for (double t : probe_set(spec.lambda, opt)) {
      const double v = std::abs(spec.lambda(t));
      if (v > worst) {
        worst = v;
        if (v > spec.lambda_plus) {
          c.passed = false;
          c.probe = t;
        }
      }
    }
    c.detail = fmt::format("sup |lambda| on probes {} vs lambda_plus = {}", worst, spec.lambda_plus);
    rep.checks.push_back(std::move(c));
  }

  {
    AssumptionCheck c{"source_bound", "bounded source", true, "", std::nullopt};
    const double fs = sup_norm(spec.f);
    c.passed = fs <= spec.C_f;
    if (!c.passed) c.probe = fs;
    c.detail = fmt::format("sup |f| = {} vs C_f = {}", fs, spec.C_f);
    rep.checks.push_back(std::move(c));
  }
  return rep;
}

struct ScalingTransform {
  double K = 1.0;
  double delta = 1.0;
};

struct ScaledSystem {
  CoefficientSpec spec;
  ScalingTransform transform;
};

/// Change of variables theta_K = theta / K with sigma_K(t) = sigma(K t) and
/// lambda_K(t) = lambda(K t) / K, choosing K = max(1, sup|lambda| / delta).
inline ScaledSystem scale_system(const CoefficientSpec& spec, double delta) {
  if (!(delta > 0.0)) throw Error(Errc::InvalidArgument, "delta must be positive");
  const double lam = spec.lambda.sup_abs();
  if (lam <= delta) return {spec, {1.0, delta}};
  const double k = lam / delta;
  CoefficientSpec out = spec;
  out.sigma = spec.sigma.compose_input(k);
  out.C_sigma = spec.C_sigma * k;
  out.lambda = spec.lambda.compose_input(k).scale_output(1.0 / k);
  out.lambda_plus = spec.lambda_plus / k;
  return {std::move(out), {k, delta}};
}

}  // namespace thermistor
