#pragma once

#include <charconv>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "thermistor/coefficients.hpp"
#include "thermistor/error.hpp"
#include "thermistor/field_io.hpp"
#include "thermistor/grid.hpp"
#include "thermistor/px_laplace.hpp"

namespace thermistor::runner {

/// Parse or validation failure tied to a config key and source line
/// (line 0 when the key has no position, e.g. a missing section).
class ConfigError : public Error {
 public:
  ConfigError(std::string field, int line, const std::string& what)
      : Error(Errc::ConfigError, fmt::format("line {}: {}: {}", line, field, what)),
        field_(std::move(field)),
        line_(line) {}

  const std::string& field() const noexcept { return field_; }
  int line() const noexcept { return line_; }

 private:
  std::string field_;
  int line_;
};

struct LawConfig {
  std::string family = "constant";  ///< constant | affine_clamped | tabulated
  double value = 0.0;               ///< constant
  double s0 = 0.0, s1 = 0.0, lo = 0.0, hi = 0.0;  ///< affine_clamped
  std::vector<double> t, v;                       ///< tabulated
  bool operator==(const LawConfig&) const = default;
};

struct GridConfig {
  int nx = 65;
  double extent = 1.0;
  bool operator==(const GridConfig&) const = default;
};

struct CoefficientConfig {
  LawConfig sigma{"affine_clamped", 0.0, 2.0, 1.0, 1.5, 4.0, {}, {}};
  double sigma_minus = 0.0;  ///< required
  double C_sigma = 1.0;
  LawConfig lambda{"constant", 0.1, 0.0, 0.0, 0.0, 0.0, {}, {}};
  double lambda_plus = 0.1;
  std::string f = "constant";  ///< constant | sines | radial | quadratic
  double f_value = 1.0;
  double f_power = 2.0;  ///< radial exponent
  double C_f = 1.0;
  double p_max = 10.0;
  bool operator==(const CoefficientConfig&) const = default;
};

struct SolverConfig {
  double px_tol = 1e-8;
  int px_max_iters = 500;
  double cg_tol = 1e-10;
  std::vector<double> schedule{1e-2, 1e-4, 1e-6, 1e-8};
  double poisson_tol = 1e-12;
  double omega = 1.0;
  double outer_tol = 1e-8;
  int max_outer = 50;
  bool operator==(const SolverConfig&) const = default;
};

struct RegularityConfig {
  std::string field = "solution";  ///< solution | quadratic | loglip
  double rho = 0.5;
  int n_max = 5;
  Point center{0.5, 0.5};
  std::vector<double> radii{0.25, 0.2, 0.16, 0.125, 0.1, 0.08, 0.0625};
  double delta = 0.05;
  double trace_tol = 10.0;  ///< factor in the trace tolerance
  int samples = 2000;
  double alpha = 0.5;
  std::vector<double> lambda_scales{1.0, 0.5, 0.25, 0.125};
  double stability_radius = 0.25;
  bool operator==(const RegularityConfig&) const = default;
};

struct SweepConfig {
  std::string axis = "lambdaScale";  ///< lambdaPlus | lambdaScale | gridSize | rho
  std::vector<double> values{1.0, 0.5, 0.25, 0.125};
  bool operator==(const SweepConfig&) const = default;
};

struct OutputConfig {
  std::string directory = "out";
  bool raw = true;  ///< also write .f64 dumps with JSON sidecars
  bool operator==(const OutputConfig&) const = default;
};

struct RunConfig {
  std::uint64_t seed = 20240611;
  int workers = 1;
  bool operator==(const RunConfig&) const = default;
};

struct ExperimentConfig {
  GridConfig grid;
  CoefficientConfig coefficients;
  SolverConfig solver;
  RegularityConfig regularity;
  SweepConfig sweep;
  OutputConfig output;
  RunConfig run;
  bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

struct Entry {
  std::string value;
  int line = 0;
};

struct Section {
  int line = 0;
  std::map<std::string, Entry> keys;
};

using Document = std::map<std::string, Section>;

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline Document tokenize(const std::string& text) {
  Document doc;
  std::istringstream is(text);
  std::string raw;
  std::string current;
  int line = 0;
  while (std::getline(is, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError("section", line, "unterminated section header");
      current = trim(s.substr(1, s.size() - 2));
      if (current.empty()) throw ConfigError("section", line, "empty section name");
      if (doc.count(current)) throw ConfigError(current, line, "duplicate section");
      doc[current].line = line;
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("syntax", line, "expected key = value");
    const std::string key = trim(s.substr(0, eq));
    if (key.empty()) throw ConfigError("syntax", line, "empty key");
    if (current.empty()) throw ConfigError(key, line, "key outside any section");
    auto& sec = doc[current];
    if (sec.keys.count(key)) throw ConfigError(current + "." + key, line, "duplicate key");
    sec.keys[key] = {trim(s.substr(eq + 1)), line};
  }
  return doc;
}

/// Typed access to one section; remembers which keys were consumed.
class Reader {
 public:
  Reader(const Document& doc, std::string name, int eof_line)
      : name_(std::move(name)), eof_line_(eof_line) {
    if (auto it = doc.find(name_); it != doc.end()) sec_ = &it->second;
  }

  bool has(const std::string& key) const { return sec_ && sec_->keys.count(key); }

  int line_of(const std::string& key) const {
    if (has(key)) return sec_->keys.at(key).line;
    return sec_ ? sec_->line : eof_line_;
  }

  std::string field(const std::string& key) const { return name_ + "." + key; }

  const Entry* find(const std::string& key) {
    if (!has(key)) return nullptr;
    used_.insert(key);
    return &sec_->keys.at(key);
  }

  void require(const std::string& key) const {
    if (!has(key)) {
      throw ConfigError(field(key), line_of(key),
                        sec_ ? fmt::format("required field missing from section [{}]", name_)
                             : fmt::format("required field missing (no [{}] section)", name_));
    }
  }

  void get(const std::string& key, double& out) {
    if (const Entry* e = find(key)) out = to_double(key, e->value, e->line);
  }

  void get(const std::string& key, int& out) {
    if (const Entry* e = find(key)) out = to_int<int>(key, e->value, e->line);
  }

  void get(const std::string& key, std::uint64_t& out) {
    if (const Entry* e = find(key)) out = to_int<std::uint64_t>(key, e->value, e->line);
  }

  void get(const std::string& key, bool& out) {
    if (const Entry* e = find(key)) {
      if (e->value == "true") out = true;
      else if (e->value == "false") out = false;
      else throw ConfigError(field(key), e->line, "expected true or false");
    }
  }

  void get(const std::string& key, std::string& out) {
    if (const Entry* e = find(key)) out = e->value;
  }

  void get(const std::string& key, std::vector<double>& out) {
    if (const Entry* e = find(key)) {
      out.clear();
      std::string item;
      std::istringstream is(e->value);
      while (std::getline(is, item, ',')) {
        const std::string t = trim(item);
        if (t.empty()) continue;
        out.push_back(to_double(key, t, e->line));
      }
    }
  }

  void get(const std::string& key, Point& out) {
    std::vector<double> v;
    const int line = line_of(key);
    if (!has(key)) return;
    get(key, v);
    if (v.size() != 2) throw ConfigError(field(key), line, "expected two comma-separated numbers");
    out = {v[0], v[1]};
  }

  void choice(const std::string& key, std::string& out, std::initializer_list<std::string_view> allowed) {
    get(key, out);
    for (auto a : allowed) {
      if (out == a) return;
    }
    throw ConfigError(field(key), line_of(key), fmt::format("'{}' is not one of {}", out,
                                                            fmt::join(allowed, ", ")));
  }

  void reject_unknown() const {
    if (!sec_) return;
    for (const auto& [k, e] : sec_->keys) {
      if (!used_.count(k)) throw ConfigError(field(k), e.line, "unknown key");
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError(field(key), line_of(key), what);
  }

 private:
  double to_double(const std::string& key, const std::string& s, int line) const {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) {
      throw ConfigError(field(key), line, fmt::format("'{}' is not a finite number", s));
    }
    return v;
  }

  template <class T>
  T to_int(const std::string& key, const std::string& s, int line) const {
    T v{};
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
      throw ConfigError(field(key), line, fmt::format("'{}' is not an integer", s));
    }
    return v;
  }

  const Section* sec_ = nullptr;
  std::string name_;
  int eof_line_;
  std::set<std::string> used_;
};

inline void read_law(Reader& r, const std::string& prefix, LawConfig& law) {
  r.choice(prefix + "_family", law.family, {"constant", "affine_clamped", "tabulated"});
  if (law.family == "constant") {
    r.get(prefix + "_value", law.value);
  } else if (law.family == "affine_clamped") {
    r.get(prefix + "_s0", law.s0);
    r.get(prefix + "_s1", law.s1);
    r.get(prefix + "_lo", law.lo);
    r.get(prefix + "_hi", law.hi);
    if (!(law.lo <= law.hi)) r.fail(prefix + "_hi", "clamp interval needs lo <= hi");
  } else {
    r.require(prefix + "_t");
    r.require(prefix + "_v");
    r.get(prefix + "_t", law.t);
    r.get(prefix + "_v", law.v);
    if (law.t.size() < 2 || law.t.size() != law.v.size()) {
      r.fail(prefix + "_v", "table needs matching lists of at least two entries");
    }
    for (std::size_t k = 1; k < law.t.size(); ++k) {
      if (!(law.t[k] > law.t[k - 1])) r.fail(prefix + "_t", "abscissae must increase");
    }
  }
}

inline std::string list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) out += (k ? ", " : "") + io::num(v[k]);
  return out;
}

inline void echo_law(std::string& out, const std::string& prefix, const LawConfig& law) {
  out += fmt::format("{}_family = {}\n", prefix, law.family);
  if (law.family == "constant") {
    out += fmt::format("{}_value = {}\n", prefix, io::num(law.value));
  } else if (law.family == "affine_clamped") {
    out += fmt::format("{0}_s0 = {1}\n{0}_s1 = {2}\n{0}_lo = {3}\n{0}_hi = {4}\n", prefix,
                       io::num(law.s0), io::num(law.s1), io::num(law.lo), io::num(law.hi));
  } else {
    out += fmt::format("{0}_t = {1}\n{0}_v = {2}\n", prefix, list(law.t), list(law.v));
  }
}

}  // namespace detail

/// Parses the line-oriented config text. Every field except
/// coefficients.sigma_minus has a default.
inline ExperimentConfig parse_config(const std::string& text) {
  const detail::Document doc = detail::tokenize(text);
  const int eof_line = static_cast<int>(std::count(text.begin(), text.end(), '\n')) + 1;
  static const std::set<std::string> known{"grid",  "coefficients", "solver", "regularity",
                                           "sweep", "output",       "run"};
  for (const auto& [name, sec] : doc) {
    if (!known.count(name)) throw ConfigError(name, sec.line, "unknown section");
  }
  ExperimentConfig c;

  detail::Reader g(doc, "grid", eof_line);
  g.get("nx", c.grid.nx);
  g.get("extent", c.grid.extent);
  if (c.grid.nx < Grid2D::kMinNodes) g.fail("nx", fmt::format("needs at least {} nodes", Grid2D::kMinNodes));
  if (!(c.grid.extent > 0.0)) g.fail("extent", "must be positive");
  g.reject_unknown();

  detail::Reader k(doc, "coefficients", eof_line);
  detail::read_law(k, "sigma", c.coefficients.sigma);
  k.require("sigma_minus");
  k.get("sigma_minus", c.coefficients.sigma_minus);
  k.get("C_sigma", c.coefficients.C_sigma);
  detail::read_law(k, "lambda", c.coefficients.lambda);
  k.get("lambda_plus", c.coefficients.lambda_plus);
  k.choice("f", c.coefficients.f, {"constant", "sines", "radial", "quadratic"});
  k.get("f_value", c.coefficients.f_value);
  if (c.coefficients.f == "radial") {
    k.get("f_power", c.coefficients.f_power);
    if (!(c.coefficients.f_power >= 0.0)) k.fail("f_power", "must be non-negative");
  }
  k.get("C_f", c.coefficients.C_f);
  k.get("p_max", c.coefficients.p_max);
  if (!(c.coefficients.p_max > 1.0)) k.fail("p_max", "must exceed 1");
  k.reject_unknown();

  detail::Reader s(doc, "solver", eof_line);
  s.get("px_tol", c.solver.px_tol);
  s.get("px_max_iters", c.solver.px_max_iters);
  s.get("cg_tol", c.solver.cg_tol);
  s.get("schedule", c.solver.schedule);
  s.get("poisson_tol", c.solver.poisson_tol);
  s.get("omega", c.solver.omega);
  s.get("outer_tol", c.solver.outer_tol);
  s.get("max_outer", c.solver.max_outer);
  if (!(c.solver.px_tol > 0.0)) s.fail("px_tol", "must be positive");
  if (c.solver.px_max_iters < 1) s.fail("px_max_iters", "must be positive");
  if (!(c.solver.cg_tol > 0.0 && c.solver.cg_tol < 1.0)) s.fail("cg_tol", "must lie in (0, 1)");
  try {
    px::RegularizationSchedule check(c.solver.schedule);
    (void)check;
  } catch (const Error& e) {
    s.fail("schedule", e.what());
  }
  if (!(c.solver.poisson_tol > 0.0 && c.solver.poisson_tol < 1.0)) s.fail("poisson_tol", "must lie in (0, 1)");
  if (!(c.solver.omega > 0.0 && c.solver.omega <= 1.0)) s.fail("omega", "must lie in (0, 1]");
  if (!(c.solver.outer_tol > 0.0)) s.fail("outer_tol", "must be positive");
  if (c.solver.max_outer < 1) s.fail("max_outer", "must be positive");
  s.reject_unknown();

  detail::Reader r(doc, "regularity", eof_line);
  r.choice("field", c.regularity.field, {"solution", "quadratic", "loglip"});
  r.get("rho", c.regularity.rho);
  r.get("n_max", c.regularity.n_max);
  r.get("center", c.regularity.center);
  r.get("radii", c.regularity.radii);
  r.get("delta", c.regularity.delta);
  r.get("trace_tol", c.regularity.trace_tol);
  r.get("samples", c.regularity.samples);
  r.get("alpha", c.regularity.alpha);
  r.get("lambda_scales", c.regularity.lambda_scales);
  r.get("stability_radius", c.regularity.stability_radius);
  if (!(c.regularity.rho > 0.0 && c.regularity.rho < 1.0)) r.fail("rho", "must lie in (0, 1)");
  if (c.regularity.n_max < 1) r.fail("n_max", "must be positive");
  if (!(c.regularity.delta > 0.0)) r.fail("delta", "must be positive");
  if (!(c.regularity.trace_tol > 0.0)) r.fail("trace_tol", "must be positive");
  if (c.regularity.samples < 1) r.fail("samples", "must be positive");
  if (!(c.regularity.alpha > 0.0 && c.regularity.alpha <= 1.0)) r.fail("alpha", "must lie in (0, 1]");
  for (double v : c.regularity.radii) {
    if (!(v > 0.0 && v < 1.0)) r.fail("radii", "radii must lie in (0, 1)");
  }
  for (double v : c.regularity.lambda_scales) {
    if (!(v >= 0.0)) r.fail("lambda_scales", "scales must be non-negative");
  }
  if (!(c.regularity.stability_radius > 0.0)) r.fail("stability_radius", "must be positive");
  r.reject_unknown();

  detail::Reader w(doc, "sweep", eof_line);
  w.choice("axis", c.sweep.axis, {"lambdaPlus", "lambdaScale", "gridSize", "rho"});
  w.get("values", c.sweep.values);
  if (c.sweep.axis == "gridSize") {
    for (double v : c.sweep.values) {
      if (v != std::floor(v) || v < Grid2D::kMinNodes) {
        w.fail("values", fmt::format("grid sizes must be integers >= {}", Grid2D::kMinNodes));
      }
    }
  }
  w.reject_unknown();

  detail::Reader o(doc, "output", eof_line);
  o.get("directory", c.output.directory);
  o.get("raw", c.output.raw);
  if (c.output.directory.empty()) o.fail("directory", "must not be empty");
  o.reject_unknown();

  detail::Reader n(doc, "run", eof_line);
  n.get("seed", c.run.seed);
  n.get("workers", c.run.workers);
  if (c.run.workers < 1) n.fail("workers", "must be positive");
  n.reject_unknown();
  return c;
}

/// Canonical text with every field spelled out; parse_config(echo(c)) == c.
inline std::string echo_config(const ExperimentConfig& c) {
  using io::num;
  std::string out;
  out += fmt::format("[grid]\nnx = {}\nextent = {}\n\n", c.grid.nx, num(c.grid.extent));
  const auto& k = c.coefficients;
  out += "[coefficients]\n";
  detail::echo_law(out, "sigma", k.sigma);
  out += fmt::format("sigma_minus = {}\nC_sigma = {}\n", num(k.sigma_minus), num(k.C_sigma));
  detail::echo_law(out, "lambda", k.lambda);
  out += fmt::format("lambda_plus = {}\nf = {}\nf_value = {}\n", num(k.lambda_plus), k.f, num(k.f_value));
  if (k.f == "radial") out += fmt::format("f_power = {}\n", num(k.f_power));
  out += fmt::format("C_f = {}\np_max = {}\n\n", num(k.C_f), num(k.p_max));
  const auto& s = c.solver;
  out += fmt::format(
      "[solver]\npx_tol = {}\npx_max_iters = {}\ncg_tol = {}\nschedule = {}\npoisson_tol = {}\n"
      "omega = {}\nouter_tol = {}\nmax_outer = {}\n\n",
      num(s.px_tol), s.px_max_iters, num(s.cg_tol), detail::list(s.schedule), num(s.poisson_tol),
      num(s.omega), num(s.outer_tol), s.max_outer);
  const auto& r = c.regularity;
  out += fmt::format(
      "[regularity]\nfield = {}\nrho = {}\nn_max = {}\ncenter = {}, {}\nradii = {}\ndelta = {}\n"
      "trace_tol = {}\nsamples = {}\nalpha = {}\nlambda_scales = {}\nstability_radius = {}\n\n",
      r.field, num(r.rho), r.n_max, num(r.center.x), num(r.center.y), detail::list(r.radii),
      num(r.delta), num(r.trace_tol), r.samples, num(r.alpha), detail::list(r.lambda_scales),
      num(r.stability_radius));
  out += fmt::format("[sweep]\naxis = {}\nvalues = {}\n\n", c.sweep.axis, detail::list(c.sweep.values));
  out += fmt::format("[output]\ndirectory = {}\nraw = {}\n\n", c.output.directory,
                     c.output.raw ? "true" : "false");
  out += fmt::format("[run]\nseed = {}\nworkers = {}\n", c.run.seed, c.run.workers);
  return out;
}

inline ScalarLaw build_law(const LawConfig& law) {
  if (law.family == "constant") return ScalarLaw::constant(law.value);
  if (law.family == "affine_clamped") return ScalarLaw::affine_clamped(law.s0, law.s1, law.lo, law.hi);
  return ScalarLaw::tabulated(law.t, law.v);
}

/// Source field from the named whitelist, in coordinates normalized to the
/// unit square (s, t) = ((x, y) - origin) / extent:
///   constant   f_value
///   sines      f_value 2 pi^2 sin(pi s) sin(pi t)   (so -lap u = f for u = f_value sin sin)
///   radial     f_value |(s, t) - (1/2, 1/2)|^f_power
///   quadratic  f_value ((s - 1/2)^2 + (t - 1/2)^2)
inline ScalarField build_source(const CoefficientConfig& k, const Grid2D& g) {
  const Point o = g.origin();
  const double e = g.extent();
  return ScalarField::from_function(g, [&](double x, double y) {
    const double s = (x - o.x) / e, t = (y - o.y) / e;
    if (k.f == "sines") {
      return k.f_value * 2.0 * std::numbers::pi * std::numbers::pi * std::sin(std::numbers::pi * s) *
             std::sin(std::numbers::pi * t);
    }
    if (k.f == "radial") {
      const double r = std::hypot(s - 0.5, t - 0.5);
      return k.f_power == 0.0 ? k.f_value : k.f_value * std::pow(r, k.f_power);
    }
    if (k.f == "quadratic") return k.f_value * ((s - 0.5) * (s - 0.5) + (t - 0.5) * (t - 0.5));
    return k.f_value;
  });
}

inline Grid2D build_grid(const ExperimentConfig& c) { return Grid2D(c.grid.nx, c.grid.extent); }

inline CoefficientSpec build_spec(const ExperimentConfig& c, const Grid2D& g) {
  const auto& k = c.coefficients;
  return {build_law(k.sigma), k.sigma_minus, k.C_sigma, build_law(k.lambda), k.lambda_plus,
          build_source(k, g), k.C_f, k.p_max};
}

inline CoefficientSpec build_spec(const ExperimentConfig& c) { return build_spec(c, build_grid(c)); }

}  // namespace thermistor::runner
