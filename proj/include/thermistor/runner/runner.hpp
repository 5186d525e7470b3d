#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "thermistor/coefficients.hpp"
#include "thermistor/coupled.hpp"
#include "thermistor/error.hpp"
#include "thermistor/field_io.hpp"
#include "thermistor/regularity.hpp"
#include "thermistor/runner/config.hpp"

namespace thermistor::runner {

inline constexpr const char* kArtifactVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kConfigFailure = 2, kSolverFailure = 3, kNotConverged = 4 };

namespace fs = std::filesystem;
using nlohmann::json;

/// Single writer for one run directory; records every file it produces.
class OutputWriter {
 public:
  explicit OutputWriter(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw Error(Errc::IoError, "cannot create " + dir_.string() + ": " + ec.message());
  }

  const fs::path& dir() const { return dir_; }

  void text(const std::string& name, const std::string& content) {
    std::lock_guard lock(mu_);
    io::write_text(dir_ / name, content);
    files_.insert(name);
  }

  void json_file(const std::string& name, const json& j) { text(name, j.dump(2) + "\n"); }

  void field(const std::string& stem, const ScalarField& phi, bool raw) {
    text(stem + ".csv", io::field_csv(phi));
    if (raw) {
      std::lock_guard lock(mu_);
      io::write_field_raw(dir_ / (stem + ".f64"), dir_ / (stem + ".json"), phi);
      files_.insert(stem + ".f64");
      files_.insert(stem + ".json");
    }
  }

  std::set<std::string> written() const {
    std::lock_guard lock(mu_);
    return files_;
  }

 private:
  fs::path dir_;
  mutable std::mutex mu_;
  std::set<std::string> files_;
};

struct StageRecord {
  std::string name;
  std::string status;  ///< ok | failed | not_converged
  std::string detail;
};

struct RunContext {
  ExperimentConfig config;
  OutputWriter& out;
  int workers = 1;
  std::uint64_t seed = 0;
  std::vector<StageRecord> stages;
};

inline px::PxOptions px_options(const SolverConfig& s) {
  px::PxOptions o;
  o.schedule = px::RegularizationSchedule(s.schedule);
  o.tol = s.px_tol;
  o.max_iters = s.px_max_iters;
  o.cg_tol = s.cg_tol;
  return o;
}

inline coupled::FixedPointOptions fixed_point_options(const SolverConfig& s) {
  coupled::FixedPointOptions o;
  o.omega = s.omega;
  o.outer_tol = s.outer_tol;
  o.max_outer = s.max_outer;
  o.inner.px = px_options(s);
  o.inner.poisson.tol = s.poisson_tol;
  return o;
}

/// JSON number, or null for non-finite values.
inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// ---------------------------------------------------------------------------

inline json validation_json(const ValidationReport& rep) {
  json checks = json::array();
  for (const auto& c : rep.checks) {
    checks.push_back({{"id", c.id},
                      {"title", c.title},
                      {"passed", c.passed},
                      {"detail", c.detail},
                      {"probe", c.probe ? json(*c.probe) : json(nullptr)}});
  }
  return {{"dimension", rep.dimension}, {"passed", rep.passed()}, {"checks", checks}};
}

inline ValidationReport run_validate(RunContext& ctx) {
  const CoefficientSpec spec = build_spec(ctx.config);
  ProbeOptions probes;
  probes.random_count = 1000;
  probes.seed = ctx.seed;
  ValidationReport rep = validate_assumptions(spec, 2, probes);
  ctx.out.json_file("validation.json", validation_json(rep));
  for (const auto& c : rep.checks) {
    spdlog::info("{} {}: {}", c.id, c.passed ? "pass" : "FAIL", c.detail);
  }
  ctx.stages.push_back({"validate", rep.passed() ? "ok" : "failed",
                        rep.passed() ? "" : "assumption check failed"});
  return rep;
}

/// Throws ConfigError naming the first failing assumption.
inline void require_valid(const CoefficientSpec& spec, std::uint64_t seed) {
  ProbeOptions probes;
  probes.random_count = 1000;
  probes.seed = seed;
  const ValidationReport rep = validate_assumptions(spec, 2, probes);
  for (const auto& c : rep.checks) {
    if (!c.passed) throw ConfigError("coefficients", 0, c.id + " fails: " + c.detail);
  }
}

// ---------------------------------------------------------------------------

inline coupled::CoupledSolution run_solve(RunContext& ctx) {
  const CoefficientSpec spec = build_spec(ctx.config);
  require_valid(spec, ctx.seed);
  coupled::CoupledSolution sol = coupled::fixed_point(spec, fixed_point_options(ctx.config.solver));
  const bool raw = ctx.config.output.raw;
  ctx.out.field("u", sol.u, raw);
  ctx.out.field("theta", sol.theta, raw);
  ctx.out.text("history.csv", coupled::history_csv(sol));
  ctx.out.json_file("summary.json", {{"converged", sol.converged},
                                     {"outer_iterations", sol.outer_iterations},
                                     {"final_diff", sol.final_diff()},
                                     {"energy", sol.energy}});
  spdlog::info("solve: converged={} after {} outer iterations (final diff {:.3e})", sol.converged,
               sol.outer_iterations, sol.final_diff());
  ctx.stages.push_back({"solve", sol.converged ? "ok" : "not_converged",
                        fmt::format("outer_iterations={}", sol.outer_iterations)});
  return sol;
}

// ---------------------------------------------------------------------------

/// Built-in synthetic inputs for the regularity experiments.
inline ScalarField synthetic_field(const std::string& name, const Grid2D& g, Point c) {
  if (name == "quadratic") {
    return ScalarField::from_function(
        g, [&](double x, double y) { return (x - c.x) * (x - c.x) - (y - c.y) * (y - c.y); });
  }
  if (name == "loglip") {
    return ScalarField::from_function(g, [&](double x, double y) {
      const double r = std::hypot(x - c.x, y - c.y);
      return r > 0.0 ? r * r * std::log(1.0 / r) : 0.0;
    });
  }
  throw Error(Errc::InvalidArgument, "no synthetic field named " + name);
}

/// Previously written theta for the configured grid, if any.
inline std::optional<ScalarField> load_theta(const fs::path& dir, const Grid2D& g) {
  std::optional<ScalarField> theta;
  if (fs::exists(dir / "theta.f64") && fs::exists(dir / "theta.json")) {
    theta = io::read_field_raw(dir / "theta.f64", dir / "theta.json");
  } else if (fs::exists(dir / "theta.csv")) {
    theta = io::read_field_csv(dir / "theta.csv");
  }
  if (theta && !(theta->grid().nx() == g.nx() && std::abs(theta->grid().h() - g.h()) <= 1e-12 * g.h())) {
    spdlog::warn("ignoring stored theta: grid does not match the config");
    theta.reset();
  }
  return theta;
}

struct RegularityOutcome {
  json verdicts;
  bool passed = false;
};

inline json cascade_json(const regularity::CascadeReport& rep) {
  json j{{"rho", rep.rho},
         {"levels", rep.levels.size()},
         {"decay_exact", rep.decay_exact},
         {"fitted_decay_exponent",
          rep.decay_exact ? json("exact") : finite_or_null(rep.fitted_decay_exponent)},
         {"M_growth_slope", finite_or_null(rep.M_growth_slope)},
         {"M_growth_power", finite_or_null(rep.M_growth_power)},
         {"increment_C", finite_or_null(rep.increment_C)},
         {"increment_growth", finite_or_null(rep.increment_growth)},
         {"truncated_at", rep.truncated_at ? json(*rep.truncated_at) : json(nullptr)},
         {"notes", rep.notes},
         {"fit_levels", "n >= 2"}};
  double max_trace = 0.0;
  for (const auto& lv : rep.levels) max_trace = std::max(max_trace, std::abs(lv.trace_residual) / lv.trace_tol);
  j["max_trace_over_tol"] = max_trace;
  return j;
}

inline RegularityOutcome run_regularity(RunContext& ctx, std::optional<ScalarField> solved = std::nullopt) {
  const ExperimentConfig& cfg = ctx.config;
  const RegularityConfig& rc = cfg.regularity;
  const Grid2D g = build_grid(cfg);
  const CoefficientSpec spec = build_spec(cfg, g);
  require_valid(spec, ctx.seed);
  const coupled::FixedPointOptions fpo = fixed_point_options(cfg.solver);

  json v;
  v["field"] = rc.field;
  ScalarField theta(g);
  double K = 1.0;
  if (rc.field == "solution") {
    if (!solved) solved = load_theta(ctx.out.dir(), g);
    if (!solved) {
      spdlog::info("regularity: no stored solution, solving first");
      solved = run_solve(ctx).theta;
    }
    const ScaledSystem scaled = scale_system(spec, rc.delta);
    K = scaled.transform.K;
    theta = combine(1.0 / K, *solved, 0.0, *solved);
  } else {
    theta = synthetic_field(rc.field, g, rc.center);
  }
  v["scaling"] = {{"K", K}, {"delta", rc.delta}};
  bool passed = true;

  regularity::CascadeOptions co;
  co.samples = rc.samples;
  co.trace_factor = rc.trace_tol;
  co.poisson.tol = cfg.solver.poisson_tol;

  // First paraboloid and harmonic approximation at scale rho.
  {
    const auto box = box_around(g, rc.center, rc.rho);
    const auto ap = regularity::approximation_experiment(theta, box, co.poisson);
    const auto fp = regularity::first_paraboloid(theta, rc.center, rc.rho, co);
    v["first_paraboloid"] = {{"approximation_distance", ap.distance},
                             {"sup_error", fp.sup_error},
                             {"bound", rc.rho * rc.rho},
                             {"pass", fp.sup_error <= rc.rho * rc.rho}};
  }

  const auto cascade = regularity::dyadic_cascade(theta, rc.center, rc.rho, rc.n_max, co);
  ctx.out.text("cascade.csv", regularity::cascade_csv(cascade));
  {
    json j = cascade_json(cascade);
    const bool decay_pass = cascade.decay_exact || cascade.fitted_decay_exponent >= 1.9;
    const bool m_pass = std::isfinite(cascade.M_growth_slope) && cascade.M_growth_power <= 1.1;
    const bool increment_pass = std::isfinite(cascade.increment_C) && cascade.increment_growth <= 0.1;
    j["decay_threshold"] = 1.9;
    j["decay_pass"] = decay_pass;
    j["M_growth_pass"] = m_pass;
    j["increment_pass"] = increment_pass;
    passed = passed && decay_pass && m_pass && increment_pass;
    const auto lim = regularity::coefficient_limits(cascade, theta, rc.center);
    j["coefficient_limits"] = {{"a_slope", std::isfinite(lim.a_slope) ? json(lim.a_slope) : json("exact")},
                               {"b_slope", std::isfinite(lim.b_slope) ? json(lim.b_slope) : json("exact")},
                               {"a_constant", lim.a_constant},
                               {"b_constant", lim.b_constant},
                               {"a_pass", lim.a_ok},
                               {"b_pass", lim.b_ok}};
    v["cascade"] = j;
  }

  // Log-Lipschitz modulus; radii at or below 8h are skipped, not fatal.
  {
    std::vector<double> usable;
    json skipped = json::array();
    for (double r : rc.radii) {
      const bool inside = g.contains({rc.center.x - r, rc.center.y - r}) &&
                          g.contains({rc.center.x + r, rc.center.y + r});
      if (!(r > 8.0 * g.h())) {
        skipped.push_back({{"radius", r}, {"reason", errc_name(Errc::RadiusBelowResolution)}});
      } else if (!inside) {
        skipped.push_back({{"radius", r}, {"reason", errc_name(Errc::BallOutOfDomain)}});
      } else {
        usable.push_back(r);
      }
    }
    json j{{"skipped", skipped}, {"skipped_count", skipped.size()}};
    if (!usable.empty()) {
      const auto mod = regularity::loglip_modulus(theta, rc.center, usable, rc.samples);
      ctx.out.text("modulus.csv", regularity::modulus_csv(mod));
      const double growth = regularity::ratio_growth(mod);
      j["max_ratio"] = finite_or_null(mod.max_ratio);
      j["ratio_growth"] = growth;
      j["bounded"] = std::isfinite(mod.max_ratio) && growth <= 0.1;
    } else {
      ctx.out.text("modulus.csv", "r,oscillation,ratio\n");
      j["bounded"] = nullptr;
    }
    v["modulus"] = j;
  }

  {
    const std::vector<double> gammas{0.1, 0.25, 0.5, 0.75, 0.9};
    const auto sigmas = regularity::log_grid(1e-8, std::exp(-1.0), 1000);
    bool ok = true;
    for (double gm : gammas) ok = ok && regularity::modulus_inequalities(gm, sigmas).passed();
    v["modulus_inequalities"] = {{"gammas", gammas}, {"points", sigmas.size()}, {"pass", ok}};
    passed = passed && ok;
  }

  {
    const NodeBox box = box_around(g, rc.center, rc.stability_radius);
    const auto st = regularity::stability_regression(spec, rc.lambda_scales, box, fpo);
    ctx.out.text("stability.csv", regularity::stability_csv(st));
    const bool ok = std::isfinite(st.fitted_order) && st.fitted_order >= 0.9;
    v["stability"] = {{"fitted_order", finite_or_null(st.fitted_order)}, {"threshold", 0.9}, {"pass", ok}};
  }

  if (rc.field == "solution") {
    const auto bi = coupled::ball_invariance_check(*solved, rc.alpha);
    v["ball_invariance"] = {{"alpha", bi.alpha},
                            {"proxy_norm", bi.proxy_norm},
                            {"sup_theta", bi.sup_theta},
                            {"sup_grad", bi.sup_grad},
                            {"holder", bi.holder},
                            {"inside_unit_ball", bi.inside_unit_ball}};
  }
  v["passed"] = passed;
  ctx.out.json_file("regularity.json", v);
  ctx.stages.push_back({"regularity", passed ? "ok" : "failed", ""});
  return {v, passed};
}

// ---------------------------------------------------------------------------

struct SweepRow {
  double value = 0.0;
  std::string status = "ok";
  std::optional<bool> converged;
  std::optional<int> outer_iterations;
  std::optional<double> final_diff, theta_sup, distance, u_error, decay_exponent, proxy_norm;
};

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  const auto opt = [](const std::optional<double>& d) { return d ? io::num(*d) : std::string(); };
  std::string out =
      "value,status,converged,outer_iterations,final_diff,theta_sup,distance,u_error,decay_exponent,"
      "proxy_norm\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", io::num(r.value), r.status,
                       r.converged ? (*r.converged ? "true" : "false") : "",
                       r.outer_iterations ? std::to_string(*r.outer_iterations) : "",
                       opt(r.final_diff), opt(r.theta_sup), opt(r.distance), opt(r.u_error),
                       opt(r.decay_exponent), opt(r.proxy_norm));
  }
  return out;
}

inline SweepRow sweep_row(const ExperimentConfig& cfg, const std::string& axis, double value,
                          const std::optional<ScalarField>& base_theta) {
  SweepRow row;
  row.value = value;
  const RegularityConfig& rc = cfg.regularity;
  try {
    if (axis == "rho") {
      regularity::CascadeOptions co;
      co.samples = rc.samples;
      co.trace_factor = rc.trace_tol;
      const auto rep = regularity::dyadic_cascade(*base_theta, rc.center, value, rc.n_max, co);
      row.decay_exponent = rep.fitted_decay_exponent;
      return row;
    }
    ExperimentConfig c = cfg;
    if (axis == "gridSize") c.grid.nx = static_cast<int>(value);
    const Grid2D g = build_grid(c);
    CoefficientSpec spec = build_spec(c, g);
    if (axis == "lambdaPlus") {
      const double base = spec.lambda.sup_abs();
      spec.lambda = base > 0.0 ? spec.lambda.scale_output(value / base) : ScalarLaw::constant(value);
      spec.lambda_plus = value;
    } else if (axis == "lambdaScale") {
      spec.lambda = spec.lambda.scale_output(value);
      spec.lambda_plus *= value;
    }
    const auto sol = coupled::fixed_point(spec, fixed_point_options(c.solver));
    row.converged = sol.converged;
    row.outer_iterations = sol.outer_iterations;
    row.final_diff = sol.final_diff();
    row.theta_sup = sup_norm(sol.theta);
    if (!sol.converged) row.status = "not_converged";
    if (axis == "lambdaPlus") {
      row.proxy_norm = coupled::ball_invariance_check(sol.theta, rc.alpha).proxy_norm;
    } else if (axis == "lambdaScale") {
      const NodeBox box = box_around(g, rc.center, rc.stability_radius);
      row.distance = regularity::approximation_experiment(sol.theta, box).distance;
    } else if (axis == "gridSize" && c.coefficients.f == "sines") {
      const double a = c.coefficients.f_value;
      const Point o = g.origin();
      const double e = g.extent();
      const ScalarField exact = ScalarField::from_function(g, [&](double x, double y) {
        return a * std::sin(std::numbers::pi * (x - o.x) / e) * std::sin(std::numbers::pi * (y - o.y) / e);
      });
      row.u_error = max_abs_diff(sol.u, exact);
    }
  } catch (const Error& e) {
    row.status = std::string(errc_name(e.code()));
    spdlog::warn("sweep {} = {}: {}", axis, value, e.what());
  }
  return row;
}

/// One row per configured value, in configuration order; rows run on up to
/// `workers` threads.
inline std::vector<SweepRow> run_sweep(RunContext& ctx, std::optional<ScalarField> base_theta = std::nullopt) {
  const ExperimentConfig& cfg = ctx.config;
  const std::string& axis = cfg.sweep.axis;
  const std::vector<double>& values = cfg.sweep.values;
  if (axis == "rho" && !values.empty() && !base_theta) {
    base_theta = load_theta(ctx.out.dir(), build_grid(cfg));
    if (!base_theta) {
      require_valid(build_spec(cfg), ctx.seed);
      base_theta = coupled::fixed_point(build_spec(cfg), fixed_point_options(cfg.solver)).theta;
    }
  }
  std::vector<SweepRow> rows(values.size());
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t k = next++; k < values.size(); k = next++) {
      rows[k] = sweep_row(cfg, axis, values[k], base_theta);
    }
  };
  const int n = std::max(1, std::min<int>(ctx.workers, static_cast<int>(values.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  ctx.out.text("sweep_" + axis + ".csv", sweep_csv(rows));
  const auto failed = std::count_if(rows.begin(), rows.end(), [](const SweepRow& r) { return r.status != "ok"; });
  ctx.stages.push_back({"sweep", "ok", fmt::format("axis={} rows={} failed_rows={}", axis, rows.size(), failed)});
  return rows;
}

// ---------------------------------------------------------------------------

inline std::string utc_now() {
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(
                                                  std::chrono::system_clock::now())));
}

/// Writes manifest.json through a temporary file and a rename. The file index
/// covers every regular file in the run directory, the manifest included.
inline void write_manifest(RunContext& ctx, const std::string& command, const std::string& started) {
  const fs::path dir = ctx.out.dir();
  std::set<std::string> files = ctx.out.written();
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() != ".tmp") files.insert(e.path().filename().string());
  }
  files.insert("manifest.json");
  json stages = json::array();
  for (const auto& s : ctx.stages) stages.push_back({{"name", s.name}, {"status", s.status}, {"detail", s.detail}});
  const json m{{"artifact", "thermistor"},
               {"version", kArtifactVersion},
               {"command", command},
               {"config", echo_config(ctx.config)},
               {"seed", ctx.seed},
               {"workers", ctx.workers},
               {"started", started},
               {"finished", utc_now()},
               {"stages", stages},
               {"files", std::vector<std::string>(files.begin(), files.end())}};
  const fs::path tmp = dir / "manifest.json.tmp";
  io::write_text(tmp, m.dump(2) + "\n");
  fs::rename(tmp, dir / "manifest.json");
}

struct RunOptions {
  std::optional<fs::path> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
};

/// Runs one CLI subcommand and returns its exit status.
inline int run_command(const std::string& command, const ExperimentConfig& config, const RunOptions& opt) {
  static const std::set<std::string> commands{"validate", "solve", "regularity", "sweep", "all"};
  if (!commands.count(command)) throw Error(Errc::InvalidArgument, "unknown command " + command);
  ExperimentConfig cfg = config;
  if (opt.out_dir) cfg.output.directory = opt.out_dir->string();
  if (opt.seed) cfg.run.seed = *opt.seed;
  if (opt.workers) cfg.run.workers = *opt.workers;
  if (cfg.run.workers < 1) throw ConfigError("run.workers", 0, "must be positive");

  OutputWriter out{fs::path(cfg.output.directory)};
  RunContext ctx{cfg, out, cfg.run.workers, cfg.run.seed, {}};
  const std::string started = utc_now();
  int status = kOk;
  const auto worsen = [&](int s) { status = std::max(status, s); };
  try {
    if (command == "validate") {
      if (!run_validate(ctx).passed()) worsen(kConfigFailure);
    } else if (command == "solve") {
      if (!run_solve(ctx).converged) worsen(kNotConverged);
    } else if (command == "regularity") {
      run_regularity(ctx);
    } else if (command == "sweep") {
      run_sweep(ctx);
    } else {
      if (!run_validate(ctx).passed()) {
        worsen(kConfigFailure);
      } else {
        const auto sol = run_solve(ctx);
        if (!sol.converged) worsen(kNotConverged);
        run_regularity(ctx, sol.theta);
        run_sweep(ctx, sol.theta);
      }
    }
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    ctx.stages.push_back({command, "failed", e.what()});
    worsen(kConfigFailure);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    ctx.stages.push_back({command, "failed", e.what()});
    worsen(kSolverFailure);
  }
  write_manifest(ctx, command, started);
  return status;
}

}  // namespace thermistor::runner
