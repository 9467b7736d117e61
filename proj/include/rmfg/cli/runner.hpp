#pragma once

#include <json.hpp>

#include <boost/version.hpp>

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rmfg/continuous/master.hpp"
#include "rmfg/controls/fixed_point.hpp"
#include "rmfg/controls/reduced.hpp"
#include "rmfg/finite/master.hpp"
#include "rmfg/io/csv.hpp"
#include "rmfg/models/catalog.hpp"
#include "rmfg/noise/solver.hpp"
#include "rmfg/verify/checks.hpp"

namespace rmfg::cli {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr std::uint64_t kDefaultSeed = 20240901;

/// Unknown task, model or key; bad command-line flags.
class UsageError : public Error {
 public:
  using Error::Error;
};

enum ExitCode : int { kPass = 0, kExecutionError = 1, kCheckFailure = 2, kUsage = 64 };

/// Task parameters: declared defaults overridden by the scenario. Numbers
/// must be positive unless read through `nonnegative`.
class Params {
 public:
  Params() = default;
  Params(std::string task, nlohmann::json values) : task_(std::move(task)), v_(std::move(values)) {}

  const nlohmann::json& values() const { return v_; }

  double num(const std::string& key) const {
    const double x = number(key);
    if (!(x > 0.0)) throw InputError(task_ + ": parameter '" + key + "' must be > 0");
    return x;
  }
  double nonnegative(const std::string& key) const {
    const double x = number(key);
    if (!(x >= 0.0)) throw InputError(task_ + ": parameter '" + key + "' must be >= 0");
    return x;
  }
  long count(const std::string& key) const {
    const double x = num(key);
    if (x != std::floor(x) || x > 1e12) throw InputError(task_ + ": parameter '" + key + "' must be a positive integer");
    return static_cast<long>(x);
  }
  bool flag(const std::string& key) const {
    const auto& j = at(key);
    if (!j.is_boolean()) throw InputError(task_ + ": parameter '" + key + "' must be true or false");
    return j.get<bool>();
  }
  std::string text(const std::string& key) const {
    const auto& j = at(key);
    if (!j.is_string()) throw InputError(task_ + ": parameter '" + key + "' must be a string");
    return j.get<std::string>();
  }
  std::vector<double> list(const std::string& key) const {
    const auto& j = at(key);
    if (!j.is_array() || j.empty()) throw InputError(task_ + ": parameter '" + key + "' must be a non-empty list");
    std::vector<double> out;
    for (const auto& e : j) {
      if (!e.is_number()) throw InputError(task_ + ": parameter '" + key + "' must hold numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }
  const nlohmann::json& at(const std::string& key) const {
    if (!v_.contains(key)) throw InputError(task_ + ": missing parameter '" + key + "'");
    return v_.at(key);
  }

 private:
  double number(const std::string& key) const {
    const auto& j = at(key);
    if (!j.is_number()) throw InputError(task_ + ": parameter '" + key + "' must be a number");
    const double x = j.get<double>();
    if (!std::isfinite(x)) throw InputError(task_ + ": parameter '" + key + "' must be finite");
    return x;
  }

  std::string task_;
  nlohmann::json v_ = nlohmann::json::object();
};

/// One resolved task invocation and its output directory.
struct Run {
  std::string task;
  std::string model_name;
  nlohmann::json model_params = nlohmann::json::object();
  ModelSpec model;
  Params params;
  std::uint64_t seed = kDefaultSeed;
  std::filesystem::path out;
  bool quiet = false;
  std::vector<std::string> outputs;

  io::CsvWriter csv(const std::string& file, const std::vector<std::string>& header) {
    outputs.push_back(file);
    return io::CsvWriter(out / file, header);
  }
  void log(const std::string& msg) const {
    if (!quiet) std::cerr << "[" << task << "] " << msg << '\n';
  }
  SampleOptions samples() const {
    SampleOptions o;
    o.samples = params.count("samples");
    o.box = params.num("box");
    o.tolerance = params.num("tolerance");
    o.seed = seed;
    return o;
  }
  /// Same model with some parameters replaced.
  ModelSpec variant(const nlohmann::json& changes) const {
    nlohmann::json p = model_params;
    p.update(changes);
    return build_model(model_name, p);
  }
};

struct TaskResult {
  std::vector<CheckReport> checks;
  nlohmann::json summary = nlohmann::json::object();
};

namespace detail {

template <class T>
const T& need(const Run& r, const char* what) {
  if (const T* p = std::get_if<T>(&r.model.model)) return *p;
  throw UsageError(r.task + ": model '" + r.model_name + "' is not a " + what);
}

inline ReducedMasterSystem master_system(const Run& r) {
  if (const auto* p = std::get_if<PowerMasterModel>(&r.model.model)) return p->system();
  if (const auto* q = std::get_if<QuadraticMasterModel>(&r.model.model)) return q->system();
  throw UsageError(r.task + ": model '" + r.model_name + "' is not a master-equation model");
}

inline const Law1D& initial_law(const Run& r) {
  if (!r.model.m0_law) throw ConfigurationError(r.task + ": model '" + r.model_name + "' has no initial law");
  return *r.model.m0_law;
}

inline CheckReport flag_report(const std::string& name, bool ok, nlohmann::json witness) {
  CheckReport rep;
  rep.name = name;
  rep.tolerance = 0.0;
  rep.samples = 1;
  rep.offer(ok ? 0.0 : -1.0, [&] { return witness; });
  rep.finalize();
  return rep;
}

/// Margin for a strict inequality v > 0: zero is mapped below any tolerance.
inline double strict(double v) { return v > 0.0 ? v : std::min(v, -std::numeric_limits<double>::min()); }

inline std::vector<std::string> numbered(const std::string& stem, Eigen::Index n) {
  std::vector<std::string> out;
  for (Eigen::Index i = 1; i <= n; ++i) out.push_back(stem + std::to_string(i));
  return out;
}

inline std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

inline void append(std::vector<double>& row, const Vec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) row.push_back(v[i]);
}

inline Vec law_moments(const ReducedMasterSystem& sys, const Law1D& law) {
  const Eigen::Index k = sys.cset.dim();
  Vec z(k);
  for (Eigen::Index i = 0; i < k; ++i) z[i] = law_expectation(law, [&](double y) { return sys.feature.phi(vec1(y))[i]; });
  return z;
}

inline ParticleCloud initial_cloud(const Run& r) { return quantile_cloud(initial_law(r), r.params.count("M")); }

inline controls::TMapSpec tmap_spec(const Params& p) {
  controls::TMapSpec s;
  s.hj.grid.R = p.num("R");
  s.hj.grid.nx = p.count("nx");
  s.hj.dt = p.num("dt");
  s.out_count = static_cast<int>(p.count("out_count"));
  return s;
}

inline noise::NoiseGrid noise_grid(const NoiseModel& nm, const Params& p) {
  auto g = noise::NoiseGrid::from_model(nm, p.num("T"));
  g.dt = p.num("dt");
  g.out_count = static_cast<int>(p.count("out_count"));
  return g;
}

inline ode::IntegratorSpec rk4(double dt) {
  ode::IntegratorSpec s;
  s.dt = dt;
  return s;
}

// ---------------------------------------------------------------- tasks

inline TaskResult solve_finite(Run& r) {
  const auto& m = need<FiniteStateModel>(r, "finite-state model");
  const auto& P = r.params;
  const double T = P.num("T"), dt = P.num("dt"), box = P.num("box");
  const auto pts = finite::tensor_grid(m.N, P.count("grid"), -box, box);
  const auto ts = finite::uniform_times(T, P.count("times"));
  auto csv = r.csv("values.csv", concat(concat({"t"}, numbered("x", m.N)), concat(numbered("U", m.N), {"converged"})));
  CheckReport rep;
  rep.name = "evaluations_converged";
  rep.tolerance = 0.0;
  for (double t : ts)
    for (const Vec& x : pts) {
      const auto ev = finite::eval_U(m, t, x, dt);
      std::vector<double> row{t};
      append(row, x);
      append(row, ev.converged ? ev.value : Vec::Constant(m.N, std::nan("")));
      row.push_back(ev.converged ? 1.0 : 0.0);
      csv.row(row);
      ++rep.samples;
      rep.offer(ev.converged ? 0.0 : -1.0, [&] { return nlohmann::json{{"t", t}, {"x", to_json(x)}, {"message", ev.message}}; });
    }
  rep.finalize();
  return {{rep}, {{"points", pts.size()}, {"times", ts.size()}}};
}

inline TaskResult verify_reduction(Run& r) {
  const auto& m = need<FiniteStateModel>(r, "finite-state model");
  if (!r.model.L) throw ConfigurationError("verify-reduction: model '" + r.model_name + "' has no reduction map");
  const ReductionMap& L = *r.model.L;
  const auto& P = r.params;
  const double T = P.num("T"), dt = P.num("dt"), box = P.num("box");
  std::set<std::string> parts;
  {
    const std::string list = P.text("checks");
    std::size_t pos = 0;
    while (pos <= list.size()) {
      const auto next = list.find(',', pos);
      const auto item = list.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
      if (!item.empty()) {
        if (item != "identity" && item != "order" && item != "fiber")
          throw UsageError("verify-reduction: unknown check '" + item + "' (identity, order, fiber)");
        parts.insert(item);
      }
      if (next == std::string::npos) break;
      pos = next + 1;
    }
  }
  TaskResult out;
  const auto pr = check_pair_reduction(m, L, r.samples());
  out.checks.push_back(pr.report);
  if (!pr.report.pass) {
    r.log("pair does not reduce; skipping the reduced solve");
    return out;
  }
  const auto pts = finite::tensor_grid(m.N, P.count("grid"), -box, box);
  const auto ts = finite::uniform_times(T, P.count("times"));
  const double tol = P.num("identity_tolerance");
  if (parts.count("identity") || parts.count("order")) {
    auto csv = r.csv("identity_errors.csv", {"dt", "sup_error"});
    const auto rep = finite::verify_reduction_identity(m, L, pr.reduced, pts, ts, dt, tol);
    const double e1 = -rep.worst_margin;
    csv.row({dt, e1});
    out.checks.push_back(rep);
    if (parts.count("order")) {
      const auto half = finite::verify_reduction_identity(m, L, pr.reduced, pts, ts, 0.5 * dt, tol);
      const double e2 = -half.worst_margin;
      csv.row({0.5 * dt, e2});
      const double ratio = e2 > 0.0 ? e1 / e2 : (e1 > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);
      CheckReport ord;
      ord.name = "reduction_identity_order";
      ord.tolerance = 0.0;
      ord.samples = 2;
      const double need_ratio = P.num("order_ratio");
      ord.offer(ratio - need_ratio, [&] {
        return nlohmann::json{{"error_dt", e1}, {"error_half_dt", e2}, {"ratio", ratio}, {"required_ratio", need_ratio}};
      });
      ord.finalize();
      out.checks.push_back(ord);
    }
  }
  if (parts.count("fiber")) {
    BoxSampler S(r.seed, box);
    const Mat& K = L.kernel_basis();
    std::vector<std::pair<Vec, Vec>> pairs;
    for (long k = 0; k < P.count("fiber_pairs"); ++k) {
      const Vec x = S.draw(m.N);
      pairs.emplace_back(x, Vec(x + K * S.draw(K.cols())));
    }
    out.checks.push_back(finite::fiber_evolution_check(m, L, pairs, T, rk4(dt), P.num("fiber_tolerance")));
  }
  return out;
}

inline TaskResult check_monotone_task(Run& r) {
  const auto opt = r.samples();
  TaskResult out;
  if (const auto* m = std::get_if<FiniteStateModel>(&r.model.model)) {
    out.checks.push_back(check_monotone(m->pair_map(), 2 * m->N, opt, false, "full_pair_monotone"));
    if (r.model.L) {
      const auto pr = check_pair_reduction(*m, *r.model.L, opt);
      out.checks.push_back(pr.report);
      if (pr.report.pass) {
        const auto red = pr.reduced.as_finite();
        out.checks.push_back(check_monotone(red.pair_map(), 2 * red.N, opt, false, "reduced_pair_monotone"));
      }
    }
  } else if (const auto* nm = std::get_if<NoiseModel>(&r.model.model)) {
    out.checks.push_back(check_monotone(nm->core.pair_map(), 2 * nm->N(), opt, false, "full_pair_monotone"));
    out.checks.push_back(check_strong_monotone(nm->core, nm->alpha, opt));
  } else if (const auto* pm = std::get_if<PowerMasterModel>(&r.model.model)) {
    out.checks.push_back(check_h_monotone(pm->system(), opt));
  } else if (const auto* qm = std::get_if<QuadraticMasterModel>(&r.model.model)) {
    out.checks.push_back(check_h_monotone(qm->system(), opt));
    out.checks.push_back(check_quadratic_chain(*qm, QuadraticCheck::printed_chain, opt));
    out.checks.push_back(check_quadratic_chain(*qm, QuadraticCheck::expanded_identity, opt));
    out.checks.push_back(check_quadratic_chain(*qm, QuadraticCheck::monotone_bound, opt));
  } else {
    throw UsageError("check-monotone: no monotonicity check for model '" + r.model_name + "'");
  }
  return out;
}

inline TaskResult check_abc_task(Run& r) {
  const auto& m = need<PowerMasterModel>(r, "power-family master model");
  const auto& P = r.params;
  const auto opt = r.samples();
  std::vector<double> grid;
  const long n = P.count("z_count");
  const double zmax = P.num("z_max");
  for (long k = 0; k < n; ++k) grid.push_back(n == 1 ? zmax : zmax * static_cast<double>(k) / static_cast<double>(n - 1));
  TaskResult out;
  out.checks.push_back(check_abc(m, grid, opt));
  out.checks.push_back(check_h_monotone(m.system(), opt));
  if (P.flag("negative_controls")) {
    struct Control {
      nlohmann::json params;
      std::string documented;
    };
    const std::vector<Control> controls = {
        {{{"q", 3.0}, {"b", "nonconstant"}}, "b constant (q > 2)"},
        {{{"a", "exp-decay"}, {"c", "zero"}}, "z -> a(z) z^{4(q-1)/q} nondecreasing"},
    };
    CheckReport rep;
    rep.name = "negative_controls";
    rep.tolerance = 0.0;
    for (const auto& c : controls) {
      const auto bad = check_abc(build_model("demo-power", c.params).as<PowerMasterModel>(), grid, opt);
      bool found = false;
      if (bad.witness.contains("failed_conditions"))
        for (const auto& f : bad.witness["failed_conditions"]) found = found || f == c.documented;
      const bool ok = !bad.pass && found;
      ++rep.samples;
      rep.offer(ok ? 0.0 : -1.0, [&] {
        return nlohmann::json{{"params", c.params}, {"expected_condition", c.documented}, {"report", bad.to_json()}};
      });
      out.summary["negative_controls"].push_back(
          {{"params", c.params}, {"pass", bad.pass}, {"witness", bad.witness}, {"documented", ok}});
    }
    rep.finalize();
    out.checks.push_back(rep);
  }
  return out;
}

inline std::vector<Vec> master_seeds(const Run& r, const ReducedMasterSystem& sys) {
  const auto& j = r.params.at("seeds");
  std::vector<Vec> seeds;
  if (j.is_string()) {
    if (j.get<std::string>() != "boundary") throw InputError("seeds must be \"boundary\" or a list of points");
    if (sys.cset.kind() == MomentSetKind::half_line) {
      seeds.push_back(vec1(0.0));
    } else {
      for (double s : r.params.list("parabola")) seeds.push_back(vec3(1.0, s, 0.5 * s * s));
    }
    return seeds;
  }
  if (!j.is_array() || j.empty()) throw InputError("seeds must be \"boundary\" or a list of points");
  for (const auto& p : j) {
    if (!p.is_array()) throw InputError("each seed must be a list of numbers");
    Vec v(static_cast<Eigen::Index>(p.size()));
    for (std::size_t i = 0; i < p.size(); ++i) v[static_cast<Eigen::Index>(i)] = p[i].get<double>();
    seeds.push_back(v);
  }
  return seeds;
}

inline TaskResult solve_reduced_master_task(Run& r) {
  const auto sys = master_system(r);
  const auto& P = r.params;
  const double T = P.num("T"), dt = P.num("dt");
  const auto seeds = master_seeds(r, sys);
  TaskResult out;
  out.checks.push_back(continuous::boundary_invariance_check(sys, seeds, T, dt, P.num("tolerance")));
  const auto sol = continuous::solve_reduced_master(sys, seeds, T, dt);
  const Eigen::Index k = sys.cset.dim();
  auto csv = r.csv("characteristics.csv", concat(concat({"seed", "t"}, numbered("Z", k)), numbered("U", sys.m)));
  for (std::size_t s = 0; s < seeds.size(); ++s)
    for (double t : finite::uniform_times(T, P.count("out_count"))) {
      std::vector<double> row{static_cast<double>(s), t};
      append(row, sol.Z(s, t));
      append(row, sol.U(s, t));
      csv.row(row);
    }
  out.summary["seeds"] = seeds.size();
  return out;
}

inline continuous::FBReducedSolution fb_solve(const Run& r, const ReducedMasterSystem& sys, const Vec& z0) {
  ode::ShootingSpec sp;
  sp.dt = r.params.num("dt");
  sp.tol = r.params.num("shooting_tol");
  return continuous::solve_fb_reduced(sys, z0, r.params.num("T"), sp);
}

inline TaskResult solve_fb_task(Run& r) {
  const auto sys = master_system(r);
  const auto& P = r.params;
  const Vec z0 = law_moments(sys, initial_law(r));
  const auto fb = fb_solve(r, sys, z0);
  TaskResult out;
  out.checks.push_back(flag_report("fb_converged", fb.converged(), {{"residual", fb.shooting.residual}}));
  auto csv = r.csv("fb.csv", concat(concat({"t"}, numbered("z", z0.size())), numbered("psi", sys.m)));
  for (double t : finite::uniform_times(P.num("T"), P.count("out_count"))) {
    std::vector<double> row{t};
    append(row, fb.z(t));
    append(row, fb.psi(t));
    csv.row(row);
  }
  out.summary["z0"] = to_json(z0);
  out.summary["residual"] = fb.shooting.residual;
  return out;
}

inline TaskResult verify_consistency_task(Run& r) {
  const auto sys = master_system(r);
  const auto& P = r.params;
  const auto& law = initial_law(r);
  const double T = P.num("T"), dt = P.num("dt");
  const long M = P.count("M"), levels = P.count("refine_levels");
  const Vec z0 = law_moments(sys, law);
  const auto fb = fb_solve(r, sys, z0);
  if (!fb.converged()) throw EvaluationError("verify-consistency: forward-backward solve did not converge");
  const auto times = finite::uniform_times(T, P.count("out_count"));
  auto csv = r.csv("refinement.csv", {"M", "dt", "sup_error"});
  TaskResult out;
  std::vector<double> errs;
  CheckReport finest;
  for (long j = levels - 1; j >= 0; --j) {
    const long Mj = std::max(1L, M >> j);
    const double dtj = dt * static_cast<double>(1L << j);
    auto rep = continuous::verify_moment_consistency(sys, fb, quantile_cloud(law, Mj), T, dtj, times, P.num("tolerance"));
    errs.push_back(-rep.worst_margin);
    csv.row({static_cast<double>(Mj), dtj, errs.back()});
    r.log("M = " + std::to_string(Mj) + ": sup error " + io::format_number(errs.back()));
    if (j == 0) finest = rep;
  }
  out.checks.push_back(finest);
  if (errs.size() > 1) {
    CheckReport dec;
    dec.name = "refinement_decreases";
    dec.tolerance = 0.0;
    for (std::size_t k = 1; k < errs.size(); ++k) {
      ++dec.samples;
      dec.offer(strict(errs[k - 1] - errs[k]), [&] { return nlohmann::json{{"level", k}, {"coarse", errs[k - 1]}, {"fine", errs[k]}}; });
    }
    dec.finalize();
    out.checks.push_back(dec);
  }
  out.summary["errors"] = errs;
  out.summary["z0"] = to_json(z0);
  return out;
}

inline ControlsModel controls_model(const Run& r) {
  if (const auto* c = std::get_if<ControlsModel>(&r.model.model)) return *c;
  if (const auto* p = std::get_if<PowerControlsModel>(&r.model.model)) return p->to_controls_model();
  throw UsageError(r.task + ": model '" + r.model_name + "' is not a controls model");
}

inline TaskResult solve_mfgc_task(Run& r) {
  const ControlsModel cm = controls_model(r);
  const auto& P = r.params;
  const double T = P.num("T");
  const auto m0 = initial_cloud(r);
  controls::FixedPointSpec fs;
  fs.tmap = tmap_spec(P);
  fs.theta = P.num("theta");
  fs.tol = P.num("tol");
  fs.max_iter = static_cast<int>(P.count("max_iter"));
  const auto res = controls::fixed_point_solve(cm, m0, T, fs);
  const auto& st = res.state;
  TaskResult out;
  {
    const long max_updates = P.count("max_updates");
    CheckReport fp;
    fp.name = "fixed_point";
    fp.tolerance = 0.0;
    fp.samples = static_cast<long>(res.gaps.size());
    fp.offer(res.converged ? static_cast<double>(max_updates - res.iterations) : -1.0, [&] {
      return nlohmann::json{{"converged", res.converged}, {"iterations", res.iterations}, {"max_updates", max_updates},
                            {"gaps", res.gaps}, {"message", res.message}};
    });
    fp.finalize();
    out.checks.push_back(fp);
  }
  out.checks.push_back(controls::equivalence_check(cm, st, P.num("equivalence_tolerance")));
  {
    CheckReport cv;
    cv.name = "convexity";
    cv.tolerance = 1e-8;
    cv.samples = static_cast<long>(st.hj.levels.size());
    cv.offer(st.diag.min_uxx, [&] { return st.diag.to_json(); });
    cv.finalize();
    out.checks.push_back(cv);
  }
  const auto& g = st.hj.grid;
  if (r.model_name == "demo-controls-quad") {
    // H = p^2/2 and G = x^2/2 do not see the measure: u = x^2 / (2 (1 + T - t))
    CheckReport cf;
    cf.name = "closed_form_value";
    cf.tolerance = P.num("closed_form_tolerance");
    for (std::size_t n = 0; n < st.hj.times.size(); ++n) {
      const double t = st.hj.times[n];
      for (long i = 0; i < g.nx; ++i) {
        const double x = g.x(i);
        if (!(std::abs(x) < st.hj.influence_radius)) continue;
        const double err = std::abs(st.hj.levels[n].values()[i] - x * x / (2.0 * (1.0 + T - t)));
        ++cf.samples;
        cf.offer(-err, [&] { return nlohmann::json{{"t", t}, {"x", x}, {"error", err}}; });
      }
    }
    cf.finalize();
    out.checks.push_back(cf);
  }
  auto vcsv = r.csv("value.csv", {"t", "x", "u", "Du"});
  for (double t : st.clouds.times)
    for (long i = 0; i < g.nx; ++i) vcsv.row({t, g.x(i), st.hj.value(t, g.x(i)), st.hj.Du(t, g.x(i))});
  auto pcsv = r.csv("phi.csv", concat(concat({"t"}, numbered("phi", cm.phi_dim)), {"mean", "moment"}));
  for (std::size_t k = 0; k < st.clouds.times.size(); ++k) {
    const double t = st.clouds.times[k];
    std::vector<double> row{t};
    append(row, st.phi(t));
    row.push_back(st.clouds.clouds[k].points().col(0).mean());
    row.push_back(controls::mean_abs_pow(st.clouds.clouds[k], cm.lambda));
    pcsv.row(row);
  }
  out.summary["iterations"] = res.iterations;
  out.summary["gaps"] = res.gaps;
  out.summary["diagnostics"] = st.diag.to_json();
  return out;
}

inline bool zero_drift_constant_g(const PowerControlsModel& m) {
  for (double z : {0.0, 0.1, 0.5, 1.0, 2.0, 10.0}) {
    if (m.a(z) != 0.0) return false;
    if (m.dg && m.dg(z) != 0.0) return false;
    if (!m.dg && m.g(z) != m.g(0.0)) return false;
  }
  return true;
}

inline TaskResult solve_mfgc_reduced_task(Run& r) {
  const auto& pm = need<PowerControlsModel>(r, "power controls model");
  const auto& P = r.params;
  const double T = P.num("T");
  const auto m0 = initial_cloud(r);
  const double z0 = pm.z0(m0), a0 = pm.alpha0(m0);
  controls::ReducedSpec rs;
  rs.dt = P.num("dt");
  rs.tol = P.num("shooting_tol");
  rs.max_iter = static_cast<int>(P.count("max_iter"));
  const auto res = controls::solve_reduced_controls(pm, z0, a0, T, rs);
  const auto& s = res.solution;
  TaskResult out;
  out.checks.push_back(flag_report("reduced_converged", s.converged,
                                   {{"residual", s.residual}, {"iterations", s.iterations}, {"message", s.message}}));
  out.checks.push_back(res.band_check);
  const auto times = finite::uniform_times(T, P.count("out_count"));
  if (s.converged && zero_drift_constant_g(pm)) {
    // -psi' + psi^p / p = 0 with psi(T) = g0
    const double p = pm.p, g0 = pm.g(0.0);
    auto exact = [&](double t) {
      return g0 == 0.0 ? 0.0 : std::pow(std::pow(g0, 1.0 - p) + (p - 1.0) * (T - t) / p, -1.0 / (p - 1.0));
    };
    CheckReport cf;
    cf.name = "closed_form_psi";
    cf.tolerance = P.num("closed_form_tolerance");
    for (double t : times) {
      const double err = std::abs(s.psi(t) - exact(t));
      ++cf.samples;
      cf.offer(-err, [&] { return nlohmann::json{{"t", t}, {"psi", s.psi(t)}, {"exact", exact(t)}}; });
    }
    cf.finalize();
    out.checks.push_back(cf);
  }
  if (s.converged) {
    auto csv = r.csv("reduced.csv", {"t", "psi", "z", "phi"});
    for (double t : times) csv.row({t, s.psi(t), s.z(t), s.phi(t)});
  }
  out.summary["z0"] = z0;
  out.summary["alpha0"] = a0;
  out.summary["psi0"] = s.psi0;
  out.summary["band"] = res.band.to_json();
  return out;
}

inline std::vector<CheckReport> pq_reports(const controls::PQResult& res, double agree_tol) {
  std::vector<CheckReport> out;
  {
    CheckReport ag;
    ag.name = "multistart_agreement";
    ag.tolerance = 0.0;
    ag.samples = static_cast<long>(res.runs.size());
    ag.offer(res.all_converged ? agree_tol - res.max_pairwise_distance : -1.0, [&] {
      return nlohmann::json{{"all_converged", res.all_converged}, {"max_pairwise_distance", res.max_pairwise_distance},
                            {"agree_tol", agree_tol}};
    });
    ag.finalize();
    out.push_back(ag);
  }
  {
    CheckReport mx;
    mx.name = "matrix_negative";
    mx.tolerance = 0.0;
    for (std::size_t k = 0; k < res.runs.size(); ++k) {
      const auto& run = res.runs[k];
      for (std::size_t i = 0; i < run.times.size(); ++i) {
        ++mx.samples;
        mx.offer(strict(std::min(-run.trace[i], run.det[i])), [&] {
          return nlohmann::json{{"run", k}, {"t", run.times[i]}, {"trace", run.trace[i]}, {"det", run.det[i]}};
        });
      }
    }
    if (mx.samples == 0) mx.offer(-1.0, [] { return nlohmann::json{{"message", "no converged run"}}; });
    mx.finalize();
    out.push_back(mx);
  }
  out.push_back(flag_report("delta_bounds", res.delta_within_bounds,
                            {{"trace_bound", res.delta_trace_bound}, {"det_bound", res.delta_det_bound}}));
  out.push_back(flag_report("uniqueness_verdict", res.verdict == "unique-consistent", {{"verdict", res.verdict}}));
  return out;
}

inline TaskResult solve_pq_task(Run& r) {
  const auto& pm = need<PowerControlsModel>(r, "power controls model");
  const auto& P = r.params;
  const double T = P.num("T");
  const auto m0 = initial_cloud(r);
  const double z0 = pm.z0(m0), a0 = pm.alpha0(m0);
  controls::PQSpec ps;
  ps.shooting.dt = P.num("dt");
  ps.starts = static_cast<int>(P.count("starts"));
  ps.out_count = static_cast<int>(P.count("out_count"));
  ps.agree_tol = P.num("agree_tol");
  const auto res = controls::solve_pq(pm, z0, a0, T, ps);
  TaskResult out;
  out.checks = pq_reports(res, ps.agree_tol);
  auto csv = r.csv("pq_runs.csv", {"run", "start", "t", "psi", "z", "phi", "trace", "det"});
  for (std::size_t k = 0; k < res.runs.size(); ++k) {
    const auto& run = res.runs[k];
    if (!run.solution.converged) continue;
    for (std::size_t i = 0; i < run.times.size(); ++i) {
      const double t = run.times[i];
      csv.row({static_cast<double>(k), run.start, t, run.solution.psi(t), run.solution.z(t), run.solution.phi(t),
               run.trace[i], run.det[i]});
    }
  }
  out.summary = res.to_json();
  const double neg = P.nonnegative("negative_delta");
  if (neg > 0.0) {
    const auto bad = r.variant({{"delta", neg}}).as<PowerControlsModel>();
    const auto nres = controls::solve_pq(bad, z0, a0, T, ps);
    // the negative control must withhold the verdict, never claim non-uniqueness
    out.checks.push_back(flag_report("negative_control", nres.verdict == "criterion fails",
                                     {{"delta", neg}, {"verdict", nres.verdict}}));
    out.summary["negative_control"] = nres.to_json();
  }
  return out;
}

inline TaskResult noise_solve_task(Run& r) {
  const auto& nm = need<NoiseModel>(r, "common-noise model");
  const auto grid = noise_grid(nm, r.params);
  const auto s = noise::solve_noisy(nm, nm.lambda, grid);
  TaskResult out;
  CheckReport box;
  box.name = "box_inclusion";
  box.tolerance = 1e-12;
  box.samples = 1L << nm.N();
  box.offer(-nm.box_excess(), [&] { return nlohmann::json{{"excess", nm.box_excess()}, {"R", nm.R}}; });
  box.finalize();
  out.checks.push_back(box);
  const Eigen::Index N = nm.N();
  auto csv = r.csv("final.csv", concat(concat(numbered("x", N), numbered("U", N)), {"flagged"}));
  for (Eigen::Index i = 0; i < s.nodes.rows(); ++i) {
    std::vector<double> row;
    append(row, s.nodes.row(i).transpose());
    append(row, s.values.back().row(i).transpose());
    row.push_back(s.flagged[static_cast<std::size_t>(i)] ? 1.0 : 0.0);
    csv.row(row);
  }
  out.summary = {{"L0", s.L0}, {"max_cfl", s.max_cfl}, {"flagged_nodes", s.flagged_count()}, {"lambda", nm.lambda}};
  return out;
}

inline TaskResult noise_expansion_task(Run& r) {
  const auto& nm = need<NoiseModel>(r, "common-noise model");
  const auto& P = r.params;
  const auto st = noise::expansion_study(nm, P.list("eps"), noise_grid(nm, P));
  auto csv = r.csv("expansion.csv", {"eps", "error"});
  for (std::size_t k = 0; k < st.eps.size(); ++k) csv.row({st.eps[k], st.errors[k]});
  const double lo = P.num("slope_min"), hi = P.num("slope_max");
  CheckReport rep;
  rep.name = "expansion_slope";
  rep.tolerance = 0.0;
  rep.samples = static_cast<long>(st.eps.size());
  rep.offer(std::min(st.slope - lo, hi - st.slope),
            [&] { return nlohmann::json{{"slope", st.slope}, {"slope_min", lo}, {"slope_max", hi}}; });
  rep.finalize();
  return {{rep}, st.to_json()};
}

inline TaskResult noise_stability_task(Run& r) {
  const auto& nm = need<NoiseModel>(r, "common-noise model");
  const auto& P = r.params;
  const auto grid = noise_grid(nm, P);
  const double allowance = P.num("allowance");
  auto csv = r.csv("stability.csv", {"magnitude", "gap", "bound", "L0"});
  TaskResult out;
  for (double c : P.list("magnitudes")) {
    if (!(c > 0.0)) throw InputError("noise-stability: magnitudes must be > 0");
    Vec Rc = Vec::Zero(nm.N());
    Rc[0] = c;
    auto rep = noise::stability_check(nm, [Rc](double, const Vec&) { return Rc; }, nm.lambda, grid, allowance);
    std::ostringstream tag;
    tag << c;
    rep.name += "[R=" + tag.str() + "]";
    csv.row({c, rep.witness["gap"].get<double>(), rep.witness["bound"].get<double>(), rep.witness["L0"].get<double>()});
    out.checks.push_back(rep);
  }
  return out;
}

inline TaskResult convergence_task(Run& r) {
  const auto& m = need<FiniteStateModel>(r, "finite-state model");
  const auto& P = r.params;
  const double T = P.num("T"), dt = P.num("dt");
  const long levels = P.count("levels");
  if (levels < 2) throw InputError("convergence: need levels >= 2");
  const Vec x = Vec::Constant(m.N, P.nonnegative("point"));
  auto state = [&](double h) {
    const auto cf = finite::solve_characteristics(m, {x}, T, rk4(h));
    Vec s(2 * m.N);
    s << cf.X(0, T), cf.V(0, T);
    return s;
  };
  const Vec ref = state(dt / static_cast<double>(1L << (levels + 3)));
  std::vector<double> steps, errs;
  for (long j = 0; j < levels; ++j) {
    steps.push_back(dt / static_cast<double>(1L << j));
    errs.push_back((state(steps.back()) - ref).norm());
  }
  const auto orders = ode::observed_orders(errs);
  auto csv = r.csv("convergence.csv", {"dt", "error", "order"});
  for (std::size_t j = 0; j < steps.size(); ++j) csv.row({steps[j], errs[j], j == 0 ? std::nan("") : orders[j - 1]});
  CheckReport rep;
  rep.name = "rk4_order";
  rep.tolerance = 0.0;
  const double need_order = P.num("min_order");
  for (std::size_t j = 0; j < orders.size(); ++j) {
    ++rep.samples;
    rep.offer(orders[j] - need_order, [&] {
      return nlohmann::json{{"dt", steps[j + 1]}, {"order", orders[j]}, {"errors", errs}, {"min_order", need_order}};
    });
  }
  rep.finalize();
  return {{rep}, {{"orders", orders}, {"errors", errs}}};
}

}  // namespace detail

struct TaskDef {
  std::function<TaskResult(Run&)> fn;
  nlohmann::json defaults;
  std::string summary;
};

inline const std::map<std::string, TaskDef>& tasks() {
  using nlohmann::json;
  const json sampling = {{"samples", 10000}, {"box", 5.0}, {"tolerance", 1e-10}};
  auto with = [](json base, const json& more) {
    base.update(more);
    return base;
  };
  static const std::map<std::string, TaskDef> table = {
      {"solve-finite",
       {detail::solve_finite, {{"T", 1.0}, {"dt", 1e-3}, {"grid", 9}, {"box", 2.0}, {"times", 11}},
        "evaluate U on a tensor grid by inverting the characteristic flow"}},
      {"verify-reduction",
       {detail::verify_reduction,
        with(sampling, {{"T", 1.0}, {"dt", 1e-3}, {"grid", 9}, {"box", 2.0}, {"times", 11},
                        {"identity_tolerance", 1e-6}, {"order_ratio", 8.0}, {"fiber_pairs", 20},
                        {"fiber_tolerance", 1e-8}, {"checks", "identity,order,fiber"}}),
        "compare the full solution with the lifted reduced solution"}},
      {"check-monotone", {detail::check_monotone_task, sampling, "sampled monotonicity checks for the model kind"}},
      {"check-abc",
       {detail::check_abc_task, with(sampling, {{"z_max", 10.0}, {"z_count", 1001}, {"negative_controls", false}}),
        "structural conditions of the power family"}},
      {"solve-reduced-master",
       {detail::solve_reduced_master_task,
        {{"T", 1.0}, {"dt", 1e-3}, {"tolerance", 1e-10}, {"seeds", "boundary"},
         {"parabola", {-1.0, -0.5, 0.0, 0.8, 1.0}}, {"out_count", 11}},
        "backward characteristics of the reduced master equation"}},
      {"solve-fb",
       {detail::solve_fb_task, {{"T", 1.0}, {"dt", 1e-3}, {"shooting_tol", 1e-10}, {"out_count", 101}},
        "reduced forward-backward system from the initial law"}},
      {"verify-consistency",
       {detail::verify_consistency_task,
        {{"T", 1.0}, {"dt", 1e-3}, {"shooting_tol", 1e-10}, {"M", 10000}, {"tolerance", 1e-3}, {"out_count", 11},
         {"refine_levels", 3}},
        "particle moments against the reduced trajectory"}},
      {"solve-mfgc",
       {detail::solve_mfgc_task,
        {{"T", 1.0}, {"dt", 1e-3}, {"nx", 401}, {"R", 6.0}, {"M", 10000}, {"theta", 1.0}, {"tol", 1e-6},
         {"max_iter", 50}, {"max_updates", 2}, {"equivalence_tolerance", 5e-3}, {"closed_form_tolerance", 1e-4},
         {"out_count", 11}},
        "fixed point of the controls map on a grid with particles"}},
      {"solve-mfgc-reduced",
       {detail::solve_mfgc_reduced_task,
        {{"T", 1.0}, {"dt", 1e-3}, {"M", 10000}, {"shooting_tol", 1e-10}, {"max_iter", 200}, {"out_count", 101},
         {"closed_form_tolerance", 1e-8}},
        "reduced (psi, z, phi) system of the power controls family"}},
      {"solve-pq",
       {detail::solve_pq_task,
        {{"T", 1.0}, {"dt", 1e-3}, {"M", 10000}, {"starts", 5}, {"agree_tol", 1e-6}, {"out_count", 101},
         {"negative_delta", 0.0}},
        "multistart uniqueness probe for p = q"}},
      {"noise-solve",
       {detail::noise_solve_task, {{"T", 1.0}, {"dt", 2.5e-4}, {"out_count", 41}},
        "grid solve of the equation with common noise"}},
      {"noise-expansion",
       {detail::noise_expansion_task,
        {{"T", 1.0}, {"dt", 2.5e-4}, {"out_count", 41}, {"eps", {0.02, 0.04, 0.08, 0.16, 0.32}}, {"slope_min", 1.8},
         {"slope_max", 2.2}},
        "first-order expansion in the noise rate"}},
      {"noise-stability",
       {detail::noise_stability_task,
        {{"T", 1.0}, {"dt", 2.5e-4}, {"out_count", 41}, {"magnitudes", {1e-3, 1e-2, 1e-1}}, {"allowance", 1.05}},
        "perturbation bound for constant sources"}},
      {"convergence",
       {detail::convergence_task, {{"T", 1.0}, {"dt", 0.1}, {"levels", 4}, {"point", 0.5}, {"min_order", 3.5}},
        "observed order of the characteristic integrator"}},
  };
  return table;
}

/// Keys that are never model parameters.
inline const std::set<std::string>& reserved_keys() {
  static const std::set<std::string> keys = {"task", "model", "seed", "name", "description"};
  return keys;
}

/// Split a flat scenario document into task parameters and model parameters
/// and build the model. Unknown task, model or key is a usage error.
inline Run resolve(const nlohmann::json& doc, std::optional<std::uint64_t> seed_override = std::nullopt) {
  if (!doc.is_object()) throw UsageError("scenario must be a JSON object");
  if (!doc.contains("task") || !doc["task"].is_string()) throw UsageError("scenario needs a string 'task'");
  if (!doc.contains("model") || !doc["model"].is_string()) throw UsageError("scenario needs a string 'model'");
  Run r;
  r.task = doc["task"].get<std::string>();
  const auto& table = tasks();
  const auto it = table.find(r.task);
  if (it == table.end()) throw UsageError("unknown task '" + r.task + "'");
  r.model_name = doc["model"].get<std::string>();
  const auto names = catalog_names();
  if (std::find(names.begin(), names.end(), r.model_name) == names.end())
    throw UsageError("unknown model '" + r.model_name + "'");
  nlohmann::json params = it->second.defaults;
  for (auto e = doc.begin(); e != doc.end(); ++e) {
    if (reserved_keys().count(e.key())) continue;
    if (params.contains(e.key())) {
      const auto& def = params[e.key()];
      const auto& v = e.value();
      // string-valued defaults such as seeds = "boundary" may be replaced by a list
      const bool ok = def.is_number()    ? v.is_number()
                      : def.is_boolean() ? v.is_boolean()
                      : def.is_array()   ? v.is_array()
                                         : v.is_string() || v.is_array();
      if (!ok) throw InputError(r.task + ": parameter '" + e.key() + "' has the wrong type");
      params[e.key()] = e.value();
    } else {
      r.model_params[e.key()] = e.value();
    }
  }
  r.params = Params(r.task, params);
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned()) throw InputError("seed must be a non-negative integer");
    r.seed = doc["seed"].get<std::uint64_t>();
  }
  if (seed_override) r.seed = *seed_override;
  try {
    r.model = build_model(r.model_name, r.model_params);
  } catch (const ConfigurationError& e) {
    throw UsageError(e.what());
  }
  return r;
}

inline nlohmann::json versions() {
  return {{"rmfg", kVersion},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"boost", BOOST_LIB_VERSION},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
          {"compiler", __VERSION__}};
}

inline std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Execute one resolved run, writing reports.json and manifest.json into
/// r.out. Returns the exit code.
inline int execute(Run& r) {
  std::filesystem::create_directories(r.out);
  const auto start = std::chrono::steady_clock::now();
  int code = kPass;
  nlohmann::json reports = {{"task", r.task}, {"model", r.model_name}};
  try {
    TaskResult res = tasks().at(r.task).fn(r);
    bool pass = true;
    reports["checks"] = nlohmann::json::array();
    for (const auto& c : res.checks) {
      pass = pass && c.pass;
      reports["checks"].push_back(c.to_json());
      if (!r.quiet)
        std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << "  worst_margin=" << io::format_number(c.worst_margin)
                  << '\n';
    }
    reports["pass"] = pass;
    reports["summary"] = res.summary;
    code = pass ? kPass : kCheckFailure;
  } catch (const UsageError&) {
    throw;
  } catch (const ConfigurationError& e) {
    throw UsageError(e.what());
  } catch (const std::exception& e) {
    reports["pass"] = false;
    reports["error"] = e.what();
    std::cerr << "error: " << e.what() << '\n';
    code = kExecutionError;
  }
  io::write_json(r.out / "reports.json", reports);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  nlohmann::json manifest = {
      {"config", {{"task", r.task}, {"model", r.model_name}, {"model_params", r.model_params}, {"params", r.params.values()}}},
      {"seed", r.seed},
      {"versions", versions()},
      {"outputs", r.outputs},
      {"exit_code", code},
      {"timestamp", {{"utc", utc_now()}, {"wall_time_s", wall}}}};
  io::write_json(r.out / "manifest.json", manifest);
  return code;
}

/// Run a scenario document: a single flat run, or {"runs": [...]} executed
/// in order into named subdirectories. Exit code is the most severe one.
inline int run_document(const nlohmann::json& doc, const std::filesystem::path& out,
                        std::optional<std::uint64_t> seed_override, bool quiet) {
  if (doc.is_object() && doc.contains("runs")) {
    for (auto e = doc.begin(); e != doc.end(); ++e)
      if (e.key() != "runs" && e.key() != "name" && e.key() != "description")
        throw UsageError("unknown key '" + e.key() + "' next to 'runs'");
    if (!doc["runs"].is_array() || doc["runs"].empty()) throw UsageError("'runs' must be a non-empty list");
    std::vector<Run> runs;
    std::set<std::string> names;
    for (std::size_t k = 0; k < doc["runs"].size(); ++k) {
      const auto& d = doc["runs"][k];
      Run r = resolve(d, seed_override);
      const std::string name = d.contains("name") ? d["name"].get<std::string>() : "run" + std::to_string(k);
      if (!names.insert(name).second) throw UsageError("duplicate run name '" + name + "'");
      r.out = out / name;
      r.quiet = quiet;
      runs.push_back(std::move(r));
    }
    const auto start = std::chrono::steady_clock::now();
    int worst = kPass;
    nlohmann::json list = nlohmann::json::array();
    for (auto& r : runs) {
      const int c = execute(r);
      list.push_back({{"name", r.out.filename().string()}, {"exit_code", c}});
      if (c == kExecutionError || worst == kExecutionError) worst = kExecutionError;
      else worst = std::max(worst, c);
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    io::write_json(out / "manifest.json", {{"runs", list},
                                           {"exit_code", worst},
                                           {"versions", versions()},
                                           {"timestamp", {{"utc", utc_now()}, {"wall_time_s", wall}}}});
    return worst;
  }
  Run r = resolve(doc, seed_override);
  r.out = out;
  r.quiet = quiet;
  return execute(r);
}

}  // namespace rmfg::cli
