#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "rmfg/models/controls.hpp"
#include "rmfg/ode/integrate.hpp"
#include "rmfg/ode/newton.hpp"
#include "rmfg/verify/report.hpp"

namespace rmfg::controls {

/// A priori band c0 <= psi, z <= C0 from elementary comparison.
struct Band {
  double c0 = 0.0, C0 = 0.0;
  double a_sup = 0.0;  ///< sup |a| over the reachable phi range
  bool available = false;
  std::string message;

  nlohmann::json to_json() const {
    return {{"c0", c0}, {"C0", C0}, {"a_sup", a_sup}, {"available", available}, {"message", message}};
  }
};

/// Bounds used:
///   z_hi = z0 e^{aT}, psi <= g(z_hi) e^{aT},
///   z_lo = z0 e^{-(C_psi^{p-1} + a) T},
///   psi >= w(T) with w' = -w^p/p - a w, w(0) = g(z_lo) (backward time),
///   phi <= alpha0 C_psi^q e^{(q/p') a T},
/// with a = sup |a| over [0, phi_max], iterated to a fixed point.
inline Band band_estimate(const PowerControlsModel& model, double z0, double alpha0, double T) {
  model.validate();
  Band b;
  if (!(z0 > 0.0)) {
    b.message = "z0 must be > 0 for a positive band";
    return b;
  }
  const double p = model.p, q = model.q, pp = model.pprime();
  auto sup_a = [&](double phi_max) {
    double s = 0.0;
    for (int k = 0; k <= 400; ++k) s = std::max(s, std::abs(model.a(phi_max * k / 400.0)));
    return s;
  };
  double abar = sup_a(0.0);
  double z_hi = 0, z_lo = 0, C_psi = 0, c_psi = 0;
  bool settled = false;
  for (int it = 0; it < 100; ++it) {
    z_hi = z0 * std::exp(abar * T);
    C_psi = model.g(z_hi) * std::exp(abar * T);
    const double phi_max = alpha0 * std::pow(C_psi, q) * std::exp(q / pp * abar * T);
    const double next = sup_a(phi_max);
    if (!std::isfinite(next) || next > 1e6) break;
    if (std::abs(next - abar) <= 1e-12 * std::max(1.0, next)) {
      abar = next;
      settled = true;
      break;
    }
    abar = next;
  }
  if (!settled) {
    b.message = "sup |a| over the reachable phi range did not stabilize";
    return b;
  }
  z_lo = z0 * std::exp(-(std::pow(C_psi, p - 1.0) + abar) * T);
  const double g_lo = model.g(z_lo);
  if (!(g_lo > 0.0)) {
    b.message = "g vanishes on the reachable z range, no positive lower band";
    b.a_sup = abar;
    return b;
  }
  ode::IntegratorSpec s;
  s.dt = std::min(1e-3, T / 100.0);
  c_psi = ode::integrate_to(
      [&](double, const Vec& w) { return vec1(-std::pow(std::abs(w[0]), p) / p - abar * w[0]); }, vec1(g_lo), 0.0, T,
      s.dt)[0];
  b.c0 = std::min(c_psi, z_lo);
  b.C0 = std::max(C_psi, z_hi);
  b.a_sup = abar;
  b.available = b.c0 > 0.0;
  if (!b.available) b.message = "lower comparison solution reached 0";
  return b;
}

/// Forward path of (psi, z, phi) from psi(0) = psi0.
struct ReducedControlsPath {
  double psi0 = 0.0;
  ode::Trajectory path;
  double residual = std::numeric_limits<double>::infinity();
  bool converged = false;
  int iterations = 0;
  std::string message;

  double psi(double t) const { return path.at(t)[0]; }
  double z(double t) const { return path.at(t)[1]; }
  double phi(double t) const { return path.at(t)[2]; }
};

struct ReducedSpec {
  double dt = 1e-3;
  double tol = 1e-10;
  int max_iter = 200;
};

namespace detail {

inline ode::Trajectory reduced_forward(const PowerControlsModel& m, double z0, double alpha0, double psi0, double T,
                                       double dt) {
  const double p = m.p, q = m.q, pp = m.pprime();
  ode::IntegratorSpec s;
  s.dt = dt;
  const Vec y0 = vec3(psi0, z0, alpha0 * std::pow(std::abs(psi0), q));
  return ode::integrate(
      [&m, p, q, pp](double, const Vec& y) {
        const double a = m.a(y[2]);
        return vec3(std::pow(std::abs(y[0]), p) / p - a * y[0], -y[1] * (signed_pow(y[0], p - 1.0) - a),
                    -q / pp * a * y[2]);
      },
      y0, 0.0, T, s);
}

inline bool survives(const PowerControlsModel& m, double z0, double alpha0, double psi0, double T, double dt) {
  try {
    return reduced_forward(m, z0, alpha0, psi0, T, dt).back().allFinite();
  } catch (const BlowUpError&) {
    return false;
  }
}

inline ReducedControlsPath reduced_shoot(const PowerControlsModel& m, double z0, double alpha0, double T, double x0,
                                         double x1, const ReducedSpec& spec) {
  auto residual = [&](double psi0) {
    const Vec yT = reduced_forward(m, z0, alpha0, psi0, T, spec.dt).back();
    return yT[0] - m.g(yT[1]);
  };
  const auto root = ode::solve_scalar(residual, x0, x1, spec.tol, spec.max_iter);
  ReducedControlsPath out;
  out.psi0 = root.x;
  out.iterations = root.iterations;
  out.message = root.message;
  try {
    out.path = reduced_forward(m, z0, alpha0, root.x, T, spec.dt);
    const Vec yT = out.path.back();
    out.residual = std::abs(yT[0] - m.g(yT[1]));
    out.converged = root.converged && out.residual <= spec.tol;
  } catch (const BlowUpError& e) {
    out.message = e.what();
  }
  if (!out.converged && out.message.empty()) out.message = "terminal residual above tolerance";
  return out;
}

}  // namespace detail

struct ReducedControlsResult {
  ReducedControlsPath solution;
  Band band;
  CheckReport band_check;
};

inline CheckReport band_check(const ReducedControlsPath& s, const Band& b, double T, int out_count = 101) {
  CheckReport rep;
  rep.name = "a_priori_band";
  rep.tolerance = 1e-12;
  if (!b.available || s.path.size() == 0) {
    rep.indeterminate = true;
    rep.pass = false;
    rep.witness = {{"reason", b.available ? "no path" : b.message}};
    return rep;
  }
  for (int k = 0; k < out_count; ++k) {
    const double t = T * k / (out_count - 1);
    const double psi = s.psi(t), z = s.z(t);
    const double m = std::min({psi - b.c0, b.C0 - psi, z - b.c0, b.C0 - z});
    ++rep.samples;
    rep.offer(m, [&] { return nlohmann::json{{"t", t}, {"psi", psi}, {"z", z}, {"band", b.to_json()}}; });
  }
  rep.finalize();
  return rep;
}

/// Shoot on psi(0) for the reduced power system.
inline ReducedControlsResult solve_reduced_controls(const PowerControlsModel& model, double z0, double alpha0, double T,
                                                    const ReducedSpec& spec = {}) {
  model.validate();
  if (!(T > 0.0)) throw InputError("solve_reduced_controls: T must be > 0");
  if (!(z0 >= 0.0) || !(alpha0 >= 0.0)) throw InputError("solve_reduced_controls: z0 and alpha0 must be >= 0");
  ReducedControlsResult out;
  const double guess = std::max(model.g(z0), 1e-3);
  out.solution = detail::reduced_shoot(model, z0, alpha0, T, 0.0, guess, spec);
  out.band = band_estimate(model, z0, alpha0, T);
  out.band_check = band_check(out.solution, out.band, T);
  return out;
}

/// Entries of the dissipation matrix at (psi, z) for the p = q system,
/// with phi = (p'/p) z psi^p.
struct PQMatrix {
  double m11 = 0, m12 = 0, m22 = 0;
  double trace() const { return m11 + m22; }
  double det() const { return m11 * m22 - m12 * m12; }
};

inline PQMatrix pq_matrix(const PowerControlsModel& model, double psi, double z) {
  if (!model.da) throw ConfigurationError("pq_matrix: a' is required");
  const double p = model.p, k = model.pprime() / p;
  const double s = k * z * std::pow(psi, p);
  const double a = model.a(s), da = model.da(s) * k;
  // A = psi^p/p - a psi, B = psi^{p-1} - a, both evaluated at phi = k z psi^p
  const double A_psi = std::pow(psi, p - 1.0) - a - da * p * z * std::pow(psi, p);
  const double A_z = -da * std::pow(psi, p + 1.0);
  const double B = std::pow(psi, p - 1.0) - a;
  const double B_psi = (p - 1.0) * std::pow(psi, p - 2.0) - da * p * z * std::pow(psi, p - 1.0);
  const double B_z = -da * std::pow(psi, p);
  PQMatrix M;
  M.m11 = -z * B_psi;
  M.m12 = 0.5 * (A_psi - B - z * B_z);
  M.m22 = A_z;
  return M;
}

struct PQRun {
  double guess = 0.0;
  double start = 0.0;  ///< guess after pulling back from forward blow-up
  ReducedControlsPath solution;
  std::vector<double> times, trace, det;
  double phi_identity_error = 0.0;  ///< sup |phi - (p'/p) z psi^p|
};

struct PQResult {
  std::vector<PQRun> runs;
  Band band;
  double max_pairwise_distance = 0.0;
  bool all_converged = false;
  bool runs_agree = false;
  bool matrix_negative = false;
  double delta_trace_bound = 0.0;  ///< (p-1)/(p C0^{1-1/p})
  double delta_det_bound = 0.0;    ///< (p-1)/(C0^{1-1/p} (p + (p-1)^2/4))
  bool delta_within_bounds = true; ///< declared delta1 satisfies both bounds
  std::string verdict;             ///< "unique-consistent" or "criterion fails"

  nlohmann::json to_json() const {
    nlohmann::json runs_j = nlohmann::json::array();
    for (const auto& r : runs)
      runs_j.push_back({{"guess", r.guess},
                        {"start", r.start},
                        {"converged", r.solution.converged},
                        {"psi0", r.solution.psi0},
                        {"residual", r.solution.residual},
                        {"max_trace", r.trace.empty() ? 0.0 : *std::max_element(r.trace.begin(), r.trace.end())},
                        {"min_det", r.det.empty() ? 0.0 : *std::min_element(r.det.begin(), r.det.end())},
                        {"phi_identity_error", r.phi_identity_error},
                        {"message", r.solution.message}});
    return {{"band", band.to_json()},
            {"runs", runs_j},
            {"max_pairwise_distance", max_pairwise_distance},
            {"all_converged", all_converged},
            {"runs_agree", runs_agree},
            {"matrix_negative", matrix_negative},
            {"delta_trace_bound", delta_trace_bound},
            {"delta_det_bound", delta_det_bound},
            {"delta_within_bounds", delta_within_bounds},
            {"verdict", verdict}};
  }
};

struct PQSpec {
  ReducedSpec shooting;
  int starts = 5;
  int out_count = 101;
  double agree_tol = 1e-6;
};

/// Multistart shooting for p = q with guesses spread over [c0/2, 2 C0].
/// The verdict only ever confirms consistency with uniqueness; a failed
/// matrix test or disagreeing runs yield "criterion fails".
inline PQResult solve_pq(const PowerControlsModel& model, double z0, double alpha0, double T, const PQSpec& spec = {}) {
  model.validate();
  if (model.p != model.q) throw InputError("solve_pq: requires p = q");
  if (spec.starts < 1 || spec.out_count < 2) throw InputError("solve_pq: need starts >= 1 and out_count >= 2");
  PQResult out;
  out.band = band_estimate(model, z0, alpha0, T);
  const double p = model.p, k = model.pprime() / p;
  double lo = 0.5 * out.band.c0, hi = 2.0 * out.band.C0;
  if (!out.band.available) {
    lo = 0.5 * std::max(model.g(z0), 1e-3);
    hi = 4.0 * lo;
  }
  if (out.band.available) {
    const double c = std::pow(out.band.C0, 1.0 - 1.0 / p);
    out.delta_trace_bound = (p - 1.0) / (p * c);
    out.delta_det_bound = (p - 1.0) / (c * (p + 0.25 * (p - 1.0) * (p - 1.0)));
  }
  if (model.delta_band)
    out.delta_within_bounds = out.band.available && model.delta_band->second <= out.delta_trace_bound &&
                              model.delta_band->second <= out.delta_det_bound;
  out.all_converged = true;
  out.matrix_negative = true;
  for (int s = 0; s < spec.starts; ++s) {
    PQRun run;
    run.guess = spec.starts == 1 ? lo : lo + (hi - lo) * s / (spec.starts - 1);
    // psi' ~ psi^p/p blows up forward for large psi(0); pull such starts back
    run.start = run.guess;
    for (int h = 0; h < 60 && !detail::survives(model, z0, alpha0, run.start, T, spec.shooting.dt); ++h) run.start *= 0.5;
    run.solution = detail::reduced_shoot(model, z0, alpha0, T, run.start, run.start * (1.0 + 1e-3) + 1e-6,
                                         spec.shooting);
    if (!run.solution.converged) {
      out.all_converged = false;
      out.runs.push_back(std::move(run));
      continue;
    }
    for (int j = 0; j < spec.out_count; ++j) {
      const double t = T * j / (spec.out_count - 1);
      const double psi = run.solution.psi(t), z = run.solution.z(t);
      const auto M = pq_matrix(model, psi, z);
      run.times.push_back(t);
      run.trace.push_back(M.trace());
      run.det.push_back(M.det());
      if (!(M.trace() < 0.0 && M.det() > 0.0)) out.matrix_negative = false;
      run.phi_identity_error =
          std::max(run.phi_identity_error, std::abs(run.solution.phi(t) - k * z * std::pow(std::abs(psi), p)));
    }
    out.runs.push_back(std::move(run));
  }
  for (std::size_t a = 0; a < out.runs.size(); ++a)
    for (std::size_t b = a + 1; b < out.runs.size(); ++b) {
      if (!out.runs[a].solution.converged || !out.runs[b].solution.converged) continue;
      for (double t : out.runs[a].times) {
        const double d = std::max(std::abs(out.runs[a].solution.psi(t) - out.runs[b].solution.psi(t)),
                                  std::abs(out.runs[a].solution.z(t) - out.runs[b].solution.z(t)));
        out.max_pairwise_distance = std::max(out.max_pairwise_distance, d);
      }
    }
  out.runs_agree = out.all_converged && out.max_pairwise_distance <= spec.agree_tol;
  out.verdict =
      out.runs_agree && out.matrix_negative && out.delta_within_bounds ? "unique-consistent" : "criterion fails";
  return out;
}

/// X(t) = (psi1 - psi2)(z1 - z2) must not increase between output times.
inline CheckReport dissipation_check(const ReducedControlsPath& s1, const ReducedControlsPath& s2, double T,
                                     int out_count = 101) {
  CheckReport rep;
  rep.name = "pq_dissipation";
  rep.tolerance = 1e-12;
  rep.worst_margin = 0.0;
  auto X = [&](double t) { return (s1.psi(t) - s2.psi(t)) * (s1.z(t) - s2.z(t)); };
  double prev = X(0.0);
  for (int k = 1; k < out_count; ++k) {
    const double t = T * k / (out_count - 1);
    const double cur = X(t);
    ++rep.samples;
    rep.offer(prev - cur, [&] { return nlohmann::json{{"t", t}, {"X_prev", prev}, {"X", cur}}; });
    prev = cur;
  }
  rep.finalize();
  return rep;
}

}  // namespace rmfg::controls
