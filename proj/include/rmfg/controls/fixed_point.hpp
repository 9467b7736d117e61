#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "rmfg/continuous/master.hpp"
#include "rmfg/controls/hj.hpp"
#include "rmfg/core/wasserstein.hpp"
#include "rmfg/models/controls.hpp"
#include "rmfg/ode/integrate.hpp"
#include "rmfg/verify/report.hpp"

namespace rmfg::controls {

/// g(m) = mean over particles of Phi(T, y, D_yG(y, m)).
inline Vec eval_g_of_m(const ControlsModel& model, const ParticleCloud& m, double T) {
  if (m.dim() != 1) throw InputError("eval_g_of_m: clouds must be one-dimensional");
  const Vec gm = model.g_moments(m);
  Vec acc = Vec::Zero(model.phi_dim);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double y = m.points()(i, 0);
    const Vec v = model.Phi(T, y, model.DxG(y, gm));
    if (!v.allFinite()) throw EvaluationError("eval_g_of_m: non-finite Phi at particle " + std::to_string(i));
    acc += v;
  }
  return acc / static_cast<double>(m.size());
}

struct TMapSpec {
  HJSpec hj;
  int out_count = 11;  ///< evenly spaced output times including 0 and T
};

struct ControlsDiagnostics {
  double min_uxx = 0.0;          ///< over the interior; convexity wants >= -1e-8
  double growth_constant = 0.0;  ///< |Du| <= C (1 + |x|^{q'-1})
  double moment_bound = 0.0;     ///< max_t mean |x|^lambda
  double terminal_moment = 0.0;  ///< mean |x|^lambda of m_T
  double influence_radius = 0.0;
  double max_cfl = 0.0;

  nlohmann::json to_json() const {
    return {{"min_uxx", min_uxx},          {"growth_constant", growth_constant},
            {"moment_bound", moment_bound}, {"terminal_moment", terminal_moment},
            {"influence_radius", influence_radius}, {"max_cfl", max_cfl}};
  }
};

/// (u, m, phi) produced by one application of the T-map.
struct ControlsState {
  double T = 1.0;
  HJSolution hj;
  ode::Trajectory phi_path;  ///< integrated backward from T
  continuous::ParticleHistory clouds;
  ControlsDiagnostics diag;

  Vec phi(double t) const { return phi_path.at(t); }
  const ParticleCloud& terminal_cloud() const { return clouds.clouds.back(); }
};

struct TMapResult {
  ControlsState state;
  ParticleCloud mT;
};

inline double mean_abs_pow(const ParticleCloud& m, double e) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < m.size(); ++i) acc += std::pow(std::abs(m.points()(i, 0)), e);
  return acc / static_cast<double>(m.size());
}

/// phi from -phi' = f(t, phi), phi(T) = g(m_bar); u from the HJ equation
/// with terminal G(., m_bar); m transported from m0 by -D_pH(x, Du, phi).
inline TMapResult apply_T_map(const ControlsModel& model, const ParticleCloud& m0, const ParticleCloud& m_bar, double T,
                              const TMapSpec& spec = {}) {
  model.validate();
  spec.hj.validate();
  if (!(T > 0.0)) throw InputError("apply_T_map: T must be > 0");
  if (spec.out_count < 2) throw InputError("apply_T_map: need at least 2 output times");
  if (m0.dim() != 1 || m_bar.dim() != 1) throw InputError("apply_T_map: clouds must be one-dimensional");
  const double e_gamma = model.gamma();
  if (!std::isfinite(mean_abs_pow(m_bar, e_gamma)))
    throw InputError("apply_T_map: m_bar has no finite moment of order gamma");

  ControlsState st;
  st.T = T;
  ode::IntegratorSpec is;
  is.dt = spec.hj.dt;
  const Vec phiT = eval_g_of_m(model, m_bar, T);
  st.phi_path = ode::integrate([&model](double t, const Vec& phi) { return Vec(-model.f(t, phi)); }, phiT, T, 0.0, is);

  const Vec gm = model.g_moments(m_bar);
  const ode::Trajectory& path = st.phi_path;
  HJProblem prob;
  prob.T = T;
  prob.H = [&](double x, double p, double t) { return model.H(x, p, path.at(t)); };
  prob.DpH = [&](double x, double p, double t) { return model.DpH(x, p, path.at(t)); };
  if (model.DxH) prob.DxH = [&](double x, double p, double t) { return model.DxH(x, p, path.at(t)); };
  prob.DppH = [&](double x, double p, double t) { return model.dpp_H(x, p, path.at(t)); };
  prob.terminal = [&](double x) { return model.G(x, gm); };
  st.hj = solve_hj(prob, spec.hj);

  const double R = spec.hj.grid.R;
  const HJSolution& hj = st.hj;
  continuous::ParticleField b = [&](double t, const Mat& Y) {
    const Vec phi = path.at(t);
    Mat out(Y.rows(), 1);
    for (Eigen::Index i = 0; i < Y.rows(); ++i) {
      const double x = Y(i, 0);
      if (!(std::abs(x) <= R))
        throw GeometryError("apply_T_map: particle " + std::to_string(i) + " left [-R, R] near t = " +
                            std::to_string(t) + " (box too small)");
      out(i, 0) = -model.DpH(x, hj.Du(t, x), phi);
    }
    return out;
  };
  std::vector<double> out_times;
  for (int k = 0; k < spec.out_count; ++k)
    out_times.push_back(k + 1 == spec.out_count ? T : T * k / (spec.out_count - 1));
  st.clouds = continuous::transport_particles(b, m0, T, spec.hj.dt, out_times);
  for (Eigen::Index i = 0; i < st.clouds.clouds.back().size(); ++i)
    if (!(std::abs(st.clouds.clouds.back().points()(i, 0)) <= R))
      throw GeometryError("apply_T_map: particle " + std::to_string(i) + " left [-R, R] at T (box too small)");

  st.diag.min_uxx = hj.min_second_difference();
  st.diag.growth_constant = hj.growth_constant(model.qprime() - 1.0);
  st.diag.influence_radius = hj.influence_radius;
  st.diag.max_cfl = hj.max_cfl;
  for (const auto& c : st.clouds.clouds) st.diag.moment_bound = std::max(st.diag.moment_bound, mean_abs_pow(c, model.lambda));
  st.diag.terminal_moment = mean_abs_pow(st.clouds.clouds.back(), model.lambda);
  ParticleCloud mT = st.clouds.clouds.back();
  return {std::move(st), std::move(mT)};
}

struct FixedPointSpec {
  TMapSpec tmap;
  double theta = 1.0;
  double tol = 1e-6;
  int max_iter = 50;

  void validate() const {
    if (!(theta > 0.0 && theta <= 1.0)) throw InputError("FixedPointSpec: theta must lie in (0, 1]");
    if (!(tol > 0.0)) throw InputError("FixedPointSpec: tol must be > 0");
    if (max_iter < 1) throw InputError("FixedPointSpec: max_iter must be >= 1");
  }
};

struct FixedPointResult {
  bool converged = false;
  int iterations = 0;         ///< number of Picard updates of the terminal measure
  std::vector<double> gaps;   ///< d_gamma(m_bar_k, T m_bar_k), one per T-map evaluation
  std::vector<double> terminal_moments;
  ParticleCloud m_bar;
  ControlsState state;  ///< triple at the accepted (or last) iterate
  std::string message;
};

/// Damped Picard on the terminal measure, starting from m_bar = m0.
inline FixedPointResult fixed_point_solve(const ControlsModel& model, const ParticleCloud& m0, double T,
                                          const FixedPointSpec& spec = {}) {
  spec.validate();
  FixedPointResult out;
  out.m_bar = m0;
  const double gamma = std::max(1.0, model.gamma());
  for (int k = 0; k < spec.max_iter; ++k) {
    auto r = apply_T_map(model, m0, out.m_bar, T, spec.tmap);
    const double gap = wasserstein(out.m_bar, r.mT, gamma);
    out.gaps.push_back(gap);
    out.terminal_moments.push_back(r.state.diag.terminal_moment);
    out.state = std::move(r.state);
    if (gap <= spec.tol) {
      out.converged = true;
      return out;
    }
    out.m_bar = quantile_mix(out.m_bar, r.mT, spec.theta);
    ++out.iterations;
  }
  out.message = "fixed_point_solve: gap " + std::to_string(out.gaps.back()) + " above tolerance after " +
                std::to_string(spec.max_iter) + " T-map evaluations";
  return out;
}

/// sup over output times of |phi(t) - mean Phi(t, y, Du(t, y))|.
inline CheckReport equivalence_check(const ControlsModel& model, const ControlsState& st, double tolerance = 5e-3) {
  CheckReport rep;
  rep.name = "controls_equivalence";
  rep.tolerance = tolerance;
  rep.worst_margin = 0.0;
  for (std::size_t k = 0; k < st.clouds.times.size(); ++k) {
    const double t = st.clouds.times[k];
    const ParticleCloud& m = st.clouds.clouds[k];
    Vec acc = Vec::Zero(model.phi_dim);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double y = m.points()(i, 0);
      acc += model.Phi(t, y, st.hj.Du(t, y));
    }
    acc /= static_cast<double>(m.size());
    const Vec phi = st.phi(t);
    const double err = (phi - acc).cwiseAbs().maxCoeff();
    ++rep.samples;
    rep.offer(-err, [&] { return nlohmann::json{{"t", t}, {"phi", to_json(phi)}, {"particle_sum", to_json(acc)}}; });
  }
  rep.finalize();
  return rep;
}

}  // namespace rmfg::controls
