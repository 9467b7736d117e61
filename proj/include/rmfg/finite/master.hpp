#pragma once

#include <map>
#include <optional>
#include <vector>

#include "rmfg/core/reduction_map.hpp"
#include "rmfg/models/finite.hpp"
#include "rmfg/ode/integrate.hpp"
#include "rmfg/ode/newton.hpp"
#include "rmfg/verify/report.hpp"

namespace rmfg::finite {

/// Characteristics X' = F(X,V), V' = G(X,V), X(0) = x, V(0) = U0(x), one
/// trajectory per seed. Each trajectory stores the joint state [X; V].
struct CharacteristicField {
  Eigen::Index N = 0;
  double T = 0.0;
  std::vector<Vec> seeds;
  std::vector<ode::Trajectory> paths;

  Vec X(std::size_t k, double t) const { return paths.at(k).at(t).head(N); }
  Vec V(std::size_t k, double t) const { return paths.at(k).at(t).tail(N); }
};

inline ode::Field characteristic_field(const FiniteStateModel& model) {
  const Eigen::Index N = model.N;
  const VecMap2 F = model.F, G = model.G;
  return [N, F, G](double, const Vec& s) {
    const Vec x = s.head(N), v = s.tail(N);
    Vec out(2 * N);
    out << F(x, v), G(x, v);
    return out;
  };
}

inline Vec seed_state(const FiniteStateModel& model, const Vec& x) {
  require_dim(x, model.N, "seed");
  if (!x.allFinite()) throw InputError("seed: non-finite coordinate");
  const Vec u0 = model.U0(x);
  if (!u0.allFinite()) throw EvaluationError("U0 not finite at seed");
  Vec s(2 * model.N);
  s << x, u0;
  return s;
}

inline CharacteristicField solve_characteristics(const FiniteStateModel& model, const std::vector<Vec>& seeds,
                                                 double T, const ode::IntegratorSpec& spec = {}) {
  model.validate();
  if (!(T >= 0.0)) throw InputError("solve_characteristics: T must be >= 0");
  CharacteristicField cf;
  cf.N = model.N;
  cf.T = T;
  cf.seeds = seeds;
  const auto f = characteristic_field(model);
  for (const Vec& x : seeds) cf.paths.push_back(ode::integrate(f, seed_state(model, x), 0.0, T, spec));
  return cf;
}

inline CharacteristicField solve_reduced_finite(const ReducedFiniteModel& model, const std::vector<Vec>& seeds, double T,
                                                const ode::IntegratorSpec& spec = {}) {
  return solve_characteristics(model.as_finite(), seeds, T, spec);
}

/// Joint state [X(t;x); V(t;x)].
inline Vec flow(const FiniteStateModel& model, const Vec& x, double t, double dt) {
  return ode::integrate_to(characteristic_field(model), seed_state(model, x), 0.0, t, dt);
}

/// d X(t; x) / dx from the variational equation integrated alongside the
/// flow, so it is the exact derivative of the discrete flow.
inline Mat flow_jacobian(const FiniteStateModel& model, const Vec& x, double t, double dt) {
  const Eigen::Index N = model.N;
  const auto f = [N, &model](double, const Vec& s) {
    const Vec x = s.head(N), v = s.segment(N, N);
    Mat A(2 * N, 2 * N);
    A << model.jac_F_x(x, v), model.jac_F_u(x, v), model.jac_G_x(x, v), model.jac_G_u(x, v);
    Vec out(s.size());
    out << model.F(x, v), model.G(x, v);
    Eigen::Map<Mat>(out.data() + 2 * N, 2 * N, N) = A * Eigen::Map<const Mat>(s.data() + 2 * N, 2 * N, N);
    return out;
  };
  Vec s0(2 * N + 2 * N * N);
  Mat S0(2 * N, N);
  S0 << Mat::Identity(N, N), model.jac_U0(x);
  s0 << seed_state(model, x), Eigen::Map<const Vec>(S0.data(), S0.size());
  const Vec s = ode::integrate_to(f, s0, 0.0, t, dt);
  return Eigen::Map<const Mat>(s.data() + 2 * N, 2 * N, N).topRows(N);
}

struct UEvaluation {
  Vec value;     ///< U(t, x_hat)
  Vec preimage;  ///< x with X(t; x) = x_hat
  double residual = 0.0;
  bool converged = false;
  std::string message;
};

/// U(t, x_hat) = V(t; x) where X(t; x) = x_hat, found by Newton on the seed.
inline UEvaluation eval_U(const FiniteStateModel& model, double t, const Vec& x_hat, double dt = 1e-3,
                          const ode::NewtonSpec& newton = {}) {
  model.validate();
  require_dim(x_hat, model.N, "eval_U");
  if (!(t >= 0.0)) throw InputError("eval_U: t must be >= 0");
  UEvaluation out;
  if (t == 0.0) {
    out.value = model.U0(x_hat);
    out.preimage = x_hat;
    out.converged = true;
    return out;
  }
  const Eigen::Index N = model.N;
  Vec last_seed, last_state;
  auto Xmap = [&](const Vec& x) {
    last_state = flow(model, x, t, dt);
    last_seed = x;
    return Vec(last_state.head(N));
  };
  ode::NewtonSpec spec = newton;
  if (!spec.jacobian) spec.jacobian = [&](const Vec& x) { return flow_jacobian(model, x, t, dt); };
  const auto nr = ode::newton_invert(Xmap, x_hat, x_hat, spec);
  out.preimage = nr.x;
  out.residual = nr.residual;
  out.converged = nr.converged;
  if (!nr.converged) {
    out.message = "characteristic inversion failed at t = " + std::to_string(t) + ": " + nr.message +
                  " (T may exceed the classical horizon for non-monotone data)";
    return out;
  }
  const bool cached = last_seed.size() == nr.x.size() && last_seed == nr.x;
  out.value = cached ? Vec(last_state.tail(N)) : Vec(flow(model, nr.x, t, dt).tail(N));
  return out;
}

/// Tensor grid with `per_axis` nodes on [lo, hi]^N.
inline std::vector<Vec> tensor_grid(Eigen::Index N, long per_axis, double lo, double hi) {
  if (per_axis < 1) throw InputError("tensor_grid: need at least one node per axis");
  std::vector<Vec> out;
  long total = 1;
  for (Eigen::Index i = 0; i < N; ++i) total *= per_axis;
  for (long k = 0; k < total; ++k) {
    Vec x(N);
    long r = k;
    for (Eigen::Index i = 0; i < N; ++i) {
      const long j = r % per_axis;
      r /= per_axis;
      x[i] = per_axis == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(per_axis - 1);
    }
    out.push_back(x);
  }
  return out;
}

inline std::vector<double> uniform_times(double T, long count) {
  std::vector<double> out;
  for (long k = 0; k < count; ++k) out.push_back(count == 1 ? T : T * static_cast<double>(k) / static_cast<double>(count - 1));
  return out;
}

/// sup over grid x times of |U(t,x) - L* Ũ(t, Lx)|, each side solved independently.
inline CheckReport verify_reduction_identity(const FiniteStateModel& model, const ReductionMap& L,
                                             const ReducedFiniteModel& reduced, const std::vector<Vec>& grid,
                                             const std::vector<double>& times, double dt = 1e-3,
                                             double tolerance = 1e-6) {
  if (model.N != L.N() || reduced.n != L.n()) throw InputError("verify_reduction_identity: dimension mismatch");
  const FiniteStateModel red = reduced.as_finite();
  CheckReport rep;
  rep.name = "reduction_identity";
  rep.samples = static_cast<long>(grid.size() * times.size());
  rep.tolerance = tolerance;
  rep.worst_margin = 0.0;
  // grid nodes on a common fiber share one reduced evaluation
  std::map<std::vector<double>, UEvaluation> reduced_at;
  for (double t : times) {
    reduced_at.clear();
    for (const Vec& x : grid) {
      const auto full = eval_U(model, t, x, dt);
      const Vec y = L.reduce(x);
      auto it = reduced_at.find(std::vector<double>(y.data(), y.data() + y.size()));
      if (it == reduced_at.end())
        it = reduced_at.emplace(std::vector<double>(y.data(), y.data() + y.size()), eval_U(red, t, y, dt)).first;
      const auto& part = it->second;
      if (!full.converged || !part.converged)
        throw EvaluationError(full.converged ? part.message : full.message);
      const double err = (full.value - L.adjoint_apply(part.value)).cwiseAbs().maxCoeff();
      rep.offer(-err, [&] { return nlohmann::json{{"t", t}, {"x", to_json(x)}, {"error", err}}; });
    }
  }
  rep.finalize();
  return rep;
}

/// sup_t |L X(t,x1) - L X(t,x2)| for seeds on a common fiber.
inline CheckReport fiber_evolution_check(const FiniteStateModel& model, const ReductionMap& L,
                                         const std::vector<std::pair<Vec, Vec>>& pairs, double T,
                                         const ode::IntegratorSpec& spec = {}, double tolerance = 1e-8) {
  CheckReport rep;
  rep.name = "fiber_evolution";
  rep.samples = static_cast<long>(pairs.size());
  rep.tolerance = tolerance;
  rep.worst_margin = 0.0;
  for (const auto& [x1, x2] : pairs) {
    if ((L.reduce(x1) - L.reduce(x2)).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + x1.norm()))
      throw InputError("fiber_evolution_check: seeds are not on a common fiber");
    const auto cf = solve_characteristics(model, {x1, x2}, T, spec);
    for (std::size_t k = 0; k < cf.paths[0].size(); ++k) {
      const double t = cf.paths[0].t[k];
      const double gap = (L.reduce(cf.paths[0].y[k].head(model.N)) - L.reduce(cf.paths[1].y[k].head(model.N)))
                             .cwiseAbs()
                             .maxCoeff();
      rep.offer(-gap, [&] { return nlohmann::json{{"x1", to_json(x1)}, {"x2", to_json(x2)}, {"t", t}, {"gap", gap}}; });
    }
  }
  rep.finalize();
  return rep;
}

/// max over trajectory nodes of |<V'(t), k>| for k in an orthonormal basis of ker L.
inline CheckReport tangential_motion_check(const FiniteStateModel& model, const ReductionMap& L,
                                           const std::vector<Vec>& seeds, double T,
                                           const ode::IntegratorSpec& spec = {}, double tolerance = 1e-10) {
  CheckReport rep;
  rep.name = "no_tangential_V_motion";
  rep.tolerance = tolerance;
  rep.worst_margin = 0.0;
  const Mat K = L.kernel_basis();
  const auto cf = solve_characteristics(model, seeds, T, spec);
  for (std::size_t s = 0; s < seeds.size(); ++s)
    for (std::size_t k = 0; k < cf.paths[s].size(); ++k) {
      const Vec vdot = cf.paths[s].dy[k].tail(model.N);
      const double m = (K.transpose() * vdot).cwiseAbs().maxCoeff();
      ++rep.samples;
      rep.offer(-m, [&] { return nlohmann::json{{"seed", to_json(seeds[s])}, {"t", cf.paths[s].t[k]}}; });
    }
  rep.finalize();
  return rep;
}

/// X̃(t) = L X(t) and V(t) = L* Ṽ(t) along trajectories seeded at x and Lx.
inline CheckReport reduced_relation_check(const FiniteStateModel& model, const ReductionMap& L,
                                          const ReducedFiniteModel& reduced, const std::vector<Vec>& seeds, double T,
                                          const ode::IntegratorSpec& spec = {}, double tolerance = 1e-8) {
  CheckReport rep;
  rep.name = "reduced_relation";
  rep.tolerance = tolerance;
  rep.worst_margin = 0.0;
  std::vector<Vec> red_seeds;
  for (const Vec& x : seeds) red_seeds.push_back(L.reduce(x));
  const auto full = solve_characteristics(model, seeds, T, spec);
  const auto part = solve_reduced_finite(reduced, red_seeds, T, spec);
  for (std::size_t s = 0; s < seeds.size(); ++s)
    for (std::size_t k = 0; k < full.paths[s].size(); ++k) {
      const Vec& a = full.paths[s].y[k];
      const Vec& b = part.paths[s].y[k];
      const double ex = (L.reduce(a.head(model.N)) - b.head(reduced.n)).cwiseAbs().maxCoeff();
      const double ev = (a.tail(model.N) - L.adjoint_apply(b.tail(reduced.n))).cwiseAbs().maxCoeff();
      ++rep.samples;
      rep.offer(-std::max(ex, ev), [&] {
        return nlohmann::json{{"seed", to_json(seeds[s])}, {"t", full.paths[s].t[k]}, {"X_gap", ex}, {"V_gap", ev}};
      });
    }
  rep.finalize();
  return rep;
}

/// For a monotone pair, t -> <ΔX(t), ΔV(t)> is nondecreasing along each pair of
/// characteristics; the margin is the most negative increment between nodes.
inline CheckReport pairing_diagnostic(const FiniteStateModel& model, const std::vector<std::pair<Vec, Vec>>& pairs,
                                      double T, const ode::IntegratorSpec& spec = {}, double tolerance = 1e-10) {
  CheckReport rep;
  rep.name = "pairing_nondecreasing";
  rep.tolerance = tolerance;
  rep.worst_margin = 0.0;
  for (const auto& [x1, x2] : pairs) {
    const auto cf = solve_characteristics(model, {x1, x2}, T, spec);
    double prev = 0.0;
    for (std::size_t k = 0; k < cf.paths[0].size(); ++k) {
      const Vec d = cf.paths[0].y[k] - cf.paths[1].y[k];
      const double pr = d.head(model.N).dot(d.tail(model.N));
      if (k > 0) {
        const double inc = (pr - prev) / (1.0 + std::abs(pr));
        ++rep.samples;
        rep.offer(inc, [&] {
          return nlohmann::json{{"x1", to_json(x1)}, {"x2", to_json(x2)}, {"t", cf.paths[0].t[k]}, {"pairing", pr}};
        });
      }
      prev = pr;
    }
  }
  rep.finalize();
  return rep;
}

using USampler = std::function<Vec(double t, const Vec& x)>;

/// sup of |dU/dt + (F(x,U).grad) U - G(x,U)| by central differences with step h
/// in t and x on interior (t, x) points.
inline double pde_residual(const FiniteStateModel& model, const USampler& U, const std::vector<Vec>& points,
                           const std::vector<double>& times, double h) {
  if (!(h > 0.0)) throw InputError("pde_residual: step must be > 0");
  double worst = 0.0;
  const Eigen::Index N = model.N;
  for (double t : times) {
    if (t - h < 0.0) throw InputError("pde_residual: time stencil leaves [0, T]");
    for (const Vec& x : points) {
      const Vec u = U(t, x);
      const Vec ut = (U(t + h, x) - U(t - h, x)) / (2.0 * h);
      const Vec f = model.F(x, u);
      Vec transport = Vec::Zero(N);
      for (Eigen::Index j = 0; j < N; ++j) {
        Vec xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        transport += f[j] * (U(t, xp) - U(t, xm)) / (2.0 * h);
      }
      const Vec r = ut + transport - model.G(x, u);
      if (!r.allFinite()) throw EvaluationError("pde_residual: non-finite residual (grid too coarse near blow-up?)");
      worst = std::max(worst, r.cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

struct ResidualStudy {
  std::vector<double> steps;
  std::vector<double> residuals;
  double slope = 0.0;  ///< least-squares slope of log residual against log step
};

inline ResidualStudy pde_residual_study(const FiniteStateModel& model, const USampler& U,
                                        const std::vector<Vec>& points, const std::vector<double>& times,
                                        const std::vector<double>& steps) {
  ResidualStudy s;
  s.steps = steps;
  for (double h : steps) s.residuals.push_back(pde_residual(model, U, points, times, h));
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(steps.size());
  for (std::size_t k = 0; k < steps.size(); ++k) {
    const double lx = std::log(steps[k]), ly = std::log(std::max(s.residuals[k], 1e-300));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  s.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return s;
}

/// First time on `times` at which characteristic inversion fails at x_hat;
/// empty when it succeeds throughout.
inline std::optional<double> existence_horizon(const FiniteStateModel& model, const Vec& x_hat,
                                               const std::vector<double>& times, double dt = 1e-3) {
  for (double t : times) {
    try {
      if (!eval_U(model, t, x_hat, dt).converged) return t;
    } catch (const BlowUpError&) {
      return t;
    }
  }
  return std::nullopt;
}

}  // namespace rmfg::finite
