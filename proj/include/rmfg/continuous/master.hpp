#pragma once

#include <algorithm>
#include <sstream>
#include <vector>

#include "rmfg/core/features.hpp"
#include "rmfg/core/particle_cloud.hpp"
#include "rmfg/models/master.hpp"
#include "rmfg/ode/newton.hpp"
#include "rmfg/ode/shooting.hpp"
#include "rmfg/verify/report.hpp"

namespace rmfg::continuous {

/// Characteristics Z' = -Z.h_u(Z,U), U' = h(Z,U) with Z(T) = z, U(T) = g(z),
/// integrated backward from T. Each path stores the joint state [Z; U].
inline ode::Field master_characteristic_field(const ReducedMasterSystem& sys) {
  const Eigen::Index m = sys.cset.dim();
  const Eigen::Index k = sys.m;
  return [sys, m, k](double, const Vec& s) {
    const Vec z = s.head(m), u = s.tail(k);
    Vec out(m + k);
    out << -sys.z_dot_hu(z, u), sys.h(z, u);
    return out;
  };
}

struct BoundaryTrace {
  Vec z;                  ///< boundary point
  ode::Trajectory f;      ///< f(t, z) with f' = h(z, f), f(T) = g(z)
};

struct ReducedMasterSolution {
  ReducedMasterSystem sys;
  double T = 0.0;
  double dt = 1e-3;
  std::vector<Vec> seeds;
  std::vector<ode::Trajectory> paths;  ///< joint [Z; U], times decreasing from T
  std::vector<BoundaryTrace> boundary;
  double membership_tol = MomentSet::kDefaultTolerance;

  Eigen::Index zdim() const { return sys.cset.dim(); }
  Vec Z(std::size_t k, double t) const { return paths.at(k).at(t).head(zdim()); }
  Vec U(std::size_t k, double t) const { return paths.at(k).at(t).tail(sys.m); }

  /// Z(t; z) and U(t; z) for an arbitrary terminal point z.
  Vec characteristic(const Vec& z, double t) const {
    Vec s(zdim() + sys.m);
    s << z, sys.g(z);
    return ode::integrate_to(master_characteristic_field(sys), s, T, t, dt);
  }

  struct Value {
    Vec u;
    Vec terminal_point;
    double residual = 0.0;
    bool converged = false;
    std::string message;
  };

  /// u(t, z) = U(t, s) where Z(t, s) = z.
  Value u(double t, const Vec& z) const {
    if (t < 0.0 || t > T) throw InputError("ReducedMasterSolution::u: t outside [0, T]");
    if (!sys.cset.contains(z, membership_tol)) throw GeometryError("ReducedMasterSolution::u: z outside C");
    Value out;
    if (t == T) {
      out.u = sys.g(z);
      out.terminal_point = z;
      out.converged = true;
      return out;
    }
    const Eigen::Index m = zdim();
    auto map = [&](const Vec& s) { return Vec(characteristic(s, t).head(m)); };
    const auto nr = ode::newton_invert(map, z, z);
    out.terminal_point = nr.x;
    out.residual = nr.residual;
    out.converged = nr.converged;
    if (!nr.converged) {
      out.message = "inversion of z -> Z(t, z) failed: " + nr.message;
      return out;
    }
    out.u = characteristic(nr.x, t).tail(sys.m);
    return out;
  }
};

/// Backward characteristics from every seed plus boundary data at boundary seeds.
/// An exit from C beyond `membership_tol` is a geometry violation.
inline ReducedMasterSolution solve_reduced_master(const ReducedMasterSystem& sys, const std::vector<Vec>& z_grid,
                                                  double T, double dt = 1e-3,
                                                  double membership_tol = MomentSet::kDefaultTolerance) {
  if (!(T > 0.0)) throw InputError("solve_reduced_master: T must be > 0");
  ReducedMasterSolution sol;
  sol.sys = sys;
  sol.T = T;
  sol.dt = dt;
  sol.seeds = z_grid;
  sol.membership_tol = membership_tol;
  const auto field = master_characteristic_field(sys);
  const Eigen::Index m = sys.cset.dim();
  for (const Vec& z : z_grid) {
    require_dim(z, m, "solve_reduced_master: seed");
    if (!sys.cset.contains(z, membership_tol)) throw GeometryError("solve_reduced_master: seed outside C");
    Vec s(m + sys.m);
    s << z, sys.g(z);
    auto tr = ode::integrate(field, s, T, 0.0, ode::IntegratorSpec{ode::Scheme::rk4, dt});
    for (std::size_t k = 0; k < tr.size(); ++k) {
      const Vec Zk = tr.y[k].head(m);
      if (!sys.cset.contains(Zk, membership_tol)) {
        std::ostringstream os;
        os << "solve_reduced_master: characteristic from z = [" << z.transpose() << "] leaves C at t = " << tr.t[k]
           << " (signed distance " << sys.cset.signed_distance(Zk) << ")";
        throw GeometryError(os.str());
      }
    }
    sol.paths.push_back(std::move(tr));
    if (sys.cset.on_boundary(z, membership_tol)) {
      BoundaryTrace b;
      b.z = z;
      const Vec zz = z;
      b.f = ode::integrate([sys, zz](double, const Vec& f) { return sys.h(zz, f); }, sys.g(z), T, 0.0,
                           ode::IntegratorSpec{ode::Scheme::rk4, dt});
      sol.boundary.push_back(std::move(b));
    }
  }
  return sol;
}

/// sup over t of the distance of Z(t, z) to the boundary, for boundary seeds.
inline CheckReport boundary_invariance_check(const ReducedMasterSystem& sys, const std::vector<Vec>& seeds, double T,
                                             double dt = 1e-3, double tolerance = 1e-10) {
  CheckReport rep;
  rep.name = "boundary_invariance";
  rep.tolerance = tolerance;
  rep.worst_margin = 0.0;
  for (const Vec& z : seeds)
    if (!sys.cset.on_boundary(z, 1e-12))
      throw InputError("boundary_invariance_check: seed is not on the boundary of C");
  const auto sol = solve_reduced_master(sys, seeds, T, dt);
  const Eigen::Index m = sys.cset.dim();
  for (std::size_t s = 0; s < seeds.size(); ++s)
    for (std::size_t k = 0; k < sol.paths[s].size(); ++k) {
      const Vec Z = sol.paths[s].y[k].head(m);
      const double d = sys.cset.boundary_distance(Z);
      ++rep.samples;
      rep.offer(-d, [&] {
        return nlohmann::json{{"seed", to_json(seeds[s])}, {"t", sol.paths[s].t[k]}, {"Z", to_json(Z)}, {"distance", d}};
      });
    }
  rep.finalize();
  return rep;
}

/// min over seed pairs and stored times of <ΔZ, Δz> / |Δz|^2.
inline CheckReport characteristic_monotonicity(const ReducedMasterSolution& sol) {
  CheckReport rep;
  rep.name = "characteristic_monotonicity";
  rep.tolerance = 0.0;
  const Eigen::Index m = sol.zdim();
  for (std::size_t a = 0; a < sol.seeds.size(); ++a)
    for (std::size_t b = a + 1; b < sol.seeds.size(); ++b) {
      const Vec dz = sol.seeds[a] - sol.seeds[b];
      if (dz.squaredNorm() == 0.0) continue;
      for (std::size_t k = 0; k < sol.paths[a].size(); ++k) {
        const Vec dZ = sol.paths[a].y[k].head(m) - sol.paths[b].y[k].head(m);
        const double mod = dZ.dot(dz) / dz.squaredNorm();
        ++rep.samples;
        rep.offer(mod, [&] {
          return nlohmann::json{{"z1", to_json(sol.seeds[a])}, {"z2", to_json(sol.seeds[b])}, {"t", sol.paths[a].t[k]}};
        });
      }
    }
  rep.finalize();
  return rep;
}

using ValueEvaluator = std::function<Vec(double t, const Vec& z)>;

/// U(t, x, m) = phi(x) . u(t, moments(m)).
inline double reconstruct_master_value(const ReducedMasterSystem& sys, const ValueEvaluator& u, double t, const Vec& x,
                                       const ParticleCloud& m) {
  const Vec z = moments(m, sys.feature);
  if (!sys.cset.contains(z)) throw GeometryError("reconstruct_master_value: moments of m lie outside C");
  return sys.feature.phi(x).dot(u(t, z));
}

struct FBReducedSolution {
  ode::ShootingResult shooting;
  Eigen::Index zdim = 1;

  bool converged() const { return shooting.converged; }
  Vec z(double t) const { return shooting.z_at(t, zdim); }
  Vec psi(double t) const { return shooting.y_at(t, zdim); }
};

/// -psi' + h(z, psi) = 0, psi(T) = g(z(T));  z' + z.h_u(z, psi) = 0, z(0) = z0.
inline FBReducedSolution solve_fb_reduced(const ReducedMasterSystem& sys, const Vec& z0, double T,
                                          const ode::ShootingSpec& spec = {}) {
  require_dim(z0, sys.cset.dim(), "solve_fb_reduced: z0");
  if (!sys.cset.contains(z0)) throw GeometryError("solve_fb_reduced: z0 outside C");
  ode::FBProblem p;
  p.forward = [sys](double, const Vec& z, const Vec& psi) { return Vec(-sys.z_dot_hu(z, psi)); };
  p.backward = [sys](double, const Vec& z, const Vec& psi) { return sys.h(z, psi); };
  p.coupling = sys.g;
  p.z0 = z0;
  p.backward_dim = sys.m;
  p.T = T;
  FBReducedSolution out;
  out.zdim = sys.cset.dim();
  out.shooting = ode::shoot_forward_backward(p, spec);
  if (out.shooting.converged) {
    for (std::size_t k = 0; k < out.shooting.trajectory.size(); ++k) {
      const Vec z = out.shooting.trajectory.y[k].head(out.zdim);
      if (!sys.cset.contains(z)) {
        out.shooting.converged = false;
        out.shooting.message = "z(t) leaves C at t = " + std::to_string(out.shooting.trajectory.t[k]);
        break;
      }
    }
  }
  return out;
}

/// Batched velocity: row i of the result is the velocity of particle i.
using ParticleField = std::function<Mat(double t, const Mat& Y)>;

struct ParticleHistory {
  std::vector<double> times;
  std::vector<ParticleCloud> clouds;
};

/// Pushes every particle along y' = b(t, y) with RK4 step dt, recording clouds
/// at the requested times (sorted, within [0, T]).
inline ParticleHistory transport_particles(const ParticleField& b, const ParticleCloud& m0, double T, double dt,
                                           std::vector<double> out_times) {
  if (!(dt > 0.0)) throw InputError("transport_particles: dt must be > 0");
  std::sort(out_times.begin(), out_times.end());
  for (double t : out_times)
    if (t < 0.0 || t > T) throw InputError("transport_particles: output time outside [0, T]");
  ParticleHistory hist;
  Mat Y = m0.points();
  double t = 0.0;
  std::size_t next = 0;
  auto record = [&] {
    while (next < out_times.size() && out_times[next] <= t + 1e-12 * std::max(1.0, T)) {
      hist.times.push_back(out_times[next]);
      hist.clouds.emplace_back(Y);
      ++next;
    }
  };
  auto check = [&](const Mat& S, double time) {
    if (S.allFinite()) return;
    for (Eigen::Index i = 0; i < S.rows(); ++i)
      if (!S.row(i).allFinite())
        throw BlowUpError("transport_particles: particle " + std::to_string(i) + " blew up near t = " +
                              std::to_string(time),
                          time);
  };
  record();
  const long steps = ode::step_count(0.0, T, dt);
  const double h = T / static_cast<double>(steps);
  for (long s = 0; s < steps; ++s) {
    const Mat k1 = b(t, Y);
    const Mat k2 = b(t + 0.5 * h, Y + 0.5 * h * k1);
    const Mat k3 = b(t + 0.5 * h, Y + 0.5 * h * k2);
    const Mat k4 = b(t + h, Y + h * k3);
    Y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    t = s + 1 == steps ? T : static_cast<double>(s + 1) * h;
    check(Y, t);
    record();
  }
  return hist;
}

/// Velocity field -D_pH(x, m, D(phi . psi)) along the reduced solution.
inline ParticleField fb_particle_field(const ReducedMasterSystem& sys, const FBReducedSolution& fb) {
  return [sys, fb](double t, const Mat& Y) {
    const Vec z = fb.z(t), psi = fb.psi(t);
    Mat out(Y.rows(), Y.cols());
    for (Eigen::Index i = 0; i < Y.rows(); ++i)
      out.row(i) = sys.particle_velocity(Y.row(i).transpose(), z, psi).transpose();
    return out;
  };
}

/// sup over output times of |z(t) - moments(m_t)| with m_t transported by the
/// reduced velocity field from the quantile cloud m0.
inline CheckReport verify_moment_consistency(const ReducedMasterSystem& sys, const FBReducedSolution& fb,
                                             const ParticleCloud& m0, double T, double dt,
                                             const std::vector<double>& out_times, double tolerance = 1e-3) {
  if (!fb.converged()) throw EvaluationError("verify_moment_consistency: forward-backward solve did not converge");
  const auto hist = transport_particles(fb_particle_field(sys, fb), m0, T, dt, out_times);
  CheckReport rep;
  rep.name = "moment_consistency";
  rep.tolerance = tolerance;
  rep.samples = static_cast<long>(hist.times.size());
  rep.worst_margin = 0.0;
  for (std::size_t k = 0; k < hist.times.size(); ++k) {
    const Vec zp = moments(hist.clouds[k], sys.feature);
    const Vec zo = fb.z(hist.times[k]);
    const double e = (zp - zo).cwiseAbs().maxCoeff();
    rep.offer(-e, [&] {
      return nlohmann::json{{"t", hist.times[k]}, {"z_ode", to_json(zo)}, {"z_particles", to_json(zp)}, {"error", e}};
    });
  }
  rep.finalize();
  return rep;
}

/// Particle values at probability levels (sorted order statistics, d = 1).
inline std::vector<double> cloud_quantiles(const ParticleCloud& c, const std::vector<double>& levels) {
  const auto v = c.sorted_values();
  std::vector<double> out;
  for (double p : levels) {
    const auto i = static_cast<std::size_t>(std::clamp(std::floor(p * static_cast<double>(v.size())), 0.0,
                                                       static_cast<double>(v.size() - 1)));
    out.push_back(v[i]);
  }
  return out;
}

}  // namespace rmfg::continuous
