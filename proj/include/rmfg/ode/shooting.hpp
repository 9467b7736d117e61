#pragma once

#include <optional>
#include <vector>

#include "rmfg/ode/integrate.hpp"
#include "rmfg/ode/newton.hpp"

namespace rmfg::ode {

using CoupledField = std::function<Vec(double t, const Vec& z, const Vec& y)>;

/// Two-point problem: z' = forward(t, z, y), z(0) = z0;
///                    y' = backward(t, z, y), y(T) = coupling(z(T)).
struct FBProblem {
  CoupledField forward;
  CoupledField backward;
  VecMap coupling;
  Vec z0;
  Eigen::Index backward_dim = 1;
  double T = 1.0;
};

enum class Fallback { secant, fd_newton };

struct ShootingSpec {
  Vec guess;  ///< initial y_T; empty means coupling(z0)
  double theta = 1.0;
  int max_iter = 100;
  double tol = 1e-10;
  Fallback fallback = Fallback::secant;
  double dt = 1e-3;

  void validate() const {
    if (!(theta > 0.0 && theta <= 1.0)) throw InputError("ShootingSpec: theta must lie in (0,1]");
    if (max_iter < 1) throw InputError("ShootingSpec: max_iter must be >= 1");
    if (!(tol > 0.0)) throw InputError("ShootingSpec: tol must be > 0");
    if (!(dt > 0.0)) throw InputError("ShootingSpec: dt must be > 0");
  }
};

struct ShootingResult {
  Trajectory trajectory;  ///< joint state [z; y] forward in time
  Vec zT, yT, y0;
  double residual = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  ///< residual per outer iteration
  std::string message;

  Vec z_at(double t, Eigen::Index zdim) const { return trajectory.at(t).head(zdim); }
  Vec y_at(double t, Eigen::Index zdim) const {
    const Vec s = trajectory.at(t);
    return s.tail(s.size() - zdim);
  }
};

namespace detail {

inline Field joint_field(const FBProblem& p) {
  const Eigen::Index nz = p.z0.size();
  return [&p, nz](double t, const Vec& s) {
    const Vec z = s.head(nz);
    const Vec y = s.tail(s.size() - nz);
    Vec out(s.size());
    out << p.forward(t, z, y), p.backward(t, z, y);
    return out;
  };
}

inline Vec join(const Vec& a, const Vec& b) {
  Vec s(a.size() + b.size());
  s << a, b;
  return s;
}

}  // namespace detail

/// Damped fixed point on the terminal value of the backward variable:
///   y_T <- y_T - theta (y_T - coupling(z_T(y_T))),
/// with secant acceleration (dimension 1) or finite-difference Newton on the
/// residual. z_T(y_T) is obtained by an inner Newton solve on y(0) so that the
/// jointly integrated system reaches y(T) = y_T. Non-convergence is reported,
/// not thrown.
inline ShootingResult shoot_forward_backward(const FBProblem& p, const ShootingSpec& spec = {}) {
  spec.validate();
  if (!p.forward || !p.backward || !p.coupling) throw ConfigurationError("shoot_forward_backward: missing callback");
  const Eigen::Index nz = p.z0.size();
  const Eigen::Index ny = p.backward_dim;
  const Field field = detail::joint_field(p);

  ShootingResult out;
  Vec yT = spec.guess.size() ? spec.guess : p.coupling(p.z0);
  require_dim(yT, ny, "shoot_forward_backward: guess");

  // warm start for y(0): integrate y backward with z frozen at z0
  Vec s0 = integrate_to([&](double t, const Vec& y) { return p.backward(t, p.z0, y); }, yT, p.T, 0.0, spec.dt);

  auto end_state = [&](const Vec& s) {
    return integrate_to(field, detail::join(p.z0, s), 0.0, p.T, spec.dt);
  };

  // Evaluate z_T for a given y_T; returns false if the inner solve fails.
  auto solve_inner = [&](const Vec& target, Vec* zT, Vec* y0) -> bool {
    NewtonSpec ns;
    ns.tol = std::max(1e-13, 1e-3 * spec.tol);
    ns.max_iter = 80;
    auto yend = [&](const Vec& s) { return Vec(end_state(s).tail(ny)); };
    NewtonResult nr = newton_invert(yend, target, s0, ns);
    if (!nr.converged && nr.residual > spec.tol * 1e-2) return false;
    s0 = nr.x;
    *y0 = nr.x;
    *zT = end_state(nr.x).head(nz);
    return true;
  };

  auto residual_of = [&](const Vec& target, Vec* zT, Vec* y0) -> std::optional<Vec> {
    if (!solve_inner(target, zT, y0)) return std::nullopt;
    return Vec(target - p.coupling(*zT));
  };

  Vec zT, y0;
  std::optional<Vec> r = residual_of(yT, &zT, &y0);
  Vec prev_y, prev_r;
  for (out.iterations = 1; out.iterations <= spec.max_iter; ++out.iterations) {
    if (!r) {
      out.message = "inner solve for y(0) failed";
      break;
    }
    const double rn = r->norm();
    out.trace.push_back(rn);
    out.residual = rn;
    if (rn <= spec.tol) {
      out.converged = true;
      break;
    }
    if (out.iterations == spec.max_iter) {
      out.message = "max iterations exceeded";
      break;
    }
    Vec next;
    if (ny == 1 && spec.fallback == Fallback::secant && prev_y.size() && (*r)[0] != prev_r[0]) {
      next = yT - (*r) * (yT[0] - prev_y[0]) / ((*r)[0] - prev_r[0]);
    } else if (spec.fallback == Fallback::fd_newton || (ny > 1 && prev_y.size())) {
      Mat J;
      try {
        J = fd_jacobian(
          [&](const Vec& v) {
            Vec zz, yy;
            auto rr = residual_of(v, &zz, &yy);
            if (!rr) throw EvaluationError("inner solve failed");
            return *rr;
          },
          yT);
        next = yT - Eigen::FullPivLU<Mat>(J).solve(*r);
      } catch (const EvaluationError&) {
        next = yT - spec.theta * (*r);
      }
      if (!next.allFinite()) next = yT - spec.theta * (*r);
    } else {
      next = yT - spec.theta * (*r);
    }
    prev_y = yT;
    prev_r = *r;
    yT = next;
    r = residual_of(yT, &zT, &y0);
    // fall back to plain damping if an accelerated step broke the inner solve
    if (!r && prev_y.size()) {
      yT = prev_y - spec.theta * prev_r;
      r = residual_of(yT, &zT, &y0);
    }
  }
  if (!out.converged && out.iterations > spec.max_iter) out.iterations = spec.max_iter;
  out.yT = yT;
  out.zT = zT;
  out.y0 = y0;
  if (y0.size()) {
    try {
      out.trajectory = integrate(field, detail::join(p.z0, y0), 0.0, p.T, IntegratorSpec{Scheme::rk4, spec.dt});
    } catch (const BlowUpError& e) {
      out.converged = false;
      out.message = e.what();
    }
  }
  return out;
}

}  // namespace rmfg::ode
