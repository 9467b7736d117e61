#pragma once

#include <Eigen/LU>

#include <limits>

#include "rmfg/core/types.hpp"

namespace rmfg::ode {

struct NewtonSpec {
  double tol = 1e-10;
  int max_iter = 60;
  double fd_step = 1e-6;
  double tikhonov = 1e-12;
  MatMap jacobian;  ///< optional analytic Jacobian
};

struct NewtonResult {
  Vec x;
  double residual = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  bool regularized = false;
  std::string message;
};

namespace detail {

/// Residual norm, with evaluation failures mapped to +inf so that the line
/// search backs off instead of aborting.
inline double safe_residual(const VecMap& map, const Vec& x, const Vec& target, Vec* value) {
  try {
    Vec v = map(x);
    if (!v.allFinite()) return std::numeric_limits<double>::infinity();
    const double r = (v - target).norm();
    if (value) *value = std::move(v);
    return r;
  } catch (const BlowUpError&) {
    return std::numeric_limits<double>::infinity();
  } catch (const EvaluationError&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace detail

/// Solve map(x) = target by damped Newton with backtracking on the residual
/// norm. A singular Jacobian triggers one Tikhonov-regularized retry of the
/// step; persistent failure is reported through `converged = false`.
inline NewtonResult newton_invert(const VecMap& map, const Vec& target, const Vec& guess,
                                  const NewtonSpec& spec = {}) {
  require_dim(guess, target.size(), "newton_invert");
  NewtonResult out;
  out.x = guess;
  Vec value;
  out.residual = detail::safe_residual(map, out.x, target, &value);
  if (!std::isfinite(out.residual)) {
    out.message = "map not finite at initial guess";
    return out;
  }
  const Eigen::Index n = guess.size();
  for (out.iterations = 0; out.iterations < spec.max_iter; ++out.iterations) {
    if (out.residual <= spec.tol) {
      out.converged = true;
      return out;
    }
    Mat J = spec.jacobian ? spec.jacobian(out.x) : fd_jacobian(map, out.x, spec.fd_step);
    const Vec rhs = target - value;
    Eigen::FullPivLU<Mat> lu(J);
    Vec step;
    if (lu.isInvertible() && lu.rcond() > 1e-14) {
      step = lu.solve(rhs);
    } else {
      out.regularized = true;
      const Mat JtJ = J.transpose() * J + spec.tikhonov * Mat::Identity(n, n);
      Eigen::FullPivLU<Mat> reg(JtJ);
      if (!reg.isInvertible()) {
        out.message = "singular Jacobian after regularization";
        return out;
      }
      step = reg.solve(J.transpose() * rhs);
    }
    if (!step.allFinite()) {
      out.message = "non-finite Newton step";
      return out;
    }
    double lambda = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      const Vec trial = out.x + lambda * step;
      Vec trial_value;
      const double r = detail::safe_residual(map, trial, target, &trial_value);
      if (r < out.residual || (r <= spec.tol)) {
        out.x = trial;
        out.residual = r;
        value = std::move(trial_value);
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!accepted) {
      // Stagnation at roundoff level counts as convergence only if within tolerance.
      out.converged = out.residual <= spec.tol;
      out.message = out.converged ? "" : "line search failed";
      return out;
    }
  }
  out.converged = out.residual <= spec.tol;
  if (!out.converged) out.message = "max iterations exceeded";
  return out;
}

struct ScalarRootResult {
  double x = 0.0;
  double residual = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  std::string message;
};

/// Safeguarded secant for a scalar equation r(x) = 0. Evaluations that fail
/// (blow-up) are reported as +inf residual; once a sign change is bracketed
/// the iterate is kept inside the bracket (bisection fallback).
inline ScalarRootResult solve_scalar(const std::function<double(double)>& r, double x0, double x1,
                                     double tol = 1e-10, int max_iter = 200) {
  auto eval = [&](double x) {
    try {
      const double v = r(x);
      return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    } catch (const BlowUpError&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  ScalarRootResult out;
  double fa = eval(x0), fb = eval(x1);
  double a = x0, b = x1;
  bool bracket = std::isfinite(fa) && std::isfinite(fb) && fa * fb <= 0.0;
  double lo = std::min(a, b), hi = std::max(a, b), flo = a < b ? fa : fb;
  if (std::isfinite(fb) && std::abs(fb) <= tol) {
    out = {b, std::abs(fb), 1, true, ""};
    return out;
  }
  if (std::isfinite(fa) && std::abs(fa) <= tol) {
    out = {a, std::abs(fa), 1, true, ""};
    return out;
  }
  for (out.iterations = 1; out.iterations <= max_iter; ++out.iterations) {
    double x;
    if (std::isfinite(fa) && std::isfinite(fb) && fb != fa) {
      x = b - fb * (b - a) / (fb - fa);
    } else if (!std::isfinite(fb)) {
      x = 0.5 * (a + b);  // retreat toward the last finite point
    } else {
      x = b + (b - a);
    }
    if (bracket && (!(x > lo && x < hi) || !std::isfinite(x))) x = 0.5 * (lo + hi);
    const double fx = eval(x);
    if (std::isfinite(fx) && std::abs(fx) <= tol) {
      out.x = x;
      out.residual = std::abs(fx);
      out.converged = true;
      return out;
    }
    if (bracket) {
      if (std::isfinite(fx) && (fx < 0.0) == (flo < 0.0)) {
        lo = x;
        flo = fx;
      } else {
        hi = x;
      }
      if (hi - lo <= 1e-15 * std::max(1.0, std::abs(lo))) {
        out.x = x;
        out.residual = std::isfinite(fx) ? std::abs(fx) : std::numeric_limits<double>::infinity();
        out.converged = out.residual <= tol;
        out.message = out.converged ? "" : "bracket collapsed above tolerance";
        return out;
      }
    } else if (std::isfinite(fb) && std::isfinite(fx) && fb * fx <= 0.0) {
      bracket = true;
      lo = std::min(b, x);
      hi = std::max(b, x);
      flo = b < x ? fb : fx;
    }
    a = b;
    fa = fb;
    b = x;
    fb = fx;
    out.x = x;
    out.residual = std::isfinite(fx) ? std::abs(fx) : std::numeric_limits<double>::infinity();
  }
  out.message = "max iterations exceeded";
  return out;
}

}  // namespace rmfg::ode
