#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "rmfg/core/types.hpp"
#include "rmfg/errors.hpp"

namespace rmfg::controls {

/// Uniform grid on [-R, R].
struct Grid1D {
  double R = 6.0;
  long nx = 401;

  void validate() const {
    if (!(R > 0.0)) throw InputError("Grid1D: R must be > 0");
    if (nx < 5) throw InputError("Grid1D: need nx >= 5");
  }
  double dx() const { return 2.0 * R / static_cast<double>(nx - 1); }
  double x(long i) const { return i + 1 == nx ? R : -R + static_cast<double>(i) * dx(); }
};

/// Piecewise cubic Hermite interpolant on a uniform grid. Node slopes come
/// from central differences (one-sided second order at the ends), so
/// quadratics are reproduced exactly. Outside [-R, R] the quadratic through
/// the last three nodes is used.
class HermiteGrid {
 public:
  HermiteGrid() = default;
  HermiteGrid(const Grid1D& g, Vec values) : g_(g), v_(std::move(values)), s_(v_.size()) {
    const long n = g_.nx;
    const double h = g_.dx();
    for (long i = 1; i + 1 < n; ++i) s_[i] = (v_[i + 1] - v_[i - 1]) / (2.0 * h);
    s_[0] = (-3.0 * v_[0] + 4.0 * v_[1] - v_[2]) / (2.0 * h);
    s_[n - 1] = (3.0 * v_[n - 1] - 4.0 * v_[n - 2] + v_[n - 3]) / (2.0 * h);
  }

  const Vec& values() const { return v_; }
  const Vec& slopes() const { return s_; }

  double value(double x) const { return eval(x, false); }
  double deriv(double x) const { return eval(x, true); }
  double second(long i) const {
    const long n = g_.nx;
    const double h = g_.dx();
    if (i <= 0) i = 1;
    if (i >= n - 1) i = n - 2;
    return (v_[i + 1] - 2.0 * v_[i] + v_[i - 1]) / (h * h);
  }

  /// Left node of the cell containing x (clamped to the grid).
  long cell(double x) const {
    const long i = static_cast<long>(std::floor((x + g_.R) / g_.dx()));
    return std::clamp(i, 0L, g_.nx - 2);
  }

 private:
  double eval(double x, bool derivative) const {
    const long n = g_.nx;
    const double h = g_.dx();
    if (x < -g_.R || x > g_.R) {
      // quadratic through the three outermost nodes
      const bool left = x < -g_.R;
      const long a = left ? 0 : n - 3;
      const double x0 = g_.x(a), y0 = v_[a], y1 = v_[a + 1], y2 = v_[a + 2];
      const double d1 = (y1 - y0) / h, d2 = (y2 - 2.0 * y1 + y0) / (2.0 * h * h);
      const double s = x - x0;
      return derivative ? d1 + d2 * (2.0 * s - h) : y0 + d1 * s + d2 * s * (s - h);
    }
    const long i = cell(x);
    const double th = (x - g_.x(i)) / h;
    const double y0 = v_[i], y1 = v_[i + 1], m0 = s_[i] * h, m1 = s_[i + 1] * h;
    if (derivative) {
      const double d00 = 6.0 * th * th - 6.0 * th, d10 = 3.0 * th * th - 4.0 * th + 1.0;
      const double d01 = -d00, d11 = 3.0 * th * th - 2.0 * th;
      return (d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1) / h;
    }
    const double h00 = (1 + 2 * th) * (1 - th) * (1 - th), h10 = th * (1 - th) * (1 - th);
    const double h01 = th * th * (3 - 2 * th), h11 = th * th * (th - 1);
    return h00 * y0 + h10 * m0 + h01 * y1 + h11 * m1;
  }

  Grid1D g_;
  Vec v_, s_;
};

/// Hamiltonian data for -u_t + H(x, u_x, t) = 0 with the coupling already
/// frozen into the time argument.
struct HJProblem {
  std::function<double(double x, double p, double t)> H, DpH, DxH, DppH;
  std::function<double(double x)> terminal;
  double T = 1.0;
};

struct HJSpec {
  Grid1D grid;
  double dt = 1e-3;
  double cfl_max = 0.5;  ///< refuse a step when dt * max |H_pp u_xx| exceeds this
  int max_sweeps = 50;

  void validate() const {
    grid.validate();
    if (!(dt > 0.0)) throw InputError("HJSpec: dt must be > 0");
    if (!(cfl_max > 0.0 && cfl_max < 1.0)) throw InputError("HJSpec: cfl_max must lie in (0, 1)");
  }
};

/// Value function on the space-time grid, levels at times[0] = 0 < ... < T.
struct HJSolution {
  Grid1D grid;
  std::vector<double> times;
  std::vector<HermiteGrid> levels;
  double influence_radius = 0.0;  ///< |x| below this never saw extrapolated data
  double max_cfl = 0.0;

  double value(double t, double x) const { return blend(t, [x](const HermiteGrid& g) { return g.value(x); }); }
  double Du(double t, double x) const { return blend(t, [x](const HermiteGrid& g) { return g.deriv(x); }); }

  /// min over levels and |x_i| < influence_radius of the discrete u_xx.
  double min_second_difference() const {
    double out = std::numeric_limits<double>::infinity();
    for (const auto& lv : levels)
      for (long i = 1; i + 1 < grid.nx; ++i)
        if (std::abs(grid.x(i)) < influence_radius) out = std::min(out, lv.second(i));
    return out;
  }

  /// Fitted constant C in |Du| <= C (1 + |x|^{e}) over the interior.
  double growth_constant(double e) const {
    double c = 0.0;
    for (const auto& lv : levels)
      for (long i = 0; i < grid.nx; ++i) {
        const double x = grid.x(i);
        if (std::abs(x) < influence_radius) c = std::max(c, std::abs(lv.slopes()[i]) / (1.0 + std::pow(std::abs(x), e)));
      }
    return c;
  }

 private:
  template <class F>
  double blend(double t, F f) const {
    const double T = times.back();
    if (t < -1e-12 || t > T + 1e-12) throw InputError("HJSolution: time outside [0, T]");
    const double dt = T / static_cast<double>(times.size() - 1);
    const long n = std::clamp(static_cast<long>(std::floor(t / dt)), 0L, static_cast<long>(times.size()) - 2);
    const double th = std::clamp((t - times[n]) / dt, 0.0, 1.0);
    if (th == 0.0) return f(levels[n]);
    if (th == 1.0) return f(levels[n + 1]);
    return (1.0 - th) * f(levels[n]) + th * f(levels[n + 1]);
  }
};

/// Semi-Lagrangian solve backward from T. Each node follows the
/// characteristic x' = -H_p, p' = H_x over one step with midpoint momentum;
/// the departure point is found by fixed-point iteration and the value picks
/// up -dt (H - p H_p).
inline HJSolution solve_hj(const HJProblem& prob, const HJSpec& spec = {}) {
  spec.validate();
  if (!prob.H || !prob.DpH || !prob.terminal) throw ConfigurationError("solve_hj: missing H, DpH or terminal data");
  if (!(prob.T > 0.0)) throw InputError("solve_hj: T must be > 0");
  const Grid1D& g = spec.grid;
  const long nx = g.nx;
  const long nt = std::max(1L, static_cast<long>(std::llround(prob.T / spec.dt)));
  const double dt = prob.T / static_cast<double>(nt);
  auto Hx = [&](double x, double p, double t) { return prob.DxH ? prob.DxH(x, p, t) : 0.0; };

  HJSolution sol;
  sol.grid = g;
  sol.times.resize(static_cast<std::size_t>(nt + 1));
  for (long n = 0; n <= nt; ++n) sol.times[static_cast<std::size_t>(n)] = n == nt ? prob.T : static_cast<double>(n) * dt;
  sol.levels.resize(static_cast<std::size_t>(nt + 1));

  Vec v(nx);
  for (long i = 0; i < nx; ++i) v[i] = prob.terminal(g.x(i));
  if (!v.allFinite()) throw EvaluationError("solve_hj: non-finite terminal data");
  sol.levels.back() = HermiteGrid(g, v);

  // radius inside which no departure point has touched extrapolated data;
  // the front is carried along the departure map, interpolated between nodes
  double clean = g.R;
  std::vector<double> dep(static_cast<std::size_t>(nx));
  auto front_crossing = [&](double rho) {
    double out = rho;
    for (long i = 0; i + 1 < nx; ++i) {
      const double a = dep[static_cast<std::size_t>(i)], b = dep[static_cast<std::size_t>(i + 1)];
      const double xa = g.x(i), xb = g.x(i + 1);
      if (xa >= 0.0 && a <= rho && b > rho) out = std::min(out, xa + (rho - a) / (b - a) * (xb - xa));
      if (xb <= 0.0 && a < -rho && b >= -rho) out = std::min(out, -(xb - (b + rho) / (b - a) * (xb - xa)));
    }
    return out;
  };

  for (long n = nt - 1; n >= 0; --n) {
    const HermiteGrid& up = sol.levels[static_cast<std::size_t>(n + 1)];
    const double tm = sol.times[static_cast<std::size_t>(n)] + 0.5 * dt;
    double cfl = 0.0;
    for (long i = 0; i < nx; ++i) {
      const double x = g.x(i);
      double y = x - dt * prob.DpH(x, up.deriv(x), tm);
      double xm = x, pm = 0.0;
      bool settled = false;
      for (int it = 0; it < spec.max_sweeps; ++it) {
        xm = 0.5 * (x + y);
        const double p1 = up.deriv(y);
        pm = p1 - 0.5 * dt * Hx(xm, p1, tm);
        const double y_new = x - dt * prob.DpH(xm, pm, tm);
        const double change = std::abs(y_new - y);
        y = y_new;
        if (change <= 1e-14 * (1.0 + std::abs(y))) {
          settled = true;
          break;
        }
      }
      if (prob.DppH) cfl = std::max(cfl, dt * std::abs(prob.DppH(xm, pm, tm) * up.second(up.cell(y))));
      if (!settled || !std::isfinite(y))
        throw StepRefusedError("solve_hj: departure point did not settle at x = " + std::to_string(x) +
                               ", t = " + std::to_string(tm) + " (step too large)");
      v[i] = up.value(y) - dt * (prob.H(xm, pm, tm) - pm * prob.DpH(xm, pm, tm));
      dep[static_cast<std::size_t>(i)] = y;
    }
    if (cfl > spec.cfl_max)
      throw StepRefusedError("solve_hj: CFL number " + std::to_string(cfl) + " exceeds " +
                             std::to_string(spec.cfl_max) + " at t = " + std::to_string(tm));
    sol.max_cfl = std::max(sol.max_cfl, cfl);
    if (!v.allFinite()) throw EvaluationError("solve_hj: non-finite value at t = " + std::to_string(tm));
    sol.levels[static_cast<std::size_t>(n)] = HermiteGrid(g, v);
    clean = front_crossing(clean);
  }
  // the cubic stencil and end slopes reach three cells past a departure point
  sol.influence_radius = clean >= g.R ? g.R : std::max(0.0, clean - 3.0 * g.dx());
  return sol;
}

}  // namespace rmfg::controls
