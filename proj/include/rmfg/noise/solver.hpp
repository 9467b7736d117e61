#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "rmfg/models/noise.hpp"
#include "rmfg/verify/report.hpp"

namespace rmfg::noise {

/// Tensor grid on [-R, R]^N with explicit time stepping on [0, T].
struct NoiseGrid {
  Eigen::Index N = 2;
  double R = 4.0;
  long nx = 81;
  double T = 1.0;
  double dt = 2.5e-4;
  int out_count = 41;  ///< evenly spaced snapshot times including 0 and T

  static NoiseGrid from_model(const NoiseModel& m, double T) {
    NoiseGrid g;
    g.N = m.N();
    g.R = m.R;
    g.nx = m.nx;
    g.T = T;
    g.dt = 2.5e-4 * T;
    return g;
  }

  void validate() const {
    if (N < 1) throw InputError("NoiseGrid: N must be >= 1");
    if (N > 3) throw UnsupportedConfigurationError("NoiseGrid: grid solver limited to N <= 3");
    if (!(R > 0.0) || nx < 3) throw InputError("NoiseGrid: need R > 0 and nx >= 3");
    if (!(T > 0.0) || !(dt > 0.0)) throw InputError("NoiseGrid: T and dt must be > 0");
    if (out_count < 2) throw InputError("NoiseGrid: need at least 2 snapshots");
  }
  double h() const { return 2.0 * R / static_cast<double>(nx - 1); }
  long nodes() const {
    long n = 1;
    for (Eigen::Index d = 0; d < N; ++d) n *= nx;
    return n;
  }
  long steps() const { return std::max(1L, static_cast<long>(std::llround(T / dt))); }
};

/// Multilinear interpolation on a NoiseGrid. Points outside the box use the
/// boundary cell's multilinear formula (linear extrapolation).
class GridInterp {
 public:
  explicit GridInterp(const NoiseGrid& g) : g_(g), h_(g.h()) {
    stride_.resize(static_cast<std::size_t>(g.N));
    long s = 1;
    for (Eigen::Index d = 0; d < g.N; ++d) {
      stride_[static_cast<std::size_t>(d)] = s;
      s *= g.nx;
    }
  }

  struct Stencil {
    long base = 0;
    Vec frac;
    bool outside = false;
  };

  Vec node(long flat) const {
    Vec x(g_.N);
    for (Eigen::Index d = 0; d < g_.N; ++d) {
      const long i = (flat / stride_[static_cast<std::size_t>(d)]) % g_.nx;
      x[d] = i + 1 == g_.nx ? g_.R : -g_.R + static_cast<double>(i) * h_;
    }
    return x;
  }

  Stencil locate(const Vec& x) const {
    Stencil s;
    s.frac.resize(g_.N);
    for (Eigen::Index d = 0; d < g_.N; ++d) {
      const double r = (x[d] + g_.R) / h_;
      if (x[d] < -g_.R || x[d] > g_.R) s.outside = true;
      const long i = std::clamp(static_cast<long>(std::floor(r)), 0L, g_.nx - 2);
      s.base += i * stride_[static_cast<std::size_t>(d)];
      s.frac[d] = r - static_cast<double>(i);
    }
    return s;
  }

  /// Flat indices of the 2^N cell corners.
  std::vector<long> corners(const Stencil& s) const {
    std::vector<long> out;
    for (long mask = 0; mask < (1L << g_.N); ++mask) {
      long idx = s.base;
      for (Eigen::Index d = 0; d < g_.N; ++d)
        if ((mask >> d) & 1) idx += stride_[static_cast<std::size_t>(d)];
      out.push_back(idx);
    }
    return out;
  }

  Vec value(const Mat& U, const Stencil& s) const {
    Vec out = Vec::Zero(U.cols());
    for (long mask = 0; mask < (1L << g_.N); ++mask) {
      double w = 1.0;
      long idx = s.base;
      for (Eigen::Index d = 0; d < g_.N; ++d) {
        const bool up = (mask >> d) & 1;
        w *= up ? s.frac[d] : 1.0 - s.frac[d];
        if (up) idx += stride_[static_cast<std::size_t>(d)];
      }
      out += w * U.row(idx).transpose();
    }
    return out;
  }

  /// Jacobian (components x directions) of the multilinear interpolant.
  Mat gradient(const Mat& U, const Stencil& s) const {
    Mat J = Mat::Zero(U.cols(), g_.N);
    for (long mask = 0; mask < (1L << g_.N); ++mask) {
      long idx = s.base;
      for (Eigen::Index d = 0; d < g_.N; ++d)
        if ((mask >> d) & 1) idx += stride_[static_cast<std::size_t>(d)];
      for (Eigen::Index k = 0; k < g_.N; ++k) {
        double w = 1.0;
        for (Eigen::Index d = 0; d < g_.N; ++d) {
          const bool up = (mask >> d) & 1;
          if (d == k) w *= (up ? 1.0 : -1.0) / h_;
          else w *= up ? s.frac[d] : 1.0 - s.frac[d];
        }
        J.col(k) += w * U.row(idx).transpose();
      }
    }
    return J;
  }

  /// Max over nodes of the operator 2-norm of the central-difference Jacobian.
  double lipschitz(const Mat& U) const {
    double L = 0.0;
    const long n = g_.nodes();
    for (long i = 0; i < n; ++i) {
      Mat J(U.cols(), g_.N);
      for (Eigen::Index d = 0; d < g_.N; ++d) {
        const long st = stride_[static_cast<std::size_t>(d)];
        const long k = (i / st) % g_.nx;
        const long lo = k == 0 ? i : i - st, hi = k + 1 == g_.nx ? i : i + st;
        const double span = static_cast<double>((hi - lo) / st) * h_;
        J.col(d) = (U.row(hi) - U.row(lo)).transpose() / span;
      }
      L = std::max(L, J.operatorNorm());
    }
    return L;
  }

 private:
  NoiseGrid g_;
  double h_;
  std::vector<long> stride_;
};

struct GridSolution {
  NoiseGrid grid;
  Mat nodes;  ///< nodes x N coordinates
  std::vector<double> times;
  std::vector<Mat> values;         ///< per snapshot, nodes x N
  std::vector<char> flagged;       ///< node ever influenced by extrapolated data
  double L0 = 0.0;                 ///< max over snapshots of the Lipschitz estimate
  double max_cfl = 0.0;

  long flagged_count() const { return static_cast<long>(std::count(flagged.begin(), flagged.end(), 1)); }
};

using Perturbation = std::function<Vec(double t, const Vec& x)>;

namespace detail {

/// Shared stepping for the noisy solve and its tangent in lambda.
///   U^{k+1}(x) = U^k(y) + dt [G(x, U^k) - lambda (U^k(x) - M^T U^k(Tx)) + R(t_k, x)],
///   y = x - dt F(x, U^k(x)).
/// With tangent = true, V is the derivative of U^k with respect to lambda at
/// lambda = 0, differentiated through the same discrete map.
struct Stepper {
  const NoiseModel& model;
  NoiseGrid grid;
  double lambda = 0.0;
  Perturbation perturbation;
  bool tangent = false;

  std::pair<GridSolution, GridSolution> run() const {
    model.validate();
    grid.validate();
    if (grid.N != model.N()) throw InputError("noise solve: grid dimension differs from the model");
    if (!(lambda >= 0.0)) throw InputError("noise solve: lambda must be >= 0");
    if (model.box_excess() > 1e-12) throw GeometryError("noise solve: rearrangement map sends the box outside itself");
    const long steps = grid.steps();
    const double dt = grid.T / static_cast<double>(steps);
    if (lambda * dt > 1.0) throw StepRefusedError("noise solve: lambda dt > 1");
    const GridInterp I(grid);
    const long n = grid.nodes();
    const Eigen::Index N = grid.N;
    const Mat Mt = model.adjoint();

    Mat X(n, N), U(n, N), V = Mat::Zero(n, N);
    std::vector<GridInterp::Stencil> tx(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
      const Vec x = I.node(i);
      X.row(i) = x.transpose();
      U.row(i) = model.core.U0(x).transpose();
      tx[static_cast<std::size_t>(i)] = I.locate(model.rearrange(x));
    }
    if (!U.allFinite()) throw EvaluationError("noise solve: non-finite initial data");

    std::vector<long> snap_steps;
    for (int k = 0; k < grid.out_count; ++k)
      snap_steps.push_back(static_cast<long>(std::llround(static_cast<double>(steps) * k / (grid.out_count - 1))));
    GridSolution su, sv;
    for (GridSolution* s : {&su, &sv}) {
      s->grid = grid;
      s->nodes = X;
      s->flagged.assign(static_cast<std::size_t>(n), 0);
    }
    std::size_t next_snap = 0;
    auto snapshot = [&](long k) {
      while (next_snap < snap_steps.size() && snap_steps[next_snap] == k) {
        const double t = k == steps ? grid.T : static_cast<double>(k) * dt;
        su.times.push_back(t);
        su.values.push_back(U);
        su.L0 = std::max(su.L0, I.lipschitz(U));
        if (tangent) {
          sv.times.push_back(t);
          sv.values.push_back(V);
        }
        ++next_snap;
      }
    };
    snapshot(0);

    const double h = grid.h();
    std::vector<char> flag(static_cast<std::size_t>(n), 0), flag_next(static_cast<std::size_t>(n), 0);
    Mat Un(n, N), Vn(n, N);
    bool any_flag = false;
    for (long k = 0; k < steps; ++k) {
      const double t = static_cast<double>(k) * dt;
      double cfl = 0.0;
      bool next_any = false;
      for (long i = 0; i < n; ++i) {
        const Vec x = X.row(i).transpose();
        const Vec u = U.row(i).transpose();
        const Vec f = model.core.F(x, u);
        cfl = std::max(cfl, dt * f.cwiseAbs().maxCoeff() / h);
        const Vec y = x - dt * f;
        const auto sy = I.locate(y);
        const auto& st = tx[static_cast<std::size_t>(i)];
        const Vec Uy = I.value(U, sy);
        const Vec UT = I.value(U, st);
        Vec rhs = model.core.G(x, u) - lambda * (u - Mt * UT);
        if (perturbation) rhs += perturbation(t, x);
        Un.row(i) = (Uy + dt * rhs).transpose();
        if (tangent) {
          const Vec v = V.row(i).transpose();
          const Mat Fu = model.core.jac_F_u(x, u), Gu = model.core.jac_G_u(x, u);
          // derivative in lambda at lambda = 0: the noise term enters with its value only
          const Vec dv = I.value(V, sy) - dt * I.gradient(U, sy) * (Fu * v) + dt * (Gu * v - (u - Mt * UT));
          Vn.row(i) = dv.transpose();
        }
        bool fl = sy.outside;
        if (any_flag) {
          for (long c : I.corners(sy)) fl = fl || flag[static_cast<std::size_t>(c)];
          if (lambda > 0.0 || tangent)
            for (long c : I.corners(st)) fl = fl || flag[static_cast<std::size_t>(c)];
        }
        flag_next[static_cast<std::size_t>(i)] = fl;
        next_any = next_any || fl;
      }
      if (cfl > 1.0)
        throw StepRefusedError("noise solve: CFL number " + std::to_string(cfl) + " > 1 at t = " + std::to_string(t));
      su.max_cfl = std::max(su.max_cfl, cfl);
      if (!Un.allFinite())
        throw BlowUpError("noise solve: non-finite value at t = " + std::to_string(t + dt), t + dt);
      U.swap(Un);
      if (tangent) V.swap(Vn);
      std::swap(flag, flag_next);
      any_flag = next_any;
      for (long i = 0; i < n; ++i)
        if (flag[static_cast<std::size_t>(i)]) su.flagged[static_cast<std::size_t>(i)] = 1;
      snapshot(k + 1);
    }
    sv.flagged = su.flagged;
    sv.L0 = 0.0;
    return {std::move(su), std::move(sv)};
  }
};

}  // namespace detail

/// Explicit semi-Lagrangian solve of the noisy equation with rate lambda and
/// an optional source R(t, x).
inline GridSolution solve_noisy(const NoiseModel& model, double lambda, const NoiseGrid& grid,
                                const Perturbation& perturbation = {}) {
  return detail::Stepper{model, grid, lambda, perturbation, false}.run().first;
}

struct LinearizedSolution {
  GridSolution base;  ///< lambda = 0 solution
  GridSolution V;     ///< first-order correction in the noise rate
};

/// Base (lambda = 0) solve and its linearized correction in lockstep. V is the
/// exact derivative of the discrete scheme, i.e. the same semi-Lagrangian
/// transport applied to
///   V_t + (F(x,U).grad) V + (D_uF(x,U) V . grad) U + U - M^T U(Tx) = D_uG(x,U) V,  V(0) = 0.
inline LinearizedSolution solve_linearized(const NoiseModel& model, const NoiseGrid& grid) {
  auto [u, v] = detail::Stepper{model, grid, 0.0, {}, true}.run();
  return {std::move(u), std::move(v)};
}

struct ExpansionStudy {
  std::vector<double> eps, errors;
  double slope = 0.0;
  double L0 = 0.0;
  long flagged_nodes = 0;

  nlohmann::json to_json() const {
    return {{"eps", eps}, {"errors", errors}, {"slope", slope}, {"L0", L0}, {"flagged_nodes", flagged_nodes}};
  }
};

/// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw InputError("loglog_slope: need matching lists of length >= 2");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw EvaluationError("loglog_slope: non-positive value");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(y.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxy / sxx;
}

/// e(eps) = sup over snapshots and unflagged nodes of |U^eps - (U + eps V)|.
inline ExpansionStudy expansion_study(const NoiseModel& model, const std::vector<double>& eps, const NoiseGrid& grid) {
  if (eps.size() < 4) throw InputError("expansion_study: need at least 4 noise levels");
  for (double e : eps)
    if (!(e > 0.0 && e < 1.0)) throw InputError("expansion_study: noise levels must lie in (0, 1)");
  const auto lin = solve_linearized(model, grid);
  ExpansionStudy out;
  out.eps = eps;
  out.L0 = lin.base.L0;
  std::vector<char> flagged = lin.base.flagged;
  for (double e : eps) {
    const auto ue = solve_noisy(model, e, grid);
    for (std::size_t i = 0; i < flagged.size(); ++i) flagged[i] = flagged[i] || ue.flagged[i];
    double err = 0.0;
    for (std::size_t k = 0; k < ue.values.size(); ++k) {
      const Mat D = ue.values[k] - lin.base.values[k] - e * lin.V.values[k];
      for (Eigen::Index i = 0; i < D.rows(); ++i)
        if (!flagged[static_cast<std::size_t>(i)]) err = std::max(err, D.row(i).norm());
    }
    out.errors.push_back(err);
  }
  out.flagged_nodes = static_cast<long>(std::count(flagged.begin(), flagged.end(), 1));
  out.slope = loglog_slope(out.eps, out.errors);
  return out;
}

/// sup |U - V| over the grid against (L0 T / alpha)^{1/2} ||R||, with the
/// scheme allowance applied as a factor on the bound.
inline CheckReport stability_check(const NoiseModel& model, const Perturbation& perturbation, double lambda,
                                   const NoiseGrid& grid, double allowance = 1.05) {
  if (!(model.alpha > 0.0)) throw InputError("stability_check: model needs alpha > 0");
  const auto U = solve_noisy(model, lambda, grid);
  const auto V = solve_noisy(model, lambda, grid, perturbation);
  double Rnorm = 0.0, gap = 0.0;
  for (std::size_t k = 0; k < U.times.size(); ++k) {
    for (Eigen::Index i = 0; i < U.nodes.rows(); ++i) {
      Rnorm = std::max(Rnorm, perturbation(U.times[k], U.nodes.row(i).transpose()).norm());
      if (!U.flagged[static_cast<std::size_t>(i)] && !V.flagged[static_cast<std::size_t>(i)])
        gap = std::max(gap, (U.values[k].row(i) - V.values[k].row(i)).norm());
    }
  }
  const double bound = std::sqrt(U.L0 * grid.T / model.alpha) * Rnorm;
  CheckReport rep;
  rep.name = "noise_stability";
  rep.tolerance = 0.0;
  rep.samples = static_cast<long>(U.times.size()) * static_cast<long>(U.nodes.rows());
  rep.offer(allowance * bound - gap, [&] {
    return nlohmann::json{{"gap", gap},       {"bound", bound}, {"allowance", allowance}, {"L0", U.L0},
                          {"alpha", model.alpha}, {"R_norm", Rnorm}, {"T", grid.T}};
  });
  rep.finalize();
  return rep;
}

}  // namespace rmfg::noise
