#pragma once

#include <algorithm>
#include <vector>

#include "rmfg/core/types.hpp"

namespace rmfg::ode {

using Field = std::function<Vec(double, const Vec&)>;

enum class Scheme { rk4, rk45 };

struct IntegratorSpec {
  Scheme scheme = Scheme::rk4;
  double dt = 1e-3;     ///< fixed step for RK4, initial step for RK45
  double atol = 1e-10;  ///< RK45 only
  double rtol = 1e-8;   ///< RK45 only
  double max_dt = 0.1;  ///< RK45 only

  void validate() const {
    if (!(dt > 0.0)) throw InputError("IntegratorSpec: dt must be > 0");
    if (!(atol > 0.0) || !(rtol > 0.0)) throw InputError("IntegratorSpec: tolerances must be > 0");
  }
};

/// Time-indexed solution with derivative samples for cubic Hermite dense output.
/// Times are stored in integration order (decreasing for backward solves).
struct Trajectory {
  std::vector<double> t;
  std::vector<Vec> y;
  std::vector<Vec> dy;

  std::size_t size() const { return t.size(); }
  const Vec& front() const { return y.front(); }
  const Vec& back() const { return y.back(); }

  /// Dense output at time s within the integrated interval.
  Vec at(double s) const {
    if (t.empty()) throw InputError("Trajectory::at: empty trajectory");
    if (t.size() == 1) return y.front();
    const bool forward = t.back() > t.front();
    const double lo = forward ? t.front() : t.back();
    const double hi = forward ? t.back() : t.front();
    const double span = hi - lo;
    if (s < lo - 1e-12 * std::max(1.0, span) || s > hi + 1e-12 * std::max(1.0, span))
      throw InputError("Trajectory::at: time " + std::to_string(s) + " outside [" +
                       std::to_string(lo) + ", " + std::to_string(hi) + "]");
    // locate interval [k, k+1] containing s in integration order
    std::size_t k;
    if (forward) {
      auto it = std::upper_bound(t.begin(), t.end(), s);
      k = it == t.begin() ? 0 : static_cast<std::size_t>(it - t.begin()) - 1;
    } else {
      auto it = std::upper_bound(t.begin(), t.end(), s, [](double a, double b) { return a > b; });
      k = it == t.begin() ? 0 : static_cast<std::size_t>(it - t.begin()) - 1;
    }
    if (k + 1 >= t.size()) k = t.size() - 2;
    const double t0 = t[k], t1 = t[k + 1];
    const double h = t1 - t0;
    const double th = (s - t0) / h;
    if (th == 0.0) return y[k];
    if (th == 1.0) return y[k + 1];
    const double h00 = (1 + 2 * th) * (1 - th) * (1 - th);
    const double h10 = th * (1 - th) * (1 - th);
    const double h01 = th * th * (3 - 2 * th);
    const double h11 = th * th * (th - 1);
    return h00 * y[k] + h10 * h * dy[k] + h01 * y[k + 1] + h11 * h * dy[k + 1];
  }
};

namespace detail {

inline void check_state(const Vec& y, double t) {
  if (!y.allFinite()) throw BlowUpError("integrate: non-finite state at t=" + std::to_string(t), t);
}

inline Vec rk4_step(const Field& f, double t, const Vec& y, double h, Vec* k1_out = nullptr) {
  const Vec k1 = f(t, y);
  Vec stage = y + 0.5 * h * k1;
  const Vec k2 = f(t + 0.5 * h, stage);
  stage = y + 0.5 * h * k2;
  const Vec k3 = f(t + 0.5 * h, stage);
  stage = y + h * k3;
  const Vec k4 = f(t + h, stage);
  if (k1_out) *k1_out = k1;
  stage = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  return stage;
}

}  // namespace detail

/// Number of equal RK4 steps covering |t1 - t0| with step at most dt.
inline long step_count(double t0, double t1, double dt) {
  const double span = std::abs(t1 - t0);
  if (span == 0.0) return 0;
  return std::max(1L, static_cast<long>(std::ceil(span / dt - 1e-9)));
}

/// Integrate y' = f(t, y) from t0 to t1 (either direction). Every accepted
/// step is recorded.
inline Trajectory integrate(const Field& f, const Vec& y0, double t0, double t1,
                            const IntegratorSpec& spec = {}) {
  spec.validate();
  detail::check_state(y0, t0);
  Trajectory tr;
  tr.t.push_back(t0);
  tr.y.push_back(y0);
  if (t0 == t1) {
    tr.dy.push_back(f(t0, y0));
    return tr;
  }
  const double dir = t1 > t0 ? 1.0 : -1.0;

  if (spec.scheme == Scheme::rk4) {
    const long n = step_count(t0, t1, spec.dt);
    const double h = (t1 - t0) / static_cast<double>(n);
    tr.t.reserve(static_cast<std::size_t>(n + 1));
    tr.y.reserve(static_cast<std::size_t>(n + 1));
    tr.dy.reserve(static_cast<std::size_t>(n + 1));
    Vec y = y0;
    for (long i = 0; i < n; ++i) {
      const double t = t0 + static_cast<double>(i) * h;
      Vec k1;
      y = detail::rk4_step(f, t, y, h, &k1);
      tr.dy.push_back(std::move(k1));
      const double tn = i + 1 == n ? t1 : t0 + static_cast<double>(i + 1) * h;
      detail::check_state(y, tn);
      tr.t.push_back(tn);
      tr.y.push_back(y);
    }
    tr.dy.push_back(f(t1, y));
    return tr;
  }

  // Dormand-Prince 5(4) with standard step-size control.
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

  double t = t0;
  Vec y = y0;
  Vec k1 = f(t, y);
  double h = std::min(spec.dt, spec.max_dt);
  int rejected_in_row = 0;
  while (dir * (t1 - t) > 0.0) {
    if (dir * (t + dir * h - t1) > 0.0) h = std::abs(t1 - t);
    const double hs = dir * h;
    const Vec k2 = f(t + c2 * hs, y + hs * (a21 * k1));
    const Vec k3 = f(t + c3 * hs, y + hs * (a31 * k1 + a32 * k2));
    const Vec k4 = f(t + c4 * hs, y + hs * (a41 * k1 + a42 * k2 + a43 * k3));
    const Vec k5 = f(t + c5 * hs, y + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    const Vec k6 = f(t + hs, y + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    const Vec yn = y + hs * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const Vec k7 = f(t + hs, yn);
    const Vec err = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    const Vec scale = (spec.atol + spec.rtol * y.cwiseAbs().cwiseMax(yn.cwiseAbs()).array()).matrix();
    const double en = std::sqrt((err.cwiseQuotient(scale)).squaredNorm() / static_cast<double>(y.size()));
    if (!std::isfinite(en)) {
      if (++rejected_in_row > 50) throw BlowUpError("integrate(rk45): non-finite state", t);
      h *= 0.2;
      continue;
    }
    if (en <= 1.0) {
      rejected_in_row = 0;
      tr.dy.push_back(k1);
      t = t + hs;
      if (std::abs(t - t1) <= 1e-14 * std::max(1.0, std::abs(t1))) t = t1;
      y = yn;
      detail::check_state(y, t);
      k1 = k7;
      tr.t.push_back(t);
      tr.y.push_back(y);
    } else if (++rejected_in_row > 200) {
      throw BlowUpError("integrate(rk45): step size underflow", t);
    }
    const double fac = en == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
    h = std::min(h * fac, spec.max_dt);
    if (h < 1e-14 * std::max(1.0, std::abs(t))) throw BlowUpError("integrate(rk45): step size underflow", t);
  }
  tr.dy.push_back(k1);
  return tr;
}

/// Integrate and return only the end state (no trajectory storage).
inline Vec integrate_to(const Field& f, const Vec& y0, double t0, double t1, double dt) {
  detail::check_state(y0, t0);
  const long n = step_count(t0, t1, dt);
  if (n == 0) return y0;
  const double h = (t1 - t0) / static_cast<double>(n);
  Vec y = y0;
  for (long i = 0; i < n; ++i) {
    const double t = t0 + static_cast<double>(i) * h;
    y = detail::rk4_step(f, t, y, h);
    detail::check_state(y, t + h);
  }
  return y;
}

/// Observed order log2(e(h) / e(h/2)) from a sequence of errors at halving steps.
inline std::vector<double> observed_orders(const std::vector<double>& errors) {
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < errors.size(); ++i) out.push_back(std::log2(errors[i] / errors[i + 1]));
  return out;
}

}  // namespace rmfg::ode
