#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <string>

#include "rmfg/errors.hpp"

namespace rmfg {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

using VecMap = std::function<Vec(const Vec&)>;
using MatMap = std::function<Mat(const Vec&)>;
using VecMap2 = std::function<Vec(const Vec&, const Vec&)>;
using MatMap2 = std::function<Mat(const Vec&, const Vec&)>;
using ScalarFn = std::function<double(double)>;

inline bool all_finite(const Vec& v) { return v.allFinite(); }

inline void require_finite(const Vec& v, const std::string& what) {
  if (!v.allFinite()) throw EvaluationError(what + ": non-finite value");
}

inline void require_dim(const Vec& v, Eigen::Index n, const std::string& what) {
  if (v.size() != n)
    throw InputError(what + ": expected dimension " + std::to_string(n) + ", got " +
                     std::to_string(v.size()));
}

/// Central finite-difference Jacobian of f at x.
inline Mat fd_jacobian(const VecMap& f, const Vec& x, double step = 1e-6) {
  Vec f0 = f(x);
  Mat J(f0.size(), x.size());
  Vec xp = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = step * std::max(1.0, std::abs(x[j]));
    xp[j] = x[j] + h;
    Vec fp = f(xp);
    xp[j] = x[j] - h;
    Vec fm = f(xp);
    xp[j] = x[j];
    J.col(j) = (fp - fm) / (2.0 * h);
  }
  return J;
}

inline double fd_derivative(const ScalarFn& f, double x, double step = 1e-6) {
  const double h = step * std::max(1.0, std::abs(x));
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// sign(x) |x|^e, i.e. |x|^{e-1} x without the 0 * inf hazard at x = 0.
inline double signed_pow(double x, double e) { return std::copysign(std::pow(std::abs(x), e), x); }

inline Vec vec1(double a) {
  Vec v(1);
  v << a;
  return v;
}

inline Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

inline Vec vec3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

}  // namespace rmfg
