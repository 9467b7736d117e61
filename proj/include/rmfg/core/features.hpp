#pragma once

#include <limits>
#include <optional>

#include "rmfg/core/particle_cloud.hpp"
#include "rmfg/core/types.hpp"

namespace rmfg {

enum class FeatureFamily { power, quadratic, custom };

/// Feature map phi: R^d -> R^m through which a measure enters the reduced
/// dynamics (as the moment vector of integral phi dm).
struct FeatureMap {
  FeatureFamily family = FeatureFamily::custom;
  Eigen::Index dim_in = 1;
  Eigen::Index dim_out = 1;
  double growth = 1.0;    ///< K in |phi(x)| <= C (1 + |x|^K)
  double exponent = 0.0;  ///< q' for the power family
  VecMap phi;
  MatMap jacobian;        ///< dim_out x dim_in

  /// phi(y) = |y|^{q'} / q'.
  static FeatureMap power(double qprime, Eigen::Index d = 1) {
    if (!(qprime > 1.0)) throw InputError("FeatureMap::power: need q' > 1");
    FeatureMap fm;
    fm.family = FeatureFamily::power;
    fm.dim_in = d;
    fm.dim_out = 1;
    fm.growth = qprime;
    fm.exponent = qprime;
    fm.phi = [qprime](const Vec& y) { return vec1(std::pow(y.norm(), qprime) / qprime); };
    fm.jacobian = [qprime, d](const Vec& y) {
      const double r = y.norm();
      Mat J(1, d);
      if (r == 0.0) {
        J.setZero();
      } else {
        J = (std::pow(r, qprime - 2.0) * y).transpose();
      }
      return J;
    };
    return fm;
  }

  /// phi(y) = (1, y, y^2/2) on R.
  static FeatureMap quadratic() {
    FeatureMap fm;
    fm.family = FeatureFamily::quadratic;
    fm.dim_in = 1;
    fm.dim_out = 3;
    fm.growth = 2.0;
    fm.phi = [](const Vec& y) { return vec3(1.0, y[0], 0.5 * y[0] * y[0]); };
    fm.jacobian = [](const Vec& y) {
      Mat J(3, 1);
      J << 0.0, 1.0, y[0];
      return J;
    };
    return fm;
  }

  /// Empirical growth constant: max over samples of |phi(x)| / (1 + |x|^K).
  double growth_constant(const std::vector<Vec>& samples) const {
    double c = 0.0;
    for (const auto& x : samples)
      c = std::max(c, phi(x).norm() / (1.0 + std::pow(x.norm(), growth)));
    return c;
  }
};

/// Moment vector (1/M) sum_i phi(y_i), summed in index order.
inline Vec moments(const ParticleCloud& cloud, const FeatureMap& fmap) {
  if (cloud.dim() != fmap.dim_in)
    throw InputError("moments: cloud dimension " + std::to_string(cloud.dim()) +
                     " does not match feature input dimension " + std::to_string(fmap.dim_in));
  Vec acc = Vec::Zero(fmap.dim_out);
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    Vec v = fmap.phi(cloud.point(i));
    if (!v.allFinite())
      throw EvaluationError("moments: non-finite feature value at particle " + std::to_string(i));
    acc += v;
  }
  return acc / static_cast<double>(cloud.size());
}

enum class MomentSetKind { half_line, parabola_slice, box };

/// Convex set C of attainable moment vectors.
///   half_line:      [0, inf) in R
///   parabola_slice: {1} x {(z1, z2) : z1^2 / 2 <= z2} in R^3
///   box:            product of intervals
class MomentSet {
 public:
  static constexpr double kDefaultTolerance = 1e-9;

  static MomentSet half_line() { return MomentSet(MomentSetKind::half_line, 1); }
  static MomentSet parabola_slice() { return MomentSet(MomentSetKind::parabola_slice, 3); }
  static MomentSet box(Vec lo, Vec hi) {
    if (lo.size() != hi.size() || !(lo.array() <= hi.array()).all())
      throw InputError("MomentSet::box: invalid bounds");
    MomentSet s(MomentSetKind::box, lo.size());
    s.lo_ = std::move(lo);
    s.hi_ = std::move(hi);
    return s;
  }

  MomentSetKind kind() const { return kind_; }
  Eigen::Index dim() const { return dim_; }

  /// Signed distance: negative inside, positive outside, zero on the boundary.
  double signed_distance(const Vec& z) const {
    require_dim(z, dim_, "MomentSet");
    switch (kind_) {
      case MomentSetKind::half_line:
        return -z[0];
      case MomentSetKind::parabola_slice: {
        const double slice = std::abs(z[0] - 1.0);
        const double d = parabola_distance(z[1], z[2]);
        const bool inside = z[2] >= 0.5 * z[1] * z[1];
        if (slice == 0.0) return inside ? -d : d;
        // off the slice: outside; distance combines both offsets
        return std::hypot(slice, inside ? 0.0 : d);
      }
      case MomentSetKind::box: {
        double worst = -std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < dim_; ++i)
          worst = std::max({worst, lo_[i] - z[i], z[i] - hi_[i]});
        return worst;
      }
    }
    return 0.0;
  }

  bool contains(const Vec& z, double tol = kDefaultTolerance) const {
    if (kind_ == MomentSetKind::parabola_slice && std::abs(z[0] - 1.0) > tol) return false;
    return signed_distance(z) <= tol;
  }

  /// Euclidean distance to the boundary of C (within its affine hull for the slice).
  double boundary_distance(const Vec& z) const {
    if (kind_ == MomentSetKind::parabola_slice)
      return std::hypot(z[0] - 1.0, parabola_distance(z[1], z[2]));
    return std::abs(signed_distance(z));
  }

  bool on_boundary(const Vec& z, double tol = kDefaultTolerance) const {
    return boundary_distance(z) <= tol;
  }

  /// Outward unit normal at a boundary point.
  Vec outward_normal(const Vec& z) const {
    require_dim(z, dim_, "MomentSet");
    switch (kind_) {
      case MomentSetKind::half_line:
        return vec1(-1.0);
      case MomentSetKind::parabola_slice: {
        Vec n = vec3(0.0, z[1], -1.0);
        return n / n.norm();
      }
      case MomentSetKind::box: {
        Eigen::Index best = 0;
        double bd = std::numeric_limits<double>::infinity();
        double sign = 1.0;
        for (Eigen::Index i = 0; i < dim_; ++i) {
          if (std::abs(z[i] - lo_[i]) < bd) { bd = std::abs(z[i] - lo_[i]); best = i; sign = -1.0; }
          if (std::abs(z[i] - hi_[i]) < bd) { bd = std::abs(z[i] - hi_[i]); best = i; sign = 1.0; }
        }
        Vec n = Vec::Zero(dim_);
        n[best] = sign;
        return n;
      }
    }
    return Vec::Zero(dim_);
  }

  /// Distance from (a, b) to the parabola b = a^2 / 2 in the plane.
  static double parabola_distance(double a, double b) {
    // stationarity of (s - a)^2 + (s^2/2 - b)^2: s^3/2 + (1 - b) s - a = 0
    auto dist = [&](double s) { return std::hypot(s - a, 0.5 * s * s - b); };
    double best = dist(a);
    for (double s0 : {a, 0.0, std::sqrt(std::max(0.0, 2.0 * b)), -std::sqrt(std::max(0.0, 2.0 * b))}) {
      double s = s0;
      for (int it = 0; it < 60; ++it) {
        const double g = 0.5 * s * s * s + (1.0 - b) * s - a;
        const double dg = 1.5 * s * s + (1.0 - b);
        if (dg == 0.0) break;
        const double step = g / dg;
        s -= step;
        if (std::abs(step) <= 1e-15 * std::max(1.0, std::abs(s))) break;
      }
      if (std::isfinite(s)) best = std::min(best, dist(s));
    }
    return best;
  }

 private:
  MomentSet(MomentSetKind k, Eigen::Index d) : kind_(k), dim_(d) {}

  MomentSetKind kind_;
  Eigen::Index dim_;
  Vec lo_, hi_;
};

}  // namespace rmfg
