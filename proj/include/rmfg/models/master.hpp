#pragma once

#include <string>

#include "rmfg/core/features.hpp"

namespace rmfg {

/// Reduced master data on the moment set: h(z,u), its u-Jacobian, terminal g,
/// and the particle velocity -D_pH(x, m, D phi(x) psi) of the underlying game.
struct ReducedMasterSystem {
  std::string name;
  Eigen::Index m = 1;
  FeatureMap feature;
  MomentSet cset = MomentSet::half_line();
  VecMap2 h;
  MatMap2 hu;  ///< (i, j) = dh_i / du_j
  VecMap g;
  MatMap dg;   ///< optional
  /// Velocity of a particle at x when the population has moments z and the
  /// value is u = phi(x) . psi.
  std::function<Vec(const Vec& x, const Vec& z, const Vec& psi)> particle_velocity;

  /// (z . h_u)_j = sum_i z_i dh_i/du_j.
  Vec z_dot_hu(const Vec& z, const Vec& u) const { return hu(z, u).transpose() * z; }

  Mat jac_g(const Vec& z) const { return dg ? dg(z) : fd_jacobian(g, z); }
};

/// h(z,u) = a(z)|u|^q / q + b(z) u + c(z) on C = [0, inf), phi(y) = |y|^{q'} / q'.
struct PowerMasterModel {
  std::string name = "power";
  double q = 2.0;
  ScalarFn a, b, c;
  ScalarFn da, db, dc;
  ScalarFn g, dg;

  double qprime() const { return q / (q - 1.0); }

  void validate() const {
    if (!(q >= 2.0)) throw UnsupportedConfigurationError("PowerMasterModel: only q >= 2 is supported");
    if (!a || !b || !c || !g) throw ConfigurationError("PowerMasterModel: missing a, b, c or g");
  }
  void require_derivatives() const {
    if (!da || !db || !dc) throw ConfigurationError("PowerMasterModel '" + name + "': derivative callbacks missing");
  }

  double h(double z, double u) const { return a(z) * std::pow(std::abs(u), q) / q + b(z) * u + c(z); }
  double h_u(double z, double u) const {
    return a(z) * signed_pow(u, q - 1.0) + b(z);
  }
  double h_uu(double z, double u) const { return a(z) * (q - 1.0) * std::pow(std::abs(u), q - 2.0); }
  double h_z(double z, double u) const {
    require_derivatives();
    return da(z) * std::pow(std::abs(u), q) / q + db(z) * u + dc(z);
  }
  double h_uz(double z, double u) const {
    require_derivatives();
    return da(z) * signed_pow(u, q - 1.0) + db(z);
  }

  ReducedMasterSystem system() const {
    validate();
    ReducedMasterSystem s;
    s.name = name;
    s.m = 1;
    s.feature = FeatureMap::power(qprime());
    s.cset = MomentSet::half_line();
    const PowerMasterModel self = *this;
    s.h = [self](const Vec& z, const Vec& u) { return vec1(self.h(z[0], u[0])); };
    s.hu = [self](const Vec& z, const Vec& u) {
      Mat J(1, 1);
      J(0, 0) = self.h_u(z[0], u[0]);
      return J;
    };
    s.g = [self](const Vec& z) { return vec1(self.g(z[0])); };
    if (dg) {
      s.dg = [self](const Vec& z) {
        Mat J(1, 1);
        J(0, 0) = self.dg(z[0]);
        return J;
      };
    }
    // -D_pH with p = |x|^{q'-2} x psi reduces to -(1/q') h_u(z, psi) x
    s.particle_velocity = [self](const Vec& x, const Vec& z, const Vec& psi) {
      return Vec(-(self.h_u(z[0], psi[0]) / self.qprime()) * x);
    };
    return s;
  }
};

/// h(z,u) = (u1^2/2 - f0(z), u1 u2 - f1(z), u2^2 - f2(z)) on the parabola slice,
/// phi(y) = (1, y, y^2/2).
struct QuadraticMasterModel {
  std::string name = "quadratic";
  VecMap f;
  MatMap df;  ///< optional
  VecMap g;
  MatMap dg;  ///< optional

  void validate() const {
    if (!f || !g) throw ConfigurationError("QuadraticMasterModel: missing f or g");
  }

  static Vec h_of(const Vec& fz, const Vec& u) {
    return vec3(0.5 * u[1] * u[1] - fz[0], u[1] * u[2] - fz[1], u[2] * u[2] - fz[2]);
  }
  static Mat hu_of(const Vec& u) {
    Mat J = Mat::Zero(3, 3);
    J(0, 1) = u[1];
    J(1, 1) = u[2];
    J(1, 2) = u[1];
    J(2, 2) = 2.0 * u[2];
    return J;
  }

  ReducedMasterSystem system() const {
    validate();
    ReducedMasterSystem s;
    s.name = name;
    s.m = 3;
    s.feature = FeatureMap::quadratic();
    s.cset = MomentSet::parabola_slice();
    const auto ff = f;
    s.h = [ff](const Vec& z, const Vec& u) { return h_of(ff(z), u); };
    s.hu = [](const Vec&, const Vec& u) { return hu_of(u); };
    s.g = g;
    s.dg = dg;
    // H = p^2/2 - ..., so D_pH = p = D(phi . psi) = psi1 + x psi2
    s.particle_velocity = [](const Vec& x, const Vec&, const Vec& psi) {
      return vec1(-(psi[1] + x[0] * psi[2]));
    };
    return s;
  }
};

}  // namespace rmfg
