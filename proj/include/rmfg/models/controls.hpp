#pragma once

#include <optional>
#include <string>

#include "rmfg/core/particle_cloud.hpp"

namespace rmfg {

/// Strongly coupled game in one space dimension, with the control
/// distribution entering through phi(t) = integral Phi(t, y, Du) dm_t.
/// The terminal cost may depend on m only through the moment vector
/// mean of G_features(y).
struct ControlsModel {
  using HFn = std::function<double(double x, double p, const Vec& phi)>;
  using GFn = std::function<double(double x, const Vec& gm)>;
  using PhiFn = std::function<Vec(double t, double x, double p)>;
  using CoefA = std::function<Mat(double t, const Vec& phi)>;
  using CoefB = std::function<Vec(double t, const Vec& phi)>;

  std::string name;
  double q = 2.0;       ///< growth exponent of H in p
  double r = 2.0;       ///< growth exponent of Phi in p
  double lambda = 3.0;  ///< moment order carried by m0
  Eigen::Index phi_dim = 1;

  HFn H, DpH, DxH, DppH;
  VecMap G_features;  ///< y -> feature vector; empty when G ignores m
  GFn G, DxG;
  PhiFn Phi, DtPhi, DxPhi, DpPhi;
  CoefA A;
  CoefB B;
  std::string omega = "none";  ///< modulus descriptor for the m-dependence of G

  double gamma() const { return r / (q - 1.0); }
  double qprime() const { return q / (q - 1.0); }

  void validate() const {
    if (!(q > 1.0)) throw InputError("ControlsModel: need q > 1");
    if (!(r >= q)) throw InputError("ControlsModel: need r >= q");
    if (!(lambda > gamma())) throw InputError("ControlsModel: need lambda > gamma");
    if (!H || !DpH || !G || !DxG || !Phi || !A || !B)
      throw ConfigurationError("ControlsModel '" + name + "': missing callback");
  }

  Vec f(double t, const Vec& phi) const { return A(t, phi) * phi + B(t, phi); }

  double dpp_H(double x, double p, const Vec& phi) const {
    if (DppH) return DppH(x, p, phi);
    const double h = 1e-6 * std::max(1.0, std::abs(p));
    return (DpH(x, p + h, phi) - DpH(x, p - h, phi)) / (2.0 * h);
  }

  /// Moment vector of m fed to G (empty when G ignores m).
  Vec g_moments(const ParticleCloud& m) const {
    if (!G_features) return Vec();
    Vec acc;
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      Vec v = G_features(m.point(i));
      if (!v.allFinite()) throw EvaluationError("G_features: non-finite value at particle " + std::to_string(i));
      if (i == 0) acc = Vec::Zero(v.size());
      acc += v;
    }
    return acc / static_cast<double>(m.size());
  }
};

/// One-dimensional power family with affine drift:
///   H(x,p,phi) = (1/p')(|p|^p / p - x a(phi) p),  G(x,m) = |x|^{p'} g(z) / p',
///   Phi(p) = |p|^q / q,  z = (1/p') integral |y|^{p'} dm.
struct PowerControlsModel {
  std::string name = "power-controls";
  double p = 2.0;
  double q = 2.0;
  ScalarFn a, da;
  ScalarFn g, dg;
  std::optional<std::pair<double, double>> delta_band;  ///< (delta0, delta1) when claimed

  double pprime() const { return p / (p - 1.0); }

  void validate() const {
    if (!(p > 1.0)) throw InputError("PowerControlsModel: need p > 1");
    if (!(q > 1.0)) throw InputError("PowerControlsModel: need q > 1");
    if (!a || !g) throw ConfigurationError("PowerControlsModel: missing a or g");
  }

  double z0(const ParticleCloud& m0) const {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < m0.size(); ++i) acc += std::pow(std::abs(m0.points()(i, 0)), pprime());
    return acc / (pprime() * static_cast<double>(m0.size()));
  }
  double alpha0(const ParticleCloud& m0) const {
    const double e = q * (pprime() - 1.0);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < m0.size(); ++i) acc += std::pow(std::abs(m0.points()(i, 0)), e);
    return acc / (q * static_cast<double>(m0.size()));
  }

  /// The same game as a general controls model (for cross-solver checks).
  ControlsModel to_controls_model(double lambda = 0.0) const {
    validate();
    ControlsModel cm;
    cm.name = name;
    cm.q = p;
    cm.r = std::max(p, q);
    cm.lambda = lambda > 0.0 ? lambda : cm.gamma() + 1.0;
    cm.phi_dim = 1;
    const double pp = p, qq = q, ppr = pprime();
    const ScalarFn af = a, gf = g;
    cm.H = [=](double x, double pv, const Vec& phi) {
      return (std::pow(std::abs(pv), pp) / pp - x * af(phi[0]) * pv) / ppr;
    };
    cm.DpH = [=](double x, double pv, const Vec& phi) {
      return (signed_pow(pv, pp - 1.0) - x * af(phi[0])) / ppr;
    };
    cm.DxH = [=](double, double pv, const Vec& phi) { return -af(phi[0]) * pv / ppr; };
    cm.DppH = [=](double, double pv, const Vec&) { return (pp - 1.0) * std::pow(std::abs(pv), pp - 2.0) / ppr; };
    cm.G_features = [=](const Vec& y) { return vec1(std::pow(std::abs(y[0]), ppr) / ppr); };
    cm.G = [=](double x, const Vec& gm) { return std::pow(std::abs(x), ppr) / ppr * gf(gm[0]); };
    cm.DxG = [=](double x, const Vec& gm) { return signed_pow(x, ppr - 1.0) * gf(gm[0]); };
    cm.Phi = [=](double, double, double pv) { return vec1(std::pow(std::abs(pv), qq) / qq); };
    cm.DtPhi = [](double, double, double) { return vec1(0.0); };
    cm.DxPhi = [](double, double, double) { return vec1(0.0); };
    cm.DpPhi = [=](double, double, double pv) { return vec1(signed_pow(pv, qq - 1.0)); };
    cm.A = [=](double, const Vec& phi) {
      Mat M(1, 1);
      M(0, 0) = qq / ppr * af(phi[0]);
      return M;
    };
    cm.B = [](double, const Vec&) { return vec1(0.0); };
    cm.omega = "Lipschitz in z";
    return cm;
  }
};

}  // namespace rmfg
