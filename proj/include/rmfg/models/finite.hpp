#pragma once

#include <string>

#include "rmfg/core/types.hpp"

namespace rmfg {

/// Finite-state master model: dU/dt + (F(x,U).grad)U = G(x,U), U(0) = U0.
/// Jacobian callbacks are optional; missing ones fall back to central
/// differences with step 1e-6.
struct FiniteStateModel {
  std::string name;
  Eigen::Index N = 0;
  VecMap2 F;
  VecMap2 G;
  VecMap U0;
  MatMap2 dFdx, dFdu, dGdx, dGdu;
  MatMap dU0;
  bool F_strict = false;
  bool G_strict = false;

  void validate() const {
    if (N < 1) throw InputError("FiniteStateModel: N must be >= 1");
    if (!F || !G || !U0) throw ConfigurationError("FiniteStateModel '" + name + "': missing F, G or U0");
  }

  Mat jac_F_x(const Vec& x, const Vec& u) const {
    if (dFdx) return dFdx(x, u);
    return fd_jacobian([&](const Vec& v) { return F(v, u); }, x);
  }
  Mat jac_F_u(const Vec& x, const Vec& u) const {
    if (dFdu) return dFdu(x, u);
    return fd_jacobian([&](const Vec& v) { return F(x, v); }, u);
  }
  Mat jac_G_x(const Vec& x, const Vec& u) const {
    if (dGdx) return dGdx(x, u);
    return fd_jacobian([&](const Vec& v) { return G(v, u); }, x);
  }
  Mat jac_G_u(const Vec& x, const Vec& u) const {
    if (dGdu) return dGdu(x, u);
    return fd_jacobian([&](const Vec& v) { return G(x, v); }, u);
  }
  Mat jac_U0(const Vec& x) const {
    if (dU0) return dU0(x);
    return fd_jacobian(U0, x);
  }

  /// The pair map (x, U) -> (G(x,U), F(x,U)) on R^{2N} whose monotonicity is
  /// the structural hypothesis of the finite-state theory.
  VecMap pair_map() const {
    const Eigen::Index n = N;
    const auto g = G;
    const auto f = F;
    return [n, g, f](const Vec& xu) {
      const Vec x = xu.head(n), u = xu.tail(n);
      Vec out(2 * n);
      out << g(x, u), f(x, u);
      return out;
    };
  }
};

/// Reduced model on R^n with the same structure.
struct ReducedFiniteModel {
  Eigen::Index n = 0;
  VecMap2 F;
  VecMap2 G;
  VecMap U0;
  MatMap2 dFdy, dFdu, dGdy, dGdu;
  MatMap dU0;

  FiniteStateModel as_finite(const std::string& name = "reduced") const {
    FiniteStateModel m;
    m.name = name;
    m.N = n;
    m.F = F;
    m.G = G;
    m.U0 = U0;
    m.dFdx = dFdy;
    m.dFdu = dFdu;
    m.dGdx = dGdy;
    m.dGdu = dGdu;
    m.dU0 = dU0;
    return m;
  }
};

}  // namespace rmfg
