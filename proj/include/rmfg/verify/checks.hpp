#pragma once

#include <Eigen/QR>

#include <optional>
#include <vector>

#include "rmfg/core/reduction_map.hpp"
#include "rmfg/models/controls.hpp"
#include "rmfg/models/finite.hpp"
#include "rmfg/models/master.hpp"
#include "rmfg/models/noise.hpp"
#include "rmfg/verify/report.hpp"

namespace rmfg {

namespace detail {

inline Vec eval_checked(const VecMap& f, const Vec& x, const std::string& who) {
  Vec v = f(x);
  if (!v.allFinite()) {
    std::ostringstream os;
    os << who << ": non-finite value at x = [" << x.transpose() << "]";
    throw EvaluationError(os.str());
  }
  return v;
}

}  // namespace detail

/// Sampled monotonicity: min over pairs of <A(x) - A(y), x - y>, or of that
/// pairing divided by |x - y|^2 when `strict` (an empirical strictness modulus).
inline CheckReport check_monotone(const VecMap& A, Eigen::Index dim, const SampleOptions& opt = {},
                                  bool strict = false, const std::string& name = "monotone") {
  if (opt.samples < 1) throw InputError("check_monotone: samples must be >= 1");
  if (!(opt.box > 0.0)) throw InputError("check_monotone: degenerate box");
  CheckReport rep;
  rep.name = name;
  rep.samples = opt.samples;
  rep.seed = opt.seed;
  rep.tolerance = opt.tolerance;
  BoxSampler S(opt.seed, opt.box);
  for (long k = 0; k < opt.samples; ++k) {
    const Vec x = S.draw(dim), y = S.draw(dim);
    const Vec Ax = detail::eval_checked(A, x, name), Ay = detail::eval_checked(A, y, name);
    double m = (Ax - Ay).dot(x - y);
    if (strict) m /= (x - y).squaredNorm();
    rep.offer(m, [&] { return nlohmann::json{{"x", to_json(x)}, {"y", to_json(y)}}; });
  }
  rep.finalize();
  return rep;
}

struct ReductionCheck {
  CheckReport report;
  VecMap reduced;
};

/// Complete reduction A(x) = L* Ã(Lx) with Ã(y) = (LL*)^{-1} L A(L^+ y):
/// checks the residual and constancy of A along fibers x + ker L.
inline ReductionCheck check_complete_reduce(const VecMap& A, const ReductionMap& L, const SampleOptions& opt = {},
                                            const std::string& name = "complete_reduce") {
  ReductionCheck out;
  const Mat Lm = L.matrix(), Gi = L.gram_inverse(), Rinv = L.right_inverse(), K = L.kernel_basis();
  out.reduced = [A, Lm, Gi, Rinv](const Vec& y) { return Vec(Gi * (Lm * A(Rinv * y))); };
  CheckReport& rep = out.report;
  rep.name = name;
  rep.samples = opt.samples;
  rep.seed = opt.seed;
  rep.tolerance = opt.tolerance;
  BoxSampler S(opt.seed, opt.box);
  for (long k = 0; k < opt.samples; ++k) {
    const Vec x = S.draw(L.N());
    const Vec xi = S.draw(K.cols());
    const Vec x2 = x + K * xi;
    const Vec Ax = detail::eval_checked(A, x, name);
    const Vec lhs = L.adjoint() * out.reduced(L.reduce(x));
    const double residual = (Ax - lhs).cwiseAbs().maxCoeff();
    const double fiber = (Ax - detail::eval_checked(A, x2, name)).cwiseAbs().maxCoeff();
    rep.offer(-residual, [&] {
      return nlohmann::json{{"condition", "A(x) = L* Ã(Lx)"}, {"x", to_json(x)}, {"residual", residual}};
    });
    rep.offer(-fiber, [&] {
      return nlohmann::json{{"condition", "A constant on fibers"}, {"x", to_json(x)}, {"x_same_fiber", to_json(x2)}};
    });
  }
  rep.finalize();
  return out;
}

/// Fiber reduction L A(x) = Ã(Lx) with Ã(y) = L A(L^+ y).
inline ReductionCheck check_fiber_reduce(const VecMap& A, const ReductionMap& L, const SampleOptions& opt = {},
                                         const std::string& name = "fiber_reduce") {
  ReductionCheck out;
  const Mat Lm = L.matrix(), Rinv = L.right_inverse(), K = L.kernel_basis();
  out.reduced = [A, Lm, Rinv](const Vec& y) { return Vec(Lm * A(Rinv * y)); };
  CheckReport& rep = out.report;
  rep.name = name;
  rep.samples = opt.samples;
  rep.seed = opt.seed;
  rep.tolerance = opt.tolerance;
  BoxSampler S(opt.seed, opt.box);
  for (long k = 0; k < opt.samples; ++k) {
    const Vec x = S.draw(L.N());
    const Vec xi = S.draw(K.cols());
    const Vec x2 = x + K * xi;
    const Vec LAx = Lm * detail::eval_checked(A, x, name);
    const double residual = (LAx - out.reduced(L.reduce(x))).cwiseAbs().maxCoeff();
    const double fiber = (LAx - Lm * detail::eval_checked(A, x2, name)).cwiseAbs().maxCoeff();
    rep.offer(-residual, [&] {
      return nlohmann::json{{"condition", "L A(x) = Ã(Lx)"}, {"x", to_json(x)}, {"residual", residual}};
    });
    rep.offer(-fiber, [&] {
      return nlohmann::json{
          {"condition", "fibers mapped to fibers"}, {"x", to_json(x)}, {"x_same_fiber", to_json(x2)}};
    });
  }
  rep.finalize();
  return out;
}

struct PairReductionResult {
  CheckReport report;
  std::vector<CheckReport> parts;
  ReducedFiniteModel reduced;
  bool full_monotone = false;
  bool reduced_monotone = false;
};

/// Checks that U0 and x -> G(x, L*u) completely reduce and x -> F(x, L*u)
/// fiber-reduces, assembles (F̃, G̃, Ũ0), and verifies the monotonicity
/// transfer from the full pair to the reduced pair.
inline PairReductionResult check_pair_reduction(const FiniteStateModel& model, const ReductionMap& L,
                                                const SampleOptions& opt = {}) {
  model.validate();
  if (model.N != L.N()) throw InputError("check_pair_reduction: model dimension does not match L");
  PairReductionResult out;
  const Eigen::Index n = L.n(), N = L.N();
  const Mat Lm = L.matrix(), Ls = L.adjoint(), Gi = L.gram_inverse(), Rinv = L.right_inverse(),
            K = L.kernel_basis();
  const VecMap2 F = model.F, G = model.G;
  const VecMap U0 = model.U0;

  out.reduced.n = n;
  out.reduced.F = [F, Lm, Ls, Rinv](const Vec& y, const Vec& u) { return Vec(Lm * F(Rinv * y, Ls * u)); };
  out.reduced.G = [G, Lm, Ls, Gi, Rinv](const Vec& y, const Vec& u) {
    return Vec(Gi * (Lm * G(Rinv * y, Ls * u)));
  };
  out.reduced.U0 = [U0, Lm, Gi, Rinv](const Vec& y) { return Vec(Gi * (Lm * U0(Rinv * y))); };
  out.reduced.dFdy = [model, Lm, Ls, Rinv](const Vec& y, const Vec& u) {
    return Mat(Lm * model.jac_F_x(Rinv * y, Ls * u) * Rinv);
  };
  out.reduced.dFdu = [model, Lm, Ls, Rinv](const Vec& y, const Vec& u) {
    return Mat(Lm * model.jac_F_u(Rinv * y, Ls * u) * Ls);
  };
  out.reduced.dGdy = [model, Lm, Ls, Gi, Rinv](const Vec& y, const Vec& u) {
    return Mat(Gi * Lm * model.jac_G_x(Rinv * y, Ls * u) * Rinv);
  };
  out.reduced.dGdu = [model, Lm, Ls, Gi, Rinv](const Vec& y, const Vec& u) {
    return Mat(Gi * Lm * model.jac_G_u(Rinv * y, Ls * u) * Ls);
  };
  out.reduced.dU0 = [model, Lm, Gi, Rinv](const Vec& y) { return Mat(Gi * Lm * model.jac_U0(Rinv * y) * Rinv); };

  // U0 completely reduces
  out.parts.push_back(check_complete_reduce(U0, L, opt, "U0 completely reduces").report);

  auto base = [&](const std::string& nm) {
    CheckReport r;
    r.name = nm;
    r.samples = opt.samples;
    r.seed = opt.seed;
    r.tolerance = opt.tolerance;
    return r;
  };
  CheckReport g_rep = base("G(., L*u) completely reduces");
  CheckReport f_rep = base("F(., L*u) fiber-reduces");
  BoxSampler S(opt.seed ^ 0x9e3779b97f4a7c15ULL, opt.box);
  for (long k = 0; k < opt.samples; ++k) {
    const Vec x = S.draw(N), u = S.draw(n), xi = S.draw(K.cols());
    const Vec x2 = x + K * xi;
    const Vec Lsu = Ls * u;
    const Vec Gx = G(x, Lsu), Gx2 = G(x2, Lsu), Fx = F(x, Lsu), Fx2 = F(x2, Lsu);
    if (!Gx.allFinite() || !Gx2.allFinite() || !Fx.allFinite() || !Fx2.allFinite())
      throw EvaluationError("check_pair_reduction: non-finite model value");
    const Vec y = Lm * x;
    const double g_res = (Gx - Ls * out.reduced.G(y, u)).cwiseAbs().maxCoeff();
    const double g_fib = (Gx - Gx2).cwiseAbs().maxCoeff();
    const double f_res = (Lm * Fx - out.reduced.F(y, u)).cwiseAbs().maxCoeff();
    const double f_fib = (Lm * Fx - Lm * Fx2).cwiseAbs().maxCoeff();
    auto w = [&](const char* cond) {
      return nlohmann::json{{"condition", cond}, {"x", to_json(x)}, {"x_same_fiber", to_json(x2)}, {"u", to_json(u)}};
    };
    g_rep.offer(-g_res, [&] { return w("G(x,L*u) = L* G̃(Lx,u)"); });
    g_rep.offer(-g_fib, [&] { return w("G(., L*u) constant on fibers"); });
    f_rep.offer(-f_res, [&] { return w("L F(x,L*u) = F̃(Lx,u)"); });
    f_rep.offer(-f_fib, [&] { return w("F(., L*u) maps fibers to fibers"); });
  }
  g_rep.finalize();
  f_rep.finalize();
  out.parts.push_back(g_rep);
  out.parts.push_back(f_rep);

  // monotonicity transfer
  CheckReport full = check_monotone(model.pair_map(), 2 * N, opt, false, "(G, F) monotone");
  CheckReport u0_full = check_monotone(U0, N, opt, false, "U0 monotone");
  const auto red = out.reduced;
  VecMap red_pair = [red, n](const Vec& yu) {
    const Vec y = yu.head(n), u = yu.tail(n);
    Vec o(2 * n);
    o << red.G(y, u), red.F(y, u);
    return o;
  };
  CheckReport red_rep = check_monotone(red_pair, 2 * n, opt, false, "(G̃, F̃) monotone");
  CheckReport u0_red = check_monotone(red.U0, n, opt, false, "Ũ0 monotone");
  out.full_monotone = full.pass && u0_full.pass;
  out.reduced_monotone = red_rep.pass && u0_red.pass;
  CheckReport transfer = base("monotonicity transfers to the reduced pair");
  // the implication full => reduced is what the theorem asserts
  transfer.worst_margin = out.full_monotone ? std::min(red_rep.worst_margin, u0_red.worst_margin) : 0.0;
  transfer.witness = out.full_monotone
                         ? (red_rep.worst_margin <= u0_red.worst_margin ? red_rep.witness : u0_red.witness)
                         : nlohmann::json{{"condition", "full pair not monotone; transfer vacuous"}};
  transfer.finalize();
  out.parts.push_back(full);
  out.parts.push_back(u0_full);
  out.parts.push_back(red_rep);
  out.parts.push_back(u0_red);
  out.parts.push_back(transfer);

  CheckReport& rep = out.report;
  rep = base("pair_reduction");
  rep.witness = nlohmann::json::object();
  // only the reduction hypotheses and the transfer decide the verdict; the
  // monotonicity of the full pair is a premise, reported in `parts`
  for (const auto* p : {&out.parts[0], &out.parts[1], &out.parts[2], &transfer}) {
    if (p->worst_margin < rep.worst_margin) {
      rep.worst_margin = p->worst_margin;
      rep.witness = p->witness;
      rep.witness["failed_check"] = p->name;
    }
  }
  rep.finalize();
  return out;
}

/// The structural conditions on (a, b, c) for the power family, evaluated on a
/// grid, plus a direct sampled cross-check of h_z <= 0, h_uu >= 0,
/// z h_uz^2 <= -4 h_z h_uu.
inline CheckReport check_abc(const PowerMasterModel& model, const std::vector<double>& z_grid,
                             const SampleOptions& opt = {}) {
  model.validate();
  if (!model.da || !model.db || !model.dc)
    throw ConfigurationError("check_abc: derivative callbacks of a, b, c are required");
  if (z_grid.size() < 2) throw InputError("check_abc: need at least two grid points");
  for (double z : z_grid)
    if (z < 0.0) throw InputError("check_abc: grid must lie in [0, inf)");
  CheckReport rep;
  rep.name = "abc_conditions";
  rep.samples = static_cast<long>(z_grid.size()) + opt.samples;
  rep.seed = opt.seed;
  rep.tolerance = opt.tolerance;
  const double tol = opt.tolerance;
  const double q = model.q;
  std::vector<std::string> failed;
  std::string first_failed;
  nlohmann::json first_witness;
  auto consider = [&](const std::string& cond, double margin, nlohmann::json w) {
    w["condition"] = cond;
    if (margin < -tol) {
      if (std::find(failed.begin(), failed.end(), cond) == failed.end()) failed.push_back(cond);
      if (first_failed.empty()) {
        first_failed = cond;
        first_witness = w;
      }
    }
    rep.offer(margin, [&] { return w; });
  };
  // strict inequality: a value of exactly zero must fail
  auto strict = [tol](double v) { return v > 0.0 ? v : std::min(v, -2.0 * tol); };
  const double e = 4.0 * (q - 1.0) / q;
  double bmin = std::numeric_limits<double>::infinity(), bmax = -bmin;
  double zmin = 0, zmax = 0;
  for (std::size_t k = 0; k < z_grid.size(); ++k) {
    const double z = z_grid[k];
    consider("a > 0", strict(model.a(z)), {{"z", z}, {"a", model.a(z)}});
    consider("a' <= 0", -model.da(z), {{"z", z}, {"a'", model.da(z)}});
    consider("c' <= 0", -model.dc(z), {{"z", z}, {"c'", model.dc(z)}});
    if (k + 1 < z_grid.size()) {
      const double z2 = z_grid[k + 1];
      const double w1 = model.a(z) * std::pow(z, e), w2 = model.a(z2) * std::pow(z2, e);
      consider("z -> a(z) z^{4(q-1)/q} nondecreasing", z2 >= z ? w2 - w1 : w1 - w2,
               {{"z", z}, {"z_next", z2}, {"w", w1}, {"w_next", w2}});
    }
    const double b = model.b(z);
    if (b < bmin) { bmin = b; zmin = z; }
    if (b > bmax) { bmax = b; zmax = z; }
    if (q == 2.0) {
      const double m = 2.0 * model.da(z) * model.dc(z) - model.db(z) * model.db(z);
      consider("b'^2 <= 2 a' c' (q = 2)", m, {{"z", z}, {"b'", model.db(z)}});
    }
  }
  if (q > 2.0) {
    // b constant: range over the grid at most 1e-12, expressed on the report's tolerance scale
    const double range = bmax - bmin;
    consider("b constant (q > 2)", range <= 1e-12 ? 0.0 : -std::max(range, 2.0 * tol),
             {{"witness", "b not constant"}, {"z_min", zmin}, {"b_min", bmin}, {"z_max", zmax}, {"b_max", bmax}});
  }
  // cross-check of the underlying differential conditions on (z, u) samples
  BoxSampler S(opt.seed, opt.box);
  const double zhi = z_grid.back();
  for (long k = 0; k < opt.samples; ++k) {
    const double z = S.uniform(0.0, zhi), u = S.uniform(-opt.box, opt.box);
    const double hz = model.h_z(z, u), huu = model.h_uu(z, u), huz = model.h_uz(z, u);
    nlohmann::json w{{"z", z}, {"u", u}};
    consider("h_z <= 0", -hz, w);
    consider("h_uu >= 0", huu, w);
    consider("z h_uz^2 <= -4 h_z h_uu", -4.0 * hz * huu - z * huz * huz, w);
  }
  rep.finalize();
  if (!rep.pass) {
    rep.witness = first_witness;
    rep.witness["failed_conditions"] = failed;
  }
  return rep;
}

/// Draw a point of the moment set (half-line or parabola slice).
inline Vec sample_moment_set(const MomentSet& C, BoxSampler& S, double box) {
  switch (C.kind()) {
    case MomentSetKind::half_line:
      return vec1(S.uniform(0.0, box));
    case MomentSetKind::parabola_slice: {
      const double z1 = S.uniform(-box, box);
      return vec3(1.0, z1, 0.5 * z1 * z1 + S.uniform(0.0, box));
    }
    case MomentSetKind::box:
      break;
  }
  throw UnsupportedConfigurationError("sample_moment_set: box moment sets are not sampled");
}

/// Monotonicity of (z,u) -> (-h(z,u), z . h_u(z,u)) on C x R^m.
inline CheckReport check_h_monotone(const ReducedMasterSystem& sys, const SampleOptions& opt = {}) {
  CheckReport rep;
  rep.name = "h_monotone";
  rep.samples = opt.samples;
  rep.seed = opt.seed;
  rep.tolerance = opt.tolerance;
  BoxSampler S(opt.seed, opt.box);
  for (long k = 0; k < opt.samples; ++k) {
    const Vec z = sample_moment_set(sys.cset, S, opt.box), zt = sample_moment_set(sys.cset, S, opt.box);
    const Vec u = S.draw(sys.m), ut = S.draw(sys.m);
    const Vec dh = sys.h(z, u) - sys.h(zt, ut);
    const Vec dzh = sys.z_dot_hu(z, u) - sys.z_dot_hu(zt, ut);
    if (!dh.allFinite() || !dzh.allFinite()) throw EvaluationError("check_h_monotone: non-finite h");
    const double m = -dh.dot(z - zt) + dzh.dot(u - ut);
    rep.offer(m, [&] {
      return nlohmann::json{{"z", to_json(z)}, {"u", to_json(u)}, {"z_tilde", to_json(zt)}, {"u_tilde", to_json(ut)}};
    });
  }
  rep.finalize();
  return rep;
}

struct QuadraticPairTerms {
  double lhs;        ///< -<Δh, Δz> + <Δ(z.h_u), Δu>
  double printed;    ///< the printed lower bound
  double identity;   ///< <Δf,Δz> + ½Δu1²(z0+z̃0) + Δu1Δu2(z1+z̃1) + Δu2²(z2+z̃2)
  double pairing_f;  ///< <Δf, Δz>
};

inline QuadraticPairTerms quadratic_pair_terms(const QuadraticMasterModel& model, const Vec& z, const Vec& u,
                                               const Vec& zt, const Vec& ut) {
  const Vec dz = z - zt, du = u - ut;
  const Vec h = QuadraticMasterModel::h_of(model.f(z), u), ht = QuadraticMasterModel::h_of(model.f(zt), ut);
  const Vec zh = QuadraticMasterModel::hu_of(u).transpose() * z;
  const Vec zht = QuadraticMasterModel::hu_of(ut).transpose() * zt;
  QuadraticPairTerms t;
  t.lhs = -(h - ht).dot(dz) + (zh - zht).dot(du);
  t.pairing_f = (model.f(z) - model.f(zt)).dot(dz);
  const double du1 = du[1], du2 = du[2];
  t.printed = 0.75 * du1 * du1 + 0.125 * std::pow(2.0 * z[1] * du2 + du1, 2) +
              0.125 * std::pow(2.0 * zt[1] * du2 + du1, 2) - t.pairing_f;
  t.identity = t.pairing_f + 0.5 * du1 * du1 * (z[0] + zt[0]) + du1 * du2 * (z[1] + zt[1]) +
               du2 * du2 * (z[2] + zt[2]);
  return t;
}

enum class QuadraticCheck {
  printed_chain,      ///< lhs >= printed lower bound
  expanded_identity,  ///< lhs equals the expanded identity
  monotone_bound      ///< lhs >= <Δf, Δz> >= 0
};

/// Sampled checks of the quadratic-family monotonicity computation.
inline CheckReport check_quadratic_chain(const QuadraticMasterModel& model, QuadraticCheck which,
                                         const SampleOptions& opt = {}) {
  CheckReport rep;
  rep.samples = opt.samples;
  rep.seed = opt.seed;
  rep.tolerance = opt.tolerance;
  rep.name = which == QuadraticCheck::printed_chain       ? "quadratic_printed_chain"
             : which == QuadraticCheck::expanded_identity ? "quadratic_expanded_identity"
                                                          : "quadratic_monotone_bound";
  const MomentSet C = MomentSet::parabola_slice();
  BoxSampler S(opt.seed, opt.box);
  for (long k = 0; k < opt.samples; ++k) {
    const Vec z = sample_moment_set(C, S, opt.box), zt = sample_moment_set(C, S, opt.box);
    const Vec u = S.draw(3), ut = S.draw(3);
    const auto t = quadratic_pair_terms(model, z, u, zt, ut);
    double m = 0.0;
    switch (which) {
      case QuadraticCheck::printed_chain:
        m = t.lhs - t.printed;
        break;
      case QuadraticCheck::expanded_identity:
        m = -std::abs(t.lhs - t.identity) / std::max(1.0, std::abs(t.lhs));
        break;
      case QuadraticCheck::monotone_bound:
        m = std::min(t.lhs - t.pairing_f, t.pairing_f);
        break;
    }
    rep.offer(m, [&] {
      return nlohmann::json{{"z", to_json(z)},        {"u", to_json(u)},   {"z_tilde", to_json(zt)},
                            {"u_tilde", to_json(ut)}, {"lhs", t.lhs},      {"printed_bound", t.printed},
                            {"identity", t.identity}, {"pairing_f", t.pairing_f}};
    });
  }
  rep.finalize();
  return rep;
}

struct HomogeneityCheck {
  CheckReport report;
  Mat fitted;  ///< m x m
};

/// D Phi(p) . p = 𝒜 Phi(p). With no candidate, 𝒜 is fitted by least squares;
/// a rank-deficient design is reported as indeterminate.
inline HomogeneityCheck check_phi_homogeneity(const VecMap& Phi, Eigen::Index d, const MatMap& DPhi = {},
                                              const std::optional<Mat>& candidate = std::nullopt,
                                              const SampleOptions& opt = {}) {
  HomogeneityCheck out;
  CheckReport& rep = out.report;
  rep.name = "phi_homogeneity";
  rep.samples = opt.samples;
  rep.seed = opt.seed;
  rep.tolerance = opt.tolerance;
  BoxSampler S(opt.seed, opt.box);
  std::vector<Vec> ps, lhs, rhs;
  ps.reserve(static_cast<std::size_t>(opt.samples));
  for (long k = 0; k < opt.samples; ++k) {
    const Vec p = S.draw(d);
    const Mat J = DPhi ? DPhi(p) : fd_jacobian(Phi, p);
    ps.push_back(p);
    lhs.push_back(J * p);
    rhs.push_back(Phi(p));
  }
  const Eigen::Index m = rhs.front().size();
  if (candidate) {
    out.fitted = *candidate;
  } else {
    Mat X(m, opt.samples), Y(m, opt.samples);
    for (long k = 0; k < opt.samples; ++k) {
      X.col(k) = rhs[static_cast<std::size_t>(k)];
      Y.col(k) = lhs[static_cast<std::size_t>(k)];
    }
    Eigen::ColPivHouseholderQR<Mat> qr(X.transpose());
    if (qr.rank() < m) {
      rep.indeterminate = true;
      rep.worst_margin = 0.0;
      rep.witness = {{"reason", "rank-deficient fit"}, {"rank", qr.rank()}};
      rep.finalize();
      out.fitted = Mat::Zero(m, m);
      return out;
    }
    out.fitted = qr.solve(Y.transpose()).transpose();
  }
  // analytic derivatives are held to the report tolerance; finite differences
  // carry O(1e-10) relative error
  const double scale_tol = DPhi ? 1.0 : 1e-6 / opt.tolerance;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    const double r = (lhs[k] - out.fitted * rhs[k]).norm() / (1.0 + lhs[k].norm());
    rep.offer(-r / scale_tol, [&] { return nlohmann::json{{"p", to_json(ps[k])}, {"relative_residual", r}}; });
  }
  rep.finalize();
  rep.witness["fitted_A"] = nlohmann::json::array();
  for (Eigen::Index i = 0; i < out.fitted.rows(); ++i) rep.witness["fitted_A"].push_back(to_json(out.fitted.row(i).transpose()));
  return out;
}

/// Residual of dPhi/dt - D_pH . D_xPhi + D_xH . D_pPhi + A Phi + B on samples
/// (t, x, p, phi) in [0, T] x box^3.
inline CheckReport check_control_reduction(const ControlsModel& model, double T = 1.0, const SampleOptions& opt = {}) {
  model.validate();
  CheckReport rep;
  rep.name = "control_reduction";
  rep.samples = opt.samples;
  rep.seed = opt.seed;
  rep.tolerance = opt.tolerance;
  BoxSampler S(opt.seed, opt.box);
  const double h = 1e-6;
  for (long k = 0; k < opt.samples; ++k) {
    const double t = S.uniform(0.0, T), x = S.uniform(-opt.box, opt.box), p = S.uniform(-opt.box, opt.box);
    const Vec phi = S.draw(model.phi_dim);
    const Vec dt = model.DtPhi ? model.DtPhi(t, x, p) : Vec((model.Phi(t + h, x, p) - model.Phi(t - h, x, p)) / (2 * h));
    const Vec dx = model.DxPhi ? model.DxPhi(t, x, p) : Vec((model.Phi(t, x + h, p) - model.Phi(t, x - h, p)) / (2 * h));
    const Vec dp = model.DpPhi ? model.DpPhi(t, x, p) : Vec((model.Phi(t, x, p + h) - model.Phi(t, x, p - h)) / (2 * h));
    const double DxH = model.DxH ? model.DxH(x, p, phi) : (model.H(x + h, p, phi) - model.H(x - h, p, phi)) / (2 * h);
    const Vec res = dt - model.DpH(x, p, phi) * dx + DxH * dp + model.A(t, phi) * model.Phi(t, x, p) + model.B(t, phi);
    if (!res.allFinite()) throw EvaluationError("check_control_reduction: non-finite residual");
    const double r = res.cwiseAbs().maxCoeff();
    rep.offer(-r, [&] {
      return nlohmann::json{{"t", t}, {"x", x}, {"p", p}, {"phi", to_json(phi)}, {"residual", r}};
    });
  }
  rep.finalize();
  return rep;
}

/// Strong monotonicity <ΔG, Δx> + <ΔF, ΔU> >= alpha |Δx|^2 on sampled quadruples.
inline CheckReport check_strong_monotone(const FiniteStateModel& model, double alpha, const SampleOptions& opt = {}) {
  CheckReport rep;
  rep.name = "strong_monotone";
  rep.samples = opt.samples;
  rep.seed = opt.seed;
  rep.tolerance = opt.tolerance;
  BoxSampler S(opt.seed, opt.box);
  for (long k = 0; k < opt.samples; ++k) {
    const Vec x = S.draw(model.N), y = S.draw(model.N), U = S.draw(model.N), V = S.draw(model.N);
    const double m = (model.G(x, U) - model.G(y, V)).dot(x - y) + (model.F(x, U) - model.F(y, V)).dot(U - V) -
                     alpha * (x - y).squaredNorm();
    rep.offer(m, [&] {
      return nlohmann::json{{"x", to_json(x)}, {"y", to_json(y)}, {"U", to_json(U)}, {"V", to_json(V)}};
    });
  }
  rep.finalize();
  return rep;
}

/// Analytic Jacobians against central differences (relative 1e-4).
inline CheckReport check_jacobians(const FiniteStateModel& model, long samples = 100, std::uint64_t seed = 1,
                                   double box = 5.0) {
  CheckReport rep;
  rep.name = "jacobians";
  rep.samples = samples;
  rep.seed = seed;
  rep.tolerance = 0.0;
  BoxSampler S(seed, box);
  auto compare = [&](const char* which, const Mat& analytic, const Mat& fd, const Vec& x, const Vec& u) {
    const double rel = (analytic - fd).cwiseAbs().maxCoeff() / std::max(1.0, fd.cwiseAbs().maxCoeff());
    rep.offer(1e-4 - rel, [&] {
      return nlohmann::json{{"jacobian", which}, {"x", to_json(x)}, {"u", to_json(u)}, {"relative_error", rel}};
    });
  };
  for (long k = 0; k < samples; ++k) {
    const Vec x = S.draw(model.N), u = S.draw(model.N);
    if (model.dFdx) compare("dF/dx", model.dFdx(x, u), fd_jacobian([&](const Vec& v) { return model.F(v, u); }, x), x, u);
    if (model.dFdu) compare("dF/du", model.dFdu(x, u), fd_jacobian([&](const Vec& v) { return model.F(x, v); }, u), x, u);
    if (model.dGdx) compare("dG/dx", model.dGdx(x, u), fd_jacobian([&](const Vec& v) { return model.G(v, u); }, x), x, u);
    if (model.dGdu) compare("dG/du", model.dGdu(x, u), fd_jacobian([&](const Vec& v) { return model.G(x, v); }, u), x, u);
    if (model.dU0) compare("dU0", model.dU0(x), fd_jacobian(model.U0, x), x, u);
  }
  rep.finalize();
  return rep;
}

}  // namespace rmfg
