#include <gtest/gtest.h>

#include <unsupported/Eigen/MatrixFunctions>

#include "rmfg/finite/master.hpp"
#include "rmfg/models/catalog.hpp"
#include "rmfg/verify/checks.hpp"

using namespace rmfg;
using namespace rmfg::finite;

namespace {

FiniteStateModel frozen(Eigen::Index N) {
  FiniteStateModel m;
  m.name = "frozen";
  m.N = N;
  m.F = [N](const Vec&, const Vec&) { return Vec(Vec::Zero(N)); };
  m.G = [N](const Vec&, const Vec&) { return Vec(Vec::Zero(N)); };
  m.U0 = [](const Vec& x) { return Vec(x.array().sin()); };
  return m;
}

FiniteStateModel symmetric() {
  FiniteStateModel m;
  m.name = "symmetric";
  m.N = 2;
  m.F = [](const Vec&, const Vec& u) { return u; };
  m.G = [](const Vec& x, const Vec&) { return x; };
  m.U0 = [](const Vec& x) { return x; };
  return m;
}

// demo-finite-A in the joint variable [X; V] is linear: s' = A s.
Mat demo_a_generator() {
  Mat A = Mat::Zero(4, 4);
  A.block(0, 0, 2, 4).setConstant(0.5);
  A.block(2, 0, 2, 2).setConstant(1.0);
  return A;
}

ReducedFiniteModel demo_a_reduced() {
  const auto spec = build_model("demo-finite-A");
  SampleOptions o;
  o.samples = 200;
  return check_pair_reduction(spec.as<FiniteStateModel>(), *spec.L, o).reduced;
}

}  // namespace

TEST(Characteristics, FrozenFlow) {
  const auto m = frozen(2);
  const Vec x = vec2(0.3, -1.2);
  const auto cf = solve_characteristics(m, {x}, 1.0);
  for (double t : {0.0, 0.4, 1.0}) {
    EXPECT_EQ(cf.X(0, t), x);
    EXPECT_LE((cf.V(0, t) - m.U0(x)).norm(), 1e-15);
  }
}

TEST(Characteristics, DemoFiniteAMatchesMatrixExponential) {
  const auto m = build_model("demo-finite-A").as<FiniteStateModel>();
  const Mat A = demo_a_generator();
  for (const Vec& x : {vec2(1.0, -0.5), vec2(-2.0, 2.0), vec2(0.7, 1.9)}) {
    const auto cf = solve_characteristics(m, {x}, 1.0);
    Vec s0(4);
    s0 << x, m.U0(x);
    for (double t : {0.25, 0.5, 1.0}) {
      const Vec exact = (A * t).exp() * s0;
      EXPECT_LE((cf.paths[0].at(t) - exact).cwiseAbs().maxCoeff(), 1e-8);
    }
  }
}

TEST(Characteristics, SymmetricClosedForm) {
  const auto cf = solve_characteristics(symmetric(), {vec2(1.0, -2.0)}, 1.0);
  for (double t : {0.3, 1.0}) {
    EXPECT_LE((cf.X(0, t) - vec2(1.0, -2.0) * std::exp(t)).norm(), 1e-10);
    EXPECT_LE((cf.V(0, t) - vec2(1.0, -2.0) * std::exp(t)).norm(), 1e-10);
  }
}

TEST(Characteristics, SeedErrors) {
  const Vec bad = vec2(std::numeric_limits<double>::quiet_NaN(), 0.0);
  EXPECT_THROW(solve_characteristics(symmetric(), {bad}, 1.0), InputError);
  EXPECT_THROW(solve_characteristics(symmetric(), {vec3(0, 0, 0)}, 1.0), InputError);
}

TEST(EvalU, InitialTimeAndStationarySolution) {
  const auto m = symmetric();
  EXPECT_EQ(eval_U(m, 0.0, vec2(0.5, 0.25)).value, vec2(0.5, 0.25));
  for (double t : {0.2, 1.0}) {
    const auto r = eval_U(m, t, vec2(1.5, -0.5));
    ASSERT_TRUE(r.converged);
    EXPECT_LE((r.value - vec2(1.5, -0.5)).norm(), 1e-9);
  }
}

TEST(EvalU, DemoFiniteACrossSolver) {
  const auto spec = build_model("demo-finite-A");
  const auto& m = spec.as<FiniteStateModel>();
  const auto red = demo_a_reduced();
  const auto full = eval_U(m, 1.0, vec2(1.0, 1.0));
  const auto part = eval_U(red.as_finite(), 1.0, vec1(2.0));
  ASSERT_TRUE(full.converged && part.converged);
  EXPECT_LE((full.value - spec.L->adjoint_apply(part.value)).norm(), 1e-9);
}

TEST(EvalU, FlowJacobianMatchesFiniteDifferences) {
  const auto m = symmetric();
  for (double t : {0.3, 1.0}) {
    const Vec x = vec2(0.4, -1.2);
    const Mat J = flow_jacobian(m, x, t, 1e-3);
    const Mat fd = fd_jacobian([&](const Vec& y) { return Vec(flow(m, y, t, 1e-3).head(2)); }, x);
    EXPECT_LE((J - fd).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(EvalU, LinearFlowInvertsToRoundoff) {
  const auto spec = build_model("demo-finite-A");
  const auto ev = eval_U(spec.as<FiniteStateModel>(), 0.7, vec2(1.5, -0.5));
  ASSERT_TRUE(ev.converged);
  EXPECT_LE(ev.residual, 1e-13);
}

TEST(ReducedFinite, FrozenAndMatrixExponential) {
  ReducedFiniteModel z;
  z.n = 1;
  z.F = [](const Vec&, const Vec&) { return vec1(0.0); };
  z.G = [](const Vec&, const Vec&) { return vec1(0.0); };
  z.U0 = [](const Vec& y) { return y; };
  const auto cf = solve_reduced_finite(z, {vec1(2.0)}, 1.0);
  EXPECT_EQ(cf.X(0, 1.0)[0], 2.0);
  EXPECT_EQ(cf.V(0, 1.0)[0], 2.0);

  const auto red = demo_a_reduced();
  Mat A(2, 2);
  A << 1, 2, 1, 0;
  const auto rf = solve_reduced_finite(red, {vec1(1.5)}, 1.0);
  const Vec exact = A.exp() * vec2(1.5, 1.5);
  EXPECT_LE((rf.paths[0].back() - exact).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(ReducedFinite, RelationToFullCharacteristics) {
  const auto spec = build_model("demo-finite-A");
  const auto rep = reduced_relation_check(spec.as<FiniteStateModel>(), *spec.L, demo_a_reduced(),
                                          {vec2(1.0, -0.3), vec2(-2.0, 0.5)}, 1.0);
  EXPECT_TRUE(rep.pass) << rep.to_json().dump();
}

TEST(ReductionIdentity, SmallGridPasses) {
  const auto spec = build_model("demo-finite-A");
  const auto rep = verify_reduction_identity(spec.as<FiniteStateModel>(), *spec.L, demo_a_reduced(),
                                             tensor_grid(2, 3, -2.0, 2.0), uniform_times(1.0, 3));
  EXPECT_TRUE(rep.pass) << rep.to_json().dump();
  EXPECT_EQ(rep.samples, 27);
}

TEST(ReductionIdentity, InitialSliceExact) {
  const auto spec = build_model("demo-finite-A");
  const auto rep = verify_reduction_identity(spec.as<FiniteStateModel>(), *spec.L, demo_a_reduced(),
                                             tensor_grid(2, 9, -2.0, 2.0), {0.0});
  EXPECT_LE(-rep.worst_margin, 1e-15);
}

TEST(FiberEvolution, SeedsStayOnCommonFiber) {
  const auto spec = build_model("demo-finite-A");
  const auto rep = fiber_evolution_check(spec.as<FiniteStateModel>(), *spec.L, {{vec2(1.0, -1.0), vec2(0.0, 0.0)}}, 1.0);
  EXPECT_TRUE(rep.pass);
  EXPECT_THROW(fiber_evolution_check(spec.as<FiniteStateModel>(), *spec.L, {{vec2(1.0, 0.0), vec2(0.0, 0.0)}}, 1.0),
               InputError);
  const auto broken = build_model("demo-finite-A", {{"variant", "fiber-breaking"}});
  EXPECT_FALSE(
      fiber_evolution_check(broken.as<FiniteStateModel>(), *spec.L, {{vec2(1.0, -1.0), vec2(0.0, 0.0)}}, 0.5).pass);
}

TEST(FiberEvolution, NoTangentialVMotion) {
  const auto spec = build_model("demo-finite-A");
  const auto rep = tangential_motion_check(spec.as<FiniteStateModel>(), *spec.L, {vec2(1.0, 2.0), vec2(-1.5, 0.3)}, 1.0);
  EXPECT_TRUE(rep.pass) << rep.to_json().dump();
}

TEST(Pairing, NondecreasingForMonotonePair) {
  const auto m = build_model("demo-finite-A").as<FiniteStateModel>();
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> U(-2, 2);
  std::vector<std::pair<Vec, Vec>> pairs;
  for (int k = 0; k < 10; ++k) pairs.push_back({vec2(U(rng), U(rng)), vec2(U(rng), U(rng))});
  EXPECT_TRUE(pairing_diagnostic(m, pairs, 1.0).pass);
}

TEST(PdeResidual, ExactSolutionsAndRefinement) {
  const auto sym = symmetric();
  const auto pts = tensor_grid(2, 3, -1.0, 1.0);
  EXPECT_LE(pde_residual(sym, [](double, const Vec& x) { return x; }, pts, {0.5}, 1e-3), 1e-6);
  const auto fz = frozen(2);
  EXPECT_LE(pde_residual(fz, [&](double, const Vec& x) { return fz.U0(x); }, pts, {0.5}, 1e-3), 1e-9);

  const auto m = build_model("demo-finite-A").as<FiniteStateModel>();
  USampler U = [&](double t, const Vec& x) {
    const auto r = eval_U(m, t, x);
    if (!r.converged) throw EvaluationError(r.message);
    return r.value;
  };
  const auto study = pde_residual_study(m, U, tensor_grid(2, 2, -1.0, 1.0), {0.5}, {0.2, 0.1, 0.05});
  EXPECT_GE(study.slope, 0.9);
}

TEST(Horizon, MonotoneModelHasNoHorizon) {
  const auto m = build_model("demo-finite-A").as<FiniteStateModel>();
  EXPECT_FALSE(existence_horizon(m, vec2(0.5, 0.5), {0.5, 1.0}).has_value());
  // a non-monotone Burgers-type pair loses invertibility: X' = V, V' = 0, U0 = -x
  FiniteStateModel b;
  b.name = "crossing";
  b.N = 1;
  b.F = [](const Vec&, const Vec& u) { return u; };
  b.G = [](const Vec&, const Vec&) { return vec1(0.0); };
  b.U0 = [](const Vec& x) { return Vec(-x); };
  const auto h = existence_horizon(b, vec1(0.5), {0.5, 0.9, 1.0, 1.5});
  ASSERT_TRUE(h.has_value());
  EXPECT_GE(*h, 1.0);
}
