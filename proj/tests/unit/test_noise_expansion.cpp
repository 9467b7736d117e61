#include <gtest/gtest.h>

#include "rmfg/finite/master.hpp"
#include "rmfg/models/catalog.hpp"
#include "rmfg/noise/solver.hpp"
#include "rmfg/ode/integrate.hpp"

using namespace rmfg;
using namespace rmfg::noise;

namespace {

NoiseModel demo(const nlohmann::json& params = nlohmann::json::object()) {
  return build_model("demo-noise", params).as<NoiseModel>();
}

NoiseGrid small_grid(const NoiseModel& m, long nx = 21, double T = 1.0) {
  NoiseGrid g = NoiseGrid::from_model(m, T);
  g.nx = nx;
  g.dt = 1e-3;
  g.out_count = 11;
  return g;
}

// Linear data keep U(t, x) = A(t) x with
// A' = alpha I - A - A (I + D A) - lambda (A - M^T A M).
Mat riccati_matrix(const NoiseModel& m, double lambda, double T) {
  const Mat M = m.M, I = Mat::Identity(2, 2);
  auto f = [&](double, const Vec& a) {
    const Mat A = Eigen::Map<const Mat>(a.data(), 2, 2);
    const Mat dA = 1.0 * I - A - A * (I + 0.1 * A) - lambda * (A - M.transpose() * A * M);
    return Vec(Eigen::Map<const Vec>(dA.data(), 4));
  };
  const Mat A0 = I;
  const Vec a = ode::integrate_to(f, Eigen::Map<const Vec>(A0.data(), 4), 0.0, T, 1e-4);
  return Eigen::Map<const Mat>(a.data(), 2, 2);
}

double max_node_error(const GridSolution& s, std::size_t k, const Mat& A) {
  double e = 0.0;
  for (Eigen::Index i = 0; i < s.nodes.rows(); ++i)
    e = std::max(e, (s.values[k].row(i).transpose() - A * s.nodes.row(i).transpose()).norm());
  return e;
}

}  // namespace

TEST(GridInterp, MultilinearDataReproducedExactly) {
  NoiseGrid g;
  g.N = 2;
  g.nx = 9;
  const GridInterp I(g);
  Mat U(g.nodes(), 2);
  for (long i = 0; i < g.nodes(); ++i) {
    const Vec x = I.node(i);
    U.row(i) << 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[1], -x[1];
  }
  for (const Vec& y : {vec2(0.3, -1.7), vec2(3.9, 3.99), vec2(-4.0, 0.0), vec2(4.5, -4.2)}) {
    const auto s = I.locate(y);
    const Vec v = I.value(U, s);
    EXPECT_NEAR(v[0], 1.0 + 2.0 * y[0] - y[1] + 0.5 * y[0] * y[1], 1e-12);
    EXPECT_NEAR(v[1], -y[1], 1e-12);
    const Mat J = I.gradient(U, s);
    EXPECT_NEAR(J(0, 0), 2.0 + 0.5 * y[1], 1e-12);
    EXPECT_NEAR(J(0, 1), -1.0 + 0.5 * y[0], 1e-12);
    EXPECT_NEAR(J(1, 1), -1.0, 1e-12);
  }
  EXPECT_TRUE(I.locate(vec2(4.5, 0.0)).outside);
  EXPECT_FALSE(I.locate(vec2(4.0, -4.0)).outside);
}

TEST(NoiseSolve, LinearDataMatchMatrixOde) {
  const auto m = demo();
  const auto g = small_grid(m);
  const auto s = solve_noisy(m, 0.5, g);
  EXPECT_EQ(s.flagged_count(), 0);
  // explicit Euler in time; space is exact for linear data
  EXPECT_LT(max_node_error(s, s.values.size() - 1, riccati_matrix(m, 0.5, 1.0)), 5e-3);
  EXPECT_LT(s.max_cfl, 1.0);
}

TEST(NoiseSolve, ErrorIsFirstOrderInTime) {
  const auto m = demo();
  auto g = small_grid(m, 11);
  const Mat A = riccati_matrix(m, 0.5, 1.0);
  const double e1 = max_node_error(solve_noisy(m, 0.5, g), 10, A);
  g.dt = 5e-4;
  const double e2 = max_node_error(solve_noisy(m, 0.5, g), 10, A);
  EXPECT_NEAR(e1 / e2, 2.0, 0.1);
}

TEST(NoiseSolve, ZeroRateMatchesCharacteristics) {
  const auto m = demo();
  const auto s = solve_noisy(m, 0.0, small_grid(m));
  const GridInterp I(s.grid);
  for (const Vec& x : {vec2(0.5, -1.0), vec2(2.0, 1.5), vec2(-3.0, 0.2)}) {
    const auto ev = finite::eval_U(m.core, 1.0, x, 1e-4);
    ASSERT_TRUE(ev.converged);
    EXPECT_LT((I.value(s.values.back(), I.locate(x)) - ev.value).norm(), 5e-3 * (1.0 + x.norm()));
  }
}

TEST(NoiseSolve, IdentityRearrangementIsInvisible) {
  const auto m = demo({{"T_map", "identity"}});
  const auto g = small_grid(m);
  const auto a = solve_noisy(m, 0.0, g);
  const auto b = solve_noisy(m, 0.8, g);
  EXPECT_LT((a.values.back() - b.values.back()).cwiseAbs().maxCoeff(), 1e-13);
  const auto lin = solve_linearized(m, g);
  for (const auto& V : lin.V.values) EXPECT_LT(V.cwiseAbs().maxCoeff(), 1e-13);
}

TEST(NoiseSolve, FrozenDynamicsKeepInitialData) {
  auto m = demo();
  m.core.F = [](const Vec&, const Vec& u) { return Vec(Vec::Zero(u.size())); };
  m.core.G = [](const Vec&, const Vec& u) { return Vec(Vec::Zero(u.size())); };
  m.core.dFdu = m.core.dGdu = nullptr;
  m.M = Mat::Identity(2, 2);
  const auto s = solve_noisy(m, 0.5, small_grid(m));
  // node lookups round at ulp level once per step, over 1000 steps
  EXPECT_LT((s.values.back() - s.values.front()).cwiseAbs().maxCoeff(), 1e-11);
}

TEST(NoiseSolve, RefusesBadConfigurations) {
  auto m = demo({{"rho", 1.5}});
  EXPECT_THROW(solve_noisy(m, 0.5, small_grid(m)), GeometryError);
  m = demo();
  auto g = small_grid(m);
  g.dt = 0.5;
  EXPECT_THROW(solve_noisy(m, 0.5, g), StepRefusedError);
  g = small_grid(m);
  g.N = 3;
  EXPECT_THROW(solve_noisy(m, 0.5, g), InputError);
  EXPECT_THROW(solve_noisy(m, -0.1, small_grid(m)), InputError);
}

TEST(NoiseSolve, BoxSizeDoesNotMoveInteriorValues) {
  const auto m = demo();
  auto g = small_grid(m, 21);
  const auto a = solve_noisy(m, 0.5, g);
  g.R = 8.0;
  g.nx = 41;
  const auto b = solve_noisy(m, 0.5, g);
  const GridInterp Ib(b.grid);
  for (Eigen::Index i = 0; i < a.nodes.rows(); ++i) {
    const Vec x = a.nodes.row(i).transpose();
    EXPECT_LT((a.values.back().row(i).transpose() - Ib.value(b.values.back(), Ib.locate(x))).norm(), 1e-6);
  }
}

TEST(Linearized, OneStepMatchesNoiseSource) {
  const auto m = demo();
  NoiseGrid g = small_grid(m, 11, 1e-3);
  g.dt = 1e-3;
  g.out_count = 2;
  const auto lin = solve_linearized(m, g);
  const Mat Mt = m.adjoint();
  for (Eigen::Index i = 0; i < lin.V.nodes.rows(); ++i) {
    const Vec x = lin.V.nodes.row(i).transpose();
    const Vec expect = -1e-3 * (m.core.U0(x) - Mt * m.core.U0(m.rearrange(x)));
    EXPECT_LT((lin.V.values.back().row(i).transpose() - expect).norm(), 1e-15);
  }
}

TEST(Linearized, MatchesDerivativeOfMatrixOde) {
  const auto m = demo();
  const auto lin = solve_linearized(m, small_grid(m));
  const double h = 1e-4;
  const Mat dA = (riccati_matrix(m, h, 1.0) - riccati_matrix(m, -h, 1.0)) / (2.0 * h);
  EXPECT_LT(max_node_error(lin.V, lin.V.values.size() - 1, dA), 5e-3);
}

TEST(Expansion, ErrorIsQuadraticInNoiseRate) {
  const auto m = demo();
  const auto st = expansion_study(m, {0.02, 0.04, 0.08, 0.16, 0.32}, small_grid(m));
  EXPECT_GE(st.slope, 1.8);
  EXPECT_LE(st.slope, 2.2);
  for (std::size_t k = 1; k < st.errors.size(); ++k) EXPECT_GT(st.errors[k], st.errors[k - 1]);
  EXPECT_THROW(expansion_study(m, {0.1, 0.2}, small_grid(m)), InputError);
}

TEST(Expansion, LoglogSlopeOfPowerLaw) {
  EXPECT_NEAR(loglog_slope({1, 2, 4, 8}, {3, 12, 48, 192}), 2.0, 1e-12);
  EXPECT_THROW(loglog_slope({1, 2}, {1, 0}), EvaluationError);
}

TEST(Stability, BoundHoldsForConstantSources) {
  const auto m = demo();
  for (double c : {1e-3, 1e-2, 1e-1}) {
    const auto rep = stability_check(m, [c](double, const Vec&) { return vec2(c, 0.0); }, m.lambda, small_grid(m));
    EXPECT_TRUE(rep.pass) << rep.to_json().dump();
    EXPECT_NEAR(rep.witness["R_norm"].get<double>(), c, 1e-15);
    EXPECT_GT(rep.witness["gap"].get<double>(), 0.0);
  }
}
