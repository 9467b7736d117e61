#include <gtest/gtest.h>

#include "rmfg/models/catalog.hpp"
#include "rmfg/verify/checks.hpp"

using namespace rmfg;

namespace {

ReductionMap row_sum() {
  Mat L(1, 2);
  L << 1.0, 1.0;
  return ReductionMap(L);
}

SampleOptions small(long n = 2000) {
  SampleOptions o;
  o.samples = n;
  return o;
}

}  // namespace

TEST(CheckMonotone, IdentityRotationAndNegation) {
  const auto id = check_monotone([](const Vec& x) { return x; }, 3, small());
  EXPECT_TRUE(id.pass);
  EXPECT_GE(id.worst_margin, 0.0);

  Mat R(2, 2);
  R << 0, -1, 1, 0;
  const auto rot = check_monotone([R](const Vec& x) { return Vec(R * x); }, 2, small());
  EXPECT_TRUE(rot.pass);
  EXPECT_NEAR(rot.worst_margin, 0.0, 1e-12);
  const auto rot_strict = check_monotone([R](const Vec& x) { return Vec(R * x); }, 2, small(), true);
  EXPECT_NEAR(rot_strict.worst_margin, 0.0, 1e-12);

  const auto neg = check_monotone([](const Vec& x) { return Vec(-x); }, 2, small());
  EXPECT_FALSE(neg.pass);
  const Vec x = Eigen::Map<const Vec>(neg.witness["x"].get<std::vector<double>>().data(), 2);
  const Vec y = Eigen::Map<const Vec>(neg.witness["y"].get<std::vector<double>>().data(), 2);
  EXPECT_NEAR(neg.worst_margin, -(x - y).squaredNorm(), 1e-9);
}

TEST(CheckMonotone, ErrorsAndDeterminism) {
  EXPECT_THROW(check_monotone([](const Vec& x) { return x; }, 2, small(0)), InputError);
  SampleOptions bad = small();
  bad.box = 0.0;
  EXPECT_THROW(check_monotone([](const Vec& x) { return x; }, 2, bad), InputError);
  EXPECT_THROW(check_monotone([](const Vec& x) { return Vec(x.array().log()); }, 2, small()), EvaluationError);
  auto f = [](const Vec& x) { return Vec(x.array().sin()); };
  const auto a = check_monotone(f, 3, small()), b = check_monotone(f, 3, small());
  EXPECT_EQ(a.worst_margin, b.worst_margin);
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  const auto j = a.to_json();
  for (const char* k : {"name", "pass", "worst_margin", "witness", "samples", "seed", "tolerance"})
    EXPECT_TRUE(j.contains(k)) << k;
}

TEST(CheckCompleteReduce, Examples) {
  const auto L = row_sum();
  auto sum2 = [](const Vec& x) { return Vec(Vec::Constant(2, x.sum())); };
  const auto ok = check_complete_reduce(sum2, L, small());
  EXPECT_TRUE(ok.report.pass);
  EXPECT_NEAR(ok.reduced(vec1(3.7))[0], 3.7, 1e-12);

  const auto bad = check_complete_reduce([](const Vec& x) { return x; }, L, small());
  EXPECT_FALSE(bad.report.pass);

  const auto zero = check_complete_reduce([](const Vec&) { return Vec(Vec::Zero(2)); }, L, small());
  EXPECT_TRUE(zero.report.pass);
  EXPECT_EQ(zero.reduced(vec1(1.0))[0], 0.0);
}

TEST(CheckFiberReduce, Examples) {
  Mat L2(2, 3);
  L2 << 1, 1, 0, 0, 0, 1;
  const ReductionMap L(L2);
  const auto id = check_fiber_reduce([](const Vec& x) { return x; }, L, small());
  EXPECT_TRUE(id.report.pass);
  EXPECT_LE((id.reduced(vec2(0.3, -2.0)) - vec2(0.3, -2.0)).norm(), 1e-12);

  const auto swap = check_fiber_reduce([](const Vec& x) { return vec3(x[1], x[0], x[2] * x[2]); }, L, small());
  EXPECT_TRUE(swap.report.pass);
  const Vec r = swap.reduced(vec2(1.5, -3.0));
  EXPECT_NEAR(r[0], 1.5, 1e-12);
  EXPECT_NEAR(r[1], 9.0, 1e-12);

  const auto sq = check_fiber_reduce([](const Vec& x) { return vec2(x[0] * x[0], x[1]); }, row_sum(), small());
  EXPECT_FALSE(sq.report.pass);
  // the explicit pair (2,0) vs (0,2) lies on one fiber and LA differs (4 vs 2)
  const Mat Lm = row_sum().matrix();
  EXPECT_DOUBLE_EQ((Lm * vec2(4.0, 0.0))[0] - (Lm * vec2(0.0, 2.0))[0], 2.0);
}

TEST(CheckReduce, CompleteImpliesFiberOnSameSamples) {
  const auto L = row_sum();
  for (auto A : std::vector<VecMap>{[](const Vec& x) { return Vec(Vec::Constant(2, std::sin(x.sum()))); },
                                    [](const Vec& x) { return Vec(Vec::Constant(2, x.sum() * x.sum())); }}) {
    const auto c = check_complete_reduce(A, L, small());
    const auto f = check_fiber_reduce(A, L, small());
    if (c.report.pass) {
      EXPECT_TRUE(f.report.pass);
    }
  }
}

TEST(CheckPairReduction, DemoFiniteA) {
  const auto spec = build_model("demo-finite-A");
  const auto& m = spec.as<FiniteStateModel>();
  const auto res = check_pair_reduction(m, *spec.L, small());
  EXPECT_TRUE(res.report.pass) << res.report.to_json().dump();
  EXPECT_TRUE(res.full_monotone);
  EXPECT_TRUE(res.reduced_monotone);
  for (double y : {-2.0, 0.5, 3.0})
    for (double u : {-1.0, 2.0}) {
      EXPECT_NEAR(res.reduced.F(vec1(y), vec1(u))[0], y + 2.0 * u, 1e-12);
      EXPECT_NEAR(res.reduced.G(vec1(y), vec1(u))[0], y, 1e-12);
    }
  EXPECT_NEAR(res.reduced.U0(vec1(1.25))[0], 1.25, 1e-12);
}

TEST(CheckPairReduction, ReducedDerivativesFollowChainRule) {
  const auto spec = build_model("demo-finite-A", {{"variant", "standard"}});
  const auto red = check_pair_reduction(spec.as<FiniteStateModel>(), *spec.L, small(200)).reduced.as_finite();
  for (double y : {-2.0, 0.5})
    for (double u : {-1.0, 2.0}) {
      EXPECT_NEAR(red.jac_F_x(vec1(y), vec1(u))(0, 0), 1.0, 1e-12);
      EXPECT_NEAR(red.jac_F_u(vec1(y), vec1(u))(0, 0), 2.0, 1e-12);
      EXPECT_NEAR(red.jac_G_x(vec1(y), vec1(u))(0, 0), 1.0, 1e-12);
      EXPECT_NEAR(red.jac_G_u(vec1(y), vec1(u))(0, 0), 0.0, 1e-12);
    }
  EXPECT_NEAR(red.jac_U0(vec1(0.3))(0, 0), 1.0, 1e-12);
}

TEST(CheckPairReduction, FiberBreakingFails) {
  const auto spec = build_model("demo-finite-A", {{"variant", "fiber-breaking"}});
  const auto res = check_pair_reduction(spec.as<FiniteStateModel>(), *spec.L, small());
  EXPECT_FALSE(res.report.pass);
  EXPECT_EQ(res.report.witness["failed_check"], "F(., L*u) fiber-reduces");
}

TEST(CheckPairReduction, TrivialPair) {
  FiniteStateModel m;
  m.name = "identity-F";
  m.N = 2;
  m.F = [](const Vec& x, const Vec&) { return x; };
  m.G = [](const Vec&, const Vec&) { return Vec(Vec::Zero(2)); };
  m.U0 = [](const Vec&) { return Vec(Vec::Zero(2)); };
  const auto res = check_pair_reduction(m, row_sum(), small());
  EXPECT_TRUE(res.report.pass);
  EXPECT_NEAR(res.reduced.F(vec1(1.5), vec1(7.0))[0], 1.5, 1e-12);
}

TEST(CheckPairReduction, MonotonicityTransferOnRandomLinearModels) {
  // (G, F) linear with symmetric part of [[Gx, Gu],[Fx, Fu]] PSD and commuting with L
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> U(0.1, 2.0);
  const auto L = row_sum();
  for (int trial = 0; trial < 10; ++trial) {
    const double a = U(rng), b = U(rng), c = U(rng);
    FiniteStateModel m;
    m.name = "linear";
    m.N = 2;
    m.F = [b, c](const Vec& x, const Vec& u) { return Vec(Vec::Constant(2, c * x.sum() + b * u.sum())); };
    m.G = [a, c](const Vec& x, const Vec& u) { return Vec(Vec::Constant(2, a * x.sum() - c * u.sum())); };
    m.U0 = [](const Vec& x) { return Vec(Vec::Constant(2, x.sum())); };
    const auto res = check_pair_reduction(m, L, small(500));
    EXPECT_TRUE(res.report.pass);
    EXPECT_TRUE(res.full_monotone);
    EXPECT_TRUE(res.reduced_monotone);
  }
}

TEST(CheckAbc, Examples) {
  std::vector<double> grid;
  for (int i = 0; i <= 1000; ++i) grid.push_back(0.01 * i);
  const auto ok = check_abc(build_model("demo-power").as<PowerMasterModel>(), grid, small());
  EXPECT_TRUE(ok.pass) << ok.to_json().dump();

  const auto b_bad = check_abc(build_model("demo-power", {{"q", 3.0}, {"b", "nonconstant"}}).as<PowerMasterModel>(),
                               grid, small());
  EXPECT_FALSE(b_bad.pass);
  EXPECT_EQ(b_bad.witness["condition"], "b constant (q > 2)");

  const auto a_bad =
      check_abc(build_model("demo-power", {{"a", "exp-decay"}, {"c", "zero"}}).as<PowerMasterModel>(), grid, small());
  EXPECT_FALSE(a_bad.pass);
  bool found = false;
  for (const auto& c : a_bad.witness["failed_conditions"])
    if (c == "z -> a(z) z^{4(q-1)/q} nondecreasing") found = true;
  EXPECT_TRUE(found) << a_bad.witness.dump();
}

TEST(CheckAbc, Errors) {
  auto m = build_model("demo-power").as<PowerMasterModel>();
  m.da = nullptr;
  EXPECT_THROW(check_abc(m, {0.0, 1.0}), ConfigurationError);
  auto m3 = build_model("demo-power").as<PowerMasterModel>();
  m3.q = 1.5;
  EXPECT_THROW(check_abc(m3, {0.0, 1.0}), UnsupportedConfigurationError);
}

TEST(CheckHMonotone, Examples) {
  const auto quad = check_h_monotone(build_model("demo-quadratic").as<QuadraticMasterModel>().system(), small());
  EXPECT_TRUE(quad.pass) << quad.to_json().dump();
  const auto power = check_h_monotone(build_model("demo-power").as<PowerMasterModel>().system(), small());
  EXPECT_TRUE(power.pass) << power.to_json().dump();

  auto sys = build_model("demo-power").as<PowerMasterModel>().system();
  sys.h = [](const Vec& z, const Vec&) { return z; };
  sys.hu = [](const Vec&, const Vec&) { return Mat(Mat::Zero(1, 1)); };
  EXPECT_FALSE(check_h_monotone(sys, small()).pass);
}

TEST(QuadraticChain, ExpandedIdentityAndBoundHold) {
  const auto m = build_model("demo-quadratic").as<QuadraticMasterModel>();
  EXPECT_TRUE(check_quadratic_chain(m, QuadraticCheck::expanded_identity, small()).pass);
  EXPECT_TRUE(check_quadratic_chain(m, QuadraticCheck::monotone_bound, small()).pass);
}

TEST(QuadraticChain, PrintedChainHasCounterexamples) {
  // documented discrepancy: the printed intermediate bound is not implied by
  // the expansion; the check must report it rather than hide it
  const auto m = build_model("demo-quadratic").as<QuadraticMasterModel>();
  const auto rep = check_quadratic_chain(m, QuadraticCheck::printed_chain, small());
  EXPECT_FALSE(rep.pass);
  EXPECT_LT(rep.worst_margin, -1.0);
}

TEST(CheckPhiHomogeneity, Examples) {
  const auto lin = check_phi_homogeneity([](const Vec& p) { return p; }, 2, {}, std::nullopt, small(200));
  EXPECT_TRUE(lin.report.pass);
  EXPECT_LE((lin.fitted - Mat::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-8);

  const double q = 3.0;
  auto phi = [q](const Vec& p) { return vec1(std::pow(p.norm(), q) / q); };
  auto dphi = [q](const Vec& p) { return Mat(std::pow(p.norm(), q - 2.0) * p.transpose()); };
  const auto pw = check_phi_homogeneity(phi, 1, dphi, std::nullopt, small(200));
  EXPECT_TRUE(pw.report.pass);
  EXPECT_NEAR(pw.fitted(0, 0), q, 1e-10);

  const auto shifted =
      check_phi_homogeneity([](const Vec& p) { return Vec(p.array() + 1.0); }, 1, {}, std::nullopt, small(200));
  EXPECT_FALSE(shifted.report.pass);

  const auto zero = check_phi_homogeneity([](const Vec&) { return vec1(0.0); }, 1, {}, std::nullopt, small(50));
  EXPECT_TRUE(zero.report.indeterminate);
  EXPECT_TRUE(zero.report.pass);
}

TEST(CheckControlReduction, Examples) {
  EXPECT_TRUE(check_control_reduction(build_model("demo-controls-quad").as<ControlsModel>(), 1.0, small()).pass);
  const auto off = check_control_reduction(build_model("demo-controls-quad", {{"B", 1.0}}).as<ControlsModel>(), 1.0,
                                           small());
  EXPECT_FALSE(off.pass);
  EXPECT_NEAR(off.worst_margin, -1.0, 1e-12);
  for (const char* a : {"zero", "small-slope"}) {
    const auto pc = build_model("demo-power-controls", {{"a", a}}).as<PowerControlsModel>();
    const auto rep = check_control_reduction(pc.to_controls_model(3.0), 1.0, small());
    EXPECT_LE(-rep.worst_margin, 1e-9) << a << " " << rep.to_json().dump();
  }
}

TEST(CheckStrongMonotone, DemoNoise) {
  const auto nm = build_model("demo-noise").as<NoiseModel>();
  EXPECT_TRUE(check_strong_monotone(nm.core, nm.alpha, small(10000)).pass);
  EXPECT_FALSE(check_strong_monotone(nm.core, nm.alpha + 0.5, small(2000)).pass);
}
