#include <gtest/gtest.h>

#include "rmfg/models/catalog.hpp"
#include "rmfg/verify/checks.hpp"

using namespace rmfg;

TEST(Catalog, ContainsEveryDemo) {
  const auto cat = build_demo_models();
  for (const char* n : {"demo-finite-A", "demo-power", "demo-quadratic", "demo-controls-quad", "demo-power-controls",
                        "demo-noise"})
    EXPECT_TRUE(cat.count(n)) << n;
  EXPECT_EQ(cat.at("demo-finite-A").N(), 2);
  EXPECT_EQ(cat.at("demo-noise").N(), 2);
  EXPECT_EQ(cat.at("demo-finite-A").L->n(), 1);
}

TEST(Catalog, ParameterValidation) {
  EXPECT_THROW(build_model("no-such-model"), ConfigurationError);
  EXPECT_THROW(build_model("demo-power", {{"qq", 2.0}}), ConfigurationError);
  EXPECT_THROW(build_model("demo-power", {{"q", "two"}}), ConfigurationError);
  EXPECT_THROW(build_model("demo-power", {{"a", "cubic"}}), ConfigurationError);
  EXPECT_THROW(build_model("demo-power", {{"q", 1.5}}), UnsupportedConfigurationError);
  EXPECT_THROW(build_model("demo-noise", {{"theta", 0.0}, {"rho", 0.7}}).as<PowerMasterModel>(), ConfigurationError);
  EXPECT_NO_THROW(build_model("demo-power", {{"q", 3.0}}));
}

TEST(Catalog, HamiltonianExamples) {
  const auto p = build_model("demo-power").as<PowerMasterModel>();
  EXPECT_DOUBLE_EQ(p.h(1.0, 2.0), 1.0);
  const auto sys = build_model("demo-quadratic").as<QuadraticMasterModel>().system();
  const Vec h = sys.h(vec3(1.0, 0.0, 0.0), vec3(7.0, 1.0, 1.0));
  EXPECT_DOUBLE_EQ(h[0], -0.5);
  EXPECT_DOUBLE_EQ(h[1], 1.0);
  EXPECT_DOUBLE_EQ(h[2], 1.0);
}

TEST(Catalog, AnalyticJacobiansMatchFiniteDifferences) {
  for (const char* name : {"demo-finite-A", "demo-noise"}) {
    const auto spec = build_model(name);
    const FiniteStateModel& m =
        spec.N() && std::holds_alternative<NoiseModel>(spec.model) ? spec.as<NoiseModel>().core
                                                                    : spec.as<FiniteStateModel>();
    const auto rep = check_jacobians(m, 100, 99);
    EXPECT_TRUE(rep.pass) << name << " " << rep.to_json().dump();
  }
  const auto fb = build_model("demo-finite-A", {{"variant", "fiber-breaking"}});
  EXPECT_TRUE(check_jacobians(fb.as<FiniteStateModel>()).pass);
  // power-family partials against finite differences
  const auto p = build_model("demo-power", {{"a", "exp-decay"}, {"b", "nonconstant"}}).as<PowerMasterModel>();
  for (double z : {0.1, 1.0, 3.0})
    for (double u : {-2.0, 0.5, 1.7}) {
      EXPECT_NEAR(p.h_z(z, u), fd_derivative([&](double s) { return p.h(s, u); }, z), 1e-6);
      EXPECT_NEAR(p.h_u(z, u), fd_derivative([&](double s) { return p.h(z, s); }, u), 1e-6);
      EXPECT_NEAR(p.h_uu(z, u), fd_derivative([&](double s) { return p.h_u(z, s); }, u), 1e-6);
      EXPECT_NEAR(p.h_uz(z, u), fd_derivative([&](double s) { return p.h_u(s, u); }, z), 1e-6);
    }
}

TEST(Catalog, DemoFiniteAPairingIsPositiveQuadraticForm) {
  const auto m = build_model("demo-finite-A").as<FiniteStateModel>();
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(-5, 5);
  for (int k = 0; k < 10000; ++k) {
    const Vec x = vec2(U(rng), U(rng)), y = vec2(U(rng), U(rng)), u = vec2(U(rng), U(rng)), v = vec2(U(rng), U(rng));
    const double lhs = (m.G(x, u) - m.G(y, v)).dot(x - y) + (m.F(x, u) - m.F(y, v)).dot(u - v);
    const double dX = (x - y).sum(), dU = (u - v).sum();
    const double rhs = dX * dX + 0.5 * dX * dU + 0.5 * dU * dU;
    ASSERT_NEAR(lhs, rhs, 1e-9 * (1.0 + std::abs(rhs)));
    ASSERT_GE(lhs, -1e-10);
  }
}

TEST(Catalog, ControlsQuadClosedFormSolvesHamiltonJacobi) {
  const double T = 1.0;
  auto u = [T](double t, double x) { return x * x / (2.0 * (1.0 + T - t)); };
  auto ut = [T](double t, double x) { return x * x / (2.0 * std::pow(1.0 + T - t, 2)); };
  auto ux = [T](double t, double x) { return x / (1.0 + T - t); };
  double worst = 0.0;
  for (double t = 0.0; t <= T; t += 0.05)
    for (double x = -4.0; x <= 4.0; x += 0.1) worst = std::max(worst, std::abs(-ut(t, x) + 0.5 * ux(t, x) * ux(t, x)));
  EXPECT_LE(worst, 1e-12);
  EXPECT_DOUBLE_EQ(u(T, 2.0), 2.0);
}

TEST(Catalog, NoiseModelInvariants) {
  const auto nm = build_model("demo-noise").as<NoiseModel>();
  SampleOptions o;
  o.box = nm.R;
  EXPECT_TRUE(check_strong_monotone(nm.core, nm.alpha, o).pass);
  EXPECT_LE(nm.box_excess(), 0.0);
  const Vec x = vec2(1.0, 2.0), y = vec2(-0.5, 0.25);
  EXPECT_NEAR(nm.rearrange(x).dot(y), x.dot(nm.adjoint() * y), 1e-14);
  auto expanding = build_model("demo-noise", {{"rho", 1.3}}).as<NoiseModel>();
  EXPECT_GT(expanding.box_excess(), 0.0);
}

TEST(Catalog, PowerControlsInitialScalars) {
  const auto spec = build_model("demo-power-controls");
  const auto& m = spec.as<PowerControlsModel>();
  const auto m0 = quantile_cloud(*spec.m0_law, 20000);
  // uniform[0,1], p = q = 2: z0 = E[y^2]/2 = 1/6, alpha0 = E[y^2]/2 = 1/6
  EXPECT_NEAR(m.z0(m0), 1.0 / 6.0, 1e-8);
  EXPECT_NEAR(m.alpha0(m0), 1.0 / 6.0, 1e-8);
  // g nonnegative and nondecreasing on a grid
  const auto ga = build_model("demo-power-controls", {{"g", "affine"}}).as<PowerControlsModel>();
  double prev = -1.0;
  for (double z = 0.0; z <= 10.0; z += 0.1) {
    EXPECT_GE(ga.g(z), 0.0);
    EXPECT_GE(ga.g(z), prev);
    prev = ga.g(z);
  }
  EXPECT_THROW(build_model("demo-power-controls", {{"p", 1.0}}), InputError);
}

TEST(Catalog, QuadraticFIsMonotone) {
  const auto m = build_model("demo-quadratic").as<QuadraticMasterModel>();
  SampleOptions o;
  o.samples = 2000;
  EXPECT_TRUE(check_monotone(m.f, 3, o).pass);
}
