#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "rmfg/core/features.hpp"
#include "rmfg/core/reduction_map.hpp"
#include "rmfg/core/wasserstein.hpp"

using namespace rmfg;

namespace {

Mat row(std::initializer_list<double> v) {
  Mat L(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index j = 0;
  for (double x : v) L(0, j++) = x;
  return L;
}

ParticleCloud random_cloud(std::mt19937_64& rng, Eigen::Index M, Eigen::Index d = 1) {
  std::uniform_real_distribution<double> U(-3.0, 3.0);
  Mat p(M, d);
  for (Eigen::Index i = 0; i < M; ++i)
    for (Eigen::Index j = 0; j < d; ++j) p(i, j) = U(rng);
  return ParticleCloud(p);
}

// Brute force over all permutations; oracle for the assignment solver.
double brute_force_wasserstein(const ParticleCloud& a, const ParticleCloud& b, double q) {
  std::vector<int> perm(static_cast<std::size_t>(a.size()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i)
      c += std::pow((a.point(static_cast<Eigen::Index>(i)) - b.point(perm[i])).norm(), q);
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::pow(best / static_cast<double>(a.size()), 1.0 / q);
}

}  // namespace

TEST(ReduceAndLift, IdentityMap) {
  EXPECT_THROW(ReductionMap(Mat::Identity(2, 2)), InputError);
  ReductionMap I(Mat::Identity(2, 2), /*allow_square=*/true);
  const auto r = reduce_and_lift(I, vec2(3.0, 4.0), vec2(1.0, -2.0));
  EXPECT_EQ(r.Lx, vec2(3.0, 4.0));
  EXPECT_EQ(r.Lstar_u, vec2(1.0, -2.0));
  EXPECT_LE((r.lifted - vec2(3.0, 4.0)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(I.kernel_basis().cols(), 0);
}

TEST(ReduceAndLift, RowSumMap) {
  ReductionMap L(row({1.0, 1.0}));
  const auto r = reduce_and_lift(L, vec2(2.0, 5.0), vec1(3.0));
  EXPECT_DOUBLE_EQ(r.Lx[0], 7.0);
  EXPECT_DOUBLE_EQ(r.Lstar_u[0], 3.0);
  EXPECT_DOUBLE_EQ(r.Lstar_u[1], 3.0);
  EXPECT_DOUBLE_EQ(r.lifted[0], 3.5);
  EXPECT_DOUBLE_EQ(r.lifted[1], 3.5);
  EXPECT_NEAR(L.reduce(L.lift(vec1(7.0)))[0], 7.0, 1e-12);
}

TEST(ReduceAndLift, ErrorsOnBadInput) {
  ReductionMap L(row({1.0, 1.0}));
  EXPECT_THROW(L.reduce(vec3(1, 2, 3)), InputError);
  EXPECT_THROW(L.adjoint_apply(vec2(1, 2)), InputError);
  Mat degenerate(2, 3);
  degenerate << 1, 1, 0, 2, 2, 0;
  EXPECT_THROW(ReductionMap{degenerate}, DegenerateMapError);
}

TEST(ReduceAndLift, RightInverseOnPresetMaps) {
  Mat L2(2, 3);
  L2 << 1, 1, 0, 0, 0, 1;
  Mat L3(2, 4);
  L3 << 1, -2, 0.5, 3, 0, 1, 1, -1;
  for (const Mat& m : {row({1.0, 1.0}), L2, L3}) {
    ReductionMap L(m);
    EXPECT_LE(L.right_inverse_defect(), 1e-12);
    EXPECT_LE((m * L.kernel_basis()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_TRUE(std::isfinite(L.condition_number()));
  }
}

TEST(Moments, Examples) {
  EXPECT_DOUBLE_EQ(moments(ParticleCloud::dirac(vec1(2.0)), FeatureMap::power(2.0))[0], 2.0);
  const Vec z = moments(ParticleCloud::from_values({-1.0, 1.0}), FeatureMap::quadratic());
  EXPECT_DOUBLE_EQ(z[0], 1.0);
  EXPECT_DOUBLE_EQ(z[1], 0.0);
  EXPECT_DOUBLE_EQ(z[2], 0.5);
  EXPECT_DOUBLE_EQ(moments(ParticleCloud::from_values({0.0, 0.0, 0.0}), FeatureMap::power(2.0))[0], 0.0);
}

TEST(Moments, ErrorsOnMismatchAndNonFinite) {
  EXPECT_THROW(moments(ParticleCloud(Mat::Zero(3, 2)), FeatureMap::quadratic()), InputError);
  FeatureMap bad = FeatureMap::power(2.0);
  bad.phi = [](const Vec& y) { return vec1(1.0 / y[0]); };
  EXPECT_THROW(moments(ParticleCloud::from_values({0.0}), bad), EvaluationError);
}

TEST(Moments, LinearUnderConcatenation) {
  std::mt19937_64 rng(7);
  const auto fm = FeatureMap::quadratic();
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = random_cloud(rng, 1 + static_cast<Eigen::Index>(rng() % 40));
    const auto b = random_cloud(rng, 1 + static_cast<Eigen::Index>(rng() % 40));
    const double Ma = static_cast<double>(a.size()), Mb = static_cast<double>(b.size());
    const Vec lhs = moments(concat(a, b), fm);
    const Vec rhs = (Ma * moments(a, fm) + Mb * moments(b, fm)) / (Ma + Mb);
    EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Moments, MomentsLieInMomentSet) {
  std::mt19937_64 rng(11);
  const auto slice = MomentSet::parabola_slice();
  const auto half = MomentSet::half_line();
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = random_cloud(rng, 1 + static_cast<Eigen::Index>(rng() % 20));
    EXPECT_TRUE(slice.contains(moments(c, FeatureMap::quadratic())));
    EXPECT_TRUE(half.contains(moments(c, FeatureMap::power(1.5))));
  }
  // a Dirac sits on the boundary of the parabola slice
  EXPECT_TRUE(slice.on_boundary(moments(ParticleCloud::dirac(vec1(1.7)), FeatureMap::quadratic())));
}

TEST(MomentSet, ParabolaDistance) {
  EXPECT_NEAR(MomentSet::parabola_distance(0.0, 1.0), 1.0, 1e-12);
  EXPECT_NEAR(MomentSet::parabola_distance(2.0, 2.0), 0.0, 1e-12);
  // brute-force oracle on a fine parameter grid
  for (auto [a, b] : {std::pair{0.3, -1.0}, std::pair{-2.0, 5.0}, std::pair{1.0, 0.0}}) {
    double best = 1e300;
    for (double s = -10.0; s <= 10.0; s += 1e-5) best = std::min(best, std::hypot(s - a, 0.5 * s * s - b));
    EXPECT_NEAR(MomentSet::parabola_distance(a, b), best, 1e-8);
  }
}

TEST(MomentSet, GrowthConstantReported) {
  const auto fm = FeatureMap::power(2.0);
  std::vector<Vec> xs;
  for (double x = -5.0; x <= 5.0; x += 0.5) xs.push_back(vec1(x));
  const double C = fm.growth_constant(xs);
  EXPECT_GT(C, 0.0);
  EXPECT_LE(C, 0.5);
}

TEST(Wasserstein, Examples) {
  for (double q : {1.0, 2.0, 3.5}) {
    EXPECT_NEAR(wasserstein(ParticleCloud::dirac(vec1(1.5)), ParticleCloud::dirac(vec1(-2.0)), q), 3.5, 1e-12);
    EXPECT_NEAR(wasserstein(ParticleCloud::dirac(vec2(0, 0)), ParticleCloud::dirac(vec2(3, 4)), q), 5.0, 1e-12);
  }
  const auto c = ParticleCloud::from_values({0.3, -1.0, 2.0});
  EXPECT_EQ(wasserstein(c, c, 2.0), 0.0);
  EXPECT_DOUBLE_EQ(wasserstein(ParticleCloud::from_values({0, 1}), ParticleCloud::from_values({1, 2}), 1.0), 1.0);
}

TEST(Wasserstein, Errors) {
  const auto a = ParticleCloud::from_values({0.0});
  EXPECT_THROW(wasserstein(a, a, 0.5), InputError);
  EXPECT_THROW(wasserstein(ParticleCloud(Mat::Zero(2, 2)), ParticleCloud(Mat::Zero(3, 2)), 2.0),
               UnsupportedConfigurationError);
  EXPECT_THROW(wasserstein(a, ParticleCloud(Mat::Zero(1, 2)), 2.0), InputError);
  EXPECT_THROW(wasserstein(ParticleCloud(Mat::Zero(600, 2)), ParticleCloud(Mat::Zero(600, 2)), 2.0),
               UnsupportedConfigurationError);
}

TEST(Wasserstein, UnequalSizesInOneDimension) {
  // {0} vs {-1, 1}: the quantile functions differ by 1 everywhere
  EXPECT_NEAR(wasserstein(ParticleCloud::from_values({0.0}), ParticleCloud::from_values({-1.0, 1.0}), 2.0), 1.0,
              1e-15);
  // duplicating every particle does not change the measure
  const auto a = ParticleCloud::from_values({0.1, 0.7, -0.4});
  const auto b = ParticleCloud::from_values({0.1, 0.1, 0.7, 0.7, -0.4, -0.4});
  EXPECT_NEAR(wasserstein(a, b, 1.0), 0.0, 1e-15);
}

TEST(Wasserstein, AssignmentMatchesBruteForce) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const auto M = 2 + static_cast<Eigen::Index>(rng() % 6);
    const auto a = random_cloud(rng, M, 2), b = random_cloud(rng, M, 2);
    for (double q : {1.0, 2.0}) EXPECT_NEAR(wasserstein(a, b, q), brute_force_wasserstein(a, b, q), 1e-12);
  }
  // in one dimension sorting and assignment agree
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_cloud(rng, 7), b = random_cloud(rng, 7);
    EXPECT_NEAR(wasserstein(a, b, 2.0), brute_force_wasserstein(a, b, 2.0), 1e-12);
  }
}

TEST(Wasserstein, SymmetryAndTriangle) {
  std::mt19937_64 rng(5);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = random_cloud(rng, 1 + static_cast<Eigen::Index>(rng() % 64));
    const auto b = random_cloud(rng, 1 + static_cast<Eigen::Index>(rng() % 64));
    const auto c = random_cloud(rng, 1 + static_cast<Eigen::Index>(rng() % 64));
    for (double q : {1.0, 2.0, 3.0}) {
      EXPECT_NEAR(wasserstein(a, b, q), wasserstein(b, a, q), 1e-12);
      worst = std::min(worst, wasserstein(a, b, q) + wasserstein(b, c, q) - wasserstein(a, c, q));
    }
  }
  EXPECT_GE(worst, -1e-10);
}

TEST(Wasserstein, QuantileMixIsDisplacementInterpolation) {
  const auto a = ParticleCloud::from_values({0.0, 2.0});
  const auto b = ParticleCloud::from_values({4.0, 1.0});
  const auto m = quantile_mix(a, b, 0.25);
  const auto v = m.sorted_values();
  EXPECT_DOUBLE_EQ(v[0], 0.25);
  EXPECT_DOUBLE_EQ(v[1], 2.5);
  // W2 along the geodesic is proportional to the mixing weight
  EXPECT_NEAR(wasserstein(a, m, 2.0), 0.25 * wasserstein(a, b, 2.0), 1e-12);
}

TEST(ParticleCloud, Validation) {
  EXPECT_THROW(ParticleCloud(Mat(0, 1)), InputError);
  Mat bad(1, 1);
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(ParticleCloud{bad}, InputError);
}

TEST(ParticleCloud, QuantileSeedingAndExpectation) {
  const auto law = Law1D::uniform(0.0, 1.0);
  const auto c = quantile_cloud(law, 4);
  EXPECT_DOUBLE_EQ(c.points()(0, 0), 0.125);
  EXPECT_DOUBLE_EQ(c.points()(3, 0), 0.875);
  EXPECT_NEAR(law_expectation(law, [](double y) { return 0.5 * y * y; }), 1.0 / 6.0, 1e-14);
  const auto normal = Law1D::normal(0.5, 1.0);
  EXPECT_NEAR(law_expectation(normal, [](double y) { return y * y; }), 1.25, 1e-10);
}
