#pragma once

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <algorithm>
#include <vector>

#include "rmfg/core/types.hpp"

namespace rmfg {

/// Equal-weight empirical measure on R^d: M points, each of mass 1/M.
class ParticleCloud {
 public:
  ParticleCloud() = default;

  /// Points as rows of an M x d matrix.
  explicit ParticleCloud(Mat points) : points_(std::move(points)) {
    if (points_.rows() < 1) throw InputError("ParticleCloud: need at least one particle");
    if (points_.cols() < 1) throw InputError("ParticleCloud: dimension must be >= 1");
    if (!points_.allFinite()) throw InputError("ParticleCloud: non-finite coordinate");
  }

  static ParticleCloud from_values(const std::vector<double>& xs) {
    Mat p(static_cast<Eigen::Index>(xs.size()), 1);
    for (std::size_t i = 0; i < xs.size(); ++i) p(static_cast<Eigen::Index>(i), 0) = xs[i];
    return ParticleCloud(std::move(p));
  }

  static ParticleCloud dirac(const Vec& x) { return ParticleCloud(Mat(x.transpose())); }

  Eigen::Index size() const { return points_.rows(); }
  Eigen::Index dim() const { return points_.cols(); }
  double weight() const { return 1.0 / static_cast<double>(points_.rows()); }

  const Mat& points() const { return points_; }
  Vec point(Eigen::Index i) const { return points_.row(i).transpose(); }

  /// First coordinate of every particle (d = 1 clouds).
  std::vector<double> values() const {
    std::vector<double> v(static_cast<std::size_t>(size()));
    for (Eigen::Index i = 0; i < size(); ++i) v[static_cast<std::size_t>(i)] = points_(i, 0);
    return v;
  }

  std::vector<double> sorted_values() const {
    auto v = values();
    std::sort(v.begin(), v.end());
    return v;
  }

  /// Disjoint union; weights renormalize to 1/(Ma+Mb).
  friend ParticleCloud concat(const ParticleCloud& a, const ParticleCloud& b) {
    if (a.dim() != b.dim()) throw InputError("concat: dimension mismatch");
    Mat p(a.size() + b.size(), a.dim());
    p << a.points_, b.points_;
    return ParticleCloud(std::move(p));
  }

 private:
  Mat points_;
};

/// One-dimensional law given by its quantile function.
struct Law1D {
  std::string name;
  std::function<double(double)> quantile;
  /// s -> Q(1 - s), accurate for small s.
  std::function<double(double)> upper_quantile;

  static Law1D uniform(double lo, double hi) {
    if (!(hi > lo)) throw InputError("Law1D::uniform: need hi > lo");
    return {"uniform", [lo, hi](double s) { return lo + (hi - lo) * s; },
            [lo, hi](double s) { return hi - (hi - lo) * s; }};
  }

  static Law1D normal(double mean, double sd) {
    if (!(sd > 0)) throw InputError("Law1D::normal: need sd > 0");
    boost::math::normal_distribution<double> dist(mean, sd);
    return {"normal", [dist](double s) { return boost::math::quantile(dist, s); },
            [dist](double s) { return boost::math::quantile(boost::math::complement(dist, s)); }};
  }
};

/// Deterministic quantile seeding: particle i sits at Q((i + 1/2)/M).
inline ParticleCloud quantile_cloud(const Law1D& law, Eigen::Index M) {
  if (M < 1) throw InputError("quantile_cloud: M must be >= 1");
  Mat p(M, 1);
  for (Eigen::Index i = 0; i < M; ++i)
    p(i, 0) = law.quantile((static_cast<double>(i) + 0.5) / static_cast<double>(M));
  return ParticleCloud(std::move(p));
}

/// Integral of a scalar function against the law, via s -> f(Q(s)) on (0,1).
inline double law_expectation(const Law1D& law, const std::function<double(double)>& f) {
  boost::math::quadrature::tanh_sinh<double> integrator;
  const double lower = integrator.integrate([&](double s) { return f(law.quantile(s)); }, 0.0, 0.5);
  const double upper =
      integrator.integrate([&](double s) { return f(law.upper_quantile(s)); }, 0.0, 0.5);
  return lower + upper;
}

}  // namespace rmfg
