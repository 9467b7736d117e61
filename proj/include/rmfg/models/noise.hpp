#pragma once

#include <limits>

#include "rmfg/models/finite.hpp"

namespace rmfg {

/// Finite-state model with common noise: at rate lambda the population is
/// rearranged by the affine map T(x) = M x + c, entering the equation through
/// lambda (U(x) - M^T U(T x)).
struct NoiseModel {
  FiniteStateModel core;
  Mat M;
  Vec c;
  double lambda = 0.0;
  double alpha = 0.0;  ///< claimed strong-monotonicity margin
  double R = 4.0;      ///< simulation box [-R, R]^N
  long nx = 81;

  Eigen::Index N() const { return core.N; }
  Vec rearrange(const Vec& x) const { return M * x + c; }
  Mat adjoint() const { return M.transpose(); }

  void validate() const {
    core.validate();
    if (M.rows() != core.N || M.cols() != core.N || c.size() != core.N)
      throw InputError("NoiseModel: rearrangement map has wrong dimension");
    if (!(R > 0.0)) throw InputError("NoiseModel: box half-width must be > 0");
    if (nx < 3) throw InputError("NoiseModel: need at least 3 nodes per axis");
    if (core.N > 3) throw UnsupportedConfigurationError("NoiseModel: grid solver limited to N <= 3");
  }

  /// Max over box corners of the infinity-norm excess of T(corner) beyond R;
  /// T(box) is inside the box iff this is <= 0 (the image of a box under an
  /// affine map is the convex hull of the corner images).
  double box_excess() const {
    const Eigen::Index n = core.N;
    double worst = -std::numeric_limits<double>::infinity();
    for (long mask = 0; mask < (1L << n); ++mask) {
      Vec corner(n);
      for (Eigen::Index i = 0; i < n; ++i) corner[i] = (mask >> i) & 1 ? R : -R;
      worst = std::max(worst, rearrange(corner).cwiseAbs().maxCoeff() - R);
    }
    return worst;
  }
};

}  // namespace rmfg
