#pragma once

#include <Eigen/SVD>

#include <limits>

#include "rmfg/core/types.hpp"

namespace rmfg {

/// Surjective linear map L: R^N -> R^n together with its adjoint L*, the
/// right inverse L^+ = L* (L L*)^{-1}, and an orthonormal basis of ker L.
class ReductionMap {
 public:
  /// Maps with condition number above this are rejected as degenerate.
  static constexpr double kMaxCondition = 1e12;

  /// `allow_square` admits the trivial case n = N (no reduction).
  explicit ReductionMap(Mat L, bool allow_square = false) : L_(std::move(L)) {
    const auto n = L_.rows();
    const auto N = L_.cols();
    if (n < 1 || n > N || (n == N && !allow_square))
      throw InputError("ReductionMap: need 1 <= n < N (or n = N when allowed), got n=" + std::to_string(n) +
                       ", N=" + std::to_string(N));
    if (!L_.allFinite()) throw InputError("ReductionMap: non-finite entries");

    Eigen::JacobiSVD<Mat> svd(L_, Eigen::ComputeFullV);
    const Vec& s = svd.singularValues();
    const double smax = s[0];
    const double smin = s[n - 1];
    condition_ = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
    if (!(condition_ < kMaxCondition))
      throw DegenerateMapError("ReductionMap: L L* numerically singular (condition " +
                               std::to_string(condition_) + ")");

    adjoint_ = L_.transpose();
    gram_inverse_ = (L_ * adjoint_).inverse();
    right_inverse_ = adjoint_ * gram_inverse_;
    kernel_ = svd.matrixV().rightCols(N - n);
  }

  Eigen::Index n() const { return L_.rows(); }
  Eigen::Index N() const { return L_.cols(); }

  const Mat& matrix() const { return L_; }
  const Mat& adjoint() const { return adjoint_; }
  const Mat& right_inverse() const { return right_inverse_; }
  /// (L L*)^{-1}, n x n.
  const Mat& gram_inverse() const { return gram_inverse_; }
  /// Orthonormal basis of ker L as columns (N x (N-n)).
  const Mat& kernel_basis() const { return kernel_; }
  double condition_number() const { return condition_; }

  Vec reduce(const Vec& x) const {
    require_dim(x, N(), "ReductionMap::reduce");
    return L_ * x;
  }
  Vec adjoint_apply(const Vec& u) const {
    require_dim(u, n(), "ReductionMap::adjoint_apply");
    return adjoint_ * u;
  }
  Vec lift(const Vec& y) const {
    require_dim(y, n(), "ReductionMap::lift");
    return right_inverse_ * y;
  }

  /// max-norm of L L^+ - I.
  double right_inverse_defect() const {
    return (L_ * right_inverse_ - Mat::Identity(n(), n())).cwiseAbs().maxCoeff();
  }

 private:
  Mat L_;
  Mat adjoint_;
  Mat gram_inverse_;
  Mat right_inverse_;
  Mat kernel_;
  double condition_ = 0.0;
};

struct ReduceLift {
  Vec Lx;      ///< L x
  Vec Lstar_u; ///< L* u
  Vec lifted;  ///< L^+ (L x)
};

inline ReduceLift reduce_and_lift(const ReductionMap& map, const Vec& x, const Vec& u) {
  ReduceLift out;
  out.Lx = map.reduce(x);
  out.Lstar_u = map.adjoint_apply(u);
  out.lifted = map.lift(out.Lx);
  return out;
}

}  // namespace rmfg
