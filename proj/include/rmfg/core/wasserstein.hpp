#pragma once

#include <algorithm>
#include <limits>
#include <vector>

#include "rmfg/core/particle_cloud.hpp"

namespace rmfg {

/// Largest cloud size accepted by the exact assignment solver.
inline constexpr Eigen::Index kMaxAssignmentSize = 512;

/// Minimum-cost perfect assignment on a square cost matrix (Hungarian method
/// with potentials, O(M^3)). Returns the optimal total cost; `assignment[i]` is
/// the column matched to row i.
inline double solve_assignment(const Mat& cost, std::vector<Eigen::Index>* assignment = nullptr) {
  const Eigen::Index n = cost.rows();
  if (cost.cols() != n) throw InputError("solve_assignment: cost matrix must be square");
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; p[j] = row matched to column j, p[0] is the row being inserted.
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(n + 1), 0.0);
  std::vector<Eigen::Index> p(static_cast<std::size_t>(n + 1), 0), way(static_cast<std::size_t>(n + 1), 0);
  for (Eigen::Index i = 1; i <= n; ++i) {
    p[0] = i;
    Eigen::Index j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n + 1), inf);
    std::vector<char> used(static_cast<std::size_t>(n + 1), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const Eigen::Index i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      Eigen::Index j1 = 0;
      for (Eigen::Index j = 1; j <= n; ++j) {
        const auto js = static_cast<std::size_t>(j);
        if (used[js]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[js];
        if (cur < minv[js]) {
          minv[js] = cur;
          way[js] = j0;
        }
        if (minv[js] < delta) {
          delta = minv[js];
          j1 = j;
        }
      }
      for (Eigen::Index j = 0; j <= n; ++j) {
        const auto js = static_cast<std::size_t>(j);
        if (used[js]) {
          u[static_cast<std::size_t>(p[js])] += delta;
          v[js] -= delta;
        } else {
          minv[js] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const Eigen::Index j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<Eigen::Index> row_to_col(static_cast<std::size_t>(n));
  for (Eigen::Index j = 1; j <= n; ++j) row_to_col[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) total += cost(i, row_to_col[static_cast<std::size_t>(i)]);
  if (assignment) *assignment = std::move(row_to_col);
  return total;
}

namespace detail {

/// Exact W_q between two equal-weight 1-d clouds of arbitrary sizes: integral
/// over s in (0,1) of |Qa(s) - Qb(s)|^q with piecewise-constant quantiles.
inline double wasserstein_1d_pow(std::vector<double> a, std::vector<double> b, double q) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const auto Ma = a.size();
  const auto Mb = b.size();
  double acc = 0.0;
  if (Ma == Mb) {
    for (std::size_t i = 0; i < Ma; ++i) acc += std::pow(std::abs(a[i] - b[i]), q);
    return acc / static_cast<double>(Ma);
  }
  // Merge breakpoints i/Ma and j/Mb using integer arithmetic (i*Mb vs j*Ma).
  std::size_t i = 0, j = 0;
  std::size_t pos = 0;  // current position in units of 1/(Ma*Mb)
  const std::size_t total = Ma * Mb;
  while (pos < total) {
    const std::size_t next_a = (i + 1) * Mb;
    const std::size_t next_b = (j + 1) * Ma;
    const std::size_t next = std::min(next_a, next_b);
    acc += static_cast<double>(next - pos) * std::pow(std::abs(a[i] - b[j]), q);
    pos = next;
    if (next == next_a) ++i;
    if (next == next_b) ++j;
  }
  return acc / static_cast<double>(total);
}

}  // namespace detail

/// q-Wasserstein distance between equal-weight particle clouds.
///   d = 1: exact via order statistics (any sizes).
///   d > 1: exact via minimum-cost assignment (equal sizes, M <= 512).
inline double wasserstein(const ParticleCloud& a, const ParticleCloud& b, double q) {
  if (!(q >= 1.0)) throw InputError("wasserstein: order q must be >= 1");
  if (a.dim() != b.dim()) throw InputError("wasserstein: dimension mismatch");
  if (a.dim() == 1) return std::pow(detail::wasserstein_1d_pow(a.values(), b.values(), q), 1.0 / q);
  if (a.size() != b.size())
    throw UnsupportedConfigurationError("wasserstein: unequal particle counts in d > 1");
  if (a.size() > kMaxAssignmentSize)
    throw UnsupportedConfigurationError("wasserstein: assignment limited to M <= " +
                                        std::to_string(kMaxAssignmentSize));
  const Eigen::Index M = a.size();
  Mat cost(M, M);
  for (Eigen::Index i = 0; i < M; ++i)
    for (Eigen::Index j = 0; j < M; ++j)
      cost(i, j) = std::pow((a.points().row(i) - b.points().row(j)).norm(), q);
  const double opt = solve_assignment(cost);
  return std::pow(std::max(0.0, opt) / static_cast<double>(M), 1.0 / q);
}

/// Displacement interpolation of two equal-size 1-d clouds: sorted
/// (1 - theta) a + theta b, i.e. the convex combination of quantile functions.
inline ParticleCloud quantile_mix(const ParticleCloud& a, const ParticleCloud& b, double theta) {
  if (a.dim() != 1 || b.dim() != 1) throw UnsupportedConfigurationError("quantile_mix: d = 1 only");
  if (a.size() != b.size()) throw InputError("quantile_mix: clouds must have equal size");
  auto sa = a.sorted_values();
  auto sb = b.sorted_values();
  for (std::size_t i = 0; i < sa.size(); ++i) sa[i] = (1.0 - theta) * sa[i] + theta * sb[i];
  return ParticleCloud::from_values(sa);
}

}  // namespace rmfg
