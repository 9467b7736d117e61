#pragma once

#include <json.hpp>

#include <cstdint>
#include <limits>
#include <random>
#include <string>

#include "rmfg/core/types.hpp"

namespace rmfg {

/// Outcome of a sampled verification. `pass` holds exactly when
/// worst_margin >= -tolerance; negative margins are violations.
struct CheckReport {
  std::string name;
  bool pass = true;
  double worst_margin = std::numeric_limits<double>::infinity();
  nlohmann::json witness = nlohmann::json::object();
  long samples = 0;
  std::uint64_t seed = 0;
  double tolerance = 1e-10;
  /// Set when the check could not be decided (e.g. a rank-deficient fit);
  /// an indeterminate report does not count as a failure.
  bool indeterminate = false;

  /// Record a candidate margin; keeps the first attaining witness on ties.
  template <class W>
  void offer(double margin, W&& make_witness) {
    if (margin < worst_margin) {
      worst_margin = margin;
      witness = make_witness();
    }
  }

  void finalize() {
    if (indeterminate) {
      pass = true;
      return;
    }
    pass = worst_margin >= -tolerance;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["name"] = name;
    j["pass"] = pass;
    j["worst_margin"] = std::isfinite(worst_margin) ? nlohmann::json(worst_margin) : nlohmann::json(nullptr);
    j["witness"] = witness;
    j["samples"] = samples;
    j["seed"] = seed;
    j["tolerance"] = tolerance;
    return j;
  }
};

inline nlohmann::json to_json(const Vec& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

/// Sampling options shared by the verifiers.
struct SampleOptions {
  long samples = 10000;
  double box = 5.0;  ///< samples drawn from [-box, box]^M
  std::uint64_t seed = 20240901;
  double tolerance = 1e-10;
};

/// Deterministic uniform sampler on [-box, box]^M.
class BoxSampler {
 public:
  BoxSampler(std::uint64_t seed, double box) : rng_(seed), dist_(-box, box) {}
  Vec draw(Eigen::Index M) {
    Vec v(M);
    for (Eigen::Index i = 0; i < M; ++i) v[i] = dist_(rng_);
    return v;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit_(rng_); }

 private:
  std::mt19937_64 rng_;
  std::uniform_real_distribution<double> dist_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

}  // namespace rmfg
