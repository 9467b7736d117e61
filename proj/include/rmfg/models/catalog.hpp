#pragma once

#include <json.hpp>

#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <variant>
#include <vector>

#include "rmfg/core/reduction_map.hpp"
#include "rmfg/models/controls.hpp"
#include "rmfg/models/master.hpp"
#include "rmfg/models/noise.hpp"

namespace rmfg {

using ModelVariant = std::variant<FiniteStateModel, PowerMasterModel, QuadraticMasterModel, ControlsModel,
                                  PowerControlsModel, NoiseModel>;

struct ModelSpec {
  std::string name;
  std::string description;
  ModelVariant model;
  std::optional<ReductionMap> L;  ///< for reducible finite-state models
  std::optional<Law1D> m0_law;    ///< initial law for continuous/controls models

  template <class T>
  const T& as() const {
    if (const T* p = std::get_if<T>(&model)) return *p;
    throw ConfigurationError("model '" + name + "' has a different kind than the task requires");
  }

  /// Dimension metadata used by catalog lookups (N for finite-state models).
  Eigen::Index N() const {
    if (const auto* f = std::get_if<FiniteStateModel>(&model)) return f->N;
    if (const auto* n = std::get_if<NoiseModel>(&model)) return n->N();
    return 0;
  }
};

namespace detail {

inline double sum(const Vec& v) { return v.sum(); }

/// Reads typed overrides and rejects keys the model does not understand.
class ParamReader {
 public:
  ParamReader(const std::string& model, const nlohmann::json& params) : model_(model), params_(params) {
    if (!params_.is_null() && !params_.is_object())
      throw ConfigurationError("model parameters for '" + model + "' must be an object");
  }
  double number(const std::string& key, double def) {
    used_.insert(key);
    if (!params_.is_object() || !params_.contains(key)) return def;
    const auto& v = params_.at(key);
    if (!v.is_number()) throw ConfigurationError("parameter '" + key + "' of model '" + model_ + "' must be a number");
    return v.get<double>();
  }
  std::string text(const std::string& key, const std::string& def, const std::set<std::string>& allowed) {
    used_.insert(key);
    if (!params_.is_object() || !params_.contains(key)) return def;
    const auto& v = params_.at(key);
    if (!v.is_string()) throw ConfigurationError("parameter '" + key + "' of model '" + model_ + "' must be a string");
    const auto s = v.get<std::string>();
    if (!allowed.count(s)) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      throw ConfigurationError("parameter '" + key + "' of model '" + model_ + "' must be one of: " + list);
    }
    return s;
  }
  void finish() const {
    if (!params_.is_object()) return;
    for (auto it = params_.begin(); it != params_.end(); ++it)
      if (!used_.count(it.key()))
        throw ConfigurationError("unknown parameter '" + it.key() + "' for model '" + model_ + "'");
  }

 private:
  std::string model_;
  const nlohmann::json& params_;
  std::set<std::string> used_;
};

inline ModelSpec demo_finite_A(ParamReader& pr) {
  const bool break_fiber = pr.text("variant", "standard", {"standard", "fiber-breaking"}) == "fiber-breaking";
  FiniteStateModel m;
  m.name = "demo-finite-A";
  m.N = 2;
  const Vec ones = Vec::Ones(2);
  m.F = [ones, break_fiber](const Vec& x, const Vec& u) {
    Vec out = 0.5 * (sum(x) + sum(u)) * ones;
    if (break_fiber) out[0] += x[0] * x[0];
    return out;
  };
  m.G = [ones](const Vec& x, const Vec&) { return Vec(sum(x) * ones); };
  m.U0 = [ones](const Vec& x) { return Vec(sum(x) * ones); };
  const Mat half = Mat::Constant(2, 2, 0.5);
  const Mat full = Mat::Constant(2, 2, 1.0);
  m.dFdx = [half, break_fiber](const Vec& x, const Vec&) {
    Mat J = half;
    if (break_fiber) J(0, 0) += 2.0 * x[0];
    return J;
  };
  m.dFdu = [half](const Vec&, const Vec&) { return half; };
  m.dGdx = [full](const Vec&, const Vec&) { return full; };
  m.dGdu = [](const Vec&, const Vec&) { return Mat(Mat::Zero(2, 2)); };
  m.dU0 = [full](const Vec&) { return full; };
  Mat L(1, 2);
  L << 1.0, 1.0;
  ModelSpec s{m.name, "N=2 monotone pair reducible by L=[1 1]", m, ReductionMap(L), std::nullopt};
  return s;
}

inline ModelSpec demo_power(ParamReader& pr) {
  PowerMasterModel m;
  m.name = "demo-power";
  m.q = pr.number("q", 2.0);
  const auto a_kind = pr.text("a", "one", {"one", "exp-decay"});
  const auto b_kind = pr.text("b", "zero", {"zero", "nonconstant"});
  const auto c_kind = pr.text("c", "minus-z", {"minus-z", "zero"});
  const auto g_kind = pr.text("g", "identity", {"identity", "zero-constant"});
  if (a_kind == "one") {
    m.a = [](double) { return 1.0; };
    m.da = [](double) { return 0.0; };
  } else {
    m.a = [](double z) { return std::exp(-z); };
    m.da = [](double z) { return -std::exp(-z); };
  }
  if (b_kind == "zero") {
    m.b = [](double) { return 0.0; };
    m.db = [](double) { return 0.0; };
  } else {
    m.b = [](double z) { return z; };
    m.db = [](double) { return 1.0; };
  }
  if (c_kind == "minus-z") {
    m.c = [](double z) { return -z; };
    m.dc = [](double) { return -1.0; };
  } else {
    m.c = [](double) { return 0.0; };
    m.dc = [](double) { return 0.0; };
  }
  if (g_kind == "identity") {
    m.g = [](double z) { return z; };
    m.dg = [](double) { return 1.0; };
  } else {
    m.g = [](double) { return 0.0; };
    m.dg = [](double) { return 0.0; };
  }
  m.validate();
  return {m.name, "power family h = a|u|^q/q + b u + c", m, std::nullopt, Law1D::uniform(0.0, 1.0)};
}

inline ModelSpec demo_quadratic(ParamReader&) {
  QuadraticMasterModel m;
  m.name = "demo-quadratic";
  m.f = [](const Vec& z) { return z; };
  m.df = [](const Vec&) { return Mat(Mat::Identity(3, 3)); };
  m.g = [](const Vec& z) { return z; };
  m.dg = [](const Vec&) { return Mat(Mat::Identity(3, 3)); };
  return {m.name, "quadratic family with f(z) = z, g(z) = z", m, std::nullopt, Law1D::normal(0.0, 1.0)};
}

inline ModelSpec demo_controls_quad(ParamReader& pr) {
  const double b_offset = pr.number("B", 0.0);
  const double mean = pr.number("m0_mean", 0.5);
  const double sd = pr.number("m0_sd", 1.0);
  ControlsModel m;
  m.name = "demo-controls-quad";
  m.q = 2.0;
  m.r = 2.0;
  m.lambda = 3.0;
  m.phi_dim = 1;
  m.H = [](double, double p, const Vec&) { return 0.5 * p * p; };
  m.DpH = [](double, double p, const Vec&) { return p; };
  m.DxH = [](double, double, const Vec&) { return 0.0; };
  m.DppH = [](double, double, const Vec&) { return 1.0; };
  m.G = [](double x, const Vec&) { return 0.5 * x * x; };
  m.DxG = [](double x, const Vec&) { return x; };
  m.Phi = [](double, double, double p) { return vec1(p); };
  m.DtPhi = [](double, double, double) { return vec1(0.0); };
  m.DxPhi = [](double, double, double) { return vec1(0.0); };
  m.DpPhi = [](double, double, double) { return vec1(1.0); };
  m.A = [](double, const Vec&) { return Mat(Mat::Zero(1, 1)); };
  m.B = [b_offset](double, const Vec&) { return vec1(b_offset); };
  return {m.name, "H = p^2/2, G = x^2/2, Phi = p", m, std::nullopt, Law1D::normal(mean, sd)};
}

inline ModelSpec demo_power_controls(ParamReader& pr) {
  PowerControlsModel m;
  m.name = "demo-power-controls";
  m.p = pr.number("p", 2.0);
  m.q = pr.number("q", m.p);
  const auto a_kind = pr.text("a", "zero", {"zero", "small-slope", "delta-family"});
  const double delta = pr.number("delta", 0.05);
  const double slope = pr.number("slope", 0.05);
  const auto g_kind = pr.text("g", "constant", {"constant", "affine"});
  const double g0 = pr.number("g0", 1.0);
  const double g1 = pr.number("g1", 0.1);
  const double lo = pr.number("m0_lo", 0.0);
  const double hi = pr.number("m0_hi", 1.0);
  if (a_kind == "zero") {
    m.a = [](double) { return 0.0; };
    m.da = [](double) { return 0.0; };
  } else if (a_kind == "small-slope") {
    // bounded and Lipschitz: slope * tanh(phi)
    m.a = [slope](double phi) { return slope * std::tanh(phi); };
    m.da = [slope](double phi) { return slope / (std::cosh(phi) * std::cosh(phi)); };
  } else {
    // phi^{1/p} a'(phi) = delta for phi > 0
    const double pp = m.pprime();
    m.a = [delta, pp](double phi) { return delta * pp * std::pow(std::max(phi, 0.0), 1.0 / pp); };
    m.da = [delta, pp](double phi) { return delta * std::pow(std::max(phi, 1e-300), 1.0 / pp - 1.0); };
    m.delta_band = std::make_pair(delta, delta);
  }
  if (g_kind == "constant") {
    m.g = [g0](double) { return g0; };
    m.dg = [](double) { return 0.0; };
  } else {
    m.g = [g0, g1](double z) { return g0 + g1 * std::max(z, 0.0); };
    m.dg = [g1](double) { return g1; };
  }
  m.validate();
  return {m.name, "power family with affine drift in one dimension", m, std::nullopt, Law1D::uniform(lo, hi)};
}

inline ModelSpec demo_noise(ParamReader& pr) {
  const double alpha = pr.number("alpha", 1.0);
  const double coupling = pr.number("coupling", 1.0);
  const double d = pr.number("D", 0.1);
  const double rho = pr.number("rho", 0.7);
  const double theta = pr.number("theta", std::numbers::pi / 6.0);
  const double lambda = pr.number("lambda", 0.5);
  const bool identity_T = pr.text("T_map", "rotation", {"rotation", "identity"}) == "identity";
  NoiseModel nm;
  FiniteStateModel& m = nm.core;
  m.name = "demo-noise";
  m.N = 2;
  const Mat I = Mat::Identity(2, 2);
  m.F = [coupling, d](const Vec& x, const Vec& u) { return Vec(coupling * x + d * u); };
  m.G = [alpha, coupling](const Vec& x, const Vec& u) { return Vec(alpha * x - coupling * u); };
  m.U0 = [](const Vec& x) { return x; };
  m.dFdx = [I, coupling](const Vec&, const Vec&) { return Mat(coupling * I); };
  m.dFdu = [I, d](const Vec&, const Vec&) { return Mat(d * I); };
  m.dGdx = [I, alpha](const Vec&, const Vec&) { return Mat(alpha * I); };
  m.dGdu = [I, coupling](const Vec&, const Vec&) { return Mat(-coupling * I); };
  m.dU0 = [I](const Vec&) { return I; };
  m.F_strict = true;
  m.G_strict = true;
  if (identity_T) {
    nm.M = I;
  } else {
    nm.M.resize(2, 2);
    nm.M << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    nm.M *= rho;
  }
  nm.c = Vec::Zero(2);
  nm.lambda = lambda;
  nm.alpha = alpha;
  nm.R = pr.number("R", 4.0);
  nm.nx = static_cast<long>(pr.number("nx", 81));
  nm.validate();
  return {m.name, "linear strongly monotone pair with rotation-contraction rearrangement", nm, std::nullopt,
          std::nullopt};
}

using Builder = ModelSpec (*)(ParamReader&);

inline const std::map<std::string, Builder>& builders() {
  static const std::map<std::string, Builder> table = {
      {"demo-finite-A", &demo_finite_A},           {"demo-power", &demo_power},
      {"demo-quadratic", &demo_quadratic},         {"demo-controls-quad", &demo_controls_quad},
      {"demo-power-controls", &demo_power_controls}, {"demo-noise", &demo_noise},
  };
  return table;
}

}  // namespace detail

/// Names of every shipped model.
inline std::vector<std::string> catalog_names() {
  std::vector<std::string> out;
  for (const auto& [k, v] : detail::builders()) out.push_back(k);
  return out;
}

/// Build a catalog model, applying parameter overrides (unknown keys rejected).
inline ModelSpec build_model(const std::string& name, const nlohmann::json& params = nlohmann::json::object()) {
  const auto& table = detail::builders();
  auto it = table.find(name);
  if (it == table.end()) throw ConfigurationError("unknown model '" + name + "'");
  detail::ParamReader pr(name, params);
  ModelSpec spec = it->second(pr);
  pr.finish();
  return spec;
}

/// Every shipped model with default parameters.
inline std::map<std::string, ModelSpec> build_demo_models() {
  std::map<std::string, ModelSpec> out;
  for (const auto& name : catalog_names()) out.emplace(name, build_model(name));
  return out;
}

}  // namespace rmfg
