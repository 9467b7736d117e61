#pragma once

#include <stdexcept>
#include <string>

namespace rmfg {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed arguments: dimension mismatch, out-of-range parameters.
class InputError : public Error {
 public:
  using Error::Error;
};

/// L L* is numerically singular.
class DegenerateMapError : public Error {
 public:
  using Error::Error;
};

/// A model callback produced a non-finite value.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// Requested configuration is valid in principle but not supported.
class UnsupportedConfigurationError : public Error {
 public:
  using Error::Error;
};

/// A state left the moment set (or a grid left its box) beyond tolerance.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// A required model ingredient (e.g. a derivative callback) is missing.
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

/// Non-finite state during time integration.
class BlowUpError : public Error {
 public:
  BlowUpError(const std::string& what, double time) : Error(what), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

/// Time step refused by a stability (CFL-type) check.
class StepRefusedError : public Error {
 public:
  using Error::Error;
};

}  // namespace rmfg
