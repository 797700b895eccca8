#pragma once

#include <stdexcept>
#include <string>

namespace qst {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unknown mode names, mismatched layouts, malformed layouts.
class LayoutError : public Error {
 public:
  using Error::Error;
};

/// Occupations or states that do not fit in the truncated Fock space.
class TruncationError : public Error {
 public:
  using Error::Error;
};

/// Arguments outside the domain of a formula (negative rates, unstable
/// cavities, pulses with no real value, unphysical squeezing).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Integration aborted: NaN, trace drift, collapsed norm.
class IntegrationError : public Error {
 public:
  using Error::Error;
};

/// Steady state not reached before the time limit.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double last_residual)
      : Error(what), last_residual_(last_residual) {}
  double last_residual() const noexcept { return last_residual_; }

 private:
  double last_residual_;
};

/// Scenario configuration problems; carries the offending key path.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error(what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace qst
