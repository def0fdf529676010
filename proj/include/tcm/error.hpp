#pragma once

#include <stdexcept>
#include <string>

namespace tcm {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid sizes, non-finite samples, mismatched grids.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Physics misconfiguration: coefficient below its lower bound, bad config keys.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Linear or nonlinear solve failed to reach its target.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

}  // namespace tcm
