#pragma once

#include <stdexcept>
#include <string>

namespace ags {

class DegenerateConfigurationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PriorUnavailableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when the optimizer produces a non-finite loss; `snapshot` carries a
/// short human-readable description of the state at the failing step.
class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(const std::string& what, std::string snapshot)
      : std::runtime_error(what), snapshot_(std::move(snapshot)) {}
  const std::string& snapshot() const noexcept { return snapshot_; }

 private:
  std::string snapshot_;
};

class InsufficientInliersError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed user input (config, files). The CLI maps this to exit status 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ags
