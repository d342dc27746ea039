#pragma once

#include <stdexcept>
#include <string>

namespace calad {

// Exit-code families used by the CLI: config = 1, data = 2, numerical = 3.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a function is evaluated outside its mathematical domain.
class DomainError : public std::domain_error {
 public:
  DomainError(const std::string& what, double value)
      : std::domain_error(what + " (value = " + std::to_string(value) + ")"), value_(value) {}
  double value() const noexcept { return value_; }

 private:
  double value_;
};

}  // namespace calad
