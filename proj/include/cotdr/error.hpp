#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cotdr {

// Precondition violated by the caller (bad sizes, out-of-range parameters).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A scenario or setup that cannot be simulated as described.
class ConfigurationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A measurement that ran but could not produce the requested quantity.
class MeasurementError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FitFailure : public MeasurementError {
 public:
  FitFailure(const std::string& what, std::ptrdiff_t first_lag, std::ptrdiff_t last_lag)
      : MeasurementError(what + " (window " + std::to_string(first_lag) + ".." +
                         std::to_string(last_lag) + ")"),
        first_lag_(first_lag),
        last_lag_(last_lag) {}

  std::ptrdiff_t first_lag() const { return first_lag_; }
  std::ptrdiff_t last_lag() const { return last_lag_; }

 private:
  std::ptrdiff_t first_lag_;
  std::ptrdiff_t last_lag_;
};

class DegenerateRegression : public MeasurementError {
 public:
  using MeasurementError::MeasurementError;
};

}  // namespace cotdr
