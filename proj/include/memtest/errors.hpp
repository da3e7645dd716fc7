#pragma once

#include <stdexcept>
#include <string>

namespace memtest {

// Malformed arguments: out-of-range indices, mismatched sizes, invalid
// probability vectors.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Construction parameters outside the range a construction is defined on.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A solve or optimization did not meet its residual target.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, double residual)
      : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  explicit NumericalError(const std::string& what)
      : std::runtime_error(what), residual_(0.0) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

// The machine has too many states for the requested adversary construction.
class CapacityError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace memtest
