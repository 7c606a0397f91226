#pragma once

#include <stdexcept>
#include <string>

namespace obs {

// Bad arguments: non-finite inputs, dimension mismatches, out-of-range
// hyperparameters, malformed configuration.
struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A numeric routine failed to meet its tolerance or produced a degenerate
// result. `residual` carries the achieved tolerance where meaningful.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what, double residual_ = 0.0)
      : std::runtime_error(what), residual(residual_) {}
  double residual;
};

// A multiplicative-weight update underflowed to an all-zero numerator.
struct NumericCollapse : NumericError {
  NumericCollapse(const std::string& what, long step_)
      : NumericError(what), step(step_) {}
  long step;
};

}  // namespace obs
