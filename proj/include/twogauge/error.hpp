#pragma once

#include <stdexcept>
#include <string>

namespace twogauge {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A documented precondition of an operation was violated.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// The set is too coarse to resolve the knee of a hybrid gauge.
class UnderResolvedError : public PreconditionError {
 public:
  UnderResolvedError(double resolution, double required)
      : PreconditionError("under-resolved: set resolution " + std::to_string(resolution) +
                          " exceeds required resolution " + std::to_string(required)),
        resolution_(resolution),
        required_(required) {}

  double resolution() const { return resolution_; }
  double required() const { return required_; }

 private:
  double resolution_;
  double required_;
};

#define TWOGAUGE_REQUIRE(cond, msg)                                   \
  do {                                                                \
    if (!(cond)) throw ::twogauge::PreconditionError(std::string(msg)); \
  } while (0)

}  // namespace twogauge
