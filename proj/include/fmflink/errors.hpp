// errors.hpp — exception types shared across the library.
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fmflink {

/// Base class for all domain failures raised by this library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Requested mode lies outside the supported mode table.
class ModeNotSupported : public Error {
public:
  ModeNotSupported(std::string msg, int m, int n)
      : Error(std::move(msg)), m(m), n(n) {}
  int m;
  int n;
};

/// The integrator produced a non-finite or negative state; carries the
/// location so the caller can report which step width broke down.
class InstabilityError : public Error {
public:
  InstabilityError(std::string msg, std::size_t step_index, double z, double step)
      : Error(std::move(msg)), step_index(step_index), z(z), step(step) {}
  std::size_t step_index;
  double z;
  double step;
};

/// Coupling graph splits into disconnected components, so the asymptotic
/// distribution depends on the launch condition.
class NonUniqueSteadyState : public Error {
public:
  using Error::Error;
};

/// Measured loss/crosstalk figures cannot come from a passive device.
class InfeasibleDevice : public Error {
public:
  using Error::Error;
};

/// An estimator was asked to normalise data with no usable signal in it.
class NoSignalError : public Error {
public:
  using Error::Error;
};

}  // namespace fmflink
