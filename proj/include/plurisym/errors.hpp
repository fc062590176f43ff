#pragma once

#include <stdexcept>
#include <string>

namespace plurisym {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape mismatch: incompatible dimensions, bidegrees or grids.
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// A metric stopped being positive definite somewhere.
class PositivityLostError : public Error {
 public:
  using Error::Error;
};

/// The Hermitian-symplectic constraint drifted beyond tolerance.
class ConstraintViolationError : public Error {
 public:
  using Error::Error;
};

/// A caller-side precondition does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Ill-conditioned or rank-deficient numerical problem.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Malformed or out-of-range run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace plurisym
