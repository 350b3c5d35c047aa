#pragma once

#include <stdexcept>
#include <string>

namespace patchlab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree (vector length vs. matrix columns, etc.).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A numerical precondition failed: non-finite input, non-SPD matrix,
/// non-orthonormal basis, degenerate denominator, divergence.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or argument value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace patchlab
