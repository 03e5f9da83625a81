#pragma once

#include <stdexcept>
#include <string>

namespace bmfpca {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user configuration (bad K, missing column, malformed scenario).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Unparsable input file content.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Dataset invariant violation.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Dimension mismatch between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Factorization failure, improper density, non-finite result.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Raised when an invariant of the inference algorithm breaks, e.g. a
// coordinate-ascent step lowering the ELBO.
class AlgorithmError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace bmfpca
