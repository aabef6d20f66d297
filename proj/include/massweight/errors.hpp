#pragma once

#include <stdexcept>
#include <string>

namespace massweight {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A record violates its own invariants (non-positive mass, empty key, ...).
struct InvalidRecord : Error {
  using Error::Error;
};

/// A key was seen again with a mass or f-value inconsistent with the stored one.
struct MassMismatch : Error {
  using Error::Error;
};

/// Argument outside the mathematical domain of the operation.
struct DomainError : Error {
  using Error::Error;
};

/// Iteration cap exhausted without meeting the convergence criterion.
struct NoConvergence : Error {
  using Error::Error;
};

/// Exact enumeration would exceed the composition cap.
struct TooLarge : Error {
  using Error::Error;
};

/// Empty or mismatched vector/matrix dimensions.
struct DimensionError : Error {
  using Error::Error;
};

/// Malformed input file (CSV/JSON).
struct ParseError : Error {
  using Error::Error;
};

}  // namespace massweight
