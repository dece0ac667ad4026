#pragma once

#include <stdexcept>
#include <string>

namespace pstsim {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid arguments: bad counts, mismatched bases, out-of-range sites.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Non-finite amplitudes, singular matrices and similar numerical failures.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A requested computation exceeds a configured size guard.
class ResourceError : public Error {
 public:
  using Error::Error;
};

/// An internal consistency check failed (e.g. complex expectation of a Hermitian observable).
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

/// Closed-form coupling profile has no real solution for the requested parameters.
class ProfileInfeasibleError : public Error {
 public:
  using Error::Error;
};

/// Phase of a state whose transverse Bloch component vanishes.
class UndefinedPhaseError : public Error {
 public:
  using Error::Error;
};

/// Pair of qubits at identical frequency; the parametric estimate diverges.
class DegeneratePairError : public Error {
 public:
  using Error::Error;
};

/// Requested target lies outside a sampled / achievable range.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Least-squares fit did not converge to an acceptable residual.
class FitError : public Error {
 public:
  using Error::Error;
};

/// Malformed configuration document. `pointer` is a JSON pointer to the offending field.
class ConfigError : public Error {
 public:
  ConfigError(std::string pointer, const std::string& message)
      : Error(pointer + ": " + message), pointer_(std::move(pointer)) {}

  const std::string& pointer() const noexcept { return pointer_; }

 private:
  std::string pointer_;
};

}  // namespace pstsim
