#pragma once

#include <stdexcept>
#include <string>

namespace qthermo {

/// Input violates a documented invariant (bad dimension, non-Hermitian, bad
/// parameters, malformed configuration). Maps to CLI exit code 1.
class ValidationError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical procedure failed to deliver a result within tolerance
/// (eigensolver non-convergence, integrator positivity loss, cross-check
/// mismatch). Maps to CLI exit code 2.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace qthermo
