#pragma once

namespace qthermo {

/// Numerical thresholds shared by all modules. Every function that compares
/// against a threshold takes a `const Tolerances&` defaulting to these values;
/// scenario configuration can override any of them.
struct Tolerances {
  // linalg
  double hermitian = 1e-12;      // max |m - m^dagger| element
  double degeneracy = 1e-12;     // eigenvalue gap treated as a crossing
  int jacobi_max_sweeps = 50;
  double expectation_imag = 1e-12;

  // states
  double trace = 1e-10;
  double positivity = 1e-10;     // eigenvalues >= -positivity are clamped to 0

  // dynamics
  double integrator_positivity = 1e-8;
  double crosscheck = 1e-8;

  // thermo
  double first_law = 1e-6;
  double zero_branch = 1e-14;
};

}  // namespace qthermo
