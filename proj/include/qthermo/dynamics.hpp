#pragma once

// State evolution for the two model systems:
//  * two qubits with dispersive coupling g sigma_z (x) sigma_z (closed form,
//    reduced and joint),
//  * one qubit damped by a thermal bath of mean occupation nbar (Lindblad
//    generator, its exact solution, and an RK4 integrator).
// hbar = 1 throughout.

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"
#include "states.hpp"
#include "tolerances.hpp"

namespace qthermo {

enum class Frame { Interaction, Lab };

inline const char* to_string(Frame f) { return f == Frame::Lab ? "lab" : "interaction"; }

struct DispersiveParams {
  double omega0 = 1.0;
  double g = 1.0;
  double p = 0.5;
  Complex c = 0.5;
  Frame frame = Frame::Interaction;
};

struct LindbladParams {
  double gamma = 1.0;
  double nbar = 0.0;
  double omega0 = 1.0;
};

/// Uniform grid t_k = k * t_max / steps, k = 0..steps.
struct TimeGrid {
  double t_max = 1.0;
  std::size_t steps = 1000;

  double dt() const noexcept { return t_max / static_cast<double>(steps); }
  double at(std::size_t k) const noexcept {
    return t_max * static_cast<double>(k) / static_cast<double>(steps);
  }
  std::size_t size() const noexcept { return steps + 1; }
};

inline void validate(const DispersiveParams& prm) {
  if (!std::isfinite(prm.omega0) || !std::isfinite(prm.g)) {
    throw ValidationError("dispersive params: omega0 and g must be finite");
  }
  if (!(prm.p >= 0.0 && prm.p <= 1.0)) {
    throw ValidationError("dispersive params: p must lie in [0, 1], got " + std::to_string(prm.p));
  }
  const double bound = std::sqrt(prm.p * (1.0 - prm.p));
  if (std::abs(prm.c) > bound + 1e-12) {
    throw ValidationError("dispersive params: positivity requires |c| <= sqrt(p(1-p)) = " +
                          std::to_string(bound) + ", got |c| = " +
                          std::to_string(std::abs(prm.c)));
  }
}

inline void validate(const LindbladParams& prm) {
  if (!(prm.gamma > 0.0) || !std::isfinite(prm.gamma)) {
    throw ValidationError("lindblad params: gamma must be > 0, got " + std::to_string(prm.gamma));
  }
  if (!(prm.nbar >= 0.0) || !std::isfinite(prm.nbar)) {
    throw ValidationError("lindblad params: nbar must be >= 0, got " + std::to_string(prm.nbar));
  }
  if (!std::isfinite(prm.omega0)) throw ValidationError("lindblad params: omega0 must be finite");
}

inline void validate(const TimeGrid& grid) {
  if (!(grid.t_max > 0.0) || !std::isfinite(grid.t_max)) {
    throw ValidationError("time grid: t_max must be > 0, got " + std::to_string(grid.t_max));
  }
  if (grid.steps < 2) {
    throw ValidationError("time grid: need at least 2 steps, got " + std::to_string(grid.steps));
  }
}

/// (omega0 / 2) sigma_z
inline ComplexMatrix qubit_hamiltonian(double omega0) { return ops::sigma_z() * (0.5 * omega0); }

/// Full two-qubit Hamiltonian (omega0/2)(sz (x) 1 + 1 (x) sz) + g sz (x) sz.
inline ComplexMatrix dispersive_hamiltonian(const DispersiveParams& prm) {
  const auto id = ComplexMatrix::identity(2);
  const auto sz = ops::sigma_z();
  return (tensor_product(sz, id) + tensor_product(id, sz)) * (0.5 * prm.omega0) +
         tensor_product(sz, sz) * prm.g;
}

inline DensityMatrix dispersive_initial_A(const DispersiveParams& prm) {
  validate(prm);
  return validate_density({{prm.p, prm.c}, {std::conj(prm.c), 1.0 - prm.p}});
}

inline DensityMatrix dispersive_initial_B() {
  return validate_density({{0.5, 0.0}, {0.0, 0.5}});
}

inline DensityMatrix dispersive_initial_joint(const DispersiveParams& prm) {
  return validate_density(
      tensor_product(dispersive_initial_A(prm).matrix(), dispersive_initial_B().matrix()));
}

/// Closed-form reduced state of qubit A; the off-diagonal decays as cos(2gt)
/// and, in the lab frame, also rotates as e^{-i omega0 t}.
inline DensityMatrix dispersive_reduced_A(const DispersiveParams& prm, double t) {
  validate(prm);
  Complex off = prm.c * std::cos(2.0 * prm.g * t);
  if (prm.frame == Frame::Lab) off *= std::polar(1.0, -prm.omega0 * t);
  return validate_density({{prm.p, off}, {std::conj(off), 1.0 - prm.p}});
}

/// U rho U^dagger with U = exp(-iHt) for the diagonal dispersive H. The
/// interaction frame drops the free sigma_z terms.
inline DensityMatrix dispersive_joint_evolve(const DispersiveParams& prm, const DensityMatrix& rho0,
                                             double t) {
  if (rho0.dim() != 4) {
    throw ValidationError("dispersive_joint_evolve: expected a 4x4 state, got dim " +
                          std::to_string(rho0.dim()));
  }
  double energy[4];
  for (std::size_t i = 0; i < 4; ++i) {
    const double sa = (i / 2 == 0) ? 1.0 : -1.0;
    const double sb = (i % 2 == 0) ? 1.0 : -1.0;
    energy[i] = prm.g * sa * sb;
    if (prm.frame == Frame::Lab) energy[i] += 0.5 * prm.omega0 * (sa + sb);
  }
  ComplexMatrix out(4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      out(i, j) = rho0(i, j) * std::polar(1.0, -(energy[i] - energy[j]) * t);
  return validate_density(out);
}

/// Thermal-bath Lindblad generator, interaction picture.
inline ComplexMatrix lindblad_rhs(const LindbladParams& prm, const ComplexMatrix& rho) {
  if (rho.dim() != 2) {
    throw ValidationError("lindblad_rhs: expected a qubit state, got dim " +
                          std::to_string(rho.dim()));
  }
  static const ComplexMatrix lower = ops::sigma_minus();
  static const ComplexMatrix raise = ops::sigma_plus();
  static const ComplexMatrix lr = lower * raise;  // |g><g|
  static const ComplexMatrix rl = raise * lower;  // |e><e|

  const auto absorb = lr * rho - 2.0 * (raise * rho * lower) + rho * lr;
  const auto emit = rl * rho - 2.0 * (lower * rho * raise) + rho * rl;
  return absorb * (-0.5 * prm.gamma * prm.nbar) + emit * (-0.5 * prm.gamma * (prm.nbar + 1.0));
}

inline ComplexMatrix lindblad_rhs(const LindbladParams& prm, const DensityMatrix& rho) {
  return lindblad_rhs(prm, rho.matrix());
}

/// Exact solution of the thermal-bath master equation.
inline DensityMatrix lindblad_analytic(const LindbladParams& prm, const DensityMatrix& rho0,
                                       double t) {
  validate(prm);
  if (rho0.dim() != 2) {
    throw ValidationError("lindblad_analytic: expected a qubit state, got dim " +
                          std::to_string(rho0.dim()));
  }
  const double n = prm.nbar;
  const double k = 2.0 * n + 1.0;
  const double ee0 = rho0(0, 0).real();
  const double ee = ((k * ee0 - n) * std::exp(-k * prm.gamma * t) + n) / k;
  const Complex eg = rho0(0, 1) * std::exp(-(n + 0.5) * prm.gamma * t);
  return validate_density({{ee, eg}, {std::conj(eg), 1.0 - ee}});
}

/// Classic RK4 on lindblad_rhs. Every output is Hermitized, renormalized to
/// unit trace and checked for positivity.
inline std::vector<DensityMatrix> rk4_evolve(const LindbladParams& prm, const DensityMatrix& rho0,
                                             const TimeGrid& grid, const Tolerances& tol = {}) {
  validate(prm);
  validate(grid);
  const double h = grid.dt();

  Tolerances relaxed = tol;
  relaxed.positivity = tol.integrator_positivity;

  std::vector<DensityMatrix> out;
  out.reserve(grid.size());
  out.push_back(rho0);
  ComplexMatrix rho = rho0.matrix();
  for (std::size_t k = 1; k < grid.size(); ++k) {
    const auto k1 = lindblad_rhs(prm, rho);
    const auto k2 = lindblad_rhs(prm, rho + k1 * (0.5 * h));
    const auto k3 = lindblad_rhs(prm, rho + k2 * (0.5 * h));
    const auto k4 = lindblad_rhs(prm, rho + k3 * h);
    rho += (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (h / 6.0);
    rho = (rho + rho.adjoint()) * 0.5;
    rho *= 1.0 / rho.trace().real();
    try {
      out.push_back(validate_density(rho, relaxed));
    } catch (const InvalidDensity& e) {
      throw NumericalError("rk4_evolve: state left the density-matrix set at t = " +
                           std::to_string(grid.at(k)) + " (" + e.what() +
                           "); try a smaller time step");
    }
  }
  return out;
}

}  // namespace qthermo
