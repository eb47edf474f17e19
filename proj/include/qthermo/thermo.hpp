#pragma once

// Heat, work, internal energy and entropy along a state trajectory.
//
// Two accounting schemes run side by side:
//  * eigenbasis ("new") scheme: for rho = sum_i p_i P_i,
//      dQ = sum_i dp_i tr(P_i H),   dW = sum_i p_i d tr(P_i H);
//  * Alicki scheme: dQ = tr(drho H), dW = tr(rho dH).
// Increments between grid points use midpoint weights, so for both schemes
// the per-step sum dQ + dW telescopes to U(t_next) - U(t_prev).
//
// Sign convention: positive Q and W flow into the system.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"
#include "states.hpp"
#include "tolerances.hpp"

namespace qthermo {

/// tr(rho H)
inline double internal_energy(const DensityMatrix& rho, const ComplexMatrix& hamiltonian,
                              const Tolerances& tol = {}) {
  return expectation(rho.matrix(), hamiltonian, tol);
}

namespace detail {

inline void require_matched(const SpectralDecomposition& prev, const SpectralDecomposition& next,
                            const char* who) {
  if (prev.branches.size() != next.branches.size()) {
    throw ValidationError(std::string(who) + ": branch count mismatch");
  }
  for (std::size_t i = 0; i < prev.branches.size(); ++i) {
    if (prev.branches[i].id != next.branches[i].id) {
      throw ValidationError(std::string(who) + ": branches are not matched (id " +
                            std::to_string(prev.branches[i].id) + " vs " +
                            std::to_string(next.branches[i].id) + ")");
    }
  }
}

inline double trace_product(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.dim() != b.dim()) {
    throw ValidationError("trace_product: dimension mismatch " + std::to_string(a.dim()) +
                          " vs " + std::to_string(b.dim()));
  }
  return overlap(a, b);
}

}  // namespace detail

/// sum_i (p_i' - p_i) [tr(P_i H) + tr(P_i' H')] / 2. With a constant
/// Hamiltonian this is sum_i dp_i tr(Pbar_i H), Pbar_i = (P_i + P_i') / 2.
inline double heat_increment_new(const SpectralDecomposition& prev,
                                 const SpectralDecomposition& next,
                                 const ComplexMatrix& hamiltonian_prev,
                                 const ComplexMatrix& hamiltonian_next) {
  detail::require_matched(prev, next, "heat_increment_new");
  double dq = 0.0;
  for (std::size_t i = 0; i < prev.branches.size(); ++i) {
    const auto& a = prev.branches[i];
    const auto& b = next.branches[i];
    const double level = 0.5 * (detail::trace_product(a.projector, hamiltonian_prev) +
                                detail::trace_product(b.projector, hamiltonian_next));
    dq += (b.probability - a.probability) * level;
  }
  return dq;
}

inline double heat_increment_new(const SpectralDecomposition& prev,
                                 const SpectralDecomposition& next,
                                 const ComplexMatrix& hamiltonian) {
  return heat_increment_new(prev, next, hamiltonian, hamiltonian);
}

/// sum_i pbar_i [tr(P_i' H') - tr(P_i H)].
inline double work_increment_new(const SpectralDecomposition& prev,
                                 const SpectralDecomposition& next,
                                 const ComplexMatrix& hamiltonian_prev,
                                 const ComplexMatrix& hamiltonian_next) {
  detail::require_matched(prev, next, "work_increment_new");
  double dw = 0.0;
  for (std::size_t i = 0; i < prev.branches.size(); ++i) {
    const auto& a = prev.branches[i];
    const auto& b = next.branches[i];
    const double pbar = 0.5 * (a.probability + b.probability);
    dw += pbar * (detail::trace_product(b.projector, hamiltonian_next) -
                  detail::trace_product(a.projector, hamiltonian_prev));
  }
  return dw;
}

/// dQ/dt = tr(rho_dot H)
inline double heat_rate_alicki(const ComplexMatrix& rho_dot, const ComplexMatrix& hamiltonian) {
  return detail::trace_product(rho_dot, hamiltonian);
}

/// dW/dt = tr(rho H_dot)
inline double work_rate_alicki(const DensityMatrix& rho, const ComplexMatrix& hamiltonian_dot) {
  return detail::trace_product(rho.matrix(), hamiltonian_dot);
}

/// tr((rho' - rho) Hbar)
inline double heat_increment_alicki(const DensityMatrix& prev, const DensityMatrix& next,
                                    const ComplexMatrix& hamiltonian_prev,
                                    const ComplexMatrix& hamiltonian_next) {
  return detail::trace_product(next.matrix() - prev.matrix(),
                               (hamiltonian_prev + hamiltonian_next) * 0.5);
}

/// tr(rhobar (H' - H))
inline double work_increment_alicki(const DensityMatrix& prev, const DensityMatrix& next,
                                    const ComplexMatrix& hamiltonian_prev,
                                    const ComplexMatrix& hamiltonian_next) {
  return detail::trace_product((prev.matrix() + next.matrix()) * 0.5,
                               hamiltonian_next - hamiltonian_prev);
}

/// -sum_i (p_i' - p_i) ln pbar_i. Branches with both probabilities below
/// tol.zero_branch are skipped.
inline double entropy_increment(const SpectralDecomposition& prev,
                                const SpectralDecomposition& next, const Tolerances& tol = {}) {
  detail::require_matched(prev, next, "entropy_increment");
  double ds = 0.0;
  for (std::size_t i = 0; i < prev.branches.size(); ++i) {
    const double a = prev.branches[i].probability;
    const double b = next.branches[i].probability;
    if (a < tol.zero_branch && b < tol.zero_branch) continue;
    const double pbar = 0.5 * (a + b);
    if (pbar > 0.0) ds -= (b - a) * std::log(pbar);
  }
  return ds;
}

/// entropy_increment / dt
inline double entropy_rate(const SpectralDecomposition& prev, const SpectralDecomposition& next,
                           double dt, const Tolerances& tol = {}) {
  return entropy_increment(prev, next, tol) / dt;
}

struct ThermoSample {
  double t = 0.0;
  std::vector<double> probabilities;  // indexed by branch id
  double U = 0.0;
  double S = 0.0;
  double dQ_new = 0.0, dW_new = 0.0, dQ_alicki = 0.0, dW_alicki = 0.0;
  double Q_new = 0.0, W_new = 0.0, Q_alicki = 0.0, W_alicki = 0.0;
  double residual_new = 0.0, residual_alicki = 0.0;
};

struct ThermoLedger {
  std::string scenario;
  std::string subsystem;
  std::string frame;
  std::vector<ThermoSample> samples;
};

/// Sequential fold of a trajectory into a ThermoLedger. Feed states in time
/// order together with the Hamiltonian of the audited subsystem.
class LedgerBuilder {
public:
  explicit LedgerBuilder(ThermoLedger meta = {}, Tolerances tol = {})
      : ledger_(std::move(meta)), tol_(tol), tracker_(tol) {}

  const ThermoSample& push(double t, const DensityMatrix& rho, const ComplexMatrix& hamiltonian) {
    if (!ledger_.samples.empty() && !(t > ledger_.samples.back().t)) {
      throw ValidationError("LedgerBuilder: times must be strictly increasing");
    }
    std::optional<SpectralDecomposition> prev = tracker_.current();
    const auto& sd = tracker_.push(rho);

    ThermoSample s;
    s.t = t;
    s.probabilities.resize(sd.branches.size());
    for (const auto& b : sd.branches) s.probabilities[static_cast<std::size_t>(b.id)] = b.probability;
    s.U = internal_energy(rho, hamiltonian, tol_);
    s.S = entropy_of(sd);

    if (prev) {
      const auto& last = ledger_.samples.back();
      s.dQ_new = heat_increment_new(*prev, sd, *last_h_, hamiltonian);
      s.dW_new = work_increment_new(*prev, sd, *last_h_, hamiltonian);
      s.dQ_alicki = heat_increment_alicki(*last_rho_, rho, *last_h_, hamiltonian);
      s.dW_alicki = work_increment_alicki(*last_rho_, rho, *last_h_, hamiltonian);
      s.Q_new = last.Q_new + s.dQ_new;
      s.W_new = last.W_new + s.dW_new;
      s.Q_alicki = last.Q_alicki + s.dQ_alicki;
      s.W_alicki = last.W_alicki + s.dW_alicki;
      const double du = s.U - ledger_.samples.front().U;
      s.residual_new = std::abs(du - s.Q_new - s.W_new);
      s.residual_alicki = std::abs(du - s.Q_alicki - s.W_alicki);
    }
    last_rho_ = rho;
    last_h_ = hamiltonian;
    ledger_.samples.push_back(std::move(s));
    return ledger_.samples.back();
  }

  const ThermoLedger& ledger() const noexcept { return ledger_; }
  ThermoLedger take() { return std::move(ledger_); }

private:
  ThermoLedger ledger_;
  Tolerances tol_;
  BranchTracker tracker_;
  std::optional<DensityMatrix> last_rho_;
  std::optional<ComplexMatrix> last_h_;
};

struct DefinitionAudit {
  std::vector<double> residuals;
  std::vector<std::size_t> flagged;  // sample indices above tolerance
  double tolerance = 0.0;
  double max_residual = 0.0;
  double t_at_max = 0.0;

  bool passed() const noexcept { return flagged.empty(); }
};

struct FirstLawAudit {
  DefinitionAudit new_definition;
  DefinitionAudit alicki;
};

/// |Delta U - Q - W| per sample for both schemes, with Delta U measured from
/// `energies`. The tolerance is tol.first_law * max(1, max |U|).
inline FirstLawAudit audit_first_law(const ThermoLedger& ledger,
                                     const std::vector<double>& energies,
                                     const Tolerances& tol = {}) {
  if (energies.size() != ledger.samples.size()) {
    throw ValidationError("audit_first_law: energy series has " +
                          std::to_string(energies.size()) + " points, ledger has " +
                          std::to_string(ledger.samples.size()));
  }
  double scale = 1.0;
  for (double u : energies) scale = std::max(scale, std::abs(u));

  FirstLawAudit report;
  auto run = [&](DefinitionAudit& out, auto heat, auto work) {
    out.tolerance = tol.first_law * scale;
    for (std::size_t k = 0; k < ledger.samples.size(); ++k) {
      const auto& s = ledger.samples[k];
      const double r = std::abs(energies[k] - energies[0] - heat(s) - work(s));
      out.residuals.push_back(r);
      if (r > out.tolerance) out.flagged.push_back(k);
      if (k == 0 || r > out.max_residual) {
        out.max_residual = r;
        out.t_at_max = s.t;
      }
    }
  };
  run(report.new_definition, [](const ThermoSample& s) { return s.Q_new; },
      [](const ThermoSample& s) { return s.W_new; });
  run(report.alicki, [](const ThermoSample& s) { return s.Q_alicki; },
      [](const ThermoSample& s) { return s.W_alicki; });
  return report;
}

inline std::vector<double> energy_series(const ThermoLedger& ledger) {
  std::vector<double> u;
  u.reserve(ledger.samples.size());
  for (const auto& s : ledger.samples) u.push_back(s.U);
  return u;
}

}  // namespace qthermo
