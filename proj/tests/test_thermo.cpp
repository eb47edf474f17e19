#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include <qthermo/dynamics.hpp>
#include <qthermo/thermo.hpp>

#include "test_support.hpp"

using namespace qthermo;

namespace {

const double kPi = std::numbers::pi;

ThermoLedger build(std::function<DensityMatrix(double)> state, const ComplexMatrix& h, double t_max,
                   std::size_t steps) {
  const TimeGrid grid{t_max, steps};
  LedgerBuilder builder;
  for (std::size_t k = 0; k < grid.size(); ++k) builder.push(grid.at(k), state(grid.at(k)), h);
  return builder.take();
}

DensityMatrix reduced(double p, double c, double gt) {
  return dispersive_reduced_A(DispersiveParams{.p = p, .c = c}, gt);
}

DensityMatrix decaying_plus(double gt) {
  static const auto rho0 = validate_density({{0.5, 0.5}, {0.5, 0.5}});
  return lindblad_analytic(LindbladParams{}, rho0, gt);
}

}  // namespace

TEST(InternalEnergy, KnownValues) {
  const auto h = qubit_hamiltonian(1.0);
  EXPECT_EQ(internal_energy(validate_density(ComplexMatrix::identity(2) * 0.5), h), 0.0);
  for (double gt = 0; gt < 3; gt += 0.3) EXPECT_NEAR(internal_energy(reduced(0.5, 0.5, gt), h), 0.0, 1e-16);
  double last = 1.0;
  for (double gt = 0; gt <= 5; gt += 0.01) {
    const double u = internal_energy(decaying_plus(gt), h);
    EXPECT_NEAR(u, 0.5 * (2 * 0.5 * std::exp(-gt) - 1), 1e-15);
    EXPECT_LT(u, last);
    last = u;
  }
  EXPECT_THROW(internal_energy(decaying_plus(0.0), ComplexMatrix::identity(4)), ValidationError);
}

TEST(HeatIncrementNew, ZeroCases) {
  const auto h = qubit_hamiltonian(1.0);
  BranchTracker tracker;
  auto prev = tracker.push(reduced(0.5, 0.5, 0.0));
  for (int k = 1; k <= 100; ++k) {
    const auto next = tracker.push(reduced(0.5, 0.5, 0.03 * k));
    EXPECT_NEAR(heat_increment_new(prev, next, h), 0.0, 1e-16);
    EXPECT_NEAR(work_increment_new(prev, next, h, h), 0.0, 1e-16);
    EXPECT_EQ(heat_increment_new(next, next, h), 0.0);
    EXPECT_EQ(work_increment_new(next, next, h, h), 0.0);
    prev = next;
  }
}

TEST(HeatIncrementNew, VacuumAbsorptionAtStart) {
  // Oracle: dQ = (omega0/2)(z/r) dr integrated over the first step.
  const auto h = qubit_hamiltonian(1.0);
  const double dt = 1e-3;
  const auto a = spectral_decompose(decaying_plus(0.0));
  const auto b = match_branches(a, spectral_decompose(decaying_plus(dt)));
  const double dq = heat_increment_new(a, b, h);
  EXPECT_GT(dq, 0.0);
  // dQ/dt ~ t/4 near t = 0, so the first step carries ~dt^2/8.
  EXPECT_NEAR(dq, dt * dt / 8, 1e-3 * dt * dt);
}

TEST(HeatWorkNew, UnmatchedBranchesRejected) {
  const auto h = qubit_hamiltonian(1.0);
  const auto a = spectral_decompose(reduced(0.3, 0.35, 0.1));
  auto b = a;
  b.branches[0].id = 5;
  EXPECT_THROW(heat_increment_new(a, b, h), ValidationError);
  EXPECT_THROW(work_increment_new(a, b, h, h), ValidationError);
  EXPECT_THROW(entropy_increment(a, b), ValidationError);
}

TEST(HeatWorkNew, RotatingEigenbasisGivesOppositeHeatAndWork) {
  // p = 0.3, c = 0.35: z = -0.4 is constant and r(t) = sqrt(x(t)^2 + z^2), so
  // Q(t) = (omega0/2) z ln(r(t)/r(0)) in closed form and W = -Q.
  const auto ledger = build([](double gt) { return reduced(0.3, 0.35, gt); }, qubit_hamiltonian(1.0), kPi / 2, 2000);
  const double z = -0.4;
  auto radius = [&](double gt) { return std::hypot(0.7 * std::cos(2 * gt), z); };
  double peak = 0.0;
  for (const auto& s : ledger.samples) {
    const double oracle = 0.5 * z * std::log(radius(s.t) / radius(0.0));
    EXPECT_NEAR(s.Q_new, oracle, 1e-6) << "gt=" << s.t;
    EXPECT_NEAR(s.Q_new + s.W_new, 0.0, 1e-12);
    EXPECT_NEAR(s.U, ledger.samples.front().U, 1e-15);
    peak = std::max(peak, std::abs(s.Q_new));
  }
  EXPECT_GT(peak, 1e-3);
  EXPECT_NEAR(peak, 0.5 * 0.4 * std::log(std::sqrt(0.65) / 0.4), 1e-6);
}

TEST(AlickiRates, ZeroCasesAndEnergyIdentity) {
  const auto h = qubit_hamiltonian(1.0);
  EXPECT_EQ(heat_rate_alicki(ComplexMatrix(2), h), 0.0);
  const auto rho = decaying_plus(0.4);
  EXPECT_EQ(work_rate_alicki(rho, ComplexMatrix(2)), 0.0);
  // H(t) = f(t) sigma_z on the maximally mixed state.
  EXPECT_EQ(work_rate_alicki(validate_density(ComplexMatrix::identity(2) * 0.5), ops::sigma_z() * 3.7), 0.0);

  // Constant H: heat rate equals dU/dt = (omega0/2) d/dt(e^{-t} - 1).
  for (double t = 0; t < 5; t += 0.25) {
    const double rate = heat_rate_alicki(lindblad_rhs(LindbladParams{}, decaying_plus(t)), h);
    EXPECT_NEAR(rate, -0.5 * std::exp(-t), 1e-14);
  }
  // Reduced two-qubit state: diagonal is constant, so the rate vanishes.
  for (double gt = 0; gt < 3; gt += 0.1) {
    const double eps = 1e-6;
    const auto rho_dot = (reduced(0.3, 0.35, gt + eps).matrix() - reduced(0.3, 0.35, gt - eps).matrix()) *
                         (0.5 / eps);
    EXPECT_NEAR(heat_rate_alicki(rho_dot, h), 0.0, 1e-12);
  }
}

TEST(AlickiIncrements, TimeDependentHamiltonianTelescopes) {
  std::mt19937_64 rng(3);
  const auto a = validate_density(testkit::random_density(rng, 2));
  const auto b = validate_density(testkit::random_density(rng, 2));
  const auto ha = testkit::random_hermitian(rng, 2), hb = testkit::random_hermitian(rng, 2);
  const double du = internal_energy(b, hb) - internal_energy(a, ha);
  EXPECT_NEAR(heat_increment_alicki(a, b, ha, hb) + work_increment_alicki(a, b, ha, hb), du, 1e-14);
  const auto sa = spectral_decompose(a);
  const auto sb = match_branches(sa, spectral_decompose(b));
  EXPECT_NEAR(heat_increment_new(sa, sb, ha, hb) + work_increment_new(sa, sb, ha, hb), du, 1e-13);
}

TEST(EntropyRate, ReducedStateClosedForm) {
  // dS/d(gt) = -sin(2gt) ln tan^2(gt)
  for (double gt : {kPi / 6, 0.3, 1.1, kPi / 4}) {
    const double h = 1e-4;
    const auto a = spectral_decompose(reduced(0.5, 0.5, gt - h / 2));
    const auto b = match_branches(a, spectral_decompose(reduced(0.5, 0.5, gt + h / 2)));
    const double expected = -std::sin(2 * gt) * std::log(std::pow(std::tan(gt), 2));
    EXPECT_NEAR(entropy_rate(a, b, h), expected, 1e-7) << "gt=" << gt;
  }
  const auto a = spectral_decompose(reduced(0.5, 0.5, kPi / 6));
  EXPECT_NEAR(-std::sin(kPi / 3) * std::log(std::pow(std::tan(kPi / 6), 2)), std::sqrt(3.0) / 2 * std::log(3.0),
              1e-15);
  EXPECT_EQ(entropy_rate(a, a, 0.1), 0.0);
}

TEST(EntropyRate, ZeroBranchesAreSkipped) {
  const auto pure = spectral_decompose(validate_density({{1.0, 0.0}, {0.0, 0.0}}));
  EXPECT_EQ(entropy_increment(pure, pure), 0.0);
  const auto next = match_branches(pure, spectral_decompose(validate_density({{0.999, 0.0}, {0.0, 0.001}})));
  EXPECT_TRUE(std::isfinite(entropy_increment(pure, next)));
  EXPECT_GT(entropy_increment(pure, next), 0.0);
}

namespace {

double cumulative_entropy_error(std::function<DensityMatrix(double)> state, double t_max, std::size_t steps) {
  const TimeGrid grid{t_max, steps};
  BranchTracker tracker;
  std::optional<SpectralDecomposition> prev;
  double cumulative = 0.0, worst = 0.0, s0 = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto rho = state(grid.at(k));
    const auto sd = tracker.push(rho);
    if (prev) cumulative += entropy_increment(*prev, sd);
    else s0 = von_neumann_entropy(rho);
    worst = std::max(worst, std::abs(cumulative - (von_neumann_entropy(rho) - s0)));
    prev = sd;
  }
  return worst;
}

}  // namespace

TEST(EntropyRate, CumulativeMatchesEntropyDifferenceAtSecondOrder) {
  const auto rho0 = validate_density({{0.6, 0.3}, {0.3, 0.4}});
  auto mixed = [&](double t) { return lindblad_analytic(LindbladParams{.nbar = 0.5}, rho0, t); };
  const double coarse = cumulative_entropy_error(mixed, 3.0, 400);
  const double fine = cumulative_entropy_error(mixed, 3.0, 800);
  EXPECT_LT(coarse, 1e-5);
  EXPECT_GT(coarse / fine, 3.8);

  auto two_qubit = [](double gt) { return reduced(0.5, 0.5, gt); };
  const double tq_coarse = cumulative_entropy_error(two_qubit, kPi / 2, 1000);
  const double tq_fine = cumulative_entropy_error(two_qubit, kPi / 2, 2000);
  EXPECT_LT(tq_coarse, 1e-4);
  EXPECT_GT(tq_coarse / tq_fine, 3.5);
}

TEST(EntropyRate, PureStartDegradesToFirstOrder) {
  // ln p is singular where a branch starts at p = 0 with dp/dt != 0.
  const double coarse = cumulative_entropy_error(decaying_plus, 1.2, 400);
  const double fine = cumulative_entropy_error(decaying_plus, 1.2, 800);
  EXPECT_LT(coarse, 1e-3);
  EXPECT_GT(coarse / fine, 1.8);
}

TEST(LedgerBuilder, CumulativeFieldsArePrefixSums) {
  const auto ledger = build(decaying_plus, qubit_hamiltonian(1.0), 5.0, 500);
  const auto& s0 = ledger.samples.front();
  EXPECT_EQ(s0.Q_new, 0.0);
  EXPECT_EQ(s0.W_new, 0.0);
  EXPECT_EQ(s0.Q_alicki, 0.0);
  EXPECT_EQ(s0.W_alicki, 0.0);
  double q = 0, w = 0, qa = 0, wa = 0;
  for (const auto& s : ledger.samples) {
    q += s.dQ_new;
    w += s.dW_new;
    qa += s.dQ_alicki;
    wa += s.dW_alicki;
    EXPECT_EQ(s.Q_new, q);
    EXPECT_EQ(s.W_new, w);
    EXPECT_EQ(s.Q_alicki, qa);
    EXPECT_EQ(s.W_alicki, wa);
    EXPECT_EQ(s.W_alicki, 0.0);
  }
}

TEST(LedgerBuilder, RejectsNonIncreasingTime) {
  LedgerBuilder builder;
  builder.push(0.0, decaying_plus(0.0), qubit_hamiltonian(1.0));
  EXPECT_THROW(builder.push(0.0, decaying_plus(0.1), qubit_hamiltonian(1.0)), ValidationError);
}

TEST(LedgerBuilder, DissipativeHeatMatchesBlochOracle) {
  // Q_new(t) = int (omega0/2)(z/r) dr, integrated with Simpson's rule on a
  // dense grid from the exact Bloch components.
  const auto ledger = build(decaying_plus, qubit_hamiltonian(1.0), 5.0, 5000);
  auto integrand = [](double t) {
    const double u = std::exp(-t);
    const double z = u - 1, r = std::sqrt(1 - u + u * u);
    const double drdt = (1 - 2 * u) * u / (2 * r);
    return 0.5 * z / r * drdt;
  };
  double oracle = 0.0;
  const int sub = 20;
  for (std::size_t k = 0; k < ledger.samples.size(); ++k) {
    if (k > 0) {
      const double a = ledger.samples[k - 1].t, b = ledger.samples[k].t, h = (b - a) / sub;
      double acc = integrand(a) + integrand(b);
      for (int j = 1; j < sub; ++j) acc += integrand(a + j * h) * (j % 2 ? 4 : 2);
      oracle += acc * h / 3;
    }
    EXPECT_NEAR(ledger.samples[k].Q_new, oracle, 1e-5);
  }
}

TEST(AuditFirstLaw, TwoQubitAllZero) {
  const auto ledger = build([](double gt) { return reduced(0.5, 0.5, gt); }, qubit_hamiltonian(1.0), kPi, 2000);
  const auto audit = audit_first_law(ledger, energy_series(ledger));
  EXPECT_TRUE(audit.new_definition.passed());
  EXPECT_TRUE(audit.alicki.passed());
  EXPECT_LT(audit.new_definition.max_residual, 1e-10);
  EXPECT_LT(audit.alicki.max_residual, 1e-10);
}

TEST(AuditFirstLaw, DissipativeResidualsWithinTolerance) {
  const auto ledger = build(decaying_plus, qubit_hamiltonian(1.0), 5.0, 5000);
  const auto audit = audit_first_law(ledger, energy_series(ledger));
  EXPECT_LT(audit.new_definition.max_residual, 1e-6);
  EXPECT_LT(audit.alicki.max_residual, 1e-9);
}

TEST(AuditFirstLaw, FlagsExternalEnergyMismatch) {
  const auto ledger = build(decaying_plus, qubit_hamiltonian(1.0), 1.0, 100);
  auto energies = energy_series(ledger);
  energies[40] += 1e-3;
  const auto audit = audit_first_law(ledger, energies);
  ASSERT_EQ(audit.new_definition.flagged.size(), 1u);
  EXPECT_EQ(audit.new_definition.flagged[0], 40u);
  EXPECT_NEAR(audit.new_definition.max_residual, 1e-3, 1e-12);
  EXPECT_DOUBLE_EQ(audit.new_definition.t_at_max, ledger.samples[40].t);
  EXPECT_FALSE(audit.alicki.passed());
  energies.pop_back();
  EXPECT_THROW(audit_first_law(ledger, energies), ValidationError);
}
