// Prints the heat and work budget of a damped qubit at a few times, under
// both bookkeeping schemes.

#include <cstdio>

#include <qthermo/scenarios.hpp>

int main() {
  qthermo::ScenarioConfig cfg;
  cfg.scenario = qthermo::Scenario::Dissipative;
  cfg.nbar = 0.0;
  cfg.grid = {5.0, 5000};
  qthermo::validate(cfg);

  const auto res = qthermo::run_dissipative(cfg);
  std::printf("%8s %12s %12s %12s %12s %12s\n", "gamma*t", "U", "S", "Q_new", "W_new", "Q_alicki");
  for (std::size_t k = 0; k < res.primary.ledger.samples.size(); k += 500) {
    const auto& s = res.primary.ledger.samples[k];
    std::printf("%8.3f %12.8f %12.8f %12.8f %12.8f %12.8f\n", s.t, s.U, s.S, s.Q_new, s.W_new, s.Q_alicki);
  }
  std::printf("peak Q_new %.6f at gamma*t = %.3f\n", res.summary["Q_new_peak"].get<double>(),
              res.summary["Q_new_peak_t"].get<double>());
}
