#pragma once

// Scenario runner: configuration parsing, the two model runs, and CSV/JSON
// emission. Used by the `qthermo` command-line tool.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dynamics.hpp"
#include "errors.hpp"
#include "linalg.hpp"
#include "states.hpp"
#include "thermo.hpp"
#include "tolerances.hpp"

namespace qthermo {

enum class Scenario { TwoQubit, Dissipative };
enum class Definitions { New, Alicki, Both };
enum class OutputFormat { Csv, Json };

inline const char* to_string(Scenario s) {
  return s == Scenario::TwoQubit ? "two-qubit" : "dissipative";
}
inline const char* to_string(Definitions d) {
  switch (d) {
    case Definitions::New: return "new";
    case Definitions::Alicki: return "alicki";
    case Definitions::Both: return "both";
  }
  return "?";
}
inline const char* to_string(OutputFormat f) { return f == OutputFormat::Json ? "json" : "csv"; }

/// I/O failure; the message carries the offending path.
class OutputError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct ScenarioConfig {
  Scenario scenario = Scenario::TwoQubit;

  double omega0 = 1.0;
  // two-qubit
  double g = 1.0;
  double p = 0.5;
  Complex c = 0.5;
  Frame frame = Frame::Interaction;
  // dissipative
  double gamma = 1.0;
  double nbar = 0.0;
  double rho_ee = 0.5;
  Complex rho_eg = 0.5;

  TimeGrid grid{std::numbers::pi, 2000};
  Definitions definitions = Definitions::Both;
  std::string out;
  OutputFormat format = OutputFormat::Csv;
  bool crosscheck = false;
  std::size_t crosscheck_every = 10;
  Tolerances tol;

  DispersiveParams dispersive() const { return {omega0, g, p, c, frame}; }
  LindbladParams lindblad() const { return {gamma, nbar, omega0}; }
};

inline TimeGrid default_grid(Scenario s) {
  return s == Scenario::TwoQubit ? TimeGrid{std::numbers::pi, 2000} : TimeGrid{5.0, 5000};
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Ordered key -> value pairs, as read from a config file or the command line.
using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Every recognised configuration key. Command-line flags are `--<key>`.
inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "scenario", "p", "c", "g", "omega0", "gamma", "nbar", "rho-ee", "rho-eg",
      "t-max", "steps", "frame", "definitions", "out", "format", "crosscheck",
      "crosscheck-every", "tol-hermitian", "tol-degeneracy", "tol-trace", "tol-positivity",
      "tol-integrator-positivity", "tol-crosscheck", "tol-first-law", "tol-zero-branch",
      "jacobi-max-sweeps"};
  return keys;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

inline double parse_real(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ValidationError("invalid value for '" + key + "': '" + text + "' is not a finite number");
  }
  return v;
}

/// Accepts "0.3", "0.2+0.1i", "-0.1i", "0.2-0.1i".
inline Complex parse_complex(const std::string& key, const std::string& raw) {
  std::string text = trim(raw);
  if (text.empty() || text.back() != 'i') return parse_real(key, text);
  text.pop_back();
  std::size_t split = std::string::npos;
  for (std::size_t i = text.size(); i-- > 1;) {
    if ((text[i] == '+' || text[i] == '-') && text[i - 1] != 'e' && text[i - 1] != 'E') {
      split = i;
      break;
    }
  }
  if (split == std::string::npos) {
    const std::string im = (text.empty() || text == "+") ? "1" : (text == "-" ? "-1" : text);
    return {0.0, parse_real(key, im)};
  }
  std::string im = text.substr(split);
  if (im == "+" || im == "-") im += "1";
  if (im.front() == '+') im.erase(0, 1);
  return {parse_real(key, text.substr(0, split)), parse_real(key, im)};
}

inline std::size_t parse_count(const std::string& key, const std::string& text) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ValidationError("invalid value for '" + key + "': '" + text +
                          "' is not a non-negative integer");
  }
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ValidationError("invalid value for '" + key + "': '" + text + "' is not a boolean");
}

inline void apply(ScenarioConfig& cfg, const std::string& key, const std::string& value,
                  bool& grid_tmax_set, bool& grid_steps_set) {
  if (key == "scenario") {
    if (value == "two-qubit") cfg.scenario = Scenario::TwoQubit;
    else if (value == "dissipative") cfg.scenario = Scenario::Dissipative;
    else throw ValidationError("invalid value for 'scenario': '" + value + "' (expected two-qubit or dissipative)");
  } else if (key == "p") cfg.p = parse_real(key, value);
  else if (key == "c") cfg.c = parse_complex(key, value);
  else if (key == "g") cfg.g = parse_real(key, value);
  else if (key == "omega0") cfg.omega0 = parse_real(key, value);
  else if (key == "gamma") cfg.gamma = parse_real(key, value);
  else if (key == "nbar") cfg.nbar = parse_real(key, value);
  else if (key == "rho-ee") cfg.rho_ee = parse_real(key, value);
  else if (key == "rho-eg") cfg.rho_eg = parse_complex(key, value);
  else if (key == "t-max") {
    cfg.grid.t_max = parse_real(key, value);
    grid_tmax_set = true;
  } else if (key == "steps") {
    cfg.grid.steps = parse_count(key, value);
    grid_steps_set = true;
  } else if (key == "frame") {
    if (value == "interaction") cfg.frame = Frame::Interaction;
    else if (value == "lab") cfg.frame = Frame::Lab;
    else throw ValidationError("invalid value for 'frame': '" + value + "' (expected interaction or lab)");
  } else if (key == "definitions") {
    if (value == "new") cfg.definitions = Definitions::New;
    else if (value == "alicki") cfg.definitions = Definitions::Alicki;
    else if (value == "both") cfg.definitions = Definitions::Both;
    else throw ValidationError("invalid value for 'definitions': '" + value + "' (expected new, alicki or both)");
  } else if (key == "out") cfg.out = value;
  else if (key == "format") {
    if (value == "csv") cfg.format = OutputFormat::Csv;
    else if (value == "json") cfg.format = OutputFormat::Json;
    else throw ValidationError("invalid value for 'format': '" + value + "' (expected csv or json)");
  } else if (key == "crosscheck") cfg.crosscheck = parse_bool(key, value);
  else if (key == "crosscheck-every") cfg.crosscheck_every = parse_count(key, value);
  else if (key == "tol-hermitian") cfg.tol.hermitian = parse_real(key, value);
  else if (key == "tol-degeneracy") cfg.tol.degeneracy = parse_real(key, value);
  else if (key == "tol-trace") cfg.tol.trace = parse_real(key, value);
  else if (key == "tol-positivity") cfg.tol.positivity = parse_real(key, value);
  else if (key == "tol-integrator-positivity") cfg.tol.integrator_positivity = parse_real(key, value);
  else if (key == "tol-crosscheck") cfg.tol.crosscheck = parse_real(key, value);
  else if (key == "tol-first-law") cfg.tol.first_law = parse_real(key, value);
  else if (key == "tol-zero-branch") cfg.tol.zero_branch = parse_real(key, value);
  else if (key == "jacobi-max-sweeps") cfg.tol.jacobi_max_sweeps = static_cast<int>(parse_count(key, value));
  else throw ValidationError("unknown configuration key '" + key + "'");
}

}  // namespace detail

/// Reads `key = value` lines; `#` starts a comment. Unknown keys are rejected.
inline KeyValues parse_config_text(std::string_view text, const std::string& origin = "<config>") {
  KeyValues kv;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key = detail::trim(body.substr(0, eq));
    std::string value = detail::trim(body.substr(eq + 1));
    const auto& keys = config_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ValidationError(origin + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    kv.emplace_back(std::move(key), std::move(value));
  }
  return kv;
}

inline KeyValues read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

/// Checks the assembled configuration against every module invariant.
inline void validate(const ScenarioConfig& cfg) {
  validate(cfg.grid);
  if (cfg.scenario == Scenario::TwoQubit) {
    validate(cfg.dispersive());
  } else {
    validate(cfg.lindblad());
    const double bound = std::sqrt(std::max(0.0, cfg.rho_ee * (1.0 - cfg.rho_ee)));
    if (!(cfg.rho_ee >= 0.0 && cfg.rho_ee <= 1.0) || std::abs(cfg.rho_eg) > bound + 1e-12) {
      throw ValidationError("initial qubit state: need 0 <= rho-ee <= 1 and |rho-eg| <= sqrt(rho-ee (1 - rho-ee))");
    }
  }
  if (cfg.crosscheck_every == 0) throw ValidationError("crosscheck-every must be >= 1");
}

/// Builds a configuration from defaults, then `file` values, then `flags`
/// (later sources win). The scenario's default grid applies unless t-max or
/// steps is given.
inline ScenarioConfig assemble_config(const KeyValues& file, const KeyValues& flags) {
  ScenarioConfig cfg;
  bool tmax_set = false, steps_set = false;
  for (const auto* src : {&file, &flags})
    for (const auto& [k, v] : *src) detail::apply(cfg, k, v, tmax_set, steps_set);
  const auto grid = default_grid(cfg.scenario);
  if (!tmax_set) cfg.grid.t_max = grid.t_max;
  if (!steps_set) cfg.grid.steps = grid.steps;
  validate(cfg);
  return cfg;
}

/// Parses `run` arguments: `<two-qubit|dissipative> [--config FILE] [--key value ...]`.
inline ScenarioConfig parse_config(const std::vector<std::string>& args) {
  CLI::App app{"qthermo run"};
  std::string scenario;
  std::string config_path;
  app.add_option("scenario", scenario, "two-qubit or dissipative")->required();
  app.add_option("--config", config_path, "key = value configuration file");
  std::map<std::string, std::string> values;
  bool crosscheck = false;
  for (const auto& key : config_keys()) {
    if (key == "scenario") continue;
    if (key == "crosscheck") app.add_flag("--crosscheck", crosscheck, "cross-check against an independent evolution");
    else app.add_option("--" + key, values[key]);
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    throw ValidationError(std::string("usage error: ") + e.what());
  }

  const KeyValues file = config_path.empty() ? KeyValues{} : read_config_file(config_path);
  KeyValues flags{{"scenario", scenario}};
  for (const auto& key : config_keys()) {
    if (key == "scenario" || key == "crosscheck") continue;
    if (app.count("--" + key) > 0) flags.emplace_back(key, values[key]);
  }
  if (crosscheck) flags.emplace_back("crosscheck", "true");
  return assemble_config(file, flags);
}

/// Expands a sweep file. Any value may be a comma-separated list; the sweep is
/// the Cartesian product in file order. Output paths get a `_NNN` suffix.
inline std::vector<ScenarioConfig> parse_sweep(const KeyValues& file) {
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  for (const auto& [k, v] : file) {
    std::vector<std::string> items;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) items.push_back(detail::trim(item));
    if (items.empty()) items.push_back("");
    axes.emplace_back(k, std::move(items));
  }
  std::vector<KeyValues> combos{KeyValues{}};
  for (const auto& [k, items] : axes) {
    std::vector<KeyValues> next;
    for (const auto& base : combos)
      for (const auto& item : items) {
        auto kv = base;
        kv.emplace_back(k, item);
        next.push_back(std::move(kv));
      }
    combos = std::move(next);
  }
  std::vector<ScenarioConfig> configs;
  for (std::size_t i = 0; i < combos.size(); ++i) {
    auto cfg = assemble_config(combos[i], {});
    if (combos.size() > 1) {
      std::filesystem::path out = cfg.out.empty() ? std::filesystem::path(std::string("qthermo-") + to_string(cfg.scenario) + (cfg.format == OutputFormat::Json ? ".json" : ".csv")) : std::filesystem::path(cfg.out);
      char suffix[32];
      std::snprintf(suffix, sizeof suffix, "_%03zu", i);
      cfg.out = (out.parent_path() / (out.stem().string() + suffix + out.extension().string())).string();
    }
    configs.push_back(std::move(cfg));
  }
  return configs;
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

struct SubsystemRun {
  ThermoLedger ledger;
  std::vector<DensityMatrix> states;
};

struct RunResult {
  ScenarioConfig config;
  std::string time_unit;           // "g*t", "gamma*t" or "t"
  SubsystemRun primary;            // qubit A, or the dissipating qubit
  std::optional<SubsystemRun> partner;  // qubit B in the two-qubit run
  std::vector<double> entropy_from_rate;  // S(0) + cumulative entropy increments
  std::vector<double> entropy_closed_form;
  FirstLawAudit audit;
  nlohmann::ordered_json summary;
};

namespace detail {

/// -sum p ln p for eigenvalues (1 +- r)/2.
inline double binary_entropy_from_radius(double r) {
  const double a = 0.5 * (1.0 + r), b = 0.5 * (1.0 - r);
  return -(plogp(a) + plogp(b));
}

inline std::vector<double> entropy_along(const ThermoLedger& ledger, const std::vector<DensityMatrix>& states,
                                         const Tolerances& tol) {
  std::vector<double> out;
  BranchTracker tracker(tol);
  std::optional<SpectralDecomposition> prev;
  double s = 0.0;
  for (const auto& rho : states) {
    const auto sd = tracker.push(rho);
    s = prev ? s + entropy_increment(*prev, sd, tol) : ledger.samples.front().S;
    out.push_back(s);
    prev = sd;
  }
  return out;
}

struct LedgerStats {
  double max_abs_q_new = 0, max_abs_w_new = 0, max_abs_q_alicki = 0, max_abs_w_alicki = 0;
  double max_abs_du = 0, max_abs_q_plus_w_new = 0;
  double s_min = 0, s_max = 0;
};

inline LedgerStats stats(const ThermoLedger& l) {
  LedgerStats st;
  st.s_min = st.s_max = l.samples.front().S;
  for (const auto& s : l.samples) {
    st.max_abs_q_new = std::max(st.max_abs_q_new, std::abs(s.Q_new));
    st.max_abs_w_new = std::max(st.max_abs_w_new, std::abs(s.W_new));
    st.max_abs_q_alicki = std::max(st.max_abs_q_alicki, std::abs(s.Q_alicki));
    st.max_abs_w_alicki = std::max(st.max_abs_w_alicki, std::abs(s.W_alicki));
    st.max_abs_du = std::max(st.max_abs_du, std::abs(s.U - l.samples.front().U));
    st.max_abs_q_plus_w_new = std::max(st.max_abs_q_plus_w_new, std::abs(s.Q_new + s.W_new));
    st.s_min = std::min(st.s_min, s.S);
    st.s_max = std::max(st.s_max, s.S);
  }
  return st;
}

inline nlohmann::ordered_json audit_json(const FirstLawAudit& a, Definitions defs) {
  nlohmann::ordered_json j;
  auto one = [](const DefinitionAudit& d) {
    return nlohmann::ordered_json{{"tolerance", d.tolerance},
                                  {"max_residual", d.max_residual},
                                  {"t_at_max", d.t_at_max},
                                  {"flagged_samples", d.flagged.size()},
                                  {"passed", d.passed()}};
  };
  if (defs != Definitions::Alicki) j["new"] = one(a.new_definition);
  if (defs != Definitions::New) j["alicki"] = one(a.alicki);
  return j;
}

inline nlohmann::ordered_json config_json(const ScenarioConfig& c) {
  nlohmann::ordered_json j;
  j["scenario"] = to_string(c.scenario);
  j["omega0"] = c.omega0;
  if (c.scenario == Scenario::TwoQubit) {
    j["g"] = c.g;
    j["p"] = c.p;
    j["c"] = {c.c.real(), c.c.imag()};
    j["frame"] = to_string(c.frame);
  } else {
    j["gamma"] = c.gamma;
    j["nbar"] = c.nbar;
    j["rho_ee"] = c.rho_ee;
    j["rho_eg"] = {c.rho_eg.real(), c.rho_eg.imag()};
  }
  j["t_max"] = c.grid.t_max;
  j["steps"] = c.grid.steps;
  j["definitions"] = to_string(c.definitions);
  j["format"] = to_string(c.format);
  j["crosscheck"] = c.crosscheck;
  j["tolerances"] = {{"hermitian", c.tol.hermitian},
                     {"degeneracy", c.tol.degeneracy},
                     {"trace", c.tol.trace},
                     {"positivity", c.tol.positivity},
                     {"integrator_positivity", c.tol.integrator_positivity},
                     {"crosscheck", c.tol.crosscheck},
                     {"first_law", c.tol.first_law},
                     {"zero_branch", c.tol.zero_branch},
                     {"jacobi_max_sweeps", c.tol.jacobi_max_sweeps}};
  return j;
}

}  // namespace detail

/// Dispersively coupled qubits A and B. Qubit A follows the closed-form
/// reduced state; the joint state is evolved alongside to obtain B and to
/// cross-check A. Both qubits are audited with their local Hamiltonian.
inline RunResult run_two_qubit(const ScenarioConfig& cfg) {
  if (cfg.scenario != Scenario::TwoQubit) throw ValidationError("run_two_qubit: wrong scenario");
  validate(cfg);
  const auto prm = cfg.dispersive();
  const double scale = prm.g != 0.0 ? std::abs(prm.g) : 1.0;

  RunResult res;
  res.config = cfg;
  res.time_unit = prm.g != 0.0 ? "g*t" : "t";

  const auto joint0 = dispersive_initial_joint(prm);
  const auto h = qubit_hamiltonian(prm.omega0);
  LedgerBuilder ledger_a({"two-qubit", "A", to_string(prm.frame), {}}, cfg.tol);
  LedgerBuilder ledger_b({"two-qubit", "B", to_string(prm.frame), {}}, cfg.tol);
  SubsystemRun a, b;
  double max_crosscheck = 0.0, max_b_dev = 0.0;
  const auto half = ComplexMatrix::identity(2) * 0.5;

  for (std::size_t k = 0; k < cfg.grid.size(); ++k) {
    const double t = cfg.grid.at(k);
    auto rho_a = dispersive_reduced_A(prm, t);
    const auto joint = dispersive_joint_evolve(prm, joint0, t);
    auto rho_b = validate_density(partial_trace(joint.matrix(), Subsystem::B), cfg.tol);
    if (k % cfg.crosscheck_every == 0 || k + 1 == cfg.grid.size()) {
      const double d = max_abs_diff(partial_trace(joint.matrix(), Subsystem::A), rho_a.matrix());
      max_crosscheck = std::max(max_crosscheck, d);
      if (d > cfg.tol.crosscheck) {
        throw NumericalError("two-qubit cross-check failed at t = " + std::to_string(t) +
                             ": closed-form and joint reduced states differ by " + std::to_string(d));
      }
    }
    max_b_dev = std::max(max_b_dev, max_abs_diff(rho_b.matrix(), half));
    ledger_a.push(scale * t, rho_a, h);
    ledger_b.push(scale * t, rho_b, h);
    a.states.push_back(std::move(rho_a));
    b.states.push_back(std::move(rho_b));
  }
  a.ledger = ledger_a.take();
  b.ledger = ledger_b.take();

  res.entropy_from_rate = detail::entropy_along(a.ledger, a.states, cfg.tol);
  for (std::size_t k = 0; k < cfg.grid.size(); ++k) {
    const double x = 2.0 * std::abs(prm.c) * std::cos(2.0 * prm.g * cfg.grid.at(k));
    const double z = 2.0 * prm.p - 1.0;
    res.entropy_closed_form.push_back(detail::binary_entropy_from_radius(std::min(1.0, std::hypot(x, z))));
  }
  res.audit = audit_first_law(a.ledger, energy_series(a.ledger), cfg.tol);
  const auto audit_b = audit_first_law(b.ledger, energy_series(b.ledger), cfg.tol);

  const auto sa = detail::stats(a.ledger);
  const auto sb = detail::stats(b.ledger);
  double entropy_closed_dev = 0.0, entropy_rate_dev = 0.0;
  for (std::size_t k = 0; k < a.ledger.samples.size(); ++k) {
    entropy_closed_dev = std::max(entropy_closed_dev, std::abs(a.ledger.samples[k].S - res.entropy_closed_form[k]));
    entropy_rate_dev = std::max(entropy_rate_dev, std::abs(a.ledger.samples[k].S - res.entropy_from_rate[k]));
  }

  const bool no_heat_no_work = sa.max_abs_q_new < 1e-9 && sa.max_abs_w_new < 1e-9;
  const bool energy_constant = sa.max_abs_du < 1e-12;
  const bool entropy_varies = sa.s_max - sa.s_min > 1e-6;
  const double b_max = std::max({sb.max_abs_q_new, sb.max_abs_w_new, sb.max_abs_q_alicki,
                                 sb.max_abs_w_alicki, sb.max_abs_du});

  auto& s = res.summary;
  s["config"] = detail::config_json(cfg);
  s["time_unit"] = res.time_unit;
  s["energy_unit"] = "hbar*omega0 (hbar = 1)";
  s["A"] = {{"max_abs_Q_new", sa.max_abs_q_new},
            {"max_abs_W_new", sa.max_abs_w_new},
            {"max_abs_Q_alicki", sa.max_abs_q_alicki},
            {"max_abs_W_alicki", sa.max_abs_w_alicki},
            {"max_abs_delta_U", sa.max_abs_du},
            {"max_abs_Q_plus_W_new", sa.max_abs_q_plus_w_new},
            {"S_min", sa.s_min},
            {"S_max", sa.s_max},
            {"max_entropy_closed_form_deviation", entropy_closed_dev},
            {"max_entropy_rate_path_deviation", entropy_rate_dev},
            {"first_law", detail::audit_json(res.audit, cfg.definitions)}};
  s["B"] = {{"max_abs_ledger_entry", b_max},
            {"max_abs_rho_minus_half_identity", max_b_dev},
            {"first_law", detail::audit_json(audit_b, cfg.definitions)}};
  s["crosscheck_max_deviation"] = max_crosscheck;
  s["flags"] = {{"no_heat_no_work", no_heat_no_work},
                {"internal_energy_constant", energy_constant},
                {"entropy_varies", entropy_varies},
                {"entropy_changes_without_heat", no_heat_no_work && energy_constant && entropy_varies},
                {"heat_equals_minus_work", sa.max_abs_q_new > 1e-3 && sa.max_abs_q_plus_w_new < 1e-6},
                {"b_catalyst", b_max < 1e-10 && max_b_dev < 1e-12}};

  res.primary = std::move(a);
  res.partner = std::move(b);
  return res;
}

/// One qubit damped by a thermal bath, using the exact solution on the grid
/// (optionally cross-checked against RK4).
inline RunResult run_dissipative(const ScenarioConfig& cfg) {
  if (cfg.scenario != Scenario::Dissipative) throw ValidationError("run_dissipative: wrong scenario");
  validate(cfg);
  const auto prm = cfg.lindblad();
  const auto rho0 = validate_density({{cfg.rho_ee, cfg.rho_eg}, {std::conj(cfg.rho_eg), 1.0 - cfg.rho_ee}}, cfg.tol);

  RunResult res;
  res.config = cfg;
  res.time_unit = "gamma*t";

  std::vector<DensityMatrix> numeric;
  if (cfg.crosscheck) numeric = rk4_evolve(prm, rho0, cfg.grid, cfg.tol);

  const auto h = qubit_hamiltonian(prm.omega0);
  LedgerBuilder builder({"dissipative", "qubit", "interaction", {}}, cfg.tol);
  SubsystemRun run;
  double max_crosscheck = 0.0;
  for (std::size_t k = 0; k < cfg.grid.size(); ++k) {
    const double t = cfg.grid.at(k);
    auto rho = lindblad_analytic(prm, rho0, t);
    if (cfg.crosscheck) {
      const double d = max_abs_diff(numeric[k].matrix(), rho.matrix());
      max_crosscheck = std::max(max_crosscheck, d);
      if (d > cfg.tol.crosscheck) {
        throw NumericalError("dissipative cross-check failed at t = " + std::to_string(t) +
                             ": RK4 and exact states differ by " + std::to_string(d) +
                             "; try more steps");
      }
    }
    builder.push(prm.gamma * t, rho, h);
    run.states.push_back(std::move(rho));
  }
  run.ledger = builder.take();
  res.entropy_from_rate = detail::entropy_along(run.ledger, run.states, cfg.tol);
  res.audit = audit_first_law(run.ledger, energy_series(run.ledger), cfg.tol);

  const auto& samples = run.ledger.samples;
  std::size_t initial_positive = 0;
  for (std::size_t k = 1; k < samples.size() && samples[k].Q_new > 0.0; ++k) ++initial_positive;
  std::size_t peak = 0;
  for (std::size_t k = 0; k < samples.size(); ++k)
    if (samples[k].Q_new > samples[peak].Q_new) peak = k;
  bool u_strictly_decreasing = true;
  for (std::size_t k = 1; k < samples.size(); ++k)
    u_strictly_decreasing = u_strictly_decreasing && samples[k].U < samples[k - 1].U;
  const bool decreases_after_peak = peak + 1 < samples.size() && samples[peak + 1].Q_new < samples[peak].Q_new;
  const auto st = detail::stats(run.ledger);

  auto& s = res.summary;
  s["config"] = detail::config_json(cfg);
  s["time_unit"] = res.time_unit;
  s["energy_unit"] = "hbar*omega0 (hbar = 1)";
  s["Q_new_initial_positive_samples"] = initial_positive;
  s["Q_new_peak"] = samples[peak].Q_new;
  s["Q_new_peak_t"] = samples[peak].t;
  s["Q_new_final"] = samples.back().Q_new;
  s["W_new_max_abs"] = st.max_abs_w_new;
  s["delta_U_final"] = samples.back().U - samples.front().U;
  s["first_law"] = detail::audit_json(res.audit, cfg.definitions);
  if (cfg.crosscheck) s["crosscheck_max_deviation"] = max_crosscheck;
  s["flags"] = {{"vacuum_heat_absorption", initial_positive > 0 && decreases_after_peak},
                {"U_strictly_decreasing", u_strictly_decreasing},
                {"first_law_new_ok", res.audit.new_definition.passed()},
                {"first_law_alicki_ok", res.audit.alicki.passed()}};

  res.primary = std::move(run);
  return res;
}

inline RunResult run_scenario(const ScenarioConfig& cfg) {
  return cfg.scenario == Scenario::TwoQubit ? run_two_qubit(cfg) : run_dissipative(cfg);
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols = {
      "t", "p1", "p2", "U", "S", "dQ_new", "dW_new", "Q_new", "W_new",
      "Q_alicki", "W_alicki", "residual_new", "residual_alicki"};
  return cols;
}

/// Fixed-point, 12 digits after the decimal point; negative zero prints as 0.
inline std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12f", v);
  std::string s(buf);
  if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);
  return s;
}

inline std::vector<double> row_values(const ThermoSample& s) {
  const double p1 = s.probabilities.size() > 0 ? s.probabilities[0] : 0.0;
  const double p2 = s.probabilities.size() > 1 ? s.probabilities[1] : 0.0;
  return {s.t, p1, p2, s.U, s.S, s.dQ_new, s.dW_new, s.Q_new, s.W_new,
          s.Q_alicki, s.W_alicki, s.residual_new, s.residual_alicki};
}

inline std::string series_comment(const ThermoLedger& ledger, const std::string& time_unit) {
  return "# scenario=" + ledger.scenario + " subsystem=" + ledger.subsystem + " frame=" + ledger.frame +
         "; t in units of " + time_unit + "; U Q W in units of hbar*omega0 (hbar=1); S in nats";
}

inline std::string to_csv(const ThermoLedger& ledger, const std::string& time_unit) {
  std::string out = series_comment(ledger, time_unit) + "\n";
  const auto& cols = csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
  out += "\n";
  for (const auto& s : ledger.samples) {
    const auto v = row_values(s);
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out += ',';
      out += format_value(v[i]);
    }
    out += '\n';
  }
  return out;
}

inline std::string to_json(const ThermoLedger& ledger, const std::string& time_unit) {
  nlohmann::ordered_json j;
  j["comment"] = series_comment(ledger, time_unit).substr(2);
  j["columns"] = csv_columns();
  auto rows = nlohmann::ordered_json::array();
  for (const auto& s : ledger.samples) {
    const auto v = row_values(s);
    nlohmann::ordered_json row;
    for (std::size_t i = 0; i < v.size(); ++i) row[csv_columns()[i]] = v[i];
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  return j.dump(1) + "\n";
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw OutputError("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw OutputError("failed writing '" + path.string() + "'");
}

}  // namespace detail

inline std::filesystem::path output_path(const ScenarioConfig& cfg) {
  if (!cfg.out.empty()) return cfg.out;
  return std::string("qthermo-") + to_string(cfg.scenario) + (cfg.format == OutputFormat::Json ? ".json" : ".csv");
}

/// Writes the primary series to the configured path, the partner series (if
/// any) next to it with a `_B` suffix, and `<stem>.summary.json`. Returns
/// the written paths.
inline std::vector<std::filesystem::path> emit_series(const RunResult& res) {
  const auto main_path = output_path(res.config);
  const bool json = res.config.format == OutputFormat::Json;
  auto render = [&](const ThermoLedger& l) { return json ? to_json(l, res.time_unit) : to_csv(l, res.time_unit); };
  auto sibling = [&](const std::string& suffix) {
    return main_path.parent_path() / (main_path.stem().string() + suffix);
  };

  std::vector<std::filesystem::path> written;
  detail::write_file(main_path, render(res.primary.ledger));
  written.push_back(main_path);
  if (res.partner) {
    const auto p = sibling("_B" + main_path.extension().string());
    detail::write_file(p, render(res.partner->ledger));
    written.push_back(p);
  }
  auto summary = res.summary;
  nlohmann::ordered_json files = nlohmann::ordered_json::array();
  for (const auto& w : written) files.push_back(w.string());
  summary["outputs"] = files;
  const auto sp = sibling(".summary.json");
  detail::write_file(sp, summary.dump(2) + "\n");
  written.push_back(sp);
  return written;
}

/// Runs every configuration concurrently; outputs are per-run files.
inline std::vector<RunResult> run_sweep(const std::vector<ScenarioConfig>& configs) {
  std::vector<std::future<RunResult>> jobs;
  for (const auto& cfg : configs) jobs.push_back(std::async(std::launch::async, [cfg] { return run_scenario(cfg); }));
  std::vector<RunResult> results;
  std::exception_ptr first_error;
  for (auto& j : jobs) {
    try {
      results.push_back(j.get());
    } catch (...) {
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);
  return results;
}

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitNumerical = 2;

inline std::string usage() {
  return "usage: qthermo run <two-qubit|dissipative> [--config FILE] [flags]\n"
         "       qthermo sweep <config-file>\n"
         "flags: --p --c --g --omega0 --gamma --nbar --rho-ee --rho-eg --t-max --steps\n"
         "       --frame <interaction|lab> --definitions <new|alicki|both> --out PATH\n"
         "       --format <csv|json> --crosscheck --crosscheck-every N --tol-<name> VALUE\n";
}

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    if (args.empty() || args[0] == "--help" || args[0] == "-h") {
      (args.empty() ? err : out) << usage();
      return args.empty() ? kExitValidation : kExitOk;
    }
    std::vector<RunResult> results;
    if (args[0] == "run") {
      results.push_back(run_scenario(parse_config({args.begin() + 1, args.end()})));
    } else if (args[0] == "sweep") {
      if (args.size() != 2) throw ValidationError("usage error: sweep takes exactly one config file");
      results = run_sweep(parse_sweep(read_config_file(args[1])));
    } else {
      throw ValidationError("usage error: unknown command '" + args[0] + "'");
    }
    for (const auto& r : results)
      for (const auto& path : emit_series(r)) out << path.string() << "\n";
    return kExitOk;
  } catch (const ValidationError& e) {
    err << "qthermo: " << e.what() << "\n";
    if (std::string_view(e.what()).starts_with("usage error")) err << usage();
    return kExitValidation;
  } catch (const NumericalError& e) {
    err << "qthermo: numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const OutputError& e) {
    err << "qthermo: " << e.what() << "\n";
    return kExitValidation;
  }
}

}  // namespace qthermo
