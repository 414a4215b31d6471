#pragma once

// Exogenous problem data: per-home load preferences, renewable caps,
// weather, tariffs and EV parameters for N users over T slots.
//
// Slot indices are 0-based in memory. Config files and the series CSV use
// 1-based slot and user numbers, matching how schedules are usually written
// down ("EV parked over slots 9..18").

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridledger/mode.hpp"

namespace gridledger::scenario {

struct HvacParams {
  double alpha = 0.75;  // degC gained per kWh of HVAC load
  double beta = 0.2;    // coupling to outdoor temperature

  bool operator==(const HvacParams&) const = default;
};

// The horizon is T slots. `horizon` doubles as the H of the original
// notation, where the slot set and the window length were written apart.
struct TimeGrid {
  int horizon = 0;
  double slot_hours = 1.0;
  std::vector<std::vector<int>> shift_slots;  // per user, sorted, 0-based
  std::vector<int> dr_slots;                  // sorted, 0-based

  bool operator==(const TimeGrid&) const = default;
};

struct EvParams {
  double capacity = 40.0;            // E_V, kWh
  double initial_energy = 20.0;      // state of charge at arrival, kWh
  double max_charge = 50.0;          // kWh per slot
  double max_discharge = 10.0;       // kWh per slot
  double charge_efficiency = 0.9;    // mu
  double discharge_efficiency = 0.9; // nu
  double degradation = 0.1;          // omega_V, cost/kWh^2
  int arrival = 8;                   // t_A, 0-based slot
  int departure = 17;                // t_D, 0-based slot, inclusive

  bool operator==(const EvParams&) const = default;
};

struct Sensitivities {
  double shift = 1.0;    // omega_S
  double curtail = 1.0;  // omega_C
  double comfort = 1.0;  // omega_A

  bool operator==(const Sensitivities&) const = default;
};

struct UserScenario {
  Series shiftable_pref;    // L_S, kWh/slot
  Series curtailable_plan;  // L_C, kWh/slot
  Series inflexible;        // l_I, kWh/slot
  Series renewable_cap;     // S_R, kWh/slot
  Series outdoor_temp;      // Tout, degC
  Series setpoint;          // Tref, degC
  double indoor_initial = 24.0;
  double indoor_min = 15.0;
  double indoor_max = 32.0;
  Sensitivities sensitivity;
  EvParams ev;

  bool operator==(const UserScenario&) const = default;
};

struct GridTariff {
  double energy_price = 0.2;  // p_G, cost/kWh
  double peak_price = 0.8;    // p_G*, cost per kWh of the horizon peak
  double line_cap = 20.0;     // S_G, kWh/slot

  bool operator==(const GridTariff&) const = default;
};

struct TransactivePrices {
  Series feed_in;          // p_FIT
  Series demand_response;  // p_DR
  Series trading;          // p_T

  bool operator==(const TransactivePrices&) const = default;
};

struct Scenario {
  TimeGrid grid;
  HvacParams hvac;
  GridTariff tariff;
  TransactivePrices prices;
  std::vector<UserScenario> users;
  std::uint64_t rng_seed = 0;

  int num_users() const { return static_cast<int>(users.size()); }
  int horizon() const { return grid.horizon; }

  bool operator==(const Scenario&) const = default;
};

struct Violation {
  int user = -1;  // -1 for scenario-wide fields
  std::string field;
  std::string message;
};

using ValidationReport = std::vector<Violation>;

// Raised by load_scenario. `file`, `row` (0 when not row-specific) and
// `field` locate the problem.
class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(std::string file, int row, std::string field, const std::string& what);

  const std::string& file() const { return file_; }
  int row() const { return row_; }
  const std::string& field() const { return field_; }

 private:
  std::string file_;
  int row_;
  std::string field_;
};

Scenario load_scenario(const std::filesystem::path& config_path);

// Writes `<dir>/<stem>.json` and `<dir>/<stem>_series.csv`; returns the
// config path. Doubles are written in shortest round-trip form, so loading
// the result reproduces the scenario exactly.
std::filesystem::path write_scenario(const Scenario& s, const std::filesystem::path& dir,
                                     const std::string& stem = "scenario");

Scenario generate_synthetic(std::uint64_t seed, int num_users, int horizon);

ValidationReport validate_scenario(const Scenario& s);

std::string format_report(const ValidationReport& report);

}  // namespace gridledger::scenario
