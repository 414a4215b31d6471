#include "gridledger/tem/outcome_io.hpp"

#include <fstream>
#include <ostream>

#include <json.hpp>

namespace gridledger::tem {

namespace {

using nlohmann::ordered_json;

ordered_json costs_json(const energy::CostBreakdown& c) {
  return {{"shift", c.shift},         {"curtail", c.curtail},
          {"comfort", c.comfort},     {"grid", c.grid},
          {"battery", c.battery},     {"home", c.home},
          {"feed_in", c.feed_in},     {"demand_response", c.demand_response},
          {"trading", c.trading},     {"vertical", c.vertical},
          {"net", c.net}};
}

ordered_json schedule_json(const energy::Schedule& s) {
  return {{"hvac_load", s.hvac_load},
          {"shift_load", s.shift_load},
          {"curtail_load", s.curtail_load},
          {"grid_supply", s.grid_supply},
          {"renewable_supply", s.renewable_supply},
          {"ev_charge", s.ev_charge},
          {"ev_discharge", s.ev_discharge},
          {"ev_energy", s.ev_energy},
          {"indoor_temp", s.indoor_temp},
          {"feed_in", s.feed_in},
          {"demand_response", s.demand_response},
          {"trade", s.trade},
          {"peak", s.peak}};
}

double at(const Series& s, int t) { return t < static_cast<int>(s.size()) ? s[t] : 0.0; }

}  // namespace

std::string outcome_json(const Outcome& o) {
  ordered_json j;
  j["schema"] = kOutcomeSchema;
  j["mode"] = std::string(to_string(o.mode));
  j["status"] = std::string(to_string(o.status));
  j["distributed"] = o.distributed;
  j["iterations"] = o.iterations;
  j["total_cost"] = o.total_cost();
  j["totals"] = costs_json(o.totals);
  ordered_json users = ordered_json::array();
  for (std::size_t n = 0; n < o.schedules.size(); ++n)
    users.push_back({{"user", n + 1}, {"costs", costs_json(o.costs[n])}, {"schedule", schedule_json(o.schedules[n])}});
  j["users"] = users;
  ordered_json hist = ordered_json::array();
  for (const auto& h : o.history)
    hist.push_back({{"k", h.k},
                    {"rho", h.rho},
                    {"primal_residual", h.primal_residual},
                    {"dual_change", h.dual_change},
                    {"digest", h.digest}});
  j["history"] = hist;
  return j.dump(2);
}

void write_schedule_csv(const Outcome& o, std::ostream& os) {
  os.precision(17);
  os << "#schema=" << kScheduleSchema << '\n';
  os << "user,t,l_A,l_S,l_C,s_G,s_R,p_cha,p_dis,e_V,Tin,e_FIT,e_DR,e_T_sold\n";
  for (std::size_t n = 0; n < o.schedules.size(); ++n) {
    const auto& s = o.schedules[n];
    for (std::size_t t = 0; t < s.hvac_load.size(); ++t) {
      const int i = static_cast<int>(t);
      os << n + 1 << ',' << t + 1 << ',' << at(s.hvac_load, i) << ',' << at(s.shift_load, i) << ','
         << at(s.curtail_load, i) << ',' << at(s.grid_supply, i) << ',' << at(s.renewable_supply, i) << ','
         << at(s.ev_charge, i) << ',' << at(s.ev_discharge, i) << ',' << at(s.ev_energy, i) << ','
         << at(s.indoor_temp, i) << ',' << at(s.feed_in, i) << ',' << at(s.demand_response, i) << ','
         << s.trade_sum(i) << '\n';
    }
  }
}

void write_summary_csv(const std::vector<Outcome>& outcomes, std::ostream& os) {
  os.precision(17);
  os << "#schema=" << kSummarySchema << '\n';
  os << "mode,total_cost,iterations,status\n";
  for (const auto& o : outcomes)
    os << to_string(o.mode) << ',' << o.total_cost() << ',' << o.iterations << ',' << to_string(o.status) << '\n';
}

std::vector<std::filesystem::path> write_outcome(const Outcome& o, const std::filesystem::path& dir,
                                                 const std::string& stem) {
  std::filesystem::create_directories(dir);
  const auto json_path = dir / (stem + ".json");
  const auto csv_path = dir / (stem + "_schedule.csv");
  {
    std::ofstream f(json_path);
    if (!f) throw std::runtime_error("cannot write " + json_path.string());
    f << outcome_json(o) << '\n';
  }
  {
    std::ofstream f(csv_path);
    if (!f) throw std::runtime_error("cannot write " + csv_path.string());
    write_schedule_csv(o, f);
  }
  return {json_path, csv_path};
}

}  // namespace gridledger::tem
