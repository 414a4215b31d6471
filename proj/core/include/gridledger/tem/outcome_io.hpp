#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "gridledger/tem/problem.hpp"

namespace gridledger::tem {

inline constexpr const char* kOutcomeSchema = "gridledger.outcome/1";
inline constexpr const char* kScheduleSchema = "gridledger.schedule/1";
inline constexpr const char* kSummarySchema = "gridledger.summary/1";

// Schedules, cost breakdowns, totals and the residual history.
std::string outcome_json(const Outcome& o);

// One row per (user, slot): `user,t,l_A,l_S,l_C,s_G,s_R,p_cha,p_dis,e_V,Tin,e_FIT,e_DR,e_T_sold`
// after a `#schema=` line. Users and slots are 1-based.
void write_schedule_csv(const Outcome& o, std::ostream& os);

// `mode,total_cost,iterations,status` rows after a `#schema=` line.
void write_summary_csv(const std::vector<Outcome>& outcomes, std::ostream& os);

// Writes `<stem>.json` and `<stem>_schedule.csv` under `dir`; returns both paths.
std::vector<std::filesystem::path> write_outcome(const Outcome& o, const std::filesystem::path& dir,
                                                 const std::string& stem);

}  // namespace gridledger::tem
