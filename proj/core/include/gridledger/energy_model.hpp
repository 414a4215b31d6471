#pragma once

// Cost/reward evaluation and the linear constraint set of one home.
//
// Every user's decision vector follows a fixed flat layout (see UserLayout);
// blocks absent in a mode (feed-in and DR in Bs1/Bs3, trades in Bs1/Bs2)
// have no columns at all. Slot-indexed blocks always span the full horizon;
// entries outside their window are pinned to zero through the bounds.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gridledger/mode.hpp"
#include "gridledger/scenario.hpp"

namespace gridledger::energy {

enum class Var {
  HvacLoad,        // l_A
  ShiftLoad,       // l_S
  CurtailLoad,     // l_C
  GridSupply,      // s_G
  RenewableSupply, // s_R
  EvCharge,        // p_cha
  EvDischarge,     // p_dis
  EvEnergy,        // e_V
  IndoorTemp,      // Tin
  FeedIn,          // e_FIT
  DemandResponse,  // e_DR
  Trade,           // e_T, one row of T per peer
  Peak,            // z >= max_t s_G[t]
};

std::string_view to_string(Var v);

struct LayoutBlock {
  Var var;
  int offset;
  int size;
};

class UserLayout {
 public:
  UserLayout(Mode mode, int horizon, int num_users);

  Mode mode() const { return mode_; }
  int horizon() const { return horizon_; }
  int num_peers() const { return num_peers_; }
  int size() const { return size_; }
  const std::vector<LayoutBlock>& blocks() const { return blocks_; }

  bool has(Var v) const;
  // Column of slot t in block v. Peak ignores t.
  int index(Var v, int t = 0) const;
  // Column of e_T toward peer slot p (peers of user n in ascending id order,
  // skipping n itself) at slot t.
  int trade_index(int peer_slot, int t) const;

  static int peer_slot(int self, int peer) { return peer < self ? peer : peer - 1; }
  static int peer_of(int self, int slot) { return slot < self ? slot : slot + 1; }

 private:
  Mode mode_;
  int horizon_;
  int num_peers_;
  int size_ = 0;
  std::vector<LayoutBlock> blocks_;
  std::vector<int> offsets_;  // indexed by Var, -1 when absent
};

// One user's decisions. `trade[m][t]` is signed energy sold to user m
// (negative = bought); trade[self] stays all-zero.
struct Schedule {
  Series hvac_load, shift_load, curtail_load;
  Series grid_supply, renewable_supply;
  Series ev_charge, ev_discharge, ev_energy;
  Series feed_in, demand_response;
  std::vector<Series> trade;
  double peak = 0.0;
  Series indoor_temp;

  static Schedule zeros(int horizon, int num_users);
  double trade_sum(int t) const;
};

struct CostBreakdown {
  double shift = 0, curtail = 0, comfort = 0, grid = 0, battery = 0;  // C_S C_C C_A C_G C_V
  double home = 0;                                                     // C_H
  double feed_in = 0, demand_response = 0, trading = 0;                // R_FIT R_DR R_T
  double vertical = 0;                                                 // R_VT
  double net = 0;                                                      // C_H - R_VT - R_T

  CostBreakdown& operator+=(const CostBreakdown& o);
};

Series hvac_trajectory(std::span<const double> hvac_load, std::span<const double> outdoor,
                       double initial, double alpha, double beta);

Series ev_trajectory(std::span<const double> charge, std::span<const double> discharge,
                     double initial, double charge_eff, double discharge_eff);

// Cost side of the breakdown for user n. The comfort term uses the indoor
// temperature implied by the schedule's HVAC load, not schedule.indoor_temp.
CostBreakdown home_cost_terms(const Schedule& sch, const scenario::Scenario& s, int n);

// Reward side; the DR reward only accrues inside the DR window.
CostBreakdown reward_terms(const Schedule& sch, const scenario::TransactivePrices& prices,
                           std::span<const int> dr_slots);

// Both sides plus `home`, `vertical` and `net`.
CostBreakdown evaluate(const Schedule& sch, const scenario::Scenario& s, int n);

enum class RowTag {
  ShiftTotal,      // sum of shifted load over the window equals the preferred total
  HvacDynamics,    // indoor temperature recursion
  EvDynamics,      // battery energy recursion
  EvTerminal,      // battery full at departure
  RenewableShare,  // s_R + e_FIT <= S_R
  DrCap,           // e_DR <= s_G inside the DR window
  PeakEpigraph,    // s_G[t] <= z
  BalanceTem,      // supply/demand balance with trades and DR
  BalanceBs1,      // ... without transactions
  BalanceBs2,      // ... with DR only
  BalanceBs3,      // ... with trades only
  Clearing,        // e_nm + e_mn = 0
  Generic,         // untagged rows of hand-built problems
};

std::string_view to_string(RowTag tag);
std::optional<RowTag> parse_row_tag(std::string_view text);

enum class Sense { LessEqual, GreaterEqual };

// Dense rows over a flat variable vector plus per-variable bounds
// (+/-infinity when absent).
struct LinearConstraintSet {
  int num_vars = 0;
  Eigen::MatrixXd eq_matrix;
  Eigen::VectorXd eq_rhs;
  std::vector<RowTag> eq_tags;
  Eigen::MatrixXd in_matrix;
  Eigen::VectorXd in_rhs;
  std::vector<Sense> in_sense;
  std::vector<RowTag> in_tags;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  int num_eq() const { return static_cast<int>(eq_rhs.size()); }
  int num_in() const { return static_cast<int>(in_rhs.size()); }
};

// Accumulates sparse rows and materializes them densely.
class ConstraintBuilder {
 public:
  using Term = std::pair<int, double>;

  explicit ConstraintBuilder(int num_vars);

  void add_eq(RowTag tag, std::vector<Term> terms, double rhs);
  void add_le(RowTag tag, std::vector<Term> terms, double rhs);
  void set_bounds(int col, double lo, double hi);

  // Appends `other` with its columns shifted by `col_offset`.
  void append(const LinearConstraintSet& other, int col_offset);

  LinearConstraintSet build() const;

 private:
  struct Row {
    RowTag tag;
    std::vector<Term> terms;
    double rhs;
  };
  int num_vars_;
  std::vector<Row> eq_, le_;
  std::vector<double> lower_, upper_;
};

LinearConstraintSet build_user_constraints(const scenario::Scenario& s, int n, Mode mode);

// Home cost minus the mode's rewards as 0.5 x'Px + q'x + constant over the
// user's layout. The peak term p_G* max_t s_G[t] is carried by the epigraph
// variable.
struct QuadraticObjective {
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  double constant = 0.0;
};

QuadraticObjective build_user_objective(const scenario::Scenario& s, int n, Mode mode);

Schedule extract_schedule(const UserLayout& layout, std::span<const double> x, int n, int num_users);

// Table of (block, first column, last column), one line per block.
std::string describe_layout(const UserLayout& layout);

}  // namespace gridledger::energy
