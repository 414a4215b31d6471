#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "gridledger/energy_model.hpp"
#include "gridledger/scenario.hpp"

using namespace gridledger;
using energy::RowTag;
using energy::Var;

namespace {

int count_tag(const std::vector<RowTag>& tags, RowTag tag) { return int(std::count(tags.begin(), tags.end(), tag)); }

std::set<int> row_support(const Eigen::MatrixXd& A, int row) {
  std::set<int> cols;
  for (int j = 0; j < A.cols(); ++j)
    if (A(row, j) != 0.0) cols.insert(j);
  return cols;
}

}  // namespace

TEST(HvacTrajectory, FixedPoint) {
  const Series tin = energy::hvac_trajectory(Series{0, 0, 0}, Series{20, 20, 20}, 20.0, 0.75, 0.2);
  for (double v : tin) EXPECT_DOUBLE_EQ(v, 20.0);
}

TEST(HvacTrajectory, OutdoorPull) {
  const Series tin = energy::hvac_trajectory(Series{0}, Series{30}, 20.0, 0.75, 0.2);
  EXPECT_NEAR(tin[0], 22.0, 1e-12);
}

TEST(HvacTrajectory, HvacLoad) {
  const Series tin = energy::hvac_trajectory(Series{2}, Series{20}, 20.0, 0.75, 0.2);
  EXPECT_NEAR(tin[0], 21.5, 1e-12);
}

TEST(EvTrajectory, IdleHoldsCharge) {
  for (double v : energy::ev_trajectory(Series{0, 0}, Series{0, 0}, 10.0, 0.9, 0.9)) EXPECT_DOUBLE_EQ(v, 10.0);
}

TEST(EvTrajectory, ChargingAppliesEfficiency) {
  EXPECT_NEAR(energy::ev_trajectory(Series{5}, Series{0}, 10.0, 0.9, 0.9)[0], 14.5, 1e-12);
}

TEST(EvTrajectory, DischargingDividesByEfficiency) {
  EXPECT_NEAR(energy::ev_trajectory(Series{0}, Series{4.5}, 10.0, 0.9, 0.9)[0], 5.0, 1e-12);
}

TEST(HomeCost, PreferredScheduleCostsNothing) {
  scenario::Scenario s = scenario::generate_synthetic(5, 1, 3);
  auto& u = s.users[0];
  u.outdoor_temp.assign(3, 24.0);
  u.setpoint.assign(3, 24.0);
  u.indoor_initial = 24.0;
  energy::Schedule sch = energy::Schedule::zeros(3, 1);
  sch.shift_load = u.shiftable_pref;
  sch.curtail_load = u.curtailable_plan;
  const auto c = energy::home_cost_terms(sch, s, 0);
  EXPECT_EQ(c.shift, 0.0);
  EXPECT_EQ(c.curtail, 0.0);
  EXPECT_EQ(c.comfort, 0.0);
  EXPECT_EQ(c.grid, 0.0);
  EXPECT_EQ(c.battery, 0.0);
  EXPECT_EQ(c.home, 0.0);
}

TEST(HomeCost, GridEnergyPlusPeak) {
  scenario::Scenario s = scenario::generate_synthetic(5, 1, 3);
  s.tariff.energy_price = 0.2;
  s.tariff.peak_price = 0.8;
  energy::Schedule sch = energy::Schedule::zeros(3, 1);
  sch.grid_supply = {1, 3, 2};
  EXPECT_NEAR(energy::home_cost_terms(sch, s, 0).grid, 3.6, 1e-12);
}

TEST(HomeCost, BatteryDegradation) {
  scenario::Scenario s = scenario::generate_synthetic(5, 1, 2);
  s.users[0].ev.degradation = 0.1;
  s.users[0].ev.arrival = 0;
  s.users[0].ev.departure = 1;
  energy::Schedule sch = energy::Schedule::zeros(2, 1);
  sch.ev_discharge = {0, 10};
  EXPECT_NEAR(energy::home_cost_terms(sch, s, 0).battery, 10.0, 1e-12);
}

TEST(Rewards, FeedIn) {
  scenario::TransactivePrices prices{{0.1, 0.1}, {0.0, 0.0}, {0.0, 0.0}};
  energy::Schedule sch = energy::Schedule::zeros(2, 1);
  sch.feed_in = {2, 3};
  const auto r = energy::reward_terms(sch, prices, std::vector<int>{});
  EXPECT_NEAR(r.feed_in, 0.5, 1e-12);
  EXPECT_EQ(r.demand_response, 0.0);
}

TEST(Rewards, DemandResponseOnlyInsideWindow) {
  scenario::TransactivePrices prices{{0, 0, 0}, {1, 1, 1}, {0, 0, 0}};
  energy::Schedule sch = energy::Schedule::zeros(3, 1);
  sch.demand_response = {1, 2, 4};
  EXPECT_NEAR(energy::reward_terms(sch, prices, std::vector<int>{1}).demand_response, 2.0, 1e-12);
  sch.demand_response.assign(3, 0.0);
  EXPECT_EQ(energy::reward_terms(sch, prices, std::vector<int>{1}).demand_response, 0.0);
}

TEST(Rewards, AntisymmetricTradesCancel) {
  scenario::TransactivePrices prices{{0, 0, 0}, {0, 0, 0}, {0.14, 0.14, 0.14}};
  energy::Schedule a = energy::Schedule::zeros(3, 2), b = energy::Schedule::zeros(3, 2);
  a.trade[1] = {1.5, -0.25, 2.0};
  b.trade[0] = {-1.5, 0.25, -2.0};
  const double total =
      energy::reward_terms(a, prices, std::vector<int>{}).trading + energy::reward_terms(b, prices, std::vector<int>{}).trading;
  EXPECT_EQ(total, 0.0);
}

TEST(Layout, Bs1HasNoTransactionColumns) {
  const energy::UserLayout L(Mode::Bs1, 2, 1);
  EXPECT_FALSE(L.has(Var::FeedIn));
  EXPECT_FALSE(L.has(Var::DemandResponse));
  EXPECT_FALSE(L.has(Var::Trade));
  EXPECT_TRUE(L.has(Var::Peak));
}

TEST(Layout, ModesKeepTheirColumns) {
  EXPECT_TRUE(energy::UserLayout(Mode::Bs2, 4, 3).has(Var::FeedIn));
  EXPECT_FALSE(energy::UserLayout(Mode::Bs2, 4, 3).has(Var::Trade));
  EXPECT_TRUE(energy::UserLayout(Mode::Bs3, 4, 3).has(Var::Trade));
  EXPECT_FALSE(energy::UserLayout(Mode::Bs3, 4, 3).has(Var::FeedIn));
  const energy::UserLayout tem(Mode::Tem, 4, 3);
  EXPECT_EQ(tem.num_peers(), 2);
  EXPECT_EQ(tem.trade_index(1, 3) - tem.trade_index(0, 0), 4 + 3);
}

TEST(Constraints, Bs1BalanceRows) {
  const scenario::Scenario s = scenario::generate_synthetic(2, 1, 2);
  const energy::UserLayout L(Mode::Bs1, 2, 1);
  const auto cs = energy::build_user_constraints(s, 0, Mode::Bs1);
  ASSERT_EQ(count_tag(cs.eq_tags, RowTag::BalanceBs1), 2);
  for (int i = 0, t = 0; i < cs.num_eq(); ++i) {
    if (cs.eq_tags[i] != RowTag::BalanceBs1) continue;
    const std::set<int> expected{L.index(Var::HvacLoad, t),        L.index(Var::ShiftLoad, t),
                                 L.index(Var::CurtailLoad, t),     L.index(Var::EvCharge, t),
                                 L.index(Var::RenewableSupply, t), L.index(Var::GridSupply, t),
                                 L.index(Var::EvDischarge, t)};
    EXPECT_EQ(row_support(cs.eq_matrix, i), expected);
    EXPECT_EQ(cs.eq_matrix(i, L.index(Var::HvacLoad, t)), 1.0);
    EXPECT_EQ(cs.eq_matrix(i, L.index(Var::GridSupply, t)), -1.0);
    EXPECT_DOUBLE_EQ(cs.eq_rhs[i], -s.users[0].inflexible[t]);
    ++t;
  }
}

TEST(Constraints, DemandResponseCapInsideWindowOnly) {
  scenario::Scenario s = scenario::generate_synthetic(2, 1, 24);
  s.grid.dr_slots = {17, 18, 19, 20};
  const energy::UserLayout L(Mode::Tem, 24, 1);
  const auto cs = energy::build_user_constraints(s, 0, Mode::Tem);
  ASSERT_EQ(count_tag(cs.in_tags, RowTag::DrCap), 4);
  std::set<int> slots;
  for (int i = 0; i < cs.num_in(); ++i) {
    if (cs.in_tags[i] != RowTag::DrCap) continue;
    for (int t = 0; t < 24; ++t)
      if (cs.in_matrix(i, L.index(Var::DemandResponse, t)) == 1.0) {
        slots.insert(t);
        EXPECT_EQ(cs.in_matrix(i, L.index(Var::GridSupply, t)), -1.0);
        EXPECT_EQ(cs.in_rhs[i], 0.0);
      }
  }
  EXPECT_EQ(slots, (std::set<int>{17, 18, 19, 20}));
  for (int t = 0; t < 24; ++t) {
    EXPECT_EQ(cs.lower[L.index(Var::DemandResponse, t)], 0.0);
    if (!slots.contains(t)) {
      EXPECT_EQ(cs.upper[L.index(Var::DemandResponse, t)], 0.0);
    }
  }
}

TEST(Constraints, FeedInBoundedByRenewables) {
  scenario::Scenario s = scenario::generate_synthetic(2, 1, 3);
  s.users[0].renewable_cap = {5, 5, 5};
  const energy::UserLayout L(Mode::Tem, 3, 1);
  const auto cs = energy::build_user_constraints(s, 0, Mode::Tem);
  for (int t = 0; t < 3; ++t) EXPECT_EQ(cs.upper[L.index(Var::FeedIn, t)], 5.0);
  int rows = 0;
  for (int i = 0; i < cs.num_in(); ++i) {
    if (cs.in_tags[i] != RowTag::RenewableShare) continue;
    ++rows;
    EXPECT_EQ(cs.in_rhs[i], 5.0);
    EXPECT_EQ(row_support(cs.in_matrix, i).size(), 2u);
  }
  EXPECT_EQ(rows, 3);
}

// The assembled quadratic objective and the direct cost evaluation must agree
// at any point whose auxiliary variables (Tin, z) are consistent.
TEST(Objective, MatchesDirectEvaluation) {
  const scenario::Scenario s = scenario::generate_synthetic(11, 3, 8);
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Mode mode : kAllModes) {
    for (int n = 0; n < 3; ++n) {
      const energy::UserLayout L(mode, 8, 3);
      const auto cs = energy::build_user_constraints(s, n, mode);
      const auto obj = energy::build_user_objective(s, n, mode);
      for (int trial = 0; trial < 5; ++trial) {
        Eigen::VectorXd x(L.size());
        for (int j = 0; j < L.size(); ++j) {
          const double lo = std::isfinite(cs.lower[j]) ? cs.lower[j] : -5.0;
          const double hi = std::isfinite(cs.upper[j]) ? std::min(cs.upper[j], lo + 5.0) : lo + 5.0;
          x[j] = lo + (hi - lo) * unit(rng);
        }
        if (L.has(Var::Trade))
          for (int p = 0; p < L.num_peers(); ++p)
            for (int t = 0; t < 8; ++t) x[L.trade_index(p, t)] = 4.0 * unit(rng) - 2.0;
        Series hvac(8), grid(8);
        for (int t = 0; t < 8; ++t) {
          hvac[t] = x[L.index(Var::HvacLoad, t)];
          grid[t] = x[L.index(Var::GridSupply, t)];
        }
        const Series tin = energy::hvac_trajectory(hvac, s.users[n].outdoor_temp, s.users[n].indoor_initial,
                                                   s.hvac.alpha, s.hvac.beta);
        for (int t = 0; t < 8; ++t) x[L.index(Var::IndoorTemp, t)] = tin[t];
        x[L.index(Var::Peak)] = *std::max_element(grid.begin(), grid.end());

        const double quad = 0.5 * x.dot(obj.P * x) + obj.q.dot(x) + obj.constant;
        std::vector<double> xv(x.data(), x.data() + x.size());
        const auto sch = energy::extract_schedule(L, xv, n, 3);
        const double direct = energy::evaluate(sch, s, n).net;
        EXPECT_NEAR(quad, direct, 1e-9 * std::max(1.0, std::abs(direct))) << to_string(mode) << " user " << n;
      }
    }
  }
}

TEST(RowTags, RoundTripNames) {
  for (RowTag tag : {RowTag::ShiftTotal, RowTag::HvacDynamics, RowTag::EvDynamics, RowTag::EvTerminal,
                     RowTag::RenewableShare, RowTag::DrCap, RowTag::PeakEpigraph, RowTag::BalanceTem,
                     RowTag::BalanceBs1, RowTag::BalanceBs2, RowTag::BalanceBs3, RowTag::Clearing, RowTag::Generic})
    EXPECT_EQ(energy::parse_row_tag(energy::to_string(tag)), tag);
  EXPECT_FALSE(energy::parse_row_tag("nonsense").has_value());
}
