#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "gridledger/chain/message.hpp"
#include "gridledger/tem/distributed.hpp"
#include "gridledger/tem/outcome_io.hpp"
#include "gridledger/tem/problem.hpp"

using namespace gridledger;
using energy::RowTag;
using energy::Var;
using tem::DualState;

namespace {

double rel_gap(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

// Two homes with no flexible demand: user 0 owns rooftop PV, user 1 has a
// fixed load and no generation.
scenario::Scenario surplus_deficit() {
  scenario::Scenario s = scenario::generate_synthetic(9, 2, 4);
  for (auto& u : s.users) {
    u.shiftable_pref.assign(4, 0.0);
    u.curtailable_plan.assign(4, 0.0);
    u.outdoor_temp = u.setpoint;
    u.indoor_initial = u.setpoint[0];
    u.ev.capacity = 0.0;
    u.ev.initial_energy = 0.0;
  }
  s.users[0].renewable_cap.assign(4, 5.0);
  s.users[0].inflexible.assign(4, 0.0);
  s.users[1].renewable_cap.assign(4, 0.0);
  s.users[1].inflexible.assign(4, 2.0);
  return s;
}

DualState random_state(std::mt19937_64& rng, int N, int T) {
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  DualState d = DualState::zeros(N, T, std::exp(u(rng)));
  for (int n = 0; n < N; ++n)
    for (int m = 0; m < N; ++m)
      if (m != n)
        for (int t = 0; t < T; ++t) {
          d.e(n, m, t) = u(rng);
          d.e_hat(n, m, t) = u(rng);
          d.lambda(n, m, t) = u(rng);
        }
  return d;
}

}  // namespace

TEST(Assemble, Bs1IgnoresTransactivePrices) {
  scenario::Scenario s = scenario::generate_synthetic(4, 1, 6);
  const auto a = tem::assemble_problem(s, Mode::Bs1);
  for (auto* p : {&s.prices.feed_in, &s.prices.demand_response, &s.prices.trading})
    for (double& v : *p) v = 7.5;
  const auto b = tem::assemble_problem(s, Mode::Bs1);
  EXPECT_EQ(a.q, b.q);
  EXPECT_EQ(a.constant, b.constant);
}

TEST(Assemble, TemClearingRowsForTwoUsers) {
  const scenario::Scenario s = scenario::generate_synthetic(4, 2, 5);
  const auto p = tem::assemble_problem(s, Mode::Tem);
  const tem::JointLayout L(Mode::Tem, 2, 5);
  const auto& c = p.constraints;
  int rows = 0;
  for (int i = 0; i < c.num_eq(); ++i) {
    if (c.eq_tags[i] != RowTag::Clearing) continue;
    const int t = rows++;
    EXPECT_EQ(c.eq_matrix(i, L.trade_column(0, 1, t)), 1.0);
    EXPECT_EQ(c.eq_matrix(i, L.trade_column(1, 0, t)), 1.0);
    EXPECT_EQ(c.eq_matrix.row(i).cwiseAbs().sum(), 2.0);
    EXPECT_EQ(c.eq_rhs[i], 0.0);
  }
  EXPECT_EQ(rows, 5);
}

TEST(Centralized, IdenticalUsersDoNotTrade) {
  scenario::Scenario s = scenario::generate_synthetic(6, 2, 6);
  s.users[1] = s.users[0];
  s.grid.shift_slots[1] = s.grid.shift_slots[0];
  const auto sol = tem::solve_centralized(s, Mode::Tem);
  for (int n = 0; n < 2; ++n)
    for (double v : sol.schedules[n].trade[1 - n]) EXPECT_NEAR(v, 0.0, 1e-6);
}

TEST(Centralized, ZeroLoadsCostNothing) {
  scenario::Scenario s = scenario::generate_synthetic(1, 1, 2);
  auto& u = s.users[0];
  u.shiftable_pref.assign(2, 0.0);
  u.curtailable_plan.assign(2, 0.0);
  u.inflexible.assign(2, 0.0);
  u.renewable_cap.assign(2, 0.0);
  u.outdoor_temp = u.setpoint;
  u.indoor_initial = u.setpoint[0];
  u.ev.capacity = 0.0;
  u.ev.initial_energy = 0.0;
  const auto o = tem::solve_centralized(s, Mode::Bs1);
  EXPECT_NEAR(o.total_cost(), 0.0, 1e-8);
  const auto& sch = o.schedules[0];
  for (const Series* v : {&sch.hvac_load, &sch.shift_load, &sch.curtail_load, &sch.grid_supply, &sch.renewable_supply,
                          &sch.ev_charge, &sch.ev_discharge, &sch.ev_energy})
    for (double x : *v) EXPECT_NEAR(x, 0.0, 1e-7);
}

TEST(Centralized, ModeOrderingOnSmallScenario) {
  const scenario::Scenario s = scenario::generate_synthetic(8, 2, 4);
  std::map<Mode, double> cost;
  for (Mode m : kAllModes) cost[m] = tem::solve_centralized(s, m).total_cost();
  EXPECT_LE(cost[Mode::Tem], cost[Mode::Bs2] + 1e-6);
  EXPECT_LE(cost[Mode::Bs2], cost[Mode::Bs1] + 1e-6);
  EXPECT_LE(cost[Mode::Tem], cost[Mode::Bs3] + 1e-6);
  EXPECT_LE(cost[Mode::Bs3], cost[Mode::Bs1] + 1e-6);
}

TEST(Centralized, SurplusFlowsToDeficit) {
  const auto o = tem::solve_centralized(surplus_deficit(), Mode::Bs3);
  for (int t = 0; t < 4; ++t) {
    EXPECT_GT(o.schedules[0].trade[1][t], 0.1) << "slot " << t;
    EXPECT_NEAR(o.schedules[0].trade[1][t], -o.schedules[1].trade[0][t], 1e-9);
  }
}

TEST(Ult, LargePenaltyPinsTradesToZero) {
  const scenario::Scenario s = scenario::generate_synthetic(3, 3, 4);
  const DualState d = DualState::zeros(3, 4, 1e6);
  const auto p = tem::assemble_ult(s, 1, d);
  const auto sol = qp::solve_qp(p);
  ASSERT_EQ(sol.status, qp::Status::Optimal);
  const energy::UserLayout L(Mode::Tem, 4, 3);
  for (int peer = 0; peer < 2; ++peer)
    for (int t = 0; t < 4; ++t) EXPECT_NEAR(sol.x[L.trade_index(peer, t)], 0.0, 1e-4);
}

TEST(Ult, FixedPointReproducesCentralizedSlice) {
  const scenario::Scenario s = scenario::generate_synthetic(4, 2, 4);
  const auto central = tem::solve_centralized_full(s, Mode::Tem);
  const DualState d = tem::fixed_point_from_centralized(s, central, 1.0);
  const energy::UserLayout L(Mode::Tem, 4, 2);
  for (int n = 0; n < 2; ++n) {
    const auto sol = qp::solve_qp(tem::assemble_ult(s, n, d));
    ASSERT_EQ(sol.status, qp::Status::Optimal);
    for (int t = 0; t < 4; ++t)
      EXPECT_NEAR(sol.x[L.trade_index(0, t)], central.qp.x[central.layout.offset(n) + L.trade_index(0, t)], 1e-6);
    EXPECT_NEAR(central.outcome.costs[n].net, energy::evaluate(energy::extract_schedule(
                    L, std::vector<double>(sol.x.data(), sol.x.data() + sol.x.size()), n, 2), s, n).net, 1e-6);
  }
}

TEST(Ult, PenaltyVanishesWhenDecisionsMatchAuxiliary) {
  const scenario::Scenario s = scenario::generate_synthetic(5, 3, 4);
  std::mt19937_64 rng(5);
  DualState d = random_state(rng, 3, 4);
  const int n = 2;
  const energy::UserLayout L(Mode::Tem, 4, 3);
  const auto own = energy::build_user_objective(s, n, Mode::Tem);
  const auto ult = tem::assemble_ult(s, n, d);
  Eigen::VectorXd x = Eigen::VectorXd::Constant(L.size(), 0.5);
  double lambda_e = 0.0;
  for (int p = 0; p < 2; ++p)
    for (int t = 0; t < 4; ++t) {
      const int m = energy::UserLayout::peer_of(n, p);
      x[L.trade_index(p, t)] = d.e_hat(n, m, t);
      lambda_e += d.lambda(n, m, t) * d.e_hat(n, m, t);
    }
  const double base = 0.5 * x.dot(own.P * x) + own.q.dot(x) + own.constant;
  EXPECT_NEAR(qp::objective_value(ult, x), base - lambda_e, 1e-9);
}

TEST(Sct, WorkedExample) {
  DualState d = DualState::zeros(2, 1, 1.0);
  d.e(0, 1, 0) = 2.0;
  d.e(1, 0, 0) = -1.0;
  d.lambda(0, 1, 0) = 0.5;
  d.lambda(1, 0, 0) = -0.5;
  const DualState r = tem::sct_step(d);
  EXPECT_DOUBLE_EQ(r.e_hat(0, 1, 0), 1.0);
  EXPECT_DOUBLE_EQ(r.e_hat(1, 0, 0), -1.0);
  EXPECT_DOUBLE_EQ(r.lambda(0, 1, 0), -0.5);
  EXPECT_DOUBLE_EQ(r.lambda(1, 0, 0), -0.5);
  EXPECT_EQ(r.k, d.k);
  EXPECT_EQ(r.rho, d.rho);
}

TEST(Sct, ConsensusIsAFixedPoint) {
  DualState d = DualState::zeros(3, 2, 2.0);
  const double a[3][3] = {{0, 1.25, -0.5}, {-1.25, 0, 3.0}, {0.5, -3.0, 0}};
  for (int n = 0; n < 3; ++n)
    for (int m = 0; m < 3; ++m)
      for (int t = 0; t < 2; ++t) d.e(n, m, t) = a[n][m];
  const DualState r = tem::sct_step(d);
  EXPECT_EQ(r.e_hat, d.e);
  EXPECT_EQ(r.lambda, d.lambda);
}

TEST(Sct, AuxiliaryIsAntisymmetric) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const DualState r = tem::sct_step(random_state(rng, 4, 3));
    for (int n = 0; n < 4; ++n)
      for (int m = 0; m < 4; ++m)
        for (int t = 0; t < 3; ++t) EXPECT_EQ(r.e_hat(n, m, t), -r.e_hat(m, n, t));
  }
}

TEST(Convergence, MatchedStateConverges) {
  std::mt19937_64 rng(3);
  DualState d = random_state(rng, 3, 2);
  d.e_hat = d.e;
  EXPECT_TRUE(tem::has_converged(d, d.lambda, 1e-9));
}

TEST(Convergence, GapOfTwoEpsilonFails) {
  const double eps = std::ldexp(1.0, -20);
  DualState d = DualState::zeros(2, 2, 1.0);
  d.e_hat(0, 1, 1) = 2 * eps;
  EXPECT_FALSE(tem::has_converged(d, d.lambda, eps));
}

TEST(Convergence, GapOfExactlyEpsilonPasses) {
  const double eps = std::ldexp(1.0, -20);
  DualState d = DualState::zeros(2, 2, 1.0);
  d.e_hat(0, 1, 1) = eps;
  tem::TradeTensor prev = d.lambda;
  prev(1, 0, 0) = -eps;
  EXPECT_EQ(tem::primal_residual(d), eps);
  EXPECT_EQ(tem::dual_change(d, prev), eps);
  EXPECT_TRUE(tem::has_converged(d, prev, eps));
}

TEST(Convergence, ResidualSumsPerUserNorms) {
  DualState d = DualState::zeros(3, 1, 1.0);
  d.e_hat(0, 1, 0) = 3.0;
  d.e_hat(0, 2, 0) = 4.0;  // user 0: norm 5
  d.e_hat(2, 1, 0) = 2.0;  // user 2: norm 2
  EXPECT_DOUBLE_EQ(tem::primal_residual(d), 7.0);
}

TEST(Rho, Schedules) {
  EXPECT_EQ(tem::RhoSchedule::fixed(2.5).at(7), 2.5);
  EXPECT_EQ(tem::RhoSchedule::reciprocal().at(1), 1.0);
  EXPECT_EQ(tem::RhoSchedule::reciprocal().at(4), 0.25);
  EXPECT_THROW(tem::validate(tem::AdmmParams{0.0, 10, {}}), std::invalid_argument);
  EXPECT_THROW(tem::validate(tem::AdmmParams{1e-6, 0, {}}), std::invalid_argument);
  EXPECT_THROW(tem::validate(tem::AdmmParams{1e-6, 10, tem::RhoSchedule::fixed(-1.0)}), std::invalid_argument);
}

TEST(Digest, ChangesWithEveryField) {
  std::mt19937_64 rng(23);
  const DualState d = random_state(rng, 2, 2);
  const std::string base = tem::dual_digest(d);
  EXPECT_EQ(base.size(), 64u);
  DualState a = d;
  a.k += 1;
  DualState b = d;
  b.lambda(0, 1, 1) = std::nextafter(b.lambda(0, 1, 1), 10.0);
  DualState c = d;
  c.rho *= 2;
  EXPECT_NE(tem::dual_digest(a), base);
  EXPECT_NE(tem::dual_digest(b), base);
  EXPECT_NE(tem::dual_digest(c), base);
  EXPECT_EQ(tem::dual_digest(d), base);
}

TEST(Distributed, ToyMatchesCentralized) {
  const scenario::Scenario s = scenario::generate_synthetic(2, 2, 4);
  tem::AdmmParams p;
  p.rho = tem::RhoSchedule::fixed(1.0);
  const auto o = tem::run_distributed(s, p);
  EXPECT_EQ(o.status, tem::OutcomeStatus::Converged);
  EXPECT_TRUE(o.distributed);
  EXPECT_LE(rel_gap(o.total_cost(), tem::solve_centralized(s, Mode::Tem).total_cost()), 1e-4);
}

TEST(Distributed, ToyConvergesWithReciprocalPenalty) {
  const scenario::Scenario s = scenario::generate_synthetic(2, 2, 4);
  tem::AdmmParams p;
  p.rho = tem::RhoSchedule::reciprocal();
  p.max_iter = 500;
  const auto o = tem::run_distributed(s, p);
  EXPECT_EQ(o.status, tem::OutcomeStatus::Converged);
  EXPECT_LE(o.iterations, 500);
}

TEST(Distributed, SingleUserDegenerates) {
  const scenario::Scenario s = scenario::generate_synthetic(2, 1, 6);
  const auto o = tem::run_distributed(s, tem::AdmmParams{});
  EXPECT_EQ(o.status, tem::OutcomeStatus::Converged);
  EXPECT_EQ(o.iterations, 1);
  EXPECT_TRUE(o.schedules[0].trade[0] == Series(6, 0.0));
  EXPECT_LE(rel_gap(o.total_cost(), tem::solve_centralized(s, Mode::Tem).total_cost()), 1e-6);
}

TEST(Distributed, HistoryDigestsTrackTheState) {
  const scenario::Scenario s = scenario::generate_synthetic(4, 3, 8);
  const auto o = tem::run_distributed(s, tem::AdmmParams{});
  ASSERT_TRUE(o.final_state.has_value());
  ASSERT_FALSE(o.history.empty());
  EXPECT_EQ(o.history.back().digest, tem::dual_digest(*o.final_state));
  for (std::size_t i = 0; i < o.history.size(); ++i) EXPECT_EQ(o.history[i].k, int(i) + 1);
}

TEST(ChainTransport, MatchesInProcessAndAuditsClean) {
  const scenario::Scenario s = scenario::generate_synthetic(4, 3, 8);
  const tem::AdmmParams p{};
  const auto in = tem::run_distributed(s, p);
  const auto run = tem::run_distributed_chain(s, p, tem::ChainOptions{});
  EXPECT_TRUE(run.digests_match);
  EXPECT_TRUE(run.replicas_agree);
  EXPECT_TRUE(run.audit.clean());
  EXPECT_GT(run.audit.horizontal, 0u);
  EXPECT_GT(run.audit.sct, 0u);
  ASSERT_EQ(run.outcome.history.size(), in.history.size());
  for (std::size_t i = 0; i < in.history.size(); ++i) EXPECT_EQ(run.outcome.history[i].digest, in.history[i].digest);
  for (int n = 0; n < 3; ++n) EXPECT_EQ(run.outcome.schedules[n].grid_supply, in.schedules[n].grid_supply);
}

TEST(ChainTransport, ThrowsWhenValidatorsCannotFormQuorum) {
  const scenario::Scenario s = scenario::generate_synthetic(4, 2, 4);
  tem::ChainOptions opts;
  opts.event_budget = 200'000;
  opts.faults = {{0, netsim::CrashAt{0}}, {1, netsim::CrashAt{0}}};
  EXPECT_THROW(tem::run_distributed_chain(s, tem::AdmmParams{}, opts), netsim::LivenessTimeout);
}

TEST(Privacy, FlagsPrivateValueOutsideDecisionFields) {
  const scenario::Scenario s = scenario::generate_synthetic(4, 2, 4);
  const double secret = s.users[1].inflexible[2];
  chain::Message m;
  m.type = chain::MsgType::ClientTx;
  m.from = 5;
  m.to = 0;
  m.txs.push_back(chain::make_signed(chain::TokenTransfer{5, 4, 10}, 5, std::bit_cast<std::uint64_t>(secret)));
  const auto audit = tem::audit_privacy(s, {chain::encode_message(m)});
  EXPECT_GE(audit.leaks, 1u);
  EXPECT_FALSE(audit.clean());
}

TEST(Privacy, DecisionFieldsAreMasked) {
  const scenario::Scenario s = scenario::generate_synthetic(4, 2, 4);
  chain::Message m;
  m.type = chain::MsgType::ClientTx;
  m.from = 4;
  chain::VerticalTrade v{0, s.users[0].renewable_cap, Series(4, 0.0)};
  m.txs.push_back(chain::make_signed(v, 4, 1));
  const auto audit = tem::audit_privacy(s, {chain::encode_message(m)});
  EXPECT_EQ(audit.leaks, 0u);
  EXPECT_EQ(audit.vertical, 1u);
}

TEST(Privacy, GarbageIsASchemaViolation) {
  const scenario::Scenario s = scenario::generate_synthetic(4, 2, 4);
  const auto audit = tem::audit_privacy(s, {chain::Bytes{0xde, 0xad, 0xbe, 0xef}});
  EXPECT_GE(audit.schema_violations, 1u);
}

TEST(OutcomeIo, ScheduleCsvShape) {
  const scenario::Scenario s = scenario::generate_synthetic(4, 2, 3);
  const auto o = tem::solve_centralized(s, Mode::Tem);
  std::ostringstream os;
  tem::write_schedule_csv(o, os);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, std::string("#schema=") + tem::kScheduleSchema);
  std::getline(is, line);
  EXPECT_EQ(line, "user,t,l_A,l_S,l_C,s_G,s_R,p_cha,p_dis,e_V,Tin,e_FIT,e_DR,e_T_sold");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 6);
}

TEST(OutcomeIo, WritesJsonAndCsv) {
  const auto dir = std::filesystem::temp_directory_path() / "gridledger_outcome_io";
  std::filesystem::remove_all(dir);
  const scenario::Scenario s = scenario::generate_synthetic(4, 2, 3);
  const auto paths = tem::write_outcome(tem::solve_centralized(s, Mode::Bs2), dir, "bs2");
  ASSERT_EQ(paths.size(), 2u);
  for (const auto& p : paths) EXPECT_TRUE(std::filesystem::exists(p));
  std::ifstream f(paths[0]);
  std::stringstream text;
  text << f.rdbuf();
  EXPECT_NE(text.str().find(tem::kOutcomeSchema), std::string::npos);
  std::filesystem::remove_all(dir);
}
