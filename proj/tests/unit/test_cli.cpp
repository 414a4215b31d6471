#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "commands.hpp"
#include "gridledger/scenario.hpp"

namespace fs = std::filesystem;
using namespace gridledger;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "gridledger");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(int(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("gridledger_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

std::vector<std::vector<std::string>> read_csv(const std::string& file) {
  std::ifstream in(file);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.starts_with('#')) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

std::map<std::string, double> compare_costs(const std::string& file) {
  std::map<std::string, double> costs;
  const auto rows = read_csv(file);
  for (std::size_t i = 1; i < rows.size(); ++i) costs[rows[i][0]] = std::stod(rows[i][1]);
  return costs;
}

std::string with_zero_prices(const fs::path& dir, int users, int horizon) {
  scenario::Scenario s = scenario::generate_synthetic(1, users, horizon);
  s.prices.feed_in.assign(horizon, 0.0);
  s.prices.demand_response.assign(horizon, 0.0);
  s.prices.trading.assign(horizon, 0.0);
  return scenario::write_scenario(s, dir).string();
}

}  // namespace

TEST_F(Cli, UnknownModeIsUsageError) {
  const auto r = invoke({"run", "--synthetic", "2,4", "--mode", "BS9", "--out", path("o")});
  EXPECT_EQ(r.code, cli::kUsage);
  EXPECT_NE(r.err.find("BS9"), std::string::npos);
}

TEST_F(Cli, MissingScenarioIsUsageError) {
  EXPECT_EQ(invoke({"run", "--out", path("o")}).code, cli::kUsage);
  EXPECT_EQ(invoke({"run", path("absent.json")}).code, cli::kUsage);
}

TEST_F(Cli, ZeroLoadsCostNothing) {
  std::ofstream(path("z.csv")) << "user,slot,L_S,L_C,l_I,S_R,Tout,Tref,p_FIT,p_DR,p_T\n"
                                  "1,1,0,0,0,0,20,20,0,0,0\n1,2,0,0,0,0,20,20,0,0,0\n";
  std::ofstream(path("z.json")) << R"({"horizon": 2, "n_users": 1, "series_file": "z.csv",
    "users": [{"shift_slots": [1, 2], "tin0": 20.0, "ev": {"capacity": 0.0, "e0": 0.0, "window": [1, 2]}}]})";
  const auto r = invoke({"run", path("z.json"), "--mode", "BS1", "--out", path("o")});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_NE(r.out.find("total_cost: 0\n"), std::string::npos) << r.out;
}

TEST_F(Cli, RunWritesOutcomeAndSchedule) {
  const auto r = invoke({"run", "--synthetic", "2,4", "--seed", "3", "--out", path("o")});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_TRUE(fs::exists(path("o/run_TEM.json")));
  const auto rows = read_csv(path("o/run_TEM_schedule.csv"));
  ASSERT_FALSE(rows.empty());
  EXPECT_EQ(rows[0][0], "user");
  EXPECT_EQ(rows.size(), 1u + 2 * 4);
}

TEST_F(Cli, DistributedInProcessConverges) {
  const auto r = invoke({"run", "--synthetic", "3,4", "--distributed", "--transport", "inprocess", "--out", path("o")});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_NE(r.out.find("converged: true"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(path("o/run_TEM_inprocess.json")));
}

TEST_F(Cli, IterationLimitIsReported) {
  const auto r = invoke({"run", "--synthetic", "3,8", "--distributed", "--max-iter", "1", "--eps", "1e-12", "--out",
                      path("o")});
  EXPECT_EQ(r.code, cli::kInfeasible);
}

TEST_F(Cli, ChainTransportNeedsDistributed) {
  EXPECT_EQ(invoke({"run", "--synthetic", "2,4", "--transport", "chain", "--out", path("o")}).code, cli::kUsage);
  EXPECT_EQ(invoke({"run", "--synthetic", "2,4", "--mode", "BS1", "--distributed", "--out", path("o")}).code,
            cli::kUsage);
}

TEST_F(Cli, CompareKeepsOrdering) {
  const auto r = invoke({"compare", "--synthetic", "5,24", "--out", path("o")});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_NE(r.out.find("holds"), std::string::npos);
  EXPECT_NE(r.out.find("not asserted"), std::string::npos);
  std::ifstream in(path("o/compare.csv"));
  std::string schema;
  std::getline(in, schema);
  EXPECT_EQ(schema, std::string("#schema=") + cli::kCompareSchema);
  auto c = compare_costs(path("o/compare.csv"));
  ASSERT_EQ(c.size(), 4u);
  const double tol = 1e-6 * c["BS1"];
  EXPECT_LE(c["TEM"], c["BS2"] + tol);
  EXPECT_LE(c["BS2"], c["BS1"] + tol);
  EXPECT_LE(c["TEM"], c["BS3"] + tol);
  EXPECT_LE(c["BS3"], c["BS1"] + tol);
  auto saving = [&](const char* m) { return (c["BS1"] - c[m]) / c["BS1"]; };
  EXPECT_GE(saving("TEM"), std::max(saving("BS2"), saving("BS3")) - 1e-6);
  EXPECT_GE(std::max(saving("BS2"), saving("BS3")), -1e-6);
}

// A lone user has nobody to trade with, so without prices every mode collapses to the same problem.
TEST_F(Cli, ZeroPricesSingleUserAllModesEqual) {
  const std::string cfg = with_zero_prices(dir_, 1, 8);
  ASSERT_EQ(invoke({"compare", cfg, "--out", path("o")}).code, cli::kOk);
  auto c = compare_costs(path("o/compare.csv"));
  for (const char* m : {"BS2", "BS3", "TEM"}) EXPECT_NEAR(c[m], c["BS1"], 1e-6 * c["BS1"]) << m;
}

// With several users, free trades still move energy; only the vertical rewards vanish.
TEST_F(Cli, ZeroPricesRemoveVerticalRewards) {
  const std::string cfg = with_zero_prices(dir_, 5, 24);
  ASSERT_EQ(invoke({"compare", cfg, "--out", path("o")}).code, cli::kOk);
  auto c = compare_costs(path("o/compare.csv"));
  EXPECT_NEAR(c["BS2"], c["BS1"], 1e-6 * c["BS1"]);
  EXPECT_NEAR(c["TEM"], c["BS3"], 1e-6 * c["BS1"]);
}

TEST_F(Cli, ChainTooFewValidators) {
  const auto r = invoke({"chain", "--validators", "3"});
  EXPECT_EQ(r.code, cli::kUsage);
}

TEST_F(Cli, ChainModifiedCounts) {
  const auto r = invoke({"chain", "--validators", "4", "--blocks", "10", "--mode", "modified", "--out", path("c.csv")});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const auto rows = read_csv(path("c.csv"));
  ASSERT_EQ(rows.size(), 11u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i][0], "modified");
    EXPECT_EQ(rows[i][3], "15");
  }
}

TEST_F(Cli, ChainBothPrintsRatio) {
  const auto r = invoke({"chain", "--validators", "4", "--blocks", "3", "--mode", "both"});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_NE(r.out.find("ratio: 0.625"), std::string::npos) << r.out;
}

TEST_F(Cli, ChainSurvivesCrash) {
  const auto r =
      invoke({"chain", "--validators", "4", "--blocks", "10", "--faults", "crash@0:validator1", "--trace", path("t.csv")});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_NE(r.out.find("committed 10 blocks"), std::string::npos) << r.out;
  std::ifstream in(path("t.csv"));
  std::string first;
  std::getline(in, first);
  EXPECT_EQ(first, "#schema=gridledger.trace/1");
}

TEST_F(Cli, ChainLivenessTimeout) {
  const auto r = invoke({"chain", "--validators", "4", "--blocks", "3", "--faults", "crash@0:validator1,crash@0:validator2"});
  EXPECT_EQ(r.code, cli::kLiveness);
}

TEST_F(Cli, SynthWritesLoadableScenario) {
  ASSERT_EQ(invoke({"synth", "--synthetic", "3,6", "--seed", "9", "--out", path("s")}).code, cli::kOk);
  const auto s = scenario::load_scenario(path("s/scenario.json"));
  EXPECT_EQ(s, scenario::generate_synthetic(9, 3, 6));
}

TEST(ParseFaults, CrashAndPartition) {
  const auto f = cli::parse_faults("crash@2s:validator1,partition@10ms-200ms:2/0/1");
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(f[0].first, 1u);
  EXPECT_EQ(std::get<netsim::CrashAt>(f[0].second).time_us, 2'000'000);
  EXPECT_EQ(f[1].first, 2u);
  const auto& p = std::get<netsim::Partition>(f[1].second);
  EXPECT_EQ(p.start_us, 10'000);
  EXPECT_EQ(p.end_us, 200'000);
  EXPECT_EQ(p.peers, (std::vector<chain::NodeId>{0, 1}));
  EXPECT_EQ(std::get<netsim::CrashAt>(cli::parse_faults("crash@5:3")[0].second).time_us, 5'000);
  EXPECT_EQ(std::get<netsim::CrashAt>(cli::parse_faults("crash@7us:3")[0].second).time_us, 7);
}

TEST(ParseFaults, RejectsGarbage) {
  for (const char* bad : {"crash", "crash@:1", "explode@1:1", "partition@5:1/2", "partition@9-3:1/2", "crash@1:validatorx"})
    EXPECT_THROW(cli::parse_faults(bad), std::invalid_argument) << bad;
}

TEST(ParseSynthetic, Pairs) {
  EXPECT_EQ(cli::parse_synthetic("5,24"), (std::pair<int, int>{5, 24}));
  EXPECT_THROW(cli::parse_synthetic("5"), std::invalid_argument);
  EXPECT_THROW(cli::parse_synthetic("0,24"), std::invalid_argument);
  EXPECT_THROW(cli::parse_synthetic("a,b"), std::invalid_argument);
}

TEST(Seed, EnvironmentOverrides) {
  ::unsetenv("GRIDLEDGER_SEED");
  EXPECT_EQ(cli::effective_seed(11), 11u);
  ::setenv("GRIDLEDGER_SEED", "42", 1);
  EXPECT_EQ(cli::effective_seed(11), 42u);
  ::unsetenv("GRIDLEDGER_SEED");
}
