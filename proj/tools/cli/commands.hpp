#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "gridledger/netsim/simulator.hpp"

namespace gridledger::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kInfeasible = 2, kLiveness = 3 };

inline constexpr const char* kCompareSchema = "gridledger.compare/1";
inline constexpr const char* kChainSchema = "gridledger.chain/1";

// Entry point shared by the executable and the tests.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// `crash@<time>:<node>` or `partition@<start>-<end>:<node>/<peer>[/<peer>...]`,
// comma separated. Nodes are `validator<i>` or a bare id; times take an
// optional `us`, `ms` (default) or `s` suffix. Throws std::invalid_argument.
std::vector<std::pair<chain::NodeId, netsim::Fault>> parse_faults(const std::string& text);

// "N,T" -> {N, T}; throws std::invalid_argument.
std::pair<int, int> parse_synthetic(const std::string& text);

// The seed from GRIDLEDGER_SEED when set, else `fallback`.
std::uint64_t effective_seed(std::uint64_t fallback);

}  // namespace gridledger::cli
