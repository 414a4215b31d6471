#pragma once

// Algorithm driver: users solve their ULT from a shared (e_hat, lambda, rho)
// snapshot, the coordination step updates the dual state, repeat.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gridledger/chain/consensus.hpp"
#include "gridledger/netsim/simulator.hpp"
#include "gridledger/qp.hpp"
#include "gridledger/scenario.hpp"
#include "gridledger/tem/admm.hpp"
#include "gridledger/tem/problem.hpp"

namespace gridledger::tem {

// One home's side of the loop. Keeps its previous ULT solution as a warm
// start, so the same agent fed the same snapshots returns bitwise-identical
// decisions regardless of how the snapshots were delivered.
class UserAgent {
 public:
  UserAgent(const scenario::Scenario& s, int n, double qp_tol = 1e-8);

  // Solves the ULT for `snapshot` and returns this user's trade slice
  // ((N-1) x T, peers in ascending order). Throws SolveError on failure.
  std::vector<double> solve(const DualState& snapshot);

  int user() const { return n_; }
  bool has_solution() const { return last_.has_value(); }
  const qp::QpSolution& last_solution() const { return *last_; }
  energy::Schedule schedule() const;

 private:
  const scenario::Scenario* s_;
  int n_;
  double tol_;
  std::optional<qp::QpSolution> last_;
};

enum class Transport { InProcess, Chain };

std::string_view to_string(Transport t);

struct ChainOptions {
  int validators = 4;
  netsim::NetConfig net;
  chain::ProtocolMode protocol = chain::ProtocolMode::Modified;
  std::int64_t block_interval_us = 2000;
  std::int64_t view_timeout_us = 200000;
  std::uint64_t event_budget = 20'000'000;
  // Node ids: validators 0..validators-1, then users in scenario order.
  std::vector<std::pair<chain::NodeId, netsim::Fault>> faults;
};

struct PrivacyAudit {
  std::uint64_t messages_scanned = 0;
  std::uint64_t transactions_scanned = 0;
  std::uint64_t vertical = 0, horizontal = 0, transfers = 0, sct = 0;
  std::uint64_t leaks = 0;              // private byte patterns found outside decision fields
  std::uint64_t schema_violations = 0;  // undecodable or disallowed transaction kinds
  std::vector<std::string> findings;

  bool clean() const { return leaks == 0 && schema_violations == 0; }
};

struct ChainRun {
  Outcome outcome;
  netsim::Trace trace;
  netsim::Metrics metrics;
  // Per iteration: digest of the contract's dual state (identical on every
  // validator) and of an off-chain replay of sct_step on the same decisions.
  std::vector<std::string> onchain_digests;
  std::vector<std::string> offchain_digests;
  bool digests_match = false;
  bool replicas_agree = false;  // every validator holds the same contract digest
  PrivacyAudit audit;
  std::uint64_t blocks = 0;
  std::int64_t finish_time_us = 0;
};

// Throws SolveError on ULT failure and netsim::LivenessTimeout when the
// chain stalls.
Outcome run_distributed(const scenario::Scenario& s, const AdmmParams& params,
                        Transport transport = Transport::InProcess, double qp_tol = 1e-8);

ChainRun run_distributed_chain(const scenario::Scenario& s, const AdmmParams& params, const ChainOptions& options,
                               double qp_tol = 1e-8);

// Scans transaction-carrying traffic for the private inputs of `s` encoded
// as IEEE doubles. Decision arrays (trade slices, feed-in and DR amounts) are
// masked before the scan; every other byte must be free of private values.
PrivacyAudit audit_privacy(const scenario::Scenario& s, const std::vector<chain::Bytes>& wire_messages);

}  // namespace gridledger::tem
