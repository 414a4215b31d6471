#pragma once

// The two built-in contracts: the coordination contract (trade decisions in,
// auxiliary and multiplier update out) and the vertical-trading contract
// (feed-in and DR settlement against the utility account), plus a token
// ledger shared by both.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gridledger/chain/crypto.hpp"
#include "gridledger/chain/transaction.hpp"
#include "gridledger/scenario.hpp"
#include "gridledger/tem/admm.hpp"

namespace gridledger::chain {

inline constexpr NodeId kUtilityAccount = 0xFFFFFFFFu;
inline constexpr double kMicroTokens = 1e6;

struct ContractConfig {
  std::vector<NodeId> users;       // account of user n; HorizontalTrade.user indexes this list
  std::vector<NodeId> validators;  // allowed SctCompute senders
  int horizon = 0;
  tem::AdmmParams admm;
  // Published signals.
  std::vector<double> feed_in_price;
  std::vector<double> dr_price;
  std::vector<double> trading_price;
  std::vector<int> dr_slots;
  std::int64_t initial_user_balance = 0;
  std::int64_t initial_utility_balance = 1'000'000'000'000'000;

  int num_users() const { return static_cast<int>(users.size()); }
};

// Accounts: users are `first_user_id + n`, validators are 0..num_validators-1.
ContractConfig make_contract_config(const scenario::Scenario& s, const tem::AdmmParams& admm, int num_validators,
                                    NodeId first_user_id);

enum class TxReject {
  BadSignature,
  BadAmount,
  UnknownSender,
  StaleNonce,
  StaleIteration,
  Duplicate,       // second decision for the same iteration, or second vertical trade
  BadDimensions,
  Incomplete,      // SctCompute before every user has submitted
  Closed,          // coordination already finished
  InsufficientBalance,
};

inline constexpr int kNumTxRejects = 10;

std::string_view to_string(TxReject r);

struct SctRecord {
  int k = 0;
  double rho = 0.0;
  double primal_residual = 0.0;
  double dual_change = 0.0;
  std::string digest;  // tem::dual_digest after k and rho advanced
};

struct ContractState {
  tem::DualState dual;
  std::vector<std::uint8_t> submitted;  // user n has written e for dual.k
  bool closed = false;
  bool converged = false;
  std::vector<SctRecord> history;

  std::map<NodeId, std::int64_t> balances;
  std::map<NodeId, std::uint64_t> last_nonce;
  std::vector<std::vector<double>> feed_in;  // recorded vertical trades, empty until submitted
  std::vector<std::vector<double>> demand_response;

  std::uint64_t applied = 0;
  std::vector<std::uint64_t> rejected = std::vector<std::uint64_t>(kNumTxRejects, 0);

  static ContractState initial(const ContractConfig& cfg);

  bool complete() const;  // every user submitted for dual.k
  std::int64_t total_balance() const;
  std::uint64_t total_rejected() const;
};

// Applies one transaction in place. Returns the rejection reason, leaving
// the state untouched (apart from the rejection counter), or nullopt.
std::optional<TxReject> apply_transaction(ContractState& cs, const Transaction& tx, const ContractConfig& cfg,
                                          const Signer& signer = default_signer());

ContractState execute_transactions(ContractState cs, std::span<const Transaction> txs, const ContractConfig& cfg,
                                   const Signer& signer = default_signer());

// Feed-in plus in-window DR reward in micro-tokens.
std::int64_t vertical_reward(const VerticalTrade& v, const ContractConfig& cfg);

// Read path: the (e_hat, lambda, rho, k) a user needs for its next solve.
const tem::DualState& reveal(const ContractState& cs);

Bytes encode_contract_state(const ContractState& cs);
Digest state_digest(const ContractState& cs);

}  // namespace gridledger::chain
