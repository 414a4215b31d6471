#pragma once

// PBFT-style replica state machine.
//
// Modified mode: followers send PrepareVote and CommitVote to the leader
// only; the leader broadcasts one AggregatedPrepare and one
// AggregatedCommit per block once it holds 2f+1 matching votes. Classic
// mode: every replica broadcasts its prepare and commit votes and each
// replica counts quorums itself.
//
// Safety across view changes: a replica that has seen a prepare quorum
// for a block locks on it and only votes for that block at this height,
// unless the proposal is justified by a newer prepare certificate. A new
// leader re-proposes the block of the highest certificate reported in
// the 2f+1 ViewChange votes that justify its view.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string_view>
#include <utility>
#include <vector>

#include "gridledger/chain/block.hpp"
#include "gridledger/chain/contract.hpp"
#include "gridledger/chain/message.hpp"

namespace gridledger::chain {

enum class ProtocolMode { Modified, Classic };
enum class Role { Validator, Normal };
enum class Phase { Idle, PrePrepared, Prepared, Committed };

std::string_view to_string(ProtocolMode m);
std::string_view to_string(Phase p);

struct ConsensusConfig {
  std::vector<NodeId> validators;
  std::vector<NodeId> users;  // normal nodes that receive committed blocks
  ProtocolMode mode = ProtocolMode::Modified;
  std::int64_t block_interval_us = 2000;
  std::int64_t view_timeout_us = 200000;
  std::size_t max_block_txs = 1000;
  ContractConfig contract;
  const Signer* signer = &default_signer();

  std::size_t quorum() const { return quorum_size(validators.size()); }
  // Validators that forward committed blocks to user slot u.
  std::pair<NodeId, NodeId> announcers(std::size_t user_slot) const;
};

// Outgoing message; a Timeout addressed to the sender is a local timer
// firing `delay_us` after the current instant.
struct Outgoing {
  Message msg;
  std::int64_t delay_us = 0;
};

using Outbox = std::vector<Outgoing>;

struct NodeState {
  NodeId id = 0;
  Role role = Role::Validator;

  std::uint64_t height = 0;      // next height to commit == ledger.size()
  std::uint64_t view = 0;
  std::uint64_t view_start = 0;  // view at which this height began
  std::uint64_t vc_view = 0;     // highest view this replica asked to move to
  Phase phase = Phase::Idle;
  bool proposed = false;

  std::optional<Block> proposal;  // accepted proposal of the current view
  std::map<Digest, std::map<NodeId, Signature>> prepare_votes;  // current (height, view)
  std::map<Digest, std::map<NodeId, Signature>> commit_votes;
  bool prepare_aggregated = false;
  std::optional<ConsensusProof> lock;  // highest prepare certificate at this height
  std::optional<Block> locked_block;
  std::map<std::uint64_t, std::map<NodeId, ViewChangeVote>> view_changes;
  std::map<Digest, Block> known_blocks;  // blocks shipped with ViewChange messages

  std::vector<Transaction> mempool;
  std::set<Digest> mempool_ids;
  std::set<Digest> committed_txs;

  std::vector<Block> ledger;
  ContractState contract;

  std::vector<Message> pending;                // messages for a later height or view
  std::map<std::uint64_t, Block> pending_blocks;  // shipped blocks beyond the tip
  std::int64_t next_sync_us = 0;
  std::map<NodeId, std::int64_t> next_serve_us;

  std::uint64_t invalid_messages = 0;
  std::uint64_t views_changed = 0;

  const Block* tip() const { return ledger.empty() ? nullptr : &ledger.back(); }
};

NodeState make_node(NodeId id, Role role, const ConsensusConfig& cfg);

// Arms the initial timers. Call once before delivering messages.
Outbox start(NodeState& s, std::int64_t now_us, const ConsensusConfig& cfg);

// In-place transition.
Outbox step(NodeState& s, const Message& m, std::int64_t now_us, const ConsensusConfig& cfg);

// Pure form of step.
std::pair<NodeState, Outbox> handle_message(NodeState s, const Message& m, std::int64_t now_us,
                                            const ConsensusConfig& cfg);

}  // namespace gridledger::chain
