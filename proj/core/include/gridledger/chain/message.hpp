#pragma once

// Protocol messages exchanged by validators and normal users.
//
// Common prefix: type u8, from u32, to u32, height u64, view u64. The rest
// depends on the type:
//
//   ClientTx           u32 count, transactions
//   PrePrepare         block, leader signature, u32 count, view-change votes
//   PrepareVote        block digest, signature
//   CommitVote         block digest, signature
//   AggregatedPrepare  proof
//   AggregatedCommit   proof
//   Timeout            timer kind u8
//   ViewChange         view-change vote, u8 has-block, [block]
//   SyncRequest        (prefix only; height is the first missing height)
//   SyncResponse       u32 count, blocks
//   BlockAnnounce      u32 count, blocks

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "gridledger/chain/block.hpp"

namespace gridledger::chain {

enum class MsgType : std::uint8_t {
  ClientTx = 1,
  PrePrepare,
  PrepareVote,
  AggregatedPrepare,
  CommitVote,
  AggregatedCommit,
  Timeout,
  ViewChange,
  SyncRequest,
  SyncResponse,
  BlockAnnounce,
};

inline constexpr int kNumMsgTypes = 11;

std::string_view to_string(MsgType t);

// PrePrepare through AggregatedCommit, plus ViewChange.
bool is_consensus(MsgType t);

enum class TimerKind : std::uint8_t { View = 1, Propose, Resend };

// A validator's request to move height `height` to view `view`, carrying
// its highest prepare certificate for that height, if any.
struct ViewChangeVote {
  NodeId validator = 0;
  std::uint64_t view = 0;
  Signature signature;
  std::optional<ConsensusProof> lock;

  bool operator==(const ViewChangeVote&) const = default;
};

Digest view_change_message(std::uint64_t height, std::uint64_t view);

struct Message {
  MsgType type = MsgType::ClientTx;
  NodeId from = 0;
  NodeId to = 0;
  std::uint64_t height = 0;
  std::uint64_t view = 0;

  std::vector<Transaction> txs;              // ClientTx
  std::optional<Block> block;                // PrePrepare, ViewChange (locked block)
  Digest digest{};                           // votes
  Signature signature;                       // votes, PrePrepare
  std::optional<ConsensusProof> proof;       // aggregated votes
  std::vector<ViewChangeVote> view_changes;  // PrePrepare justification
  std::optional<ViewChangeVote> view_change; // ViewChange
  std::vector<Block> blocks;                 // SyncResponse, BlockAnnounce
  TimerKind timer = TimerKind::View;         // Timeout

  bool operator==(const Message&) const = default;
};

void encode_message(ByteWriter& w, const Message& m);
Bytes encode_message(const Message& m);
Message decode_message(std::span<const std::uint8_t> bytes);

// Transactions carried by the message (client submissions, proposals and
// shipped blocks).
std::vector<const Transaction*> carried_transactions(const Message& m);

}  // namespace gridledger::chain
