#pragma once

// Blocks, consensus proofs and leader rotation.
//
// Header layout: height u64, view u64, parent 32 B, timestamp_us i64,
// tx_root 32 B, proposer u32. The block digest is sha256 of the header, so
// the body is bound to it through tx_root.
//
// A proof is: phase u8, height u64, view u64, block digest 32 B, quorum u32,
// then a u32 count of (validator u32, signature bytes) pairs in ascending
// validator order.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "gridledger/chain/crypto.hpp"
#include "gridledger/chain/transaction.hpp"

namespace gridledger::chain {

struct BlockHeader {
  std::uint64_t height = 0;
  std::uint64_t view = 0;  // view in which the block was first proposed
  Digest parent{};         // all zero for the first block
  std::int64_t timestamp_us = 0;
  Digest tx_root{};
  NodeId proposer = 0;

  bool operator==(const BlockHeader&) const = default;
};

void encode_header(ByteWriter& w, const BlockHeader& h);
BlockHeader decode_header(ByteReader& r);
Digest block_digest(const BlockHeader& h);

enum class VotePhase : std::uint8_t { Prepare = 1, Commit = 2 };

std::string_view to_string(VotePhase p);

struct Vote {
  NodeId validator = 0;
  Digest block{};
  Signature signature;
};

struct ConsensusProof {
  VotePhase phase = VotePhase::Commit;
  std::uint64_t height = 0;
  std::uint64_t view = 0;  // view in which the quorum formed
  Digest block{};
  std::uint32_t quorum = 0;
  std::vector<std::pair<NodeId, Signature>> votes;

  bool operator==(const ConsensusProof&) const = default;
};

void encode_proof(ByteWriter& w, const ConsensusProof& p);
ConsensusProof decode_proof(ByteReader& r);

// What a validator signs when voting.
Digest vote_message(VotePhase phase, std::uint64_t height, std::uint64_t view, const Digest& block);

Vote make_vote(VotePhase phase, std::uint64_t height, std::uint64_t view, const Digest& block, NodeId validator,
               const Signer& signer = default_signer());

class AggregationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Deduplicates by validator (first vote wins). Throws AggregationError when
// the votes disagree on the block or fewer than `quorum` distinct validators
// remain.
ConsensusProof aggregate_votes(std::span<const Vote> votes, std::size_t quorum, VotePhase phase,
                               std::uint64_t height, std::uint64_t view);

// Distinct members of `validators`, valid signatures, count >= quorum_size.
bool verify_proof(const ConsensusProof& p, std::span<const NodeId> validators,
                  const Signer& signer = default_signer());

struct Block {
  BlockHeader header;
  std::vector<Transaction> txs;
  ConsensusProof proof;  // commit certificate, filled in once committed

  Digest digest() const { return block_digest(header); }
  bool operator==(const Block&) const = default;
};

void encode_block(ByteWriter& w, const Block& b);
Bytes encode_block(const Block& b);
Block decode_block(ByteReader& r);
Block decode_block(std::span<const std::uint8_t> bytes);

Digest tx_root(std::span<const Transaction> txs);

// f = floor((n - 1) / 3), quorum 2f + 1.
std::size_t fault_tolerance(std::size_t num_validators);
std::size_t quorum_size(std::size_t num_validators);

// validators[(height + view) mod |validators|]; throws on an empty set.
NodeId leader_for(std::uint64_t height, std::span<const NodeId> validators, std::uint64_t view = 0);

enum class BlockCheck {
  Ok,
  HeightMismatch,
  ParentMismatch,
  WrongProposer,
  TxRootMismatch,
  BadTransaction,
  ProofMismatch,  // proof names another block or height, or is not a commit proof
  BadProof,
};

std::string_view to_string(BlockCheck c);

// Structural checks shared by proposals and committed blocks: height and
// parent linkage against `parent` (nullptr for height 0), scheduled
// proposer, tx root and transaction signatures.
BlockCheck check_proposal(const Block& b, const BlockHeader* parent, std::span<const NodeId> validators,
                          const Signer& signer = default_signer());

// check_proposal plus a valid commit proof for this block.
BlockCheck verify_block(const Block& b, const BlockHeader* parent, std::span<const NodeId> validators,
                        const Signer& signer = default_signer());

}  // namespace gridledger::chain
