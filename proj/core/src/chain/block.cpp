#include "gridledger/chain/block.hpp"

#include <algorithm>
#include <set>

namespace gridledger::chain {

namespace {

void digest_out(ByteWriter& w, const Digest& d) { w.raw(d); }

Digest digest_in(ByteReader& r) {
  Digest d;
  auto s = r.raw(32);
  std::copy(s.begin(), s.end(), d.begin());
  return d;
}

}  // namespace

void encode_header(ByteWriter& w, const BlockHeader& h) {
  w.u64(h.height);
  w.u64(h.view);
  digest_out(w, h.parent);
  w.i64(h.timestamp_us);
  digest_out(w, h.tx_root);
  w.u32(h.proposer);
}

BlockHeader decode_header(ByteReader& r) {
  BlockHeader h;
  h.height = r.u64();
  h.view = r.u64();
  h.parent = digest_in(r);
  h.timestamp_us = r.i64();
  h.tx_root = digest_in(r);
  h.proposer = r.u32();
  return h;
}

Digest block_digest(const BlockHeader& h) {
  ByteWriter w;
  encode_header(w, h);
  return sha256(w.data());
}

std::string_view to_string(VotePhase p) { return p == VotePhase::Prepare ? "prepare" : "commit"; }

void encode_proof(ByteWriter& w, const ConsensusProof& p) {
  w.u8(static_cast<std::uint8_t>(p.phase));
  w.u64(p.height);
  w.u64(p.view);
  digest_out(w, p.block);
  w.u32(p.quorum);
  w.u32(static_cast<std::uint32_t>(p.votes.size()));
  for (const auto& [id, sig] : p.votes) {
    w.u32(id);
    w.bytes(sig);
  }
}

ConsensusProof decode_proof(ByteReader& r) {
  ConsensusProof p;
  const std::uint8_t phase = r.u8();
  if (phase != 1 && phase != 2) throw DecodeError("unknown vote phase " + std::to_string(phase));
  p.phase = static_cast<VotePhase>(phase);
  p.height = r.u64();
  p.view = r.u64();
  p.block = digest_in(r);
  p.quorum = r.u32();
  const std::uint32_t n = r.u32();
  if (n > r.remaining() / 8) throw DecodeError("proof vote count exceeds buffer");
  for (std::uint32_t i = 0; i < n; ++i) {
    const NodeId id = r.u32();
    p.votes.emplace_back(id, r.bytes());
  }
  return p;
}

Digest vote_message(VotePhase phase, std::uint64_t height, std::uint64_t view, const Digest& block) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(phase));
  w.u64(height);
  w.u64(view);
  digest_out(w, block);
  return sha256(w.data());
}

Vote make_vote(VotePhase phase, std::uint64_t height, std::uint64_t view, const Digest& block, NodeId validator,
               const Signer& signer) {
  return {validator, block, signer.sign(validator, vote_message(phase, height, view, block))};
}

ConsensusProof aggregate_votes(std::span<const Vote> votes, std::size_t quorum, VotePhase phase,
                               std::uint64_t height, std::uint64_t view) {
  if (votes.empty()) throw AggregationError("no votes to aggregate");
  ConsensusProof p;
  p.phase = phase;
  p.height = height;
  p.view = view;
  p.block = votes.front().block;
  p.quorum = static_cast<std::uint32_t>(quorum);
  std::set<NodeId> seen;
  for (const Vote& v : votes) {
    if (v.block != p.block) throw AggregationError("votes reference different blocks");
    if (seen.insert(v.validator).second) p.votes.emplace_back(v.validator, v.signature);
  }
  if (p.votes.size() < quorum)
    throw AggregationError(std::to_string(p.votes.size()) + " distinct votes, quorum is " + std::to_string(quorum));
  std::sort(p.votes.begin(), p.votes.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return p;
}

bool verify_proof(const ConsensusProof& p, std::span<const NodeId> validators, const Signer& signer) {
  const std::size_t q = quorum_size(validators.size());
  if (p.quorum != q || p.votes.size() < q) return false;
  const Digest msg = vote_message(p.phase, p.height, p.view, p.block);
  std::set<NodeId> seen;
  for (const auto& [id, sig] : p.votes) {
    if (std::find(validators.begin(), validators.end(), id) == validators.end()) return false;
    if (!seen.insert(id).second) return false;
    if (!signer.verify(id, msg, sig)) return false;
  }
  return true;
}

void encode_block(ByteWriter& w, const Block& b) {
  encode_header(w, b.header);
  w.u32(static_cast<std::uint32_t>(b.txs.size()));
  for (const auto& tx : b.txs) encode_transaction(w, tx);
  encode_proof(w, b.proof);
}

Bytes encode_block(const Block& b) {
  ByteWriter w;
  encode_block(w, b);
  return w.take();
}

Block decode_block(ByteReader& r) {
  Block b;
  b.header = decode_header(r);
  const std::uint32_t n = r.u32();
  if (n > r.remaining() / kTxHeaderSize) throw DecodeError("transaction count exceeds buffer");
  for (std::uint32_t i = 0; i < n; ++i) b.txs.push_back(decode_transaction(r));
  b.proof = decode_proof(r);
  return b;
}

Block decode_block(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  Block b = decode_block(r);
  r.expect_end();
  return b;
}

Digest tx_root(std::span<const Transaction> txs) {
  std::vector<Digest> leaves;
  leaves.reserve(txs.size());
  for (const auto& tx : txs) leaves.push_back(tx_digest(tx));
  return merkle_root(leaves);
}

std::size_t fault_tolerance(std::size_t n) { return n == 0 ? 0 : (n - 1) / 3; }

std::size_t quorum_size(std::size_t n) { return 2 * fault_tolerance(n) + 1; }

NodeId leader_for(std::uint64_t height, std::span<const NodeId> validators, std::uint64_t view) {
  if (validators.empty()) throw std::invalid_argument("leader_for: empty validator set");
  return validators[(height + view) % validators.size()];
}

std::string_view to_string(BlockCheck c) {
  switch (c) {
    case BlockCheck::Ok: return "ok";
    case BlockCheck::HeightMismatch: return "height-mismatch";
    case BlockCheck::ParentMismatch: return "parent-mismatch";
    case BlockCheck::WrongProposer: return "wrong-proposer";
    case BlockCheck::TxRootMismatch: return "tx-root-mismatch";
    case BlockCheck::BadTransaction: return "bad-transaction";
    case BlockCheck::ProofMismatch: return "proof-mismatch";
    case BlockCheck::BadProof: return "bad-proof";
  }
  return "?";
}

BlockCheck check_proposal(const Block& b, const BlockHeader* parent, std::span<const NodeId> validators,
                          const Signer& signer) {
  const BlockHeader& h = b.header;
  if (parent ? h.height != parent->height + 1 : h.height != 0) return BlockCheck::HeightMismatch;
  if (h.parent != (parent ? block_digest(*parent) : Digest{})) return BlockCheck::ParentMismatch;
  if (validators.empty() || h.proposer != leader_for(h.height, validators, h.view)) return BlockCheck::WrongProposer;
  if (h.tx_root != tx_root(b.txs)) return BlockCheck::TxRootMismatch;
  for (const auto& tx : b.txs)
    if (!amounts_valid(tx) || !verify_signature(tx, signer)) return BlockCheck::BadTransaction;
  return BlockCheck::Ok;
}

BlockCheck verify_block(const Block& b, const BlockHeader* parent, std::span<const NodeId> validators,
                        const Signer& signer) {
  if (BlockCheck c = check_proposal(b, parent, validators, signer); c != BlockCheck::Ok) return c;
  const ConsensusProof& p = b.proof;
  if (p.phase != VotePhase::Commit || p.block != b.digest() || p.height != b.header.height)
    return BlockCheck::ProofMismatch;
  if (!verify_proof(p, validators, signer)) return BlockCheck::BadProof;
  return BlockCheck::Ok;
}

}  // namespace gridledger::chain
