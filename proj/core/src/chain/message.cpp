#include "gridledger/chain/message.hpp"

#include <algorithm>

namespace gridledger::chain {

namespace {

void encode_vc(ByteWriter& w, const ViewChangeVote& v) {
  w.u32(v.validator);
  w.u64(v.view);
  w.bytes(v.signature);
  w.u8(v.lock.has_value());
  if (v.lock) encode_proof(w, *v.lock);
}

ViewChangeVote decode_vc(ByteReader& r) {
  ViewChangeVote v;
  v.validator = r.u32();
  v.view = r.u64();
  v.signature = r.bytes();
  if (r.u8()) v.lock = decode_proof(r);
  return v;
}

void encode_blocks(ByteWriter& w, const std::vector<Block>& blocks) {
  w.u32(static_cast<std::uint32_t>(blocks.size()));
  for (const auto& b : blocks) encode_block(w, b);
}

std::vector<Block> decode_blocks(ByteReader& r) {
  const std::uint32_t n = r.u32();
  if (n > r.remaining()) throw DecodeError("block count exceeds buffer");
  std::vector<Block> out;
  for (std::uint32_t i = 0; i < n; ++i) out.push_back(decode_block(r));
  return out;
}

Digest read_digest(ByteReader& r) {
  Digest d;
  auto s = r.raw(32);
  std::copy(s.begin(), s.end(), d.begin());
  return d;
}

}  // namespace

std::string_view to_string(MsgType t) {
  switch (t) {
    case MsgType::ClientTx: return "ClientTx";
    case MsgType::PrePrepare: return "PrePrepare";
    case MsgType::PrepareVote: return "PrepareVote";
    case MsgType::AggregatedPrepare: return "AggregatedPrepare";
    case MsgType::CommitVote: return "CommitVote";
    case MsgType::AggregatedCommit: return "AggregatedCommit";
    case MsgType::Timeout: return "Timeout";
    case MsgType::ViewChange: return "ViewChange";
    case MsgType::SyncRequest: return "SyncRequest";
    case MsgType::SyncResponse: return "SyncResponse";
    case MsgType::BlockAnnounce: return "BlockAnnounce";
  }
  return "?";
}

bool is_consensus(MsgType t) {
  switch (t) {
    case MsgType::PrePrepare:
    case MsgType::PrepareVote:
    case MsgType::AggregatedPrepare:
    case MsgType::CommitVote:
    case MsgType::AggregatedCommit:
    case MsgType::ViewChange: return true;
    default: return false;
  }
}

Digest view_change_message(std::uint64_t height, std::uint64_t view) {
  ByteWriter w;
  w.u8(0x56);
  w.u64(height);
  w.u64(view);
  return sha256(w.data());
}

void encode_message(ByteWriter& w, const Message& m) {
  w.u8(static_cast<std::uint8_t>(m.type));
  w.u32(m.from);
  w.u32(m.to);
  w.u64(m.height);
  w.u64(m.view);
  switch (m.type) {
    case MsgType::ClientTx:
      w.u32(static_cast<std::uint32_t>(m.txs.size()));
      for (const auto& tx : m.txs) encode_transaction(w, tx);
      break;
    case MsgType::PrePrepare:
      encode_block(w, m.block.value());
      w.bytes(m.signature);
      w.u32(static_cast<std::uint32_t>(m.view_changes.size()));
      for (const auto& v : m.view_changes) encode_vc(w, v);
      break;
    case MsgType::PrepareVote:
    case MsgType::CommitVote:
      w.raw(m.digest);
      w.bytes(m.signature);
      break;
    case MsgType::AggregatedPrepare:
    case MsgType::AggregatedCommit: encode_proof(w, m.proof.value()); break;
    case MsgType::Timeout: w.u8(static_cast<std::uint8_t>(m.timer)); break;
    case MsgType::ViewChange:
      encode_vc(w, m.view_change.value());
      w.u8(m.block.has_value());
      if (m.block) encode_block(w, *m.block);
      break;
    case MsgType::SyncRequest: break;
    case MsgType::SyncResponse:
    case MsgType::BlockAnnounce: encode_blocks(w, m.blocks); break;
  }
}

Bytes encode_message(const Message& m) {
  ByteWriter w;
  encode_message(w, m);
  return w.take();
}

Message decode_message(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  Message m;
  const std::uint8_t type = r.u8();
  if (type < 1 || type > kNumMsgTypes) throw DecodeError("unknown message type " + std::to_string(type));
  m.type = static_cast<MsgType>(type);
  m.from = r.u32();
  m.to = r.u32();
  m.height = r.u64();
  m.view = r.u64();
  switch (m.type) {
    case MsgType::ClientTx: {
      const std::uint32_t n = r.u32();
      if (n > r.remaining() / kTxHeaderSize) throw DecodeError("transaction count exceeds buffer");
      for (std::uint32_t i = 0; i < n; ++i) m.txs.push_back(decode_transaction(r));
      break;
    }
    case MsgType::PrePrepare: {
      m.block = decode_block(r);
      m.signature = r.bytes();
      const std::uint32_t n = r.u32();
      if (n > r.remaining()) throw DecodeError("view-change count exceeds buffer");
      for (std::uint32_t i = 0; i < n; ++i) m.view_changes.push_back(decode_vc(r));
      break;
    }
    case MsgType::PrepareVote:
    case MsgType::CommitVote:
      m.digest = read_digest(r);
      m.signature = r.bytes();
      break;
    case MsgType::AggregatedPrepare:
    case MsgType::AggregatedCommit: m.proof = decode_proof(r); break;
    case MsgType::Timeout: {
      const std::uint8_t k = r.u8();
      if (k < 1 || k > 3) throw DecodeError("unknown timer kind");
      m.timer = static_cast<TimerKind>(k);
      break;
    }
    case MsgType::ViewChange:
      m.view_change = decode_vc(r);
      if (r.u8()) m.block = decode_block(r);
      break;
    case MsgType::SyncRequest: break;
    case MsgType::SyncResponse:
    case MsgType::BlockAnnounce: m.blocks = decode_blocks(r); break;
  }
  r.expect_end();
  return m;
}

std::vector<const Transaction*> carried_transactions(const Message& m) {
  std::vector<const Transaction*> out;
  for (const auto& tx : m.txs) out.push_back(&tx);
  if (m.block)
    for (const auto& tx : m.block->txs) out.push_back(&tx);
  for (const auto& b : m.blocks)
    for (const auto& tx : b.txs) out.push_back(&tx);
  return out;
}

}  // namespace gridledger::chain
