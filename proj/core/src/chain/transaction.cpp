#include "gridledger/chain/transaction.hpp"

#include <cmath>

namespace gridledger::chain {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

void encode_unsigned(ByteWriter& w, const Transaction& tx) {
  w.u8(static_cast<std::uint8_t>(tx.kind()));
  w.u64(tx.nonce);
  w.u32(tx.sender);
  std::visit(Overloaded{
                 [&](const VerticalTrade& v) {
                   w.u32(v.user);
                   w.f64_array(v.feed_in);
                   w.f64_array(v.demand_response);
                 },
                 [&](const HorizontalTrade& h) {
                   w.u32(h.user);
                   w.u64(h.k);
                   w.f64_array(h.slice);
                 },
                 [&](const TokenTransfer& t) {
                   w.u32(t.from);
                   w.u32(t.to);
                   w.i64(t.amount);
                 },
                 [&](const SctCompute& s) { w.u64(s.k); },
             },
             tx.payload);
}

bool finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

std::string_view to_string(TxKind k) {
  switch (k) {
    case TxKind::VerticalTrade: return "vertical";
    case TxKind::HorizontalTrade: return "horizontal";
    case TxKind::TokenTransfer: return "transfer";
    case TxKind::SctCompute: return "sct";
  }
  return "?";
}

TxKind Transaction::kind() const {
  return static_cast<TxKind>(payload.index() + 1);
}

void encode_transaction(ByteWriter& w, const Transaction& tx) {
  encode_unsigned(w, tx);
  w.bytes(tx.signature);
}

Bytes encode_transaction(const Transaction& tx) {
  ByteWriter w;
  encode_transaction(w, tx);
  return w.take();
}

Transaction decode_transaction(ByteReader& r) {
  Transaction tx;
  const std::uint8_t tag = r.u8();
  tx.nonce = r.u64();
  tx.sender = r.u32();
  switch (tag) {
    case 1: {
      VerticalTrade v;
      v.user = r.u32();
      v.feed_in = r.f64_array();
      v.demand_response = r.f64_array();
      tx.payload = std::move(v);
      break;
    }
    case 2: {
      HorizontalTrade h;
      h.user = r.u32();
      h.k = r.u64();
      h.slice = r.f64_array();
      tx.payload = std::move(h);
      break;
    }
    case 3: {
      TokenTransfer t;
      t.from = r.u32();
      t.to = r.u32();
      t.amount = r.i64();
      tx.payload = t;
      break;
    }
    case 4: tx.payload = SctCompute{r.u64()}; break;
    default: throw DecodeError("unknown transaction tag " + std::to_string(tag));
  }
  tx.signature = r.bytes();
  return tx;
}

Transaction decode_transaction(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  Transaction tx = decode_transaction(r);
  r.expect_end();
  return tx;
}

Bytes signing_bytes(const Transaction& tx) {
  ByteWriter w;
  encode_unsigned(w, tx);
  return w.take();
}

Digest signing_digest(const Transaction& tx) { return sha256(signing_bytes(tx)); }

Digest tx_digest(const Transaction& tx) { return sha256(encode_transaction(tx)); }

void sign(Transaction& tx, const Signer& signer) { tx.signature = signer.sign(tx.sender, signing_digest(tx)); }

bool verify_signature(const Transaction& tx, const Signer& signer) {
  return signer.verify(tx.sender, signing_digest(tx), tx.signature);
}

bool amounts_valid(const Transaction& tx) {
  return std::visit(Overloaded{
                        [](const VerticalTrade& v) { return finite(v.feed_in) && finite(v.demand_response); },
                        [](const HorizontalTrade& h) { return finite(h.slice); },
                        [](const TokenTransfer& t) { return t.amount > 0; },
                        [](const SctCompute&) { return true; },
                    },
                    tx.payload);
}

Transaction make_signed(TxPayload payload, NodeId sender, std::uint64_t nonce, const Signer& signer) {
  Transaction tx;
  tx.payload = std::move(payload);
  tx.sender = sender;
  tx.nonce = nonce;
  sign(tx, signer);
  return tx;
}

}  // namespace gridledger::chain
