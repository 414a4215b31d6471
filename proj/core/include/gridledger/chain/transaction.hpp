#pragma once

// Ledger transactions.
//
// Layout (all integers little-endian):
//
//   field        width      notes
//   tag          u8         1 vertical, 2 horizontal, 3 transfer, 4 sct
//   nonce        u64
//   sender       u32
//   payload      ...        per kind, below
//   signature    u32 + n    length-prefixed
//
//   VerticalTrade    user u32, e_FIT array, e_DR array
//   HorizontalTrade  user u32, k u64, e_T slice array ((N-1) x T, peer-major)
//   TokenTransfer    from u32, to u32, amount i64 (micro-tokens)
//   SctCompute       k u64
//
// Arrays are a u32 count followed by IEEE doubles.

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "gridledger/chain/bytes.hpp"
#include "gridledger/chain/crypto.hpp"

namespace gridledger::chain {

enum class TxKind : std::uint8_t { VerticalTrade = 1, HorizontalTrade = 2, TokenTransfer = 3, SctCompute = 4 };

std::string_view to_string(TxKind k);

struct VerticalTrade {
  std::uint32_t user = 0;
  std::vector<double> feed_in;
  std::vector<double> demand_response;

  bool operator==(const VerticalTrade&) const = default;
};

struct HorizontalTrade {
  std::uint32_t user = 0;
  std::uint64_t k = 0;
  std::vector<double> slice;

  bool operator==(const HorizontalTrade&) const = default;
};

struct TokenTransfer {
  std::uint32_t from = 0;
  std::uint32_t to = 0;
  std::int64_t amount = 0;

  bool operator==(const TokenTransfer&) const = default;
};

// Closes iteration k of the coordination loop. Emitted by the block
// proposer once every user's iteration-k decision is on the ledger.
struct SctCompute {
  std::uint64_t k = 0;

  bool operator==(const SctCompute&) const = default;
};

using TxPayload = std::variant<VerticalTrade, HorizontalTrade, TokenTransfer, SctCompute>;

struct Transaction {
  TxPayload payload;
  std::uint64_t nonce = 0;
  NodeId sender = 0;
  Signature signature;

  TxKind kind() const;
  bool operator==(const Transaction&) const = default;
};

inline constexpr std::size_t kTxHeaderSize = 1 + 8 + 4;

Bytes encode_transaction(const Transaction& tx);
void encode_transaction(ByteWriter& w, const Transaction& tx);

// Throws DecodeError on truncation, trailing bytes or an unknown tag.
Transaction decode_transaction(std::span<const std::uint8_t> bytes);
Transaction decode_transaction(ByteReader& r);

// Everything except the signature; this is what gets signed.
Bytes signing_bytes(const Transaction& tx);
Digest signing_digest(const Transaction& tx);

// Identifier of the signed transaction.
Digest tx_digest(const Transaction& tx);

void sign(Transaction& tx, const Signer& signer = default_signer());
bool verify_signature(const Transaction& tx, const Signer& signer = default_signer());

// Every double is finite and, for transfers, the amount is positive.
bool amounts_valid(const Transaction& tx);

Transaction make_signed(TxPayload payload, NodeId sender, std::uint64_t nonce,
                        const Signer& signer = default_signer());

}  // namespace gridledger::chain
