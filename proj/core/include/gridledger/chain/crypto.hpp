#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gridledger/chain/bytes.hpp"

namespace gridledger::chain {

using NodeId = std::uint32_t;
using Digest = std::array<std::uint8_t, 32>;
using Signature = Bytes;

Digest sha256(std::span<const std::uint8_t> data);
std::string to_hex(const Digest& d);

// Binary Merkle root; an odd node is paired with itself. The empty list
// hashes to sha256 of nothing.
Digest merkle_root(std::span<const Digest> leaves);

class Signer {
 public:
  virtual ~Signer() = default;
  virtual Signature sign(NodeId signer, const Digest& message) const = 0;
  virtual bool verify(NodeId signer, const Digest& message, std::span<const std::uint8_t> sig) const = 0;
  virtual std::size_t signature_size() const = 0;
};

// Deterministic stand-in: the signature is sha256(key(signer) || message)
// with key(signer) = sha256("gridledger-key" || signer). Not secure; it
// keeps signatures bound to the signer and message and sized like a real
// 32-byte tag.
class MockSigner final : public Signer {
 public:
  Signature sign(NodeId signer, const Digest& message) const override;
  bool verify(NodeId signer, const Digest& message, std::span<const std::uint8_t> sig) const override;
  std::size_t signature_size() const override { return 32; }
};

const Signer& default_signer();

}  // namespace gridledger::chain
