#include "gridledger/chain/crypto.hpp"

#include <algorithm>

#include <openssl/sha.h>

namespace gridledger::chain {

Digest sha256(std::span<const std::uint8_t> data) {
  Digest d;
  SHA256(data.data(), data.size(), d.data());
  return d;
}

std::string to_hex(const Digest& d) { return to_hex(std::span<const std::uint8_t>(d)); }

Digest merkle_root(std::span<const Digest> leaves) {
  if (leaves.empty()) return sha256({});
  std::vector<Digest> level(leaves.begin(), leaves.end());
  while (level.size() > 1) {
    std::vector<Digest> next;
    for (std::size_t i = 0; i < level.size(); i += 2) {
      const Digest& a = level[i];
      const Digest& b = i + 1 < level.size() ? level[i + 1] : level[i];
      std::array<std::uint8_t, 64> buf;
      std::copy(a.begin(), a.end(), buf.begin());
      std::copy(b.begin(), b.end(), buf.begin() + 32);
      next.push_back(sha256(buf));
    }
    level = std::move(next);
  }
  return level.front();
}

namespace {

Digest key_of(NodeId id) {
  ByteWriter w;
  static constexpr std::string_view kTag = "gridledger-key";
  w.raw({reinterpret_cast<const std::uint8_t*>(kTag.data()), kTag.size()});
  w.u32(id);
  return sha256(w.data());
}

}  // namespace

Signature MockSigner::sign(NodeId signer, const Digest& message) const {
  const Digest key = key_of(signer);
  std::array<std::uint8_t, 64> buf;
  std::copy(key.begin(), key.end(), buf.begin());
  std::copy(message.begin(), message.end(), buf.begin() + 32);
  const Digest tag = sha256(buf);
  return Signature(tag.begin(), tag.end());
}

bool MockSigner::verify(NodeId signer, const Digest& message, std::span<const std::uint8_t> sig) const {
  const Signature expect = sign(signer, message);
  return sig.size() == expect.size() && std::equal(sig.begin(), sig.end(), expect.begin());
}

const Signer& default_signer() {
  static const MockSigner signer;
  return signer;
}

}  // namespace gridledger::chain
