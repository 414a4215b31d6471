#pragma once

// Canonical little-endian encoding shared by every ledger object.
//
//   u8/u32/u64/i64   fixed width, little-endian
//   f64              IEEE-754 binary64 bit pattern as u64
//   array            u32 element count, then the elements
//   bytes            u32 length, then raw bytes

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gridledger::chain {

using Bytes = std::vector<std::uint8_t>;

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v);
  void f64_array(std::span<const double> v);
  void bytes(std::span<const std::uint8_t> v);
  void raw(std::span<const std::uint8_t> v) { out_.insert(out_.end(), v.begin(), v.end()); }

  const Bytes& data() const { return out_; }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64();
  std::vector<double> f64_array();
  Bytes bytes();
  std::span<const std::uint8_t> raw(std::size_t n);

  std::size_t remaining() const { return in_.size() - pos_; }
  std::size_t position() const { return pos_; }
  void expect_end() const;

 private:
  void need(std::size_t n) const;

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::string to_hex(std::span<const std::uint8_t> bytes);

}  // namespace gridledger::chain
