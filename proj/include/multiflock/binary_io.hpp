#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "multiflock/errors.hpp"

namespace multiflock::binary {

/// FNV-1a 64-bit hash, used as the trailing checksum of binary containers.
inline std::uint64_t fnv1a(const std::uint8_t* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Little-endian append-only byte buffer.
class Writer {
public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int k = 0; k < 4; ++k) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void u64(std::uint64_t v) {
    for (int k = 0; k < 8; ++k) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    u64(bits);
  }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  /// Appends the checksum of everything written so far.
  void seal() { u64(fnv1a(buf_.data(), buf_.size())); }

  const std::vector<std::uint8_t>& data() const { return buf_; }

private:
  std::vector<std::uint8_t> buf_;
};

/// Bounds-checked reader; every failure names the byte offset.
class Reader {
public:
  Reader(const std::vector<std::uint8_t>& buf, std::string what) : buf_(buf), what_(std::move(what)) {}

  void need(std::size_t n) const {
    if (pos_ + n > buf_.size())
      throw FormatError(what_ + ": truncated at offset " + std::to_string(pos_) + " (need " +
                        std::to_string(n) + " more bytes, " + std::to_string(buf_.size() - pos_) +
                        " available)");
  }
  const std::uint8_t* take(std::size_t n) {
    need(n);
    const std::uint8_t* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint8_t u8() { return *take(1); }
  std::uint32_t u32() {
    const auto* p = take(4);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(p[k]) << (8 * k);
    return v;
  }
  std::uint64_t u64() {
    const auto* p = take(8);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(p[k]) << (8 * k);
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::string str(std::size_t max_len = 1 << 20) {
    const std::uint32_t n = u32();
    if (n > max_len) throw FormatError(what_ + ": string length " + std::to_string(n) + " too large at offset " + std::to_string(pos_ - 4));
    const auto* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  /// Verifies the trailing checksum and that nothing follows it.
  void expect_seal() {
    const std::size_t body = pos_;
    const std::uint64_t stored = u64();
    if (stored != fnv1a(buf_.data(), body))
      throw FormatError(what_ + ": checksum mismatch at offset " + std::to_string(body));
    if (pos_ != buf_.size())
      throw FormatError(what_ + ": " + std::to_string(buf_.size() - pos_) +
                        " trailing bytes after offset " + std::to_string(pos_));
  }
  std::size_t offset() const { return pos_; }
  const std::string& what() const { return what_; }

private:
  const std::vector<std::uint8_t>& buf_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& data);

}  // namespace multiflock::binary
