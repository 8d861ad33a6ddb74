#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <type_traits>

#include "jepa3d/errors.hpp"

namespace jepa3d {

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Little-endian append-only byte buffer.
class ByteWriter {
 public:
  template <class V>
  void put(V v) {
    static_assert(std::is_trivially_copyable_v<V>);
    buf_.append(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void put_bytes(std::string_view s) { buf_.append(s.data(), s.size()); }
  void put_string(std::string_view s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    put_bytes(s);
  }
  std::size_t size() const { return buf_.size(); }
  std::string& bytes() { return buf_; }

 private:
  std::string buf_;
};

// Bounds-checked reader; every failure reports the byte offset.
class ByteReader {
 public:
  ByteReader(std::string_view bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  template <class V>
  V get(const char* what) {
    need(sizeof(V), what);
    V v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  std::string_view get_bytes(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string get_string(const char* what) {
    const auto n = get<std::uint32_t>(what);
    return std::string(get_bytes(n, what));
  }
  std::size_t pos() const { return pos_; }
  void seek(std::size_t p) { pos_ = p; }
  std::size_t size() const { return bytes_.size(); }
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(source_, ParseError::Unit::byte, pos_, what); }

 private:
  void need(std::size_t n, const char* what) {
    if (pos_ + n > bytes_.size()) fail(std::string("truncated: expected ") + what);
  }
  std::string_view bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

// Splits off and verifies the trailing 8-byte checksum; returns the body.
inline std::string_view verify_checksum(std::string_view bytes, const std::string& source) {
  if (bytes.size() < 8)
    throw DataError(source + ": integrity check failed: file too short for its checksum");
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  auto body = bytes.substr(0, bytes.size() - 8);
  if (fnv1a64(body) != stored)
    throw DataError(source + ": integrity check failed: checksum mismatch (file truncated or corrupted)");
  return body;
}

}  // namespace jepa3d
