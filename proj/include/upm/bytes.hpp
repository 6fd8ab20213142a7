#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace upm {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

inline std::string to_string(ByteView b) {
  return std::string(reinterpret_cast<const char*>(b.data()), b.size());
}

inline ByteView as_view(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

std::string to_hex(ByteView b);
Bytes from_hex(std::string_view hex);  // throws std::invalid_argument

// Little-endian append-only writer used by every binary encoding in the runtime.
class ByteWriter {
public:
  ByteWriter() = default;
  explicit ByteWriter(std::size_t reserve) { buf_.reserve(reserve); }

  ByteWriter& u8(std::uint8_t v) {
    buf_.push_back(v);
    return *this;
  }
  ByteWriter& u16(std::uint16_t v) { return le(v, 2); }
  ByteWriter& u32(std::uint32_t v) { return le(v, 4); }
  ByteWriter& u64(std::uint64_t v) { return le(v, 8); }
  ByteWriter& i32(std::int32_t v) { return u32(static_cast<std::uint32_t>(v)); }
  ByteWriter& f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    return u64(bits);
  }
  ByteWriter& raw(ByteView b) {
    buf_.insert(buf_.end(), b.begin(), b.end());
    return *this;
  }
  ByteWriter& raw(std::string_view s) { return raw(as_view(s)); }
  // u16 length prefix + bytes
  ByteWriter& str16(std::string_view s);
  // u32 length prefix + bytes
  ByteWriter& blob32(ByteView b);

  const Bytes& bytes() const& { return buf_; }
  Bytes take() && { return std::move(buf_); }

private:
  ByteWriter& le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    return *this;
  }
  Bytes buf_;
};

// Bounds-checked reader; every accessor throws std::out_of_range on underrun.
class ByteReader {
public:
  explicit ByteReader(ByteView b) : buf_(b) {}

  std::uint8_t u8();
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  ByteView raw(std::size_t n);
  std::string str16();
  Bytes blob32();
  ByteView rest() { return raw(remaining()); }

  std::size_t remaining() const { return buf_.size() - pos_; }
  std::size_t position() const { return pos_; }

private:
  std::uint64_t le(int n);
  ByteView buf_;
  std::size_t pos_ = 0;
};

}  // namespace upm
