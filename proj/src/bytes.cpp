#include "upm/bytes.hpp"

#include <stdexcept>

namespace upm {

std::string to_hex(ByteView b) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(b.size() * 2);
  for (auto v : b) {
    out.push_back(digits[v >> 4]);
    out.push_back(digits[v & 0xF]);
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw std::invalid_argument("bad hex digit");
  };
  if (hex.size() % 2 != 0) throw std::invalid_argument("odd hex length");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
  return out;
}

ByteWriter& ByteWriter::str16(std::string_view s) {
  if (s.size() > 0xFFFF) throw std::length_error("string exceeds 65535 bytes");
  u16(static_cast<std::uint16_t>(s.size()));
  return raw(s);
}

ByteWriter& ByteWriter::blob32(ByteView b) {
  if (b.size() > 0xFFFFFFFFull) throw std::length_error("blob exceeds 2^32-1 bytes");
  u32(static_cast<std::uint32_t>(b.size()));
  return raw(b);
}

std::uint8_t ByteReader::u8() {
  if (remaining() < 1) throw std::out_of_range("byte reader underrun");
  return buf_[pos_++];
}

std::uint64_t ByteReader::le(int n) {
  if (remaining() < static_cast<std::size_t>(n)) throw std::out_of_range("byte reader underrun");
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= std::uint64_t{buf_[pos_ + i]} << (8 * i);
  pos_ += n;
  return v;
}

ByteView ByteReader::raw(std::size_t n) {
  if (remaining() < n) throw std::out_of_range("byte reader underrun");
  auto out = buf_.subspan(pos_, n);
  pos_ += n;
  return out;
}

std::string ByteReader::str16() {
  const auto n = u16();
  return to_string(raw(n));
}

Bytes ByteReader::blob32() {
  const auto n = u32();
  auto v = raw(n);
  return Bytes(v.begin(), v.end());
}

}  // namespace upm
