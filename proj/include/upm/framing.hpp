#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>

#include "upm/bytes.hpp"

namespace upm {

// Wire layout (all integers little-endian):
//
//   "UPM1" | version u8 | kind u8 | job_id u64 | dev_len u16 | device_id |
//   payload_len u32 | payload | crc32 u32
//
// The CRC-32 (IEEE 802.3, reflected, as used by zip/gzip) covers every byte
// between the magic and the CRC itself.
inline constexpr std::array<std::uint8_t, 4> kFrameMagic{0x55, 0x50, 0x4D, 0x31};
inline constexpr std::uint8_t kFrameVersion = 1;
// magic + version + kind + job_id + dev_len
inline constexpr std::size_t kFramePrefixSize = 4 + 1 + 1 + 8 + 2;
// smallest possible frame: empty device id and payload
inline constexpr std::size_t kMinFrameSize = kFramePrefixSize + 4 + 4;

enum class FrameKind : std::uint8_t {
  Hello = 1,
  Request = 2,
  Response = 3,
  Error = 4,
  Control = 5,
  Bye = 6,
};

bool is_valid_frame_kind(std::uint8_t v);
std::string_view to_string(FrameKind k);

struct Frame {
  std::uint8_t version = kFrameVersion;
  FrameKind kind = FrameKind::Request;
  std::uint64_t job_id = 0;
  std::string device_id;
  Bytes payload;

  friend bool operator==(const Frame&, const Frame&) = default;
};

std::uint32_t crc32_ieee(ByteView data);

// Throws std::length_error if device_id or payload exceed their length fields.
Bytes encode_frame(const Frame& f);

struct DecodedFrame {
  Frame frame;
  std::size_t consumed = 0;
};

// Decodes the first complete frame in `b`. Throws Error(PROTOCOL_ERROR) with
// detail "magic", "truncated", "crc", "kind" or "version". Bytes after the
// frame are never touched.
DecodedFrame decode_frame(ByteView b);

// Total frame length implied by a prefix, or 0 if the prefix is too short to tell.
std::size_t frame_length_hint(ByteView prefix);

}  // namespace upm
