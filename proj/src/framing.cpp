#include "upm/framing.hpp"

#include <zlib.h>

#include <algorithm>
#include <stdexcept>

#include "upm/core_model.hpp"

namespace upm {

bool is_valid_frame_kind(std::uint8_t v) { return v >= 1 && v <= 6; }

std::string_view to_string(FrameKind k) {
  switch (k) {
    case FrameKind::Hello: return "HELLO";
    case FrameKind::Request: return "REQUEST";
    case FrameKind::Response: return "RESPONSE";
    case FrameKind::Error: return "ERROR";
    case FrameKind::Control: return "CONTROL";
    case FrameKind::Bye: return "BYE";
  }
  return "?";
}

std::uint32_t crc32_ieee(ByteView data) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in bounded pieces
  constexpr std::size_t kStep = 1u << 30;
  for (std::size_t off = 0; off < data.size(); off += kStep) {
    const auto n = std::min(kStep, data.size() - off);
    crc = ::crc32(crc, data.data() + off, static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(crc);
}

Bytes encode_frame(const Frame& f) {
  if (f.device_id.size() > 0xFFFF) throw std::length_error("device_id exceeds 65535 bytes");
  if (f.payload.size() > 0xFFFFFFFFull) throw std::length_error("payload exceeds 2^32-1 bytes");

  ByteWriter w(kMinFrameSize + f.device_id.size() + f.payload.size());
  w.raw(ByteView(kFrameMagic))
      .u8(f.version)
      .u8(static_cast<std::uint8_t>(f.kind))
      .u64(f.job_id)
      .str16(f.device_id)
      .blob32(f.payload);
  Bytes out = std::move(w).take();
  const auto crc = crc32_ieee(ByteView(out).subspan(kFrameMagic.size()));
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(crc >> (8 * i)));
  return out;
}

std::size_t frame_length_hint(ByteView b) {
  if (b.size() < kFramePrefixSize) return 0;
  const std::size_t dev_len = b[14] | (std::size_t{b[15]} << 8);
  const std::size_t len_at = kFramePrefixSize + dev_len;
  if (b.size() < len_at + 4) return 0;
  std::size_t payload_len = 0;
  for (int i = 0; i < 4; ++i) payload_len |= std::size_t{b[len_at + i]} << (8 * i);
  return len_at + 4 + payload_len + 4;
}

DecodedFrame decode_frame(ByteView b) {
  auto fail = [](const char* what) { throw Error(ErrorCode::ProtocolError, what); };

  const auto magic_seen = std::min(b.size(), kFrameMagic.size());
  if (!std::equal(b.begin(), b.begin() + magic_seen, kFrameMagic.begin())) fail("magic");
  const std::size_t total = frame_length_hint(b);
  if (total == 0 || b.size() < total) fail("truncated");

  const auto body = b.subspan(kFrameMagic.size(), total - kFrameMagic.size() - 4);
  ByteReader crc_reader(b.subspan(total - 4, 4));
  if (crc_reader.u32() != crc32_ieee(body)) fail("crc");

  ByteReader r(body);
  DecodedFrame out;
  out.frame.version = r.u8();
  const auto kind = r.u8();
  if (!is_valid_frame_kind(kind)) fail("kind");
  if (out.frame.version != kFrameVersion) fail("version");
  out.frame.kind = static_cast<FrameKind>(kind);
  out.frame.job_id = r.u64();
  out.frame.device_id = r.str16();
  out.frame.payload = r.blob32();
  out.consumed = total;
  return out;
}

}  // namespace upm
