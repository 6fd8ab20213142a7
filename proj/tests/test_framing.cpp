#include "doctest.h"

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "support.hpp"
#include "upm/framing.hpp"

using namespace upm;

namespace {

Bytes golden_hex(const std::string& name) {
  std::istringstream in(testing::read_file(testing::golden(name)));
  Bytes out;
  std::string byte;
  while (in >> byte) out.push_back(static_cast<std::uint8_t>(std::stoul(byte, nullptr, 16)));
  return out;
}

std::string decode_error(ByteView b) {
  try {
    decode_frame(b);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ProtocolError);
    return e.detail();
  }
  return "ok";
}

Frame random_frame(std::mt19937_64& rng) {
  Frame f;
  f.kind = static_cast<FrameKind>(1 + rng() % 6);
  f.job_id = rng();
  const auto dev_len = rng() % 3 == 0 ? 0 : rng() % 40;
  for (std::size_t i = 0; i < dev_len; ++i) f.device_id.push_back(static_cast<char>('a' + rng() % 26));
  f.payload = testing::random_bytes(rng, rng() % 5 == 0 ? 0 : rng() % 3000);
  return f;
}

}  // namespace

TEST_CASE("REQUEST echo/hi encodes to the golden bytes") {
  Frame f;
  f.kind = FrameKind::Request;
  f.job_id = 1;
  f.device_id = "echo";
  f.payload = to_bytes("hi");
  const auto bytes = encode_frame(f);
  CHECK(to_hex(bytes) == to_hex(golden_hex("frame_request_echo_hi.hex")));
  CHECK(bytes.size() == 30);
}

TEST_CASE("empty BYE encodes to the golden bytes") {
  Frame f;
  f.kind = FrameKind::Bye;
  const auto bytes = encode_frame(f);
  CHECK(bytes.size() == kMinFrameSize);
  CHECK(to_hex(bytes) == to_hex(golden_hex("frame_bye_empty.hex")));
}

TEST_CASE("crc32 matches the bitwise reference") {
  std::mt19937_64 rng(11);
  CHECK(crc32_ieee(as_view("123456789")) == 0xCBF43926u);
  CHECK(oracle::crc32_bitwise(as_view("123456789")) == 0xCBF43926u);
  for (int i = 0; i < 200; ++i) {
    const auto b = testing::random_bytes(rng, rng() % 2000);
    CHECK(crc32_ieee(b) == oracle::crc32_bitwise(b));
  }
}

TEST_CASE("random frames round-trip") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const auto f = random_frame(rng);
    const auto bytes = encode_frame(f);
    const auto d = decode_frame(bytes);
    REQUIRE(d.frame == f);
    CHECK(d.consumed == bytes.size());
    CHECK(frame_length_hint(bytes) == bytes.size());
  }
}

TEST_CASE("decode rejects damaged input") {
  Frame f;
  f.device_id = "echo";
  f.payload = to_bytes("hi");
  const auto good = encode_frame(f);

  CHECK(decode_error(ByteView(good).first(10)) == "truncated");
  for (std::size_t n = 0; n < good.size(); ++n) CHECK(decode_error(ByteView(good).first(n)) == "truncated");

  auto bad_crc = good;
  bad_crc.back() ^= 0x01;
  CHECK(decode_error(bad_crc) == "crc");

  auto bad_magic = good;
  bad_magic[0] = 'X';
  CHECK(decode_error(bad_magic) == "magic");

  Frame odd = f;
  odd.kind = static_cast<FrameKind>(9);
  CHECK(decode_error(encode_frame(odd)) == "kind");
  odd.kind = static_cast<FrameKind>(0);
  CHECK(decode_error(encode_frame(odd)) == "kind");

  Frame v2 = f;
  v2.version = 2;
  CHECK(decode_error(encode_frame(v2)) == "version");
}

TEST_CASE("every single-bit flip in the body is caught") {
  Frame f;
  f.job_id = 77;
  f.device_id = "d";
  f.payload = to_bytes("payload");
  const auto good = encode_frame(f);
  for (std::size_t i = 4; i < good.size(); ++i) {
    for (int bit = 0; bit < 8; ++bit) {
      auto b = good;
      b[i] ^= static_cast<std::uint8_t>(1u << bit);
      std::string err;
      try {
        const auto d = decode_frame(b);
        err = d.frame == f ? "same" : "accepted";
      } catch (const Error& e) {
        err = e.detail();
      }
      CHECK(err != "same");
      CHECK(err != "accepted");
    }
  }
}

TEST_CASE("concatenated frames decode in order and leave trailing bytes alone") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const auto f1 = random_frame(rng), f2 = random_frame(rng);
    auto stream = encode_frame(f1);
    const auto first_len = stream.size();
    const auto second = encode_frame(f2);
    stream.insert(stream.end(), second.begin(), second.end());
    const auto d1 = decode_frame(stream);
    CHECK(d1.frame == f1);
    CHECK(d1.consumed == first_len);
    const auto d2 = decode_frame(ByteView(stream).subspan(d1.consumed));
    CHECK(d2.frame == f2);
    CHECK(d1.consumed + d2.consumed == stream.size());
    // decoding only the first frame's bytes gives the same answer
    CHECK(decode_frame(ByteView(stream).first(first_len)).frame == f1);
  }
}

TEST_CASE("oversized device id cannot be encoded") {
  Frame f;
  f.device_id.assign(70000, 'x');
  CHECK_THROWS_AS(encode_frame(f), std::length_error);
}
