#if defined(__aarch64__)

#include <arm_neon.h>

#include "upm/simd/wordscan.hpp"

namespace upm::simd {

// 16 bytes per step; word flags are narrowed to a 64-bit nibble mask.
std::uint64_t count_word_starts_neon(ByteView s, bool prev_is_word) {
  std::uint64_t starts = 0;
  bool prev = prev_is_word;
  std::size_t i = 0;
  for (; i + 16 <= s.size(); i += 16) {
    const uint8x16_t v = vld1q_u8(s.data() + i);
    const uint8x16_t blank = vceqq_u8(v, vdupq_n_u8(0x20));
    const uint8x16_t ctl = vcleq_u8(vsubq_u8(v, vdupq_n_u8(0x09)), vdupq_n_u8(4));
    const uint8x16_t word = vmvnq_u8(vorrq_u8(blank, ctl));
    // predecessor flags: shift in the previous block's last flag
    const uint8x16_t carry = vdupq_n_u8(prev ? 0xFF : 0x00);
    const uint8x16_t before = vextq_u8(carry, word, 15);
    const uint8x16_t start = vandq_u8(word, vmvnq_u8(before));
    starts += vaddvq_u8(vshrq_n_u8(start, 7));
    prev = vgetq_lane_u8(word, 15) != 0;
  }
  return starts + count_word_starts_scalar(s.subspan(i), prev);
}

}  // namespace upm::simd

#endif
