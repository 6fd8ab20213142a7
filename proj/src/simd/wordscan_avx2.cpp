#if defined(__x86_64__) || defined(__i386__)

#include <immintrin.h>

#include "upm/simd/wordscan.hpp"

namespace upm::simd {

namespace {

// 32-bit mask, bit i set when byte i is whitespace
__attribute__((target("avx2"))) inline std::uint32_t space_mask(__m256i v) {
  const __m256i is_blank = _mm256_cmpeq_epi8(v, _mm256_set1_epi8(0x20));
  // 0x09..0x0D  <=>  (v - 9) <= 4 unsigned
  const __m256i shifted = _mm256_sub_epi8(v, _mm256_set1_epi8(0x09));
  const __m256i in_range = _mm256_cmpeq_epi8(_mm256_min_epu8(shifted, _mm256_set1_epi8(4)), shifted);
  return static_cast<std::uint32_t>(_mm256_movemask_epi8(_mm256_or_si256(is_blank, in_range)));
}

}  // namespace

__attribute__((target("avx2,popcnt"))) std::uint64_t count_word_starts_avx2(ByteView s, bool prev_is_word) {
  std::uint64_t starts = 0;
  std::uint32_t carry = prev_is_word ? 1u : 0u;
  std::size_t i = 0;
  for (; i + 32 <= s.size(); i += 32) {
    const __m256i v = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(s.data() + i));
    const std::uint32_t word = ~space_mask(v);
    const std::uint32_t prev = (word << 1) | carry;
    starts += static_cast<std::uint64_t>(_mm_popcnt_u32(word & ~prev));
    carry = word >> 31;
  }
  return starts + count_word_starts_scalar(s.subspan(i), carry != 0);
}

}  // namespace upm::simd

#endif
