#include <cstdlib>
#include <string>

#include "upm/simd/wordscan.hpp"

namespace upm::simd {

namespace {

inline bool is_space(std::uint8_t c) { return c == 0x20 || (c >= 0x09 && c <= 0x0D); }

}  // namespace

std::string_view to_string(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
    case Isa::Neon: return "neon";
  }
  return "scalar";
}

std::uint64_t count_word_starts_scalar(ByteView s, bool prev_is_word) {
  std::uint64_t starts = 0;
  for (auto c : s) {
    const bool word = !is_space(c);
    starts += word && !prev_is_word;
    prev_is_word = word;
  }
  return starts;
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return true;
    case Isa::Avx2:
#if defined(__x86_64__) || defined(__i386__)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("popcnt");
#else
      return false;
#endif
    case Isa::Neon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Isa active_isa() {
  static const Isa chosen = [] {
    if (const char* env = std::getenv("UPM_SIMD"); env != nullptr && std::string(env) == "scalar") return Isa::Scalar;
    for (Isa candidate : {Isa::Avx2, Isa::Neon})
      if (isa_supported(candidate)) return candidate;
    return Isa::Scalar;
  }();
  return chosen;
}

std::uint64_t count_word_starts(Isa isa, ByteView s, bool prev_is_word) {
  switch (isa) {
#if defined(__x86_64__) || defined(__i386__)
    case Isa::Avx2: return count_word_starts_avx2(s, prev_is_word);
#endif
#if defined(__aarch64__)
    case Isa::Neon: return count_word_starts_neon(s, prev_is_word);
#endif
    default: return count_word_starts_scalar(s, prev_is_word);
  }
}

std::uint64_t count_word_starts(ByteView s, bool prev_is_word) {
  return count_word_starts(active_isa(), s, prev_is_word);
}

}  // namespace upm::simd
