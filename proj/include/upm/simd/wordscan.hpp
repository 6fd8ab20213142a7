#pragma once

#include <cstdint>
#include <string_view>

#include "upm/bytes.hpp"

// Word-start scanning for the wordcount kernel. A word start is a
// non-whitespace byte whose predecessor is whitespace (or, for the first
// byte, when `prev_is_word` is false). Whitespace is the ASCII set
// {' ', '\t', '\n', '\v', '\f', '\r'}; those bytes never occur inside a
// multi-byte UTF-8 sequence, so byte-level scanning is exact on valid UTF-8.
namespace upm::simd {

enum class Isa { Scalar, Avx2, Neon };

std::string_view to_string(Isa isa);

// Reference implementation.
std::uint64_t count_word_starts_scalar(ByteView s, bool prev_is_word);
#if defined(__x86_64__) || defined(__i386__)
std::uint64_t count_word_starts_avx2(ByteView s, bool prev_is_word);
#endif
#if defined(__aarch64__)
std::uint64_t count_word_starts_neon(ByteView s, bool prev_is_word);
#endif

bool isa_supported(Isa isa);
// Best supported ISA, chosen once at first use. UPM_SIMD=scalar forces the reference path.
Isa active_isa();
std::uint64_t count_word_starts(ByteView s, bool prev_is_word);
std::uint64_t count_word_starts(Isa isa, ByteView s, bool prev_is_word);

}  // namespace upm::simd
