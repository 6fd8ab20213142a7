#include "upm/rational.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace upm {

namespace {

__int128 gcd128(__int128 a, __int128 b) {
  if (a < 0) a = -a;
  if (b < 0) b = -b;
  while (b != 0) {
    const __int128 t = a % b;
    a = b;
    b = t;
  }
  return a;
}

std::int64_t parse_int(std::string_view s) {
  std::int64_t v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || p != end || s.empty()) throw std::invalid_argument("bad rational: " + std::string(s));
  return v;
}

}  // namespace

Rational::Rational(std::int64_t num, std::int64_t den) {
  *this = from_wide(num, den);
}

Rational Rational::from_wide(__int128 num, __int128 den) {
  if (den == 0) throw std::domain_error("rational with zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const __int128 g = gcd128(num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
  constexpr __int128 lo = std::numeric_limits<std::int64_t>::min();
  constexpr __int128 hi = std::numeric_limits<std::int64_t>::max();
  if (num < lo || num > hi || den > hi) throw std::overflow_error("rational overflow");
  Rational r;
  r.num_ = static_cast<std::int64_t>(num);
  r.den_ = static_cast<std::int64_t>(den);
  return r;
}

Rational Rational::parse(std::string_view text) {
  if (auto slash = text.find('/'); slash != std::string_view::npos)
    return Rational(parse_int(text.substr(0, slash)), parse_int(text.substr(slash + 1)));
  std::string_view exp_part;
  if (auto e = text.find_first_of("eE"); e != std::string_view::npos) {
    exp_part = text.substr(e + 1);
    text = text.substr(0, e);
  }
  bool negative = false;
  std::string_view body = text;
  if (!body.empty() && (body[0] == '-' || body[0] == '+')) {
    negative = body[0] == '-';
    body.remove_prefix(1);
  }
  std::string digits;
  int scale = 0;
  if (auto dot = body.find('.'); dot != std::string_view::npos) {
    digits = std::string(body.substr(0, dot)) + std::string(body.substr(dot + 1));
    scale = static_cast<int>(body.size() - dot - 1);
  } else {
    digits = std::string(body);
  }
  if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos)
    throw std::invalid_argument("bad rational: " + std::string(text));
  int exponent = exp_part.empty() ? 0 : static_cast<int>(parse_int(exp_part));
  scale -= exponent;
  __int128 num = 0;
  for (char c : digits) {
    num = num * 10 + (c - '0');
    if (num > (__int128{1} << 100)) throw std::overflow_error("rational overflow");
  }
  __int128 den = 1;
  while (scale > 0) {
    den *= 10;
    --scale;
    if (den > (__int128{1} << 100)) throw std::overflow_error("rational overflow");
  }
  while (scale < 0) {
    num *= 10;
    ++scale;
    if (num > (__int128{1} << 100)) throw std::overflow_error("rational overflow");
  }
  return from_wide(negative ? -num : num, den);
}

Rational Rational::from_double(double v) {
  if (!std::isfinite(v)) throw std::invalid_argument("non-finite rational");
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::invalid_argument("unrepresentable double");
  return parse(std::string_view(buf, p - buf));
}

std::string Rational::to_string() const {
  if (den_ == 1) return std::to_string(num_);
  return std::to_string(num_) + "/" + std::to_string(den_);
}

std::string Rational::to_decimal(int max_places) const {
  __int128 scale = 1;
  for (int i = 0; i < max_places; ++i) scale *= 10;
  const bool negative = num_ < 0;
  __int128 n = negative ? -__int128{num_} : __int128{num_};
  __int128 scaled = (n * scale * 2 + den_) / (2 * __int128{den_});  // half-up
  const auto whole = static_cast<std::uint64_t>(scaled / scale);
  auto frac = static_cast<std::uint64_t>(scaled % scale);
  std::string out = (negative && scaled != 0 ? "-" : "") + std::to_string(whole);
  if (frac != 0) {
    std::string f = std::to_string(frac);
    f.insert(0, static_cast<std::size_t>(max_places) - f.size(), '0');
    while (!f.empty() && f.back() == '0') f.pop_back();
    out += "." + f;
  }
  return out;
}

Rational operator+(const Rational& a, const Rational& b) {
  return Rational::from_wide(__int128{a.num_} * b.den_ + __int128{b.num_} * a.den_, __int128{a.den_} * b.den_);
}

Rational operator-(const Rational& a, const Rational& b) {
  return Rational::from_wide(__int128{a.num_} * b.den_ - __int128{b.num_} * a.den_, __int128{a.den_} * b.den_);
}

Rational operator*(const Rational& a, const Rational& b) {
  return Rational::from_wide(__int128{a.num_} * b.num_, __int128{a.den_} * b.den_);
}

Rational operator/(const Rational& a, const Rational& b) {
  return Rational::from_wide(__int128{a.num_} * b.den_, __int128{a.den_} * b.num_);
}

std::strong_ordering operator<=>(const Rational& a, const Rational& b) {
  const __int128 l = __int128{a.num_} * b.den_;
  const __int128 r = __int128{b.num_} * a.den_;
  return l <=> r;
}

}  // namespace upm
