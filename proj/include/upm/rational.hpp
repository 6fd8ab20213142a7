#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace upm {

// Exact rational over int64 (overflow throws) with a positive denominator,
// always kept in lowest terms. Used for speed factors, job costs and device loads so
// that scheduler tie-breaks never depend on rounding.
class Rational {
public:
  constexpr Rational() = default;
  Rational(std::int64_t num, std::int64_t den = 1);

  // Accepts "3", "-2", "1.25", "3/4".
  static Rational parse(std::string_view text);
  // Exact value of a finite double's shortest round-trip decimal form.
  static Rational from_double(double v);

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }

  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }
  // "3/4" style (or "3" when integral); round-trips through parse().
  std::string to_string() const;
  // Fixed decimal rendering, at most `max_places` fractional digits (half-up),
  // trailing zeros trimmed: 9/2 -> "4.5", 10/3 -> "3.333333", 5 -> "5".
  std::string to_decimal(int max_places = 6) const;

  friend Rational operator+(const Rational& a, const Rational& b);
  friend Rational operator-(const Rational& a, const Rational& b);
  friend Rational operator*(const Rational& a, const Rational& b);
  friend Rational operator/(const Rational& a, const Rational& b);
  Rational& operator+=(const Rational& o) { return *this = *this + o; }

  friend bool operator==(const Rational& a, const Rational& b) = default;
  friend std::strong_ordering operator<=>(const Rational& a, const Rational& b);

private:
  static Rational from_wide(__int128 num, __int128 den);
  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

}  // namespace upm
