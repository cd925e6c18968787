#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <optional>
#include <string>
#include <string_view>

namespace barter {

// All model quantities (item values, LP coefficients, fractional matchings)
// are exact rationals. Doubles appear only in statistics display.
using Rat = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

inline bool is_integer(const Rat& r) { return denominator(r) == 1; }

inline BigInt floor_int(const Rat& r) {
  BigInt q = numerator(r) / denominator(r);
  if (numerator(r) < 0 && q * denominator(r) != numerator(r)) --q;
  return q;
}

inline BigInt ceil_int(const Rat& r) { return -floor_int(-r); }

inline Rat floor_rat(const Rat& r) { return Rat(floor_int(r)); }
inline Rat ceil_rat(const Rat& r) { return Rat(ceil_int(r)); }
inline Rat frac_part(const Rat& r) { return r - floor_rat(r); }

inline Rat abs_rat(const Rat& r) { return r < 0 ? Rat(-r) : r; }

inline double to_double(const Rat& r) { return r.convert_to<double>(); }

// Lowest-terms text form: "3", "-7/2". cpp_rational keeps canonical form.
inline std::string format_rational(const Rat& r) {
  if (is_integer(r)) return numerator(r).str();
  return numerator(r).str() + "/" + denominator(r).str();
}

// Accepts "12", "-3/4" and exact decimals like "0.25" or "-1.5".
// Never round-trips through binary floating point.
inline std::optional<Rat> try_parse_rational(std::string_view s) {
  if (s.empty()) return std::nullopt;
  bool neg = false;
  size_t i = 0;
  if (s[0] == '+' || s[0] == '-') {
    neg = s[0] == '-';
    i = 1;
  }
  auto digits = [](std::string_view t) {
    if (t.empty()) return false;
    for (char c : t)
      if (c < '0' || c > '9') return false;
    return true;
  };
  std::string_view body = s.substr(i);
  Rat value;
  if (auto slash = body.find('/'); slash != std::string_view::npos) {
    std::string_view num = body.substr(0, slash), den = body.substr(slash + 1);
    if (!digits(num) || !digits(den)) return std::nullopt;
    BigInt d{std::string(den)};
    if (d == 0) return std::nullopt;
    value = Rat(BigInt{std::string(num)}, d);
  } else if (auto dot = body.find('.'); dot != std::string_view::npos) {
    std::string_view whole = body.substr(0, dot), fracpart = body.substr(dot + 1);
    if (whole.empty() && fracpart.empty()) return std::nullopt;
    if ((!whole.empty() && !digits(whole)) || (!fracpart.empty() && !digits(fracpart)))
      return std::nullopt;
    BigInt w = whole.empty() ? BigInt(0) : BigInt{std::string(whole)};
    BigInt scale = 1;
    for (size_t k = 0; k < fracpart.size(); ++k) scale *= 10;
    BigInt f = fracpart.empty() ? BigInt(0) : BigInt{std::string(fracpart)};
    value = Rat(w * scale + f, scale);
  } else {
    if (!digits(body)) return std::nullopt;
    value = Rat(BigInt{std::string(body)});
  }
  return neg ? Rat(-value) : value;
}

}  // namespace barter
