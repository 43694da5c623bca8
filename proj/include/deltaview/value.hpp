// deltaview: scalar values (exact rationals, strings, calendar dates) and tuples.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <compare>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace deltaview {

using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

/// Error raised by ill-typed comparisons, unbound variables, division by
/// zero and similar evaluation-time failures.
struct EvalError : std::runtime_error {
  explicit EvalError(const std::string& what) : std::runtime_error(what) {}
};

/// Structural errors: schema mismatches, malformed renames, arity errors.
struct StructureError : std::runtime_error {
  explicit StructureError(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Dates are stored as days since 1970-01-01 (proleptic Gregorian).
// ---------------------------------------------------------------------------

struct Date {
  std::int32_t days = 0;
  friend bool operator==(Date a, Date b) { return a.days == b.days; }
  friend auto operator<=>(Date a, Date b) { return a.days <=> b.days; }
};

/// days_from_civil / civil_from_days use Howard Hinnant's public-domain
/// calendar algorithms.
inline std::int32_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                       static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  return static_cast<std::int32_t>(era) * 146097 + static_cast<std::int32_t>(doe) - 719468;
}

inline void civil_from_days(std::int32_t z, int& y, int& m, int& d) {
  z += 719468;
  const std::int32_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const int yy = static_cast<int>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y = yy + (m <= 2);
}

inline Date parse_date(const std::string& s) {
  // Expected form YYYY-MM-DD.
  if (s.size() < 8) throw EvalError("malformed date literal: " + s);
  size_t p1 = s.find('-', 1);
  size_t p2 = (p1 == std::string::npos) ? std::string::npos : s.find('-', p1 + 1);
  if (p1 == std::string::npos || p2 == std::string::npos)
    throw EvalError("malformed date literal: " + s);
  int y = std::stoi(s.substr(0, p1));
  int m = std::stoi(s.substr(p1 + 1, p2 - p1 - 1));
  int d = std::stoi(s.substr(p2 + 1));
  if (m < 1 || m > 12 || d < 1 || d > 31) throw EvalError("malformed date literal: " + s);
  return Date{days_from_civil(y, m, d)};
}

inline std::string format_date(Date dt) {
  int y, m, d;
  civil_from_days(dt.days, y, m, d);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", y, m, d);
  return buf;
}

// ---------------------------------------------------------------------------
// Rational helpers
// ---------------------------------------------------------------------------

/// Parses "123", "-7", "43/2" or exact decimals like "21.5" / "-0.005".
inline Rational parse_rational(const std::string& s) {
  if (s.empty()) throw EvalError("empty numeric literal");
  size_t slash = s.find('/');
  if (slash != std::string::npos) {
    BigInt num(s.substr(0, slash));
    BigInt den(s.substr(slash + 1));
    if (den == 0) throw EvalError("zero denominator in literal: " + s);
    return Rational(num, den);
  }
  size_t dot = s.find('.');
  if (dot == std::string::npos) return Rational(BigInt(s));
  std::string ip = s.substr(0, dot), fp = s.substr(dot + 1);
  bool neg = !ip.empty() && ip[0] == '-';
  if (ip.empty() || ip == "-" || ip == "+") ip += "0";
  BigInt num(ip);
  BigInt den = 1;
  for (char c : fp) {
    if (c < '0' || c > '9') throw EvalError("malformed numeric literal: " + s);
    num = num * 10 + (neg ? -(c - '0') : (c - '0'));
    den *= 10;
  }
  return Rational(num, den);
}

/// Prints a rational as "num" or "num/den" (denominator omitted when 1).
inline std::string format_rational(const Rational& r) {
  std::string n = numerator(r).str();
  if (denominator(r) == 1) return n;
  return n + "/" + denominator(r).str();
}

inline std::size_t hash_combine(std::size_t seed, std::size_t v) {
  return seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
}

inline std::size_t hash_rational(const Rational& r) {
  const BigInt& num = numerator(r);
  const BigInt& den = denominator(r);
  static const BigInt lo = std::numeric_limits<long long>::min();
  static const BigInt hi = std::numeric_limits<long long>::max();
  if (num >= lo && num <= hi && den <= hi) {
    auto h1 = std::hash<long long>{}(static_cast<long long>(num));
    auto h2 = std::hash<long long>{}(static_cast<long long>(den));
    return hash_combine(h1, h2);
  }
  return std::hash<std::string>{}(num.str() + "/" + den.str());
}

// ---------------------------------------------------------------------------
// Value: rational | string | date
// ---------------------------------------------------------------------------

class Value {
 public:
  Value() : v_(Rational(0)) {}
  explicit Value(Rational r) : v_(std::move(r)) {}
  explicit Value(long long n) : v_(Rational(n)) {}
  explicit Value(std::string s) : v_(std::move(s)) {}
  explicit Value(Date d) : v_(d) {}

  enum class Kind { Number = 0, String = 1, CalendarDate = 2 };
  Kind kind() const { return static_cast<Kind>(v_.index()); }
  bool is_number() const { return v_.index() == 0; }
  bool is_string() const { return v_.index() == 1; }
  bool is_date() const { return v_.index() == 2; }

  const Rational& num() const {
    if (!is_number()) throw EvalError("value is not numeric: " + to_text());
    return std::get<Rational>(v_);
  }
  const std::string& str() const { return std::get<std::string>(v_); }
  Date date() const { return std::get<Date>(v_); }

  friend bool operator==(const Value& a, const Value& b) { return a.v_ == b.v_; }

  /// Total order used for deterministic container iteration and
  /// serialization: type tag first, then value.
  static int order_compare(const Value& a, const Value& b) {
    if (a.v_.index() != b.v_.index()) return a.v_.index() < b.v_.index() ? -1 : 1;
    switch (a.kind()) {
      case Kind::Number: {
        const auto& x = std::get<Rational>(a.v_);
        const auto& y = std::get<Rational>(b.v_);
        return x < y ? -1 : (x == y ? 0 : 1);
      }
      case Kind::String: {
        int c = a.str().compare(b.str());
        return c < 0 ? -1 : (c == 0 ? 0 : 1);
      }
      case Kind::CalendarDate:
        return a.date().days < b.date().days ? -1 : (a.date().days == b.date().days ? 0 : 1);
    }
    return 0;
  }

  /// Query-level comparison; cross-type comparison is an error.
  static int query_compare(const Value& a, const Value& b) {
    if (a.v_.index() != b.v_.index())
      throw EvalError("cannot compare " + a.to_text() + " with " + b.to_text());
    return order_compare(a, b);
  }

  std::size_t hash() const {
    switch (kind()) {
      case Kind::Number:
        return hash_combine(0x11, hash_rational(std::get<Rational>(v_)));
      case Kind::String:
        return hash_combine(0x22, std::hash<std::string>{}(str()));
      case Kind::CalendarDate:
        return hash_combine(0x33, std::hash<std::int32_t>{}(date().days));
    }
    return 0;
  }

  std::string to_text() const {
    switch (kind()) {
      case Kind::Number:
        return format_rational(std::get<Rational>(v_));
      case Kind::String:
        return str();
      case Kind::CalendarDate:
        return format_date(date());
    }
    return {};
  }

  /// Inverse of to_text for untyped contexts: dates, then rationals, then
  /// raw strings. Typed readers (stream files) parse against the catalog.
  static Value parse(const std::string& s) {
    if (s.size() == 10 && s[4] == '-' && s[7] == '-' &&
        std::isdigit(static_cast<unsigned char>(s[0])))
      return Value(parse_date(s));
    if (!s.empty() && (std::isdigit(static_cast<unsigned char>(s[0])) ||
                       ((s[0] == '-' || s[0] == '+') && s.size() > 1 &&
                        std::isdigit(static_cast<unsigned char>(s[1]))))) {
      bool numeric = true;
      for (char c : s)
        if (!std::isdigit(static_cast<unsigned char>(c)) && c != '/' && c != '.' && c != '-' &&
            c != '+')
          numeric = false;
      if (numeric) return Value(parse_rational(s));
    }
    return Value(std::string(s));
  }

 private:
  std::variant<Rational, std::string, Date> v_;
};

using Tuple = std::vector<Value>;
using Schema = std::vector<std::string>;

inline int tuple_compare(const Tuple& a, const Tuple& b) {
  size_t n = std::min(a.size(), b.size());
  for (size_t i = 0; i < n; ++i)
    if (int c = Value::order_compare(a[i], b[i]); c != 0) return c;
  return a.size() < b.size() ? -1 : (a.size() == b.size() ? 0 : 1);
}

struct TupleHash {
  std::size_t operator()(const Tuple& t) const {
    std::size_t h = 0x9dc5;
    for (const Value& v : t) h = hash_combine(h, v.hash());
    return h;
  }
};

struct TupleLess {
  bool operator()(const Tuple& a, const Tuple& b) const { return tuple_compare(a, b) < 0; }
};

inline size_t schema_index(const Schema& s, const std::string& col) {
  for (size_t i = 0; i < s.size(); ++i)
    if (s[i] == col) return i;
  throw StructureError("column not in schema: " + col);
}

inline bool schema_has(const Schema& s, const std::string& col) {
  for (const auto& c : s)
    if (c == col) return true;
  return false;
}

}  // namespace deltaview
