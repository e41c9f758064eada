#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace arclosure {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

inline double to_double(const Rational& r) { return r.convert_to<double>(); }

inline BigInt num(const Rational& r) { return boost::multiprecision::numerator(r); }
inline BigInt den(const Rational& r) { return boost::multiprecision::denominator(r); }

inline bool is_integer(const Rational& r) { return den(r) == 1; }

inline long to_long(const Rational& r) {
  if (!is_integer(r)) throw std::domain_error("rational is not an integer");
  return num(r).convert_to<long>();
}

// Exact conversion: every finite double is a dyadic rational.
inline Rational rational_from_double(double x) {
  if (!std::isfinite(x)) throw std::domain_error("cannot convert non-finite double to rational");
  if (x == 0.0) return Rational(0);
  int exp2 = 0;
  double m = std::frexp(x, &exp2);  // x = m * 2^exp2, |m| in [0.5, 1)
  // 53 doublings make the mantissa integral.
  BigInt mant = static_cast<long long>(std::ldexp(m, 53));
  exp2 -= 53;
  Rational r(mant);
  if (exp2 > 0)
    r *= Rational(BigInt(1) << exp2);
  else if (exp2 < 0)
    r /= Rational(BigInt(1) << (-exp2));
  return r;
}

inline Rational rational_pow(const Rational& base, long e) {
  if (e == 0) return Rational(1);
  if (base == 0) {
    if (e < 0) throw std::domain_error("division by zero in rational power");
    return Rational(0);
  }
  Rational acc(1), b = base;
  long n = e < 0 ? -e : e;
  while (n > 0) {
    if (n & 1) acc *= b;
    b *= b;
    n >>= 1;
  }
  if (e < 0) acc = Rational(1) / acc;
  return acc;
}

// Exact nth root if it exists (n >= 1). Returns false when base has no rational nth root.
inline bool rational_root(const Rational& base, long n, Rational& out) {
  if (n == 1) { out = base; return true; }
  if (n <= 0) throw std::domain_error("rational_root: order must be positive");
  if (base == 0) { out = Rational(0); return true; }
  if (base < 0 && n % 2 == 0) return false;
  auto iroot = [](const BigInt& v, long k, BigInt& r) -> bool {
    if (v == 0) { r = 0; return true; }
    BigInt lo = 0, hi = 1;
    while (boost::multiprecision::pow(hi, static_cast<unsigned>(k)) < v) hi <<= 1;
    while (lo < hi) {
      BigInt mid = (lo + hi) / 2;
      if (boost::multiprecision::pow(mid, static_cast<unsigned>(k)) < v) lo = mid + 1; else hi = mid;
    }
    r = lo;
    return boost::multiprecision::pow(lo, static_cast<unsigned>(k)) == v;
  };
  bool neg = base < 0;
  BigInt an = boost::multiprecision::abs(num(base)), ad = den(base), rn, rd;
  if (!iroot(an, n, rn) || !iroot(ad, n, rd)) return false;
  out = Rational(rn) / Rational(rd);
  if (neg) out = -out;
  return true;
}

inline std::string to_string(const Rational& r) {
  std::string s = num(r).str();
  if (!is_integer(r)) s += "/" + den(r).str();
  return s;
}

// Cross-multiplication comparison. The library's own relational operators run
// a division-based algorithm meant to dodge fixed-width overflow; with
// arbitrary-precision parts two multiplications are far cheaper, and the hot
// canonical-ordering paths live on this.
inline int rat_cmp(const Rational& a, const Rational& b) {
  const auto& ra = a.backend().data();
  const auto& rb = b.backend().data();
  const BigInt &an = ra.numerator(), &ad = ra.denominator();
  const BigInt &bn = rb.numerator(), &bd = rb.denominator();
  int sa = an.sign(), sb = bn.sign();
  if (sa != sb) return sa < sb ? -1 : 1;
  if (sa == 0) return 0;
  if (ad == bd) return an.compare(bn);
  return BigInt(an * bd).compare(BigInt(bn * ad));
}

inline int sign(const Rational& r) { return r.backend().data().numerator().sign(); }

}  // namespace arclosure
