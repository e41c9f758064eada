#pragma once

// Exact univariate polynomials over the rationals: Euclidean arithmetic,
// Sturm chains, real-root counting / isolation / refinement, and certified
// minimization over the whole line or the half-line t >= 0. Every decision
// (does a real root exist, is the infimum zero, which critical value is
// smallest) is made in exact rational arithmetic; floating point only enters
// the reported locations and values.

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "arclosure/rational.hpp"

namespace arclosure {

class PolyError : public std::runtime_error {
 public:
  explicit PolyError(const std::string& m) : std::runtime_error(m) {}
};

class RatPoly {
 public:
  RatPoly() = default;
  explicit RatPoly(std::vector<Rational> coefs) : c_(std::move(coefs)) { trim(); }

  static RatPoly constant(const Rational& v) { return RatPoly({v}); }
  static RatPoly monomial(int k, const Rational& coef) {
    std::vector<Rational> c(static_cast<std::size_t>(k) + 1, Rational(0));
    c.back() = coef;
    return RatPoly(std::move(c));
  }

  bool is_zero() const { return c_.empty(); }
  int degree() const { return static_cast<int>(c_.size()) - 1; }  // -1 for zero
  Rational coef(int k) const {
    return k >= 0 && k < static_cast<int>(c_.size()) ? c_[static_cast<std::size_t>(k)]
                                                     : Rational(0);
  }
  const std::vector<Rational>& coefs() const { return c_; }
  const Rational& lead() const {
    if (c_.empty()) throw PolyError("zero polynomial has no leading coefficient");
    return c_.back();
  }

  Rational operator()(const Rational& t) const {
    Rational acc(0);
    for (auto it = c_.rbegin(); it != c_.rend(); ++it) acc = acc * t + *it;
    return acc;
  }
  double at(double t) const {
    double acc = 0;
    for (auto it = c_.rbegin(); it != c_.rend(); ++it) acc = acc * t + to_double(*it);
    return acc;
  }

  RatPoly derivative() const {
    if (c_.size() <= 1) return RatPoly();
    std::vector<Rational> d(c_.size() - 1);
    for (std::size_t k = 1; k < c_.size(); ++k) d[k - 1] = c_[k] * Rational(k);
    return RatPoly(std::move(d));
  }

  friend RatPoly operator+(const RatPoly& a, const RatPoly& b) {
    std::vector<Rational> c(std::max(a.c_.size(), b.c_.size()), Rational(0));
    for (std::size_t k = 0; k < a.c_.size(); ++k) c[k] += a.c_[k];
    for (std::size_t k = 0; k < b.c_.size(); ++k) c[k] += b.c_[k];
    return RatPoly(std::move(c));
  }
  friend RatPoly operator-(const RatPoly& a) {
    RatPoly r = a;
    for (auto& x : r.c_) x = -x;
    return r;
  }
  friend RatPoly operator-(const RatPoly& a, const RatPoly& b) { return a + (-b); }
  friend RatPoly operator*(const RatPoly& a, const RatPoly& b) {
    if (a.is_zero() || b.is_zero()) return RatPoly();
    std::vector<Rational> c(a.c_.size() + b.c_.size() - 1, Rational(0));
    for (std::size_t i = 0; i < a.c_.size(); ++i)
      for (std::size_t j = 0; j < b.c_.size(); ++j) c[i + j] += a.c_[i] * b.c_[j];
    return RatPoly(std::move(c));
  }
  friend RatPoly operator*(const Rational& s, const RatPoly& a) {
    if (s == 0) return RatPoly();
    RatPoly r = a;
    for (auto& x : r.c_) x *= s;
    return r;
  }
  friend bool operator==(const RatPoly& a, const RatPoly& b) { return a.c_ == b.c_; }
  friend bool operator!=(const RatPoly& a, const RatPoly& b) { return !(a == b); }

  // n = q*d + r with deg r < deg d.
  static void divmod(const RatPoly& n, const RatPoly& d, RatPoly& q, RatPoly& r) {
    if (d.is_zero()) throw PolyError("polynomial division by zero");
    std::vector<Rational> rem = n.c_;
    std::vector<Rational> quo;
    int dd = d.degree();
    if (n.degree() >= dd) quo.assign(static_cast<std::size_t>(n.degree() - dd) + 1, Rational(0));
    while (static_cast<int>(rem.size()) - 1 >= dd) {
      while (!rem.empty() && rem.back() == 0) rem.pop_back();
      if (static_cast<int>(rem.size()) - 1 < dd) break;
      std::size_t shift = rem.size() - 1 - static_cast<std::size_t>(dd);
      Rational f = rem.back() / d.lead();
      quo[shift] = f;
      for (std::size_t k = 0; k < d.c_.size(); ++k) rem[shift + k] -= f * d.c_[k];
      rem.pop_back();  // leading term cancelled exactly
    }
    q = RatPoly(std::move(quo));
    r = RatPoly(std::move(rem));
  }

  std::string str(const std::string& var = "t") const {
    if (c_.empty()) return "0";
    std::string out;
    for (int k = degree(); k >= 0; --k) {
      const Rational& ck = c_[static_cast<std::size_t>(k)];
      if (ck == 0) continue;
      Rational a = ck < 0 ? Rational(-ck) : ck;
      if (out.empty())
        out += ck < 0 ? "-" : "";
      else
        out += ck < 0 ? " - " : " + ";
      std::string body;
      if (k == 0)
        body = to_string(a);
      else {
        if (a != 1) body = to_string(a) + "*";
        body += var;
        if (k > 1) body += "^" + std::to_string(k);
      }
      out += body;
    }
    return out;
  }

 private:
  std::vector<Rational> c_;
  void trim() {
    while (!c_.empty() && c_.back() == 0) c_.pop_back();
  }
};

// Monic gcd by the Euclidean algorithm.
inline RatPoly poly_gcd(RatPoly a, RatPoly b) {
  while (!b.is_zero()) {
    RatPoly q, r;
    RatPoly::divmod(a, b, q, r);
    a = b;
    b = r;
  }
  if (a.is_zero()) return a;
  return (Rational(1) / a.lead()) * a;
}

// Square-free part p / gcd(p, p'): same real roots, all simple.
inline RatPoly square_free(const RatPoly& p) {
  if (p.degree() <= 1) return p;
  RatPoly g = poly_gcd(p, p.derivative());
  if (g.degree() <= 0) return p;
  RatPoly q, r;
  RatPoly::divmod(p, g, q, r);
  return q;
}

// Sturm chain of p: p, p', then negated Euclidean remainders.
inline std::vector<RatPoly> sturm_chain(const RatPoly& p) {
  std::vector<RatPoly> ch;
  if (p.is_zero()) return ch;
  ch.push_back(p);
  RatPoly d = p.derivative();
  if (d.is_zero()) return ch;
  ch.push_back(d);
  for (;;) {
    RatPoly q, r;
    RatPoly::divmod(ch[ch.size() - 2], ch.back(), q, r);
    if (r.is_zero()) break;
    ch.push_back(-r);
  }
  return ch;
}

namespace detail {

inline int count_variations(const std::vector<int>& signs) {
  int v = 0, prev = 0;
  for (int s : signs) {
    if (s == 0) continue;
    if (prev != 0 && s != prev) ++v;
    prev = s;
  }
  return v;
}

}  // namespace detail

inline int sturm_variations_at(const std::vector<RatPoly>& ch, const Rational& t) {
  std::vector<int> signs;
  signs.reserve(ch.size());
  for (const auto& p : ch) signs.push_back(sign(p(t)));
  return detail::count_variations(signs);
}

// Sign variations "at infinity": signs of leading terms (flipped on odd
// degrees for -infinity).
inline int sturm_variations_at_infinity(const std::vector<RatPoly>& ch, bool positive) {
  std::vector<int> signs;
  signs.reserve(ch.size());
  for (const auto& p : ch) {
    if (p.is_zero()) {
      signs.push_back(0);
      continue;
    }
    int s = sign(p.lead());
    if (!positive && p.degree() % 2 == 1) s = -s;
    signs.push_back(s);
  }
  return detail::count_variations(signs);
}

// Number of distinct real roots in (lo, hi]. Requires lo < hi.
inline int count_roots(const std::vector<RatPoly>& ch, const Rational& lo, const Rational& hi) {
  return sturm_variations_at(ch, lo) - sturm_variations_at(ch, hi);
}

inline int count_real_roots(const std::vector<RatPoly>& ch) {
  return sturm_variations_at_infinity(ch, false) - sturm_variations_at_infinity(ch, true);
}

// Cauchy bound: every real root lies in [-B, B].
inline Rational root_bound(const RatPoly& p) {
  if (p.degree() <= 0) return Rational(1);
  Rational m(0);
  for (int k = 0; k < p.degree(); ++k) {
    Rational a = p.coef(k) / p.lead();
    if (a < 0) a = -a;
    if (rat_cmp(a, m) > 0) m = a;
  }
  return m + 1;
}

// One real root of a square-free polynomial, either pinned exactly or
// enclosed in (lo, hi) with sign(g(lo)) != sign(g(hi)), both nonzero.
struct RootBracket {
  Rational lo, hi;
  bool exact = false;  // root == lo == hi

  Rational mid() const { return exact ? lo : (lo + hi) / 2; }
  Rational width() const { return exact ? Rational(0) : hi - lo; }
};

namespace detail {

// Invariant: g(lo) != 0 and g(hi) != 0. Exact roots are only ever recorded
// when a bisection midpoint lands on one, and then a root-free gap is carved
// around it so neither sub-interval can see that root again.
inline void isolate_recurse(const RatPoly& g, const std::vector<RatPoly>& ch, const Rational& lo,
                            const Rational& hi, std::vector<RootBracket>& out, int depth) {
  if (depth > 512) throw PolyError("root isolation did not terminate");
  int n = count_roots(ch, lo, hi);
  if (n == 0) return;
  if (n == 1) {
    out.push_back({lo, hi, false});
    return;
  }
  Rational mid = (lo + hi) / 2;
  if (sign(g(mid)) == 0) {
    out.push_back({mid, mid, true});
    Rational d = (hi - lo) / 4;
    while (count_roots(ch, mid - d, mid + d) > 1 || sign(g(mid - d)) == 0) {
      d = d / 2;
      if (d == 0) throw PolyError("degenerate gap in root isolation");
    }
    isolate_recurse(g, ch, lo, mid - d, out, depth + 1);
    isolate_recurse(g, ch, mid + d, hi, out, depth + 1);
    return;
  }
  isolate_recurse(g, ch, lo, mid, out, depth + 1);
  isolate_recurse(g, ch, mid, hi, out, depth + 1);
}

}  // namespace detail

// Distinct real roots of p inside (lo, hi], as exact points or disjoint
// brackets, in ascending order. p need not be square-free.
inline std::vector<RootBracket> isolate_roots(const RatPoly& p, const Rational& lo,
                                              const Rational& hi) {
  std::vector<RootBracket> out;
  if (p.degree() <= 0) return out;
  RatPoly g = square_free(p);
  std::vector<RatPoly> ch = sturm_chain(g);
  if (rat_cmp(lo, hi) >= 0) return out;
  Rational a = lo, b = hi;
  // Shift endpoints off roots; Sturm counts roots in the half-open (a, b],
  // so "no root skipped" reads differently per side.
  if (sign(g(a)) == 0) {
    out.push_back({a, a, true});
    Rational step = (b - a) / 2;
    while (true) {
      Rational cand = a + step;
      if (sign(g(cand)) != 0 && count_roots(ch, a, cand) == 0) {
        a = cand;
        break;
      }
      step = step / 2;
      if (step == 0) throw PolyError("degenerate interval in root isolation");
    }
  }
  if (rat_cmp(a, b) < 0 && sign(g(b)) == 0) {
    out.push_back({b, b, true});
    Rational step = (b - a) / 2;
    while (true) {
      Rational cand = b - step;
      if (sign(g(cand)) != 0 && count_roots(ch, cand, b) == 1) {
        b = cand;
        break;
      }
      step = step / 2;
      if (step == 0) throw PolyError("degenerate interval in root isolation");
    }
  }
  if (rat_cmp(a, b) < 0) detail::isolate_recurse(g, ch, a, b, out, 0);
  std::sort(out.begin(), out.end(),
            [](const RootBracket& x, const RootBracket& y) { return rat_cmp(x.lo, y.lo) < 0; });
  return out;
}

// All real roots of p.
inline std::vector<RootBracket> isolate_real_roots(const RatPoly& p) {
  if (p.degree() <= 0) return {};
  Rational b = root_bound(p);
  return isolate_roots(p, -b, b);
}

namespace detail {

inline std::vector<BigInt> small_divisors(BigInt n, const BigInt& cap) {
  if (n < 0) n = -n;
  std::vector<BigInt> out;
  if (n == 0 || n > cap) return out;  // best-effort: too big to enumerate
  for (BigInt i = 1; i * i <= n; ++i) {
    if (n % i == 0) {
      out.push_back(i);
      if (i * i != n) out.push_back(n / i);
    }
  }
  return out;
}

}  // namespace detail

// Exact rational roots of p, ascending, found by clearing denominators and
// testing every p/q candidate from the rational root theorem. Best-effort:
// when the constant or leading integer coefficient is too large to factor
// cheaply the list may be incomplete (callers fall back to Sturm brackets),
// but every returned value is a certified exact root.
inline std::vector<Rational> rational_roots(const RatPoly& p) {
  std::vector<Rational> out;
  if (p.degree() <= 0) return out;
  BigInt lcm_den(1);
  for (const auto& c : p.coefs()) {
    BigInt d = den(c);
    lcm_den = lcm_den / boost::multiprecision::gcd(lcm_den, d) * d;
  }
  std::vector<BigInt> n(p.coefs().size());
  for (std::size_t k = 0; k < n.size(); ++k) n[k] = num(p.coef(static_cast<int>(k)) * lcm_den);
  std::size_t low = 0;
  while (low < n.size() && n[low] == 0) ++low;
  if (low > 0) out.push_back(Rational(0));
  if (low + 1 >= n.size()) return out;  // pure power of t
  const BigInt cap = BigInt(1000000000000LL);
  auto ps = detail::small_divisors(n[low], cap);
  auto qs = detail::small_divisors(n.back(), cap);
  for (const auto& a : ps)
    for (const auto& b : qs) {
      Rational cand(a, b);
      if (p(cand) == 0) out.push_back(cand);
      if (p(-cand) == 0) out.push_back(Rational(-cand));
    }
  std::sort(out.begin(), out.end(),
            [](const Rational& x, const Rational& y) { return rat_cmp(x, y) < 0; });
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Bisection refinement against the square-free part g of the isolated
// polynomial; preserves the bracket invariants, detects exact hits.
inline void refine_bracket(const RatPoly& g, RootBracket& b, const Rational& width_target,
                           int max_halvings = 256) {
  if (b.exact) return;
  int slo = sign(g(b.lo));
  for (int i = 0; i < max_halvings && rat_cmp(b.hi - b.lo, width_target) > 0; ++i) {
    Rational mid = (b.lo + b.hi) / 2;
    int sm = sign(g(mid));
    if (sm == 0) {
      b.lo = b.hi = mid;
      b.exact = true;
      return;
    }
    if (sm == slo)
      b.lo = mid;
    else
      b.hi = mid;
  }
}

// ---------------------------------------------------------------------------
// Certified minimization
// ---------------------------------------------------------------------------

// Minimum of q over the whole line (requires even degree, positive leading
// coefficient) or over t >= 0 (requires positive leading coefficient). The
// caller's polynomials are squared moduli, so the minimum is attained.
struct MinimizationResult {
  bool attains_zero = false;     // exact: q has a real root in the region
  double argmin = 0;             // location of the minimum (or of a zero)
  bool argmin_exact = false;     // the location is an exact rational
  Rational argmin_rational;      // set when argmin_exact
  double inf = 0;                // reported value, within tol of the true infimum
  std::optional<Rational> inf_exact;  // set when the infimum is certified exactly
  Rational inf_lo, inf_hi;       // certified enclosure of the infimum
};

namespace detail {

// Upper bound for |p| on [lo, hi].
inline Rational poly_abs_bound(const RatPoly& p, const Rational& lo, const Rational& hi) {
  Rational r = lo < 0 ? Rational(-lo) : lo;
  Rational r2 = hi < 0 ? Rational(-hi) : hi;
  if (rat_cmp(r2, r) > 0) r = r2;
  Rational m(0), pw(1);
  for (int k = 0; k <= p.degree(); ++k) {
    Rational a = p.coef(k);
    if (a < 0) a = -a;
    m += a * pw;
    pw *= r;
  }
  return m;
}

struct MinCandidate {
  RootBracket where;
  Rational value;      // q(where.mid()), exact at the sampled point
  Rational slack;      // |q(true point) - value| <= slack
};

}  // namespace detail

inline MinimizationResult minimize_poly(const RatPoly& q, bool half_line,
                                        const Rational& tol = Rational(1, 1000000000000LL)) {
  MinimizationResult res;
  if (q.is_zero()) {
    res.attains_zero = true;
    res.argmin_exact = true;
    res.argmin_rational = 0;
    res.inf_exact = Rational(0);
    res.inf_lo = res.inf_hi = 0;
    return res;
  }
  if (q.degree() == 0) {
    res.inf_exact = q.coef(0);
    res.inf = to_double(*res.inf_exact);
    res.inf_lo = res.inf_hi = *res.inf_exact;
    res.argmin_exact = true;
    res.argmin_rational = 0;
    res.attains_zero = *res.inf_exact == 0;
    return res;
  }
  if (sign(q.lead()) <= 0)
    throw PolyError("minimization requires a positive leading coefficient");
  if (!half_line && q.degree() % 2 != 0)
    throw PolyError("minimization over the line requires even degree");

  const Rational B = root_bound(q);

  // Exact zero detection first: a root in the region means the infimum is 0
  // (these polynomials are nonnegative by construction). Rational roots give
  // exact witnesses; irrational ones a refined bracket.
  {
    auto rational_abs = [](const Rational& r) { return r < 0 ? Rational(-r) : r; };
    std::optional<Rational> exact_zero;
    for (const auto& r0 : rational_roots(q)) {
      if (half_line && sign(r0) < 0) continue;
      if (!exact_zero || rat_cmp(rational_abs(r0), rational_abs(*exact_zero)) < 0) exact_zero = r0;
    }
    if (exact_zero) {
      res.attains_zero = true;
      res.argmin = to_double(*exact_zero);
      res.argmin_exact = true;
      res.argmin_rational = *exact_zero;
      res.inf = 0;
      res.inf_exact = Rational(0);
      res.inf_lo = res.inf_hi = 0;
      return res;
    }
    std::vector<RootBracket> roots =
        half_line ? isolate_roots(q, Rational(0), B) : isolate_real_roots(q);
    if (!roots.empty()) {
      RootBracket w = roots.front();
      RatPoly g = square_free(q);
      refine_bracket(g, w, Rational(BigInt(1), BigInt(1) << 80));
      res.attains_zero = true;
      res.argmin = to_double(w.mid());
      res.argmin_exact = w.exact;
      if (w.exact) res.argmin_rational = w.lo;
      res.inf = 0;
      res.inf_exact = Rational(0);
      res.inf_lo = res.inf_hi = 0;
      return res;
    }
  }

  // No zero: collect critical points (roots of q') in the region, plus the
  // boundary t = 0 on the half-line, and compare exact values with certified
  // slack until the ordering is unambiguous at tolerance `tol`.
  RatPoly dq = q.derivative();
  RatPoly dg = square_free(dq);
  // rational critical points become exact candidates instead of brackets
  std::vector<Rational> crit_exact = rational_roots(dq);
  auto upgrade = [&](RootBracket b) -> RootBracket {
    if (b.exact) return b;
    for (const auto& r0 : crit_exact)
      if (rat_cmp(b.lo, r0) < 0 && rat_cmp(r0, b.hi) < 0) return {r0, r0, true};
    return b;
  };
  std::vector<detail::MinCandidate> cands;
  auto add_candidate = [&](RootBracket b) {
    b = upgrade(b);
    detail::MinCandidate c;
    // refine until the value enclosure is tighter than tol/4
    for (int round = 0; round < 300; ++round) {
      if (b.exact) break;
      Rational m = detail::poly_abs_bound(dq, b.lo, b.hi);
      if (rat_cmp(m * b.width(), tol / 4) <= 0) break;
      Rational target = b.width() / 2;
      refine_bracket(dg, b, target, 8);
    }
    c.where = b;
    c.value = q(b.mid());
    c.slack = b.exact ? Rational(0) : detail::poly_abs_bound(dq, b.lo, b.hi) * b.width();
    cands.push_back(std::move(c));
  };

  if (half_line) {
    detail::MinCandidate boundary;
    boundary.where = {Rational(0), Rational(0), true};
    boundary.value = q(Rational(0));
    boundary.slack = 0;
    cands.push_back(std::move(boundary));
    for (auto& b : isolate_roots(dq, Rational(0), root_bound(dq))) add_candidate(b);
  } else {
    for (auto& b : isolate_real_roots(dq)) add_candidate(b);
    if (cands.empty()) throw PolyError("even polynomial without critical points");
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < cands.size(); ++i)
    if (rat_cmp(cands[i].value, cands[best].value) < 0) best = i;

  const auto& bc = cands[best];
  res.argmin = to_double(bc.where.mid());
  res.argmin_exact = bc.where.exact;
  if (bc.where.exact) res.argmin_rational = bc.where.lo;
  res.inf_lo = bc.value - bc.slack;
  res.inf_hi = bc.value + bc.slack;
  // another candidate's enclosure could still dip below; widen the certified
  // enclosure accordingly (values stay within tol of the truth by refinement)
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (i == best) continue;
    Rational lo_i = cands[i].value - cands[i].slack;
    if (rat_cmp(lo_i, res.inf_lo) < 0 && rat_cmp(lo_i, bc.value) < 0) res.inf_lo = lo_i;
  }
  res.inf = to_double(bc.value);
  // the infimum is exact when the best sample sits on an exact critical point
  // and no other candidate's enclosure reaches strictly below it
  if (bc.where.exact) {
    bool undercut = false;
    for (std::size_t i = 0; i < cands.size(); ++i) {
      if (i == best) continue;
      if (rat_cmp(cands[i].value - cands[i].slack, bc.value) < 0) undercut = true;
    }
    if (!undercut) res.inf_exact = bc.value;
  }
  return res;
}

}  // namespace arclosure
