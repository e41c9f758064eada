#pragma once

// Exact symbolic expressions over a restricted class: rational constants, named
// symbols, sums, products, rational/parameter-affine powers, exponentials of
// polynomial arguments, and absolute values. Expressions are immutable and kept
// in a canonical normal form:
//   * a sorted sum of terms, each term = rational coefficient times a sorted
//     product of factors base^exponent;
//   * factor bases are symbols, exponentials (at most one per term, exponent 1,
//     arguments combined additively), absolute values, or opaque sub-sums
//     carried at non-expandable exponents;
//   * positive integer powers of sums are expanded; negative integer powers of
//     sums are cleared over a common denominator and cancelled by exact
//     multivariate division whenever the division is exact.
// Rational powers use the nonnegative-real branch; 0^0 = 1 by convention.

#include <algorithm>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "arclosure/linexp.hpp"
#include "arclosure/rational.hpp"

namespace arclosure {

class ExprError : public std::runtime_error {
 public:
  explicit ExprError(const std::string& m) : std::runtime_error(m) {}
};
class PoleError : public ExprError {
 public:
  explicit PoleError(const std::string& m) : ExprError(m) {}
};
class UnsupportedError : public ExprError {
 public:
  explicit UnsupportedError(const std::string& m) : ExprError(m) {}
};

class Expr;
int compare(const Expr& a, const Expr& b);

enum class BaseKind { symbol, exponential, absval, opaque };

namespace detail {

struct ExprData;

}  // namespace detail

class Expr {
 public:
  Expr();  // zero
  static Expr number(const Rational& r);
  static Expr integer(long n) { return number(Rational(n)); }
  static Expr sym(const std::string& name);

  bool is_zero() const;
  bool is_rational() const;                   // a single rational constant
  Rational as_rational() const;               // requires is_rational()
  bool is_one() const { return is_rational() && as_rational() == 1; }

  const detail::ExprData& data() const;

  friend Expr operator+(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a, const Expr& b);
  friend Expr operator*(const Expr& a, const Expr& b);
  friend Expr operator/(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a);
  Expr& operator+=(const Expr& o) { return *this = *this + o; }
  Expr& operator-=(const Expr& o) { return *this = *this - o; }
  Expr& operator*=(const Expr& o) { return *this = *this * o; }
  Expr& operator/=(const Expr& o) { return *this = *this / o; }

 private:
  explicit Expr(std::shared_ptr<const detail::ExprData> d) : d_(std::move(d)) {}
  std::shared_ptr<const detail::ExprData> d_;
  friend Expr make_expr_from_terms(std::vector<struct Term> raw);
};

struct FactorBase {
  BaseKind kind;
  std::string name;  // symbol
  Expr arg;          // exponential / absval / opaque
};

struct Factor {
  FactorBase base;
  LinExp exp;
};

struct Term {
  Rational coef;
  std::vector<Factor> factors;
};

namespace detail {
struct ExprData {
  std::vector<Term> terms;  // canonical, sorted descending
};
}  // namespace detail

inline const detail::ExprData& Expr::data() const { return *d_; }

// ---------------------------------------------------------------------------
// Ordering
// ---------------------------------------------------------------------------

inline int base_compare(const FactorBase& a, const FactorBase& b) {
  auto rank = [](BaseKind k) {
    switch (k) {
      case BaseKind::symbol: return 0;
      case BaseKind::exponential: return 1;
      case BaseKind::absval: return 2;
      case BaseKind::opaque: return 3;
    }
    return 4;
  };
  if (rank(a.kind) != rank(b.kind)) return rank(a.kind) < rank(b.kind) ? -1 : 1;
  if (a.kind == BaseKind::symbol)
    return a.name == b.name ? 0 : (a.name < b.name ? -1 : 1);
  return compare(a.arg, b.arg);
}

// Monomial order: merged iteration over bases in ascending base order; the term
// with the larger exponent at the first differing base is the larger monomial.
// Compatible with multiplication for constant exponents, which is what the
// exact-division pass relies on.
inline int monomial_compare(const std::vector<Factor>& a, const std::vector<Factor>& b) {
  std::size_t i = 0, j = 0;
  static const LinExp kZero{};
  while (i < a.size() || j < b.size()) {
    const Factor* fa = i < a.size() ? &a[i] : nullptr;
    const Factor* fb = j < b.size() ? &b[j] : nullptr;
    int bc = fa && fb ? base_compare(fa->base, fb->base) : (fa ? -1 : 1);
    const LinExp& ea = (bc <= 0 && fa) ? fa->exp : kZero;
    const LinExp& eb = (bc >= 0 && fb) ? fb->exp : kZero;
    int ec = ea.compare(eb);
    if (ec != 0) return ec;
    if (bc <= 0) ++i;
    if (bc >= 0) ++j;
  }
  return 0;
}

inline int term_compare(const Term& a, const Term& b) {
  int mc = monomial_compare(a.factors, b.factors);
  if (mc != 0) return mc;
  return rat_cmp(a.coef, b.coef);
}

inline int compare(const Expr& a, const Expr& b) {
  const auto& ta = a.data().terms;
  const auto& tb = b.data().terms;
  for (std::size_t i = 0; i < ta.size() && i < tb.size(); ++i) {
    int tc = term_compare(ta[i], tb[i]);
    if (tc != 0) return tc;
  }
  if (ta.size() != tb.size()) return ta.size() < tb.size() ? -1 : 1;
  return 0;
}

inline bool identical(const Expr& a, const Expr& b) { return compare(a, b) == 0; }

// ---------------------------------------------------------------------------
// Normalization machinery
// ---------------------------------------------------------------------------

Expr make_expr_from_terms(std::vector<Term> raw);
Expr pow(const Expr& g, const LinExp& r);

namespace detail {

inline Expr expr_from_data(std::vector<Term> terms) {
  std::vector<Term> t = std::move(terms);
  return make_expr_from_terms(std::move(t));
}

inline bool factor_is_neg_int_opaque(const Factor& f) {
  return f.base.kind == BaseKind::opaque && f.exp.is_integer() && f.exp.as_integer() < 0;
}

// Multiply two already-normalized terms; result may need re-expansion, so the
// caller feeds it back through the worklist.
inline Term term_mul(const Term& a, const Term& b) {
  Term r;
  r.coef = a.coef * b.coef;
  r.factors.reserve(a.factors.size() + b.factors.size());
  r.factors = a.factors;
  r.factors.insert(r.factors.end(), b.factors.begin(), b.factors.end());
  return r;
}

struct NormalizeOutcome {
  bool finished = true;
  Term term;                    // valid if finished
  std::vector<Term> expansion;  // valid if !finished (raw, to be reprocessed)
};

std::vector<Term> expand_pow_terms(const std::vector<Term>& base, long k);

// One normalization step on a raw term: merge factors, canonicalize
// exponentials, fold constants. Signals expansion when a sum must be
// multiplied out.
inline NormalizeOutcome normalize_term(const Term& in) {
  NormalizeOutcome out;
  if (in.coef == 0) { out.term = Term{Rational(0), {}}; return out; }

  // Merge factors by base.
  std::vector<Factor> merged;
  for (const auto& f : in.factors) {
    if (f.exp.is_zero()) continue;
    bool found = false;
    for (auto& m : merged) {
      if (base_compare(m.base, f.base) == 0) {
        m.exp += f.exp;
        found = true;
        break;
      }
    }
    if (!found) merged.push_back(f);
  }

  Term t;
  t.coef = in.coef;
  Expr exp_arg_total;  // combined exponential argument
  bool has_exp = false;
  std::vector<std::pair<Expr, long>> to_expand;

  for (auto& f : merged) {
    if (f.exp.is_zero()) continue;
    switch (f.base.kind) {
      case BaseKind::symbol:
        t.factors.push_back(f);
        break;
      case BaseKind::exponential: {
        // exp(A)^r -> exp(r*A); collect additively.
        Expr scaled = f.base.arg;
        if (!f.exp.is_one()) {
          Expr mult = Expr::number(f.exp.constant());
          for (const auto& [p, c] : f.exp.terms())
            mult = mult + Expr::number(c) * Expr::sym(p);
          scaled = scaled * mult;
        }
        exp_arg_total = has_exp ? exp_arg_total + scaled : scaled;
        has_exp = true;
        break;
      }
      case BaseKind::absval: {
        // |A|^(2k) = A^(2k)
        if (f.exp.is_integer() && f.exp.as_integer() % 2 == 0) {
          long k = f.exp.as_integer();
          const Expr& a = f.base.arg;
          if (a.data().terms.size() == 1 && a.data().terms[0].factors.size() == 1 &&
              a.data().terms[0].coef == 1) {
            Factor g = a.data().terms[0].factors[0];
            if (g.exp.is_constant()) {
              g.exp = g.exp * Rational(k);
              t.factors.push_back(g);
              break;
            }
          }
          if (k > 0) {
            to_expand.emplace_back(a, k);
          } else {
            Factor g;
            g.base = FactorBase{BaseKind::opaque, "", a};
            g.exp = f.exp;
            t.factors.push_back(g);
          }
          break;
        }
        if (f.base.arg.is_rational()) {
          Rational v = f.base.arg.as_rational();
          if (v < 0) v = -v;
          if (f.exp.is_integer()) {
            t.coef *= rational_pow(v, f.exp.as_integer());
          } else {
            // keep |c|^r as opaque power of a constant when not exact
            if (f.exp.is_constant()) {
              Rational root;
              const Rational& e = f.exp.as_rational();
              if (rational_root(v, to_long(den(e)), root)) {
                t.coef *= rational_pow(root, to_long(num(e)));
                break;
              }
            }
            Factor g;
            g.base = FactorBase{BaseKind::opaque, "", Expr::number(v)};
            g.exp = f.exp;
            t.factors.push_back(g);
          }
          break;
        }
        t.factors.push_back(f);
        break;
      }
      case BaseKind::opaque: {
        if (f.base.arg.is_rational()) {
          // constant base: fold when the power is exactly rational
          Rational v = f.base.arg.as_rational();
          if (f.exp.is_integer()) {
            long k = f.exp.as_integer();
            if (v == 0 && k < 0) throw PoleError("zero denominator");
            t.coef *= rational_pow(v, k);
            break;
          }
          if (f.exp.is_constant()) {
            Rational root;
            const Rational& e = f.exp.as_rational();
            if (v != 0 && rational_root(v, to_long(den(e)), root)) {
              t.coef *= rational_pow(root, to_long(num(e)));
              break;
            }
            if (v == 0) {
              if (e > 0) { t.coef = 0; break; }
              throw PoleError("zero base at negative power");
            }
          }
          t.factors.push_back(f);
          break;
        }
        if (f.exp.is_integer() && f.exp.as_integer() > 0) {
          to_expand.emplace_back(f.base.arg, f.exp.as_integer());
          break;
        }
        t.factors.push_back(f);
        break;
      }
    }
    if (t.coef == 0) { out.term = Term{Rational(0), {}}; return out; }
  }

  if (has_exp && !exp_arg_total.is_zero()) {
    Factor ef;
    ef.base = FactorBase{BaseKind::exponential, "", exp_arg_total};
    ef.exp = LinExp(1);
    t.factors.push_back(ef);
  }

  if (!to_expand.empty()) {
    std::vector<Term> acc{t};
    for (const auto& [base, k] : to_expand) {
      std::vector<Term> powed = expand_pow_terms(base.data().terms, k);
      std::vector<Term> next;
      next.reserve(acc.size() * powed.size());
      for (const auto& ta : acc)
        for (const auto& tb : powed) next.push_back(term_mul(ta, tb));
      acc = std::move(next);
    }
    out.finished = false;
    out.expansion = std::move(acc);
    return out;
  }

  std::sort(t.factors.begin(), t.factors.end(),
            [](const Factor& x, const Factor& y) { return base_compare(x.base, y.base) < 0; });
  out.term = std::move(t);
  return out;
}

inline std::vector<Term> expand_pow_terms(const std::vector<Term>& base, long k) {
  if (k > 64) throw UnsupportedError("integer power too large to expand");
  std::vector<Term> acc{Term{Rational(1), {}}};
  for (long i = 0; i < k; ++i) {
    std::vector<Term> next;
    next.reserve(acc.size() * base.size());
    for (const auto& ta : acc)
      for (const auto& tb : base) next.push_back(term_mul(ta, tb));
    acc = std::move(next);
  }
  return acc;
}

// Fully normalize a raw term list (no denominator pass).
inline std::vector<Term> settle_terms(std::vector<Term> raw) {
  std::vector<Term> done;
  std::size_t guard = 0;
  while (!raw.empty()) {
    if (++guard > 2'000'000) throw UnsupportedError("expression expansion too large");
    Term t = std::move(raw.back());
    raw.pop_back();
    NormalizeOutcome o = normalize_term(t);
    if (o.finished) {
      if (o.term.coef != 0) done.push_back(std::move(o.term));
    } else {
      for (auto& e : o.expansion) raw.push_back(std::move(e));
    }
  }
  // combine identical monomials
  std::sort(done.begin(), done.end(),
            [](const Term& a, const Term& b) { return monomial_compare(a.factors, b.factors) > 0; });
  std::vector<Term> combined;
  for (auto& t : done) {
    if (!combined.empty() && monomial_compare(combined.back().factors, t.factors) == 0)
      combined.back().coef += t.coef;
    else
      combined.push_back(std::move(t));
  }
  std::vector<Term> result;
  for (auto& t : combined)
    if (t.coef != 0) result.push_back(std::move(t));
  return result;
}

inline bool all_exponents_constant(const std::vector<Term>& ts) {
  for (const auto& t : ts)
    for (const auto& f : t.factors)
      if (!f.exp.is_constant()) return false;
  return true;
}

// Multiply two canonical (base-sorted, zero-exponent-free) factor lists by
// merged iteration. Returns false when the product would need re-expansion
// (a sum base raised to a positive integer after exponents combine), which the
// fast division path treats as failure.
inline bool monomial_mul_factors(const std::vector<Factor>& a, const std::vector<Factor>& b,
                                 std::vector<Factor>& out) {
  out.clear();
  out.reserve(a.size() + b.size());
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    int bc = (i < a.size() && j < b.size()) ? base_compare(a[i].base, b[j].base)
                                            : (i < a.size() ? -1 : 1);
    if (bc < 0) {
      out.push_back(a[i++]);
    } else if (bc > 0) {
      out.push_back(b[j++]);
    } else {
      Factor f = a[i];
      f.exp = a[i].exp + b[j].exp;
      ++i;
      ++j;
      if (f.exp.is_zero()) continue;
      bool sum_base = f.base.kind == BaseKind::opaque || f.base.kind == BaseKind::absval;
      if (sum_base && f.exp.is_integer() && f.exp.as_integer() > 0) return false;
      out.push_back(f);
    }
  }
  return true;
}

// Exact multivariate division of term lists (Laurent-tolerant). Returns true
// and fills q when divisor divides n exactly; n and divisor must be settled.
// Works entirely on sorted canonical term lists: the monomial order is
// multiplication-compatible for constant exponents, so each elimination step
// is a linear merge instead of a renormalization.
inline bool try_divide_terms(const std::vector<Term>& n, const std::vector<Term>& divisor,
                             std::vector<Term>& q) {
  if (divisor.empty()) return false;
  if (!all_exponents_constant(n) || !all_exponents_constant(divisor)) return false;
  std::vector<Term> rem = n;
  std::vector<Term> quot;
  std::size_t cap = 64 + 8 * n.size() * (1 + divisor.size());
  std::vector<Factor> inv_lead;  // divisor leading monomial, inverted
  inv_lead.reserve(divisor.front().factors.size());
  for (const auto& f : divisor.front().factors) {
    Factor neg = f;
    neg.exp = -f.exp;
    inv_lead.push_back(neg);
  }
  while (!rem.empty()) {
    if (cap-- == 0) return false;
    const Term& lead_r = rem.front();
    const Term& lead_d = divisor.front();
    // ratio monomial = lead_r / lead_d
    Term rt;
    rt.coef = lead_r.coef / lead_d.coef;
    if (!monomial_mul_factors(lead_r.factors, inv_lead, rt.factors)) return false;
    // delta = rt * divisor, negated; sorted because the order respects
    // multiplication by a fixed monomial
    std::vector<Term> delta;
    delta.reserve(divisor.size());
    for (const auto& d : divisor) {
      Term prod;
      prod.coef = -(rt.coef * d.coef);
      if (!monomial_mul_factors(rt.factors, d.factors, prod.factors)) return false;
      delta.push_back(std::move(prod));
    }
    // next = rem + delta by two-way sorted merge; the leading terms cancel
    std::vector<Factor> lead_mono = rem.front().factors;  // merge moves rem out
    std::vector<Term> next;
    next.reserve(rem.size() + delta.size());
    std::size_t i = 0, j = 0;
    while (i < rem.size() || j < delta.size()) {
      int mc = (i < rem.size() && j < delta.size())
                   ? monomial_compare(rem[i].factors, delta[j].factors)
                   : (i < rem.size() ? 1 : -1);
      if (mc > 0) {
        next.push_back(std::move(rem[i++]));
      } else if (mc < 0) {
        next.push_back(std::move(delta[j++]));
      } else {
        Term t = std::move(rem[i++]);
        t.coef += delta[j++].coef;
        if (t.coef != 0) next.push_back(std::move(t));
      }
    }
    if (!next.empty() && monomial_compare(next.front().factors, lead_mono) >= 0)
      return false;  // no strict decrease: not an exact division
    rem = std::move(next);
    quot.push_back(std::move(rt));
  }
  q = settle_terms(std::move(quot));
  return true;
}

}  // namespace detail

// Build a canonical Expr from raw terms: settle, then clear negative integer
// powers of sum-bases over a common denominator and cancel exactly where
// possible.
inline Expr make_expr_from_terms(std::vector<Term> raw) {
  using namespace detail;
  std::vector<Term> terms = settle_terms(std::move(raw));

  // Common-denominator pass over negative-integer opaque factors.
  struct Denom {
    Expr base;
    long mult;
  };
  std::vector<Denom> denoms;
  bool any = false;
  for (const auto& t : terms)
    for (const auto& f : t.factors)
      if (factor_is_neg_int_opaque(f)) {
        any = true;
        long m = -f.exp.as_integer();
        bool found = false;
        for (auto& d : denoms)
          if (identical(d.base, f.base.arg)) {
            d.mult = std::max(d.mult, m);
            found = true;
          }
        if (!found) denoms.push_back({f.base.arg, m});
      }

  if (any) {
    std::sort(denoms.begin(), denoms.end(),
              [](const Denom& a, const Denom& b) { return compare(a.base, b.base) < 0; });
    // numerator: every term times base^(mult - carried)
    std::vector<Term> numer_raw;
    for (const auto& t : terms) {
      Term stripped;
      stripped.coef = t.coef;
      std::vector<long> carried(denoms.size(), 0);
      for (const auto& f : t.factors) {
        if (factor_is_neg_int_opaque(f)) {
          bool matched = false;
          for (std::size_t i = 0; i < denoms.size(); ++i)
            if (identical(denoms[i].base, f.base.arg)) {
              carried[i] = -f.exp.as_integer();
              matched = true;
            }
          if (matched) continue;
        }
        stripped.factors.push_back(f);
      }
      for (std::size_t i = 0; i < denoms.size(); ++i) {
        long deficit = denoms[i].mult - carried[i];
        if (deficit > 0) {
          Factor f;
          f.base = FactorBase{BaseKind::opaque, "", denoms[i].base};
          f.exp = LinExp(deficit);
          stripped.factors.push_back(f);
        }
      }
      numer_raw.push_back(std::move(stripped));
    }
    std::vector<Term> numer = settle_terms(std::move(numer_raw));

    // cancel exactly where possible
    for (auto& d : denoms) {
      while (d.mult > 0 && !numer.empty()) {
        std::vector<Term> q;
        if (!try_divide_terms(numer, d.base.data().terms, q)) break;
        numer = std::move(q);
        --d.mult;
      }
    }

    std::vector<Term> rebuilt;
    for (const auto& t : numer) {
      Term r = t;
      for (const auto& d : denoms) {
        if (d.mult == 0) continue;
        Factor f;
        f.base = FactorBase{BaseKind::opaque, "", d.base};
        f.exp = LinExp(-d.mult);
        r.factors.push_back(f);
      }
      rebuilt.push_back(std::move(r));
    }
    terms = settle_terms(std::move(rebuilt));
  }

  std::sort(terms.begin(), terms.end(),
            [](const Term& a, const Term& b) { return term_compare(a, b) > 0; });
  auto data = std::make_shared<detail::ExprData>();
  data->terms = std::move(terms);
  return Expr(std::shared_ptr<const detail::ExprData>(data));
}

// ---------------------------------------------------------------------------
// Expr members and arithmetic
// ---------------------------------------------------------------------------

inline Expr::Expr() : d_(std::make_shared<const detail::ExprData>()) {}

inline Expr Expr::number(const Rational& r) {
  std::vector<Term> t;
  if (r != 0) t.push_back(Term{r, {}});
  return make_expr_from_terms(std::move(t));
}

inline Expr Expr::sym(const std::string& name) {
  if (name.empty()) throw ExprError("empty symbol name");
  Term t;
  t.coef = Rational(1);
  t.factors.push_back(Factor{FactorBase{BaseKind::symbol, name, Expr()}, LinExp(1)});
  return make_expr_from_terms({t});
}

inline bool Expr::is_zero() const { return d_->terms.empty(); }
inline bool Expr::is_rational() const {
  return d_->terms.empty() || (d_->terms.size() == 1 && d_->terms[0].factors.empty());
}
inline Rational Expr::as_rational() const {
  if (d_->terms.empty()) return Rational(0);
  if (d_->terms.size() == 1 && d_->terms[0].factors.empty()) return d_->terms[0].coef;
  throw ExprError("expression is not a rational constant");
}

inline Expr operator+(const Expr& a, const Expr& b) {
  std::vector<Term> raw = a.data().terms;
  const auto& tb = b.data().terms;
  raw.insert(raw.end(), tb.begin(), tb.end());
  return make_expr_from_terms(std::move(raw));
}

inline Expr operator-(const Expr& a) {
  std::vector<Term> raw = a.data().terms;
  for (auto& t : raw) t.coef = -t.coef;
  return make_expr_from_terms(std::move(raw));
}

inline Expr operator-(const Expr& a, const Expr& b) { return a + (-b); }

inline Expr operator*(const Expr& a, const Expr& b) {
  std::vector<Term> raw;
  raw.reserve(a.data().terms.size() * b.data().terms.size());
  for (const auto& ta : a.data().terms)
    for (const auto& tb : b.data().terms) raw.push_back(detail::term_mul(ta, tb));
  return make_expr_from_terms(std::move(raw));
}

// ---------------------------------------------------------------------------
// Powers
// ---------------------------------------------------------------------------

namespace detail {

// Split an expression into (numerator-terms, common denominator factors).
// By construction every term carries the identical multiset of
// negative-integer opaque factors.
inline void split_denominator(const Expr& e, std::vector<Term>& numer,
                              std::vector<std::pair<Expr, long>>& denom) {
  numer.clear();
  denom.clear();
  bool first = true;
  for (const auto& t : e.data().terms) {
    Term n;
    n.coef = t.coef;
    for (const auto& f : t.factors) {
      if (factor_is_neg_int_opaque(f)) {
        if (first) denom.emplace_back(f.base.arg, -f.exp.as_integer());
        continue;
      }
      n.factors.push_back(f);
    }
    numer.push_back(std::move(n));
    first = false;
  }
}

inline Rational terms_content(const std::vector<Term>& ts) {
  BigInt gn = 0, ld = 1;
  for (const auto& t : ts) {
    gn = boost::multiprecision::gcd(gn, boost::multiprecision::abs(num(t.coef)));
    ld = ld / boost::multiprecision::gcd(ld, den(t.coef)) * den(t.coef);
  }
  if (gn == 0) return Rational(1);
  return Rational(gn) / Rational(ld);
}

}  // namespace detail

inline Expr pow(const Expr& g, const LinExp& r) {
  using namespace detail;
  if (r.is_zero()) return Expr::integer(1);  // 0^0 = 1 by convention
  if (r.is_one()) return g;

  if (g.is_zero()) {
    if (r.is_constant()) {
      if (r.as_rational() > 0) return Expr();
      throw PoleError("zero base at nonpositive power");
    }
    throw UnsupportedError("zero base with parameter exponent");
  }

  if (g.is_rational()) {
    Rational c = g.as_rational();
    if (c == 1) return Expr::integer(1);
    if (r.is_integer()) return Expr::number(rational_pow(c, r.as_integer()));
    if (r.is_constant()) {
      const Rational& e = r.as_rational();
      Rational root;
      if (rational_root(c, to_long(den(e)), root))
        return Expr::number(rational_pow(root, to_long(num(e))));
    }
    Term t;
    t.coef = Rational(1);
    t.factors.push_back(Factor{FactorBase{BaseKind::opaque, "", g}, r});
    return make_expr_from_terms({t});
  }

  const auto& terms = g.data().terms;

  if (terms.size() == 1) {
    const Term& t0 = terms[0];
    bool can_distribute = false;
    Rational coef_pow(1);
    if (r.is_integer()) {
      coef_pow = rational_pow(t0.coef, r.as_integer());
      can_distribute = true;
    } else if (t0.coef == 1) {
      can_distribute = true;
    } else if (r.is_constant()) {
      const Rational& e = r.as_rational();
      Rational root;
      if (rational_root(t0.coef, to_long(den(e)), root)) {
        coef_pow = rational_pow(root, to_long(num(e)));
        can_distribute = true;
      }
    }
    if (can_distribute) {
      Term t;
      t.coef = coef_pow;
      for (const auto& f : t0.factors) {
        Factor nf = f;
        if (r.is_constant()) {
          nf.exp = f.exp * r.as_rational();
        } else if (f.exp.is_constant()) {
          nf.exp = r * f.exp.as_rational();
        } else {
          throw UnsupportedError("parameter exponent raised to parameter power");
        }
        t.factors.push_back(nf);
      }
      return make_expr_from_terms({t});
    }
    Term t;
    t.coef = Rational(1);
    t.factors.push_back(Factor{FactorBase{BaseKind::opaque, "", g}, r});
    return make_expr_from_terms({t});
  }

  // multi-term base
  if (r.is_integer()) {
    long k = r.as_integer();
    if (k > 0) {
      Expr acc = Expr::integer(1);
      Expr b = g;
      long n = k;
      while (n > 0) {
        if (n & 1) acc = acc * b;
        if ((n >>= 1) != 0) b = b * b;
      }
      return acc;
    }
    // negative: invert the fraction N/D
    std::vector<Term> numer;
    std::vector<std::pair<Expr, long>> denom;
    split_denominator(g, numer, denom);
    Expr result = Expr::integer(1);
    for (const auto& [base, mult] : denom) result = result * pow(base, LinExp(-k * mult));
    // numerator^k with k<0
    numer = settle_terms(std::move(numer));
    if (numer.empty()) throw PoleError("zero denominator");
    if (numer.size() == 1) {
      Expr mono = make_expr_from_terms({numer[0]});
      return result * pow(mono, LinExp(k));
    }
    Rational content = terms_content(numer);
    if (numer.front().coef < 0) content = -content;
    std::vector<Term> prim = numer;
    for (auto& t : prim) t.coef /= content;
    Expr prim_expr = make_expr_from_terms(std::move(prim));
    Term inv;
    inv.coef = rational_pow(content, k);
    inv.factors.push_back(Factor{FactorBase{BaseKind::opaque, "", prim_expr}, LinExp(k)});
    return result * make_expr_from_terms({inv});
  }

  Term t;
  t.coef = Rational(1);
  t.factors.push_back(Factor{FactorBase{BaseKind::opaque, "", g}, r});
  return make_expr_from_terms({t});
}

inline Expr pow(const Expr& g, long k) { return pow(g, LinExp(k)); }
inline Expr pow(const Expr& g, const Rational& r) { return pow(g, LinExp(r)); }

inline Expr operator/(const Expr& a, const Expr& b) { return a * pow(b, LinExp(-1)); }

// Convenience mixed-mode arithmetic.
inline Expr operator*(const Rational& c, const Expr& e) { return Expr::number(c) * e; }
inline Expr operator*(long c, const Expr& e) { return Expr::integer(c) * e; }
inline Expr operator*(const Expr& e, long c) { return e * Expr::integer(c); }
inline Expr operator+(long c, const Expr& e) { return Expr::integer(c) + e; }
inline Expr operator+(const Expr& e, long c) { return e + Expr::integer(c); }
inline Expr operator-(long c, const Expr& e) { return Expr::integer(c) - e; }
inline Expr operator-(const Expr& e, long c) { return e - Expr::integer(c); }
inline Expr operator/(long c, const Expr& e) { return Expr::integer(c) / e; }
inline Expr operator/(const Expr& e, long c) { return e / Expr::integer(c); }

// ---------------------------------------------------------------------------
// exp / abs
// ---------------------------------------------------------------------------

inline Expr exp(const Expr& arg) {
  if (arg.is_zero()) return Expr::integer(1);
  Term t;
  t.coef = Rational(1);
  t.factors.push_back(Factor{FactorBase{BaseKind::exponential, "", arg}, LinExp(1)});
  return make_expr_from_terms({t});
}

inline Expr abs(const Expr& arg0) {
  Expr arg = arg0;
  if (arg.is_zero()) return Expr();
  if (arg.is_rational()) {
    Rational v = arg.as_rational();
    return Expr::number(v < 0 ? -v : v);
  }
  const auto& terms = arg.data().terms;
  if (terms.size() == 1) {
    const Term& t0 = terms[0];
    Term t;
    t.coef = t0.coef < 0 ? -t0.coef : t0.coef;
    for (const auto& f : t0.factors) {
      switch (f.base.kind) {
        case BaseKind::exponential:
          t.factors.push_back(f);  // exp(...) > 0
          break;
        case BaseKind::absval:
          t.factors.push_back(f);  // already nonnegative
          break;
        case BaseKind::symbol: {
          Factor nf;
          nf.base = FactorBase{BaseKind::absval, "", Expr::sym(f.base.name)};
          nf.exp = f.exp;
          t.factors.push_back(nf);
          break;
        }
        case BaseKind::opaque: {
          Expr inner = f.base.arg;
          bool negated = !inner.data().terms.empty() && inner.data().terms[0].coef < 0;
          Factor nf;
          nf.base = FactorBase{BaseKind::absval, "", negated ? -inner : inner};
          nf.exp = f.exp;
          t.factors.push_back(nf);
          break;
        }
      }
    }
    return make_expr_from_terms({t});
  }
  // multi-term: sign-canonical
  if (terms[0].coef < 0) arg = -arg;
  Term t;
  t.coef = Rational(1);
  t.factors.push_back(Factor{FactorBase{BaseKind::absval, "", arg}, LinExp(1)});
  return make_expr_from_terms({t});
}

// ---------------------------------------------------------------------------
// Calculus and evaluation
// ---------------------------------------------------------------------------

inline Expr to_expr(const LinExp& e) {
  Expr r = Expr::number(e.constant());
  for (const auto& [p, c] : e.terms()) r = r + Expr::number(c) * Expr::sym(p);
  return r;
}

inline Expr diff(const Expr& e, const std::string& var);

namespace detail {

inline Expr factor_to_expr(const Factor& f) {
  Term t;
  t.coef = Rational(1);
  t.factors.push_back(f);
  return make_expr_from_terms({t});
}

inline Expr diff_factor(const Factor& f, const std::string& var) {
  switch (f.base.kind) {
    case BaseKind::symbol: {
      if (f.base.name != var) return Expr();
      if (f.exp.depends_on(var))
        throw UnsupportedError("exponent depends on differentiation variable");
      Factor down = f;
      down.exp = f.exp - LinExp(1);
      return to_expr(f.exp) * factor_to_expr(down);
    }
    case BaseKind::exponential: {
      Expr da = diff(f.base.arg, var);
      if (da.is_zero()) return Expr();
      return da * factor_to_expr(f);  // exponent is canonical 1
    }
    case BaseKind::absval: {
      Expr da = diff(f.base.arg, var);
      if (da.is_zero()) return Expr();
      throw UnsupportedError("absolute value is not differentiable in this class");
    }
    case BaseKind::opaque: {
      Expr da = diff(f.base.arg, var);
      if (da.is_zero()) return Expr();
      if (f.exp.depends_on(var))
        throw UnsupportedError("exponent depends on differentiation variable");
      Factor down = f;
      down.exp = f.exp - LinExp(1);
      return to_expr(f.exp) * pow(f.base.arg, down.exp) * da;
    }
  }
  return Expr();
}

}  // namespace detail

inline Expr diff(const Expr& e, const std::string& var) {
  Expr sum;
  for (const auto& t : e.data().terms) {
    for (std::size_t i = 0; i < t.factors.size(); ++i) {
      Expr dfi = detail::diff_factor(t.factors[i], var);
      if (dfi.is_zero()) continue;
      Expr rest = Expr::number(t.coef);
      for (std::size_t j = 0; j < t.factors.size(); ++j)
        if (j != i) rest = rest * detail::factor_to_expr(t.factors[j]);
      sum = sum + rest * dfi;
    }
  }
  return sum;
}

inline Expr substitute(const Expr& e, const std::string& name, const Expr& value) {
  Expr sum;
  for (const auto& t : e.data().terms) {
    Expr prod = Expr::number(t.coef);
    for (const auto& f : t.factors) {
      if (f.exp.depends_on(name)) {
        if (!value.is_rational())
          throw UnsupportedError("cannot substitute a non-constant into an exponent");
      }
      LinExp ex = f.exp;
      if (f.exp.depends_on(name)) ex = f.exp.with_param(name, value.as_rational());
      Expr base;
      switch (f.base.kind) {
        case BaseKind::symbol:
          base = f.base.name == name ? value : Expr::sym(f.base.name);
          break;
        case BaseKind::exponential:
          prod = prod * exp(substitute(f.base.arg, name, value) * to_expr(ex));
          continue;
        case BaseKind::absval:
          base = abs(substitute(f.base.arg, name, value));
          break;
        case BaseKind::opaque:
          base = substitute(f.base.arg, name, value);
          break;
      }
      prod = prod * pow(base, ex);
    }
    sum = sum + prod;
  }
  return sum;
}

inline double eval(const Expr& e, const std::map<std::string, double>& env) {
  double sum = 0;
  for (const auto& t : e.data().terms) {
    double prod = to_double(t.coef);
    for (const auto& f : t.factors) {
      double ex = f.exp.eval(env);
      double base = 0;
      switch (f.base.kind) {
        case BaseKind::symbol: {
          auto it = env.find(f.base.name);
          if (it == env.end()) throw ExprError("unbound symbol: " + f.base.name);
          base = it->second;
          break;
        }
        case BaseKind::exponential:
          prod *= std::exp(eval(f.base.arg, env));
          continue;
        case BaseKind::absval:
          base = std::fabs(eval(f.base.arg, env));
          break;
        case BaseKind::opaque:
          base = eval(f.base.arg, env);
          break;
      }
      double p;
      if (base == 0.0 && ex < 0) throw PoleError("evaluation at a pole");
      if (base < 0 && ex != std::floor(ex))
        throw ExprError("negative base at non-integer power");
      p = std::pow(base, ex);
      if (!std::isfinite(p)) throw PoleError("non-finite value in evaluation");
      prod *= p;
    }
    sum += prod;
  }
  if (!std::isfinite(sum)) throw PoleError("non-finite value in evaluation");
  return sum;
}

// Exact evaluation with rational bindings. Returns nullopt when the value is
// irrational (surviving exp factor, inexact root); throws PoleError on
// division by zero.
inline std::optional<Rational> eval_exact(const Expr& e,
                                          const std::map<std::string, Rational>& env) {
  Rational sum(0);
  for (const auto& t : e.data().terms) {
    Rational prod = t.coef;
    for (const auto& f : t.factors) {
      LinExp ex = f.exp;
      for (const auto& [p, c] : f.exp.terms()) {
        auto it = env.find(p);
        if (it != env.end()) ex = ex.with_param(p, it->second);
      }
      if (!ex.is_constant()) return std::nullopt;
      Rational base;
      switch (f.base.kind) {
        case BaseKind::symbol: {
          auto it = env.find(f.base.name);
          if (it == env.end()) return std::nullopt;
          base = it->second;
          break;
        }
        case BaseKind::exponential: {
          auto v = eval_exact(f.base.arg, env);
          if (!v) return std::nullopt;
          if (*v == 0) continue;  // exp(0) = 1
          return std::nullopt;    // exp of nonzero rational is irrational
        }
        case BaseKind::absval: {
          auto v = eval_exact(f.base.arg, env);
          if (!v) return std::nullopt;
          base = *v < 0 ? -*v : *v;
          break;
        }
        case BaseKind::opaque: {
          auto v = eval_exact(f.base.arg, env);
          if (!v) return std::nullopt;
          base = *v;
          break;
        }
      }
      const Rational& er = ex.as_rational();
      if (base == 0) {
        if (er > 0) { prod = 0; continue; }
        if (er == 0) continue;  // 0^0 = 1
        throw PoleError("exact evaluation at a pole");
      }
      if (is_integer(er)) {
        prod *= rational_pow(base, to_long(er));
      } else {
        Rational root;
        if (!rational_root(base, to_long(den(er)), root)) return std::nullopt;
        prod *= rational_pow(root, to_long(num(er)));
      }
    }
    sum += prod;
  }
  return sum;
}

inline void collect_symbols(const Expr& e, std::set<std::string>& out) {
  for (const auto& t : e.data().terms)
    for (const auto& f : t.factors) {
      for (const auto& [p, c] : f.exp.terms()) out.insert(p);
      if (f.base.kind == BaseKind::symbol)
        out.insert(f.base.name);
      else
        collect_symbols(f.base.arg, out);
    }
}

inline std::set<std::string> free_symbols(const Expr& e) {
  std::set<std::string> s;
  collect_symbols(e, s);
  return s;
}

// View an expression as a rational-affine form in its symbols, if it is one.
inline std::optional<LinExp> as_linexp(const Expr& e) {
  LinExp out{Rational(0)};
  for (const auto& t : e.data().terms) {
    if (t.factors.empty()) {
      out += LinExp(t.coef);
    } else if (t.factors.size() == 1 && t.factors[0].base.kind == BaseKind::symbol &&
               t.factors[0].exp.is_one()) {
      out += LinExp::param(t.factors[0].base.name, t.coef);
    } else {
      return std::nullopt;
    }
  }
  return out;
}

// Structural equality on canonical forms, with a randomized numeric fallback
// distinguishing "equal" (identical normal forms) from "probably equal".
enum class Equality { distinct, equal, probably_equal };

inline Equality equality(const Expr& a, const Expr& b, int samples = 32) {
  if (identical(a, b)) return Equality::equal;
  std::set<std::string> syms = free_symbols(a);
  collect_symbols(b, syms);
  // deterministic linear-congruential stream; sample positive values to stay
  // on the principal branch of rational powers
  unsigned long long state = 0x243f6a8885a308d3ull;
  auto next01 = [&]() {
    state = state * 6364136223846793005ull + 1442695040888963407ull;
    return static_cast<double>((state >> 11) & ((1ull << 40) - 1)) / static_cast<double>(1ull << 40);
  };
  int done = 0, attempts = 0;
  while (done < samples && attempts < samples * 8) {
    ++attempts;
    std::map<std::string, double> env;
    for (const auto& s : syms) env[s] = 0.1 + 1.8 * next01();
    try {
      double va = eval(a, env), vb = eval(b, env);
      if (std::fabs(va - vb) > 1e-10 * (1.0 + std::fabs(va) + std::fabs(vb)))
        return Equality::distinct;
      ++done;
    } catch (const ExprError&) {
      continue;  // pole or domain issue: resample
    }
  }
  if (done == 0) return Equality::distinct;
  return Equality::probably_equal;
}

inline bool equals(const Expr& a, const Expr& b) {
  return equality(a, b) != Equality::distinct;
}

}  // namespace arclosure
