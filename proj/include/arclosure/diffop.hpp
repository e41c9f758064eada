#pragma once

// Differential operators with symbolic coefficients over a coordinate frame or
// a named frame of vector fields. Words of generators are composed by the
// Leibniz rule; operators are kept as sorted monomial lists (word length, then
// lexicographic word). In named frames, out-of-order words are rewritten with
// the commutator expansion Y_j Y_i = Y_i Y_j - [Y_i, Y_j] so that canonical
// words have nondecreasing generator indices.

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "arclosure/expr.hpp"
#include "arclosure/expr_io.hpp"

namespace arclosure {

class FrameError : public ExprError {
 public:
  explicit FrameError(const std::string& m) : ExprError(m) {}
};
class NotInFrameAlgebra : public FrameError {
 public:
  explicit NotInFrameAlgebra(const std::string& m) : FrameError(m) {}
};

struct VectorField {
  std::vector<Expr> coef;  // components w.r.t. coordinate partials
};

inline Expr apply_field(const VectorField& v, const Expr& u,
                        const std::vector<std::string>& vars) {
  Expr r;
  for (std::size_t i = 0; i < vars.size(); ++i)
    if (!v.coef[i].is_zero()) r = r + v.coef[i] * diff(u, vars[i]);
  return r;
}

inline VectorField commutator(const VectorField& a, const VectorField& b,
                              const std::vector<std::string>& vars) {
  VectorField r;
  r.coef.resize(vars.size());
  for (std::size_t i = 0; i < vars.size(); ++i)
    r.coef[i] = apply_field(a, b.coef[i], vars) - apply_field(b, a.coef[i], vars);
  return r;
}

// A frame is either the coordinate frame (fields empty: generator i is the
// partial derivative in vars[i]) or a named frame of vector fields.
struct Frame {
  std::vector<std::string> vars;
  std::vector<std::string> names;   // generator display names
  std::vector<VectorField> fields;  // empty for the coordinate frame

  bool coordinate() const { return fields.empty(); }
  std::size_t size() const { return coordinate() ? vars.size() : fields.size(); }

  static Frame coords(std::vector<std::string> vars) {
    Frame f;
    f.names.reserve(vars.size());
    for (const auto& v : vars) f.names.push_back("D" + v);
    f.vars = std::move(vars);
    return f;
  }
  static Frame named(std::vector<std::string> vars, std::vector<std::string> names,
                     std::vector<VectorField> fields) {
    Frame f;
    f.vars = std::move(vars);
    f.names = std::move(names);
    f.fields = std::move(fields);
    if (f.names.size() != f.fields.size())
      throw FrameError("frame needs one name per field");
    for (const auto& vf : f.fields)
      if (vf.coef.size() != f.vars.size())
        throw FrameError("field component count must match variable count");
    return f;
  }

  // Generator i as a vector field in coordinates.
  VectorField field(std::size_t i) const {
    if (!coordinate()) return fields[i];
    VectorField v;
    v.coef.assign(vars.size(), Expr());
    v.coef[i] = Expr::integer(1);
    return v;
  }
};

inline bool same_frame(const Frame& a, const Frame& b) {
  if (a.vars != b.vars || a.names != b.names) return false;
  if (a.fields.size() != b.fields.size()) return false;
  for (std::size_t i = 0; i < a.fields.size(); ++i)
    for (std::size_t j = 0; j < a.vars.size(); ++j)
      if (!identical(a.fields[i].coef[j], b.fields[i].coef[j])) return false;
  return true;
}

struct OpMonomial {
  Expr coef;
  std::vector<int> word;  // generator indices, outermost first
};

class DiffOp;
DiffOp compose(const DiffOp& p, const DiffOp& q);

class DiffOp {
 public:
  DiffOp() = default;
  explicit DiffOp(Frame fr) : frame_(std::move(fr)) {}

  static DiffOp zero(Frame fr) { return DiffOp(std::move(fr)); }
  static DiffOp multiplication(Frame fr, const Expr& c) {
    DiffOp p(std::move(fr));
    if (!c.is_zero()) p.monos_.push_back({c, {}});
    return p;
  }
  static DiffOp generator(Frame fr, int i) {
    DiffOp p(std::move(fr));
    p.monos_.push_back({Expr::integer(1), {i}});
    return p;
  }

  const Frame& frame() const { return frame_; }
  const std::vector<OpMonomial>& monomials() const { return monos_; }

  // Coefficient of a given canonical word (zero if absent).
  Expr coefficient(const std::vector<int>& word) const {
    for (const auto& m : monos_)
      if (m.word == word) return m.coef;
    return Expr();
  }

  int order() const {
    int k = 0;
    for (const auto& m : monos_) k = std::max<int>(k, static_cast<int>(m.word.size()));
    return k;
  }
  bool is_zero() const { return monos_.empty(); }

  friend DiffOp operator+(const DiffOp& a, const DiffOp& b) {
    if (!same_frame(a.frame_, b.frame_)) throw FrameError("frame mismatch in operator sum");
    std::vector<OpMonomial> raw = a.monos_;
    raw.insert(raw.end(), b.monos_.begin(), b.monos_.end());
    return make(a.frame_, std::move(raw));
  }
  friend DiffOp operator-(const DiffOp& a, const DiffOp& b) { return a + (-b); }
  friend DiffOp operator-(const DiffOp& a) {
    DiffOp r = a;
    for (auto& m : r.monos_) m.coef = -m.coef;
    return r;
  }
  friend DiffOp operator*(const Expr& c, const DiffOp& p) {
    std::vector<OpMonomial> raw = p.monos_;
    for (auto& m : raw) m.coef = c * m.coef;
    return make(p.frame_, std::move(raw));
  }

  // Apply to a symbolic function.
  Expr apply(const Expr& u) const {
    Expr r;
    for (const auto& m : monos_) {
      Expr v = u;
      for (auto it = m.word.rbegin(); it != m.word.rend(); ++it) {
        if (frame_.coordinate())
          v = diff(v, frame_.vars[*it]);
        else
          v = apply_field(frame_.fields[*it], v, frame_.vars);
      }
      r = r + m.coef * v;
    }
    return r;
  }

  // Build a canonical operator from raw monomials: combine equal words, drop
  // zeros, straighten out-of-order words with the commutator expansion, sort.
  static DiffOp make(Frame fr, std::vector<OpMonomial> raw) {
    DiffOp p(std::move(fr));
    std::vector<OpMonomial> work = std::move(raw);
    std::size_t guard = 0;
    while (!work.empty()) {
      if (++guard > 100000) throw FrameError("operator normalization did not terminate");
      OpMonomial m = std::move(work.back());
      work.pop_back();
      if (m.coef.is_zero()) continue;
      std::size_t desc = descent(m.word);
      if (desc == m.word.size()) {
        p.insert_sorted(std::move(m));
        continue;
      }
      // w = prefix . [j, i] . suffix with j > i  ->  prefix . [i, j] . suffix
      //    - prefix . [Y_i, Y_j]-expansion . suffix
      int j = m.word[desc], i = m.word[desc + 1];
      OpMonomial swapped = m;
      std::swap(swapped.word[desc], swapped.word[desc + 1]);
      work.push_back(std::move(swapped));
      const auto& cs = p.frame_.coordinate() ? std::vector<Expr>(p.frame_.size(), Expr())
                                             : structure_coefficients(p.frame_, i, j);
      for (std::size_t k = 0; k < cs.size(); ++k) {
        if (cs[k].is_zero()) continue;
        // prefix ∘ (c_k Y_k) ∘ suffix: push the coefficient through the prefix
        // by treating it as a multiplication operator composed on the left.
        DiffOp prefix = word_op(p.frame_, std::vector<int>(m.word.begin(), m.word.begin() + desc));
        DiffOp mid = DiffOp::multiplication(p.frame_, cs[k]);
        DiffOp gen = DiffOp::generator(p.frame_, static_cast<int>(k));
        DiffOp suffix =
            word_op(p.frame_, std::vector<int>(m.word.begin() + desc + 2, m.word.end()));
        DiffOp corr = compose(compose(prefix, compose(mid, gen)), suffix);
        for (const auto& cm : corr.monos_) {
          OpMonomial nm = cm;
          nm.coef = -m.coef * nm.coef;
          work.push_back(std::move(nm));
        }
      }
    }
    return p;
  }

  // Expand [Y_i, Y_j] in the frame: returns coefficients c with
  // [Y_i, Y_j] = sum_k c_k Y_k (Cramer, exact expression arithmetic).
  static std::vector<Expr> structure_coefficients(const Frame& fr, int i, int j) {
    std::vector<Expr> out(fr.size(), Expr());
    if (fr.coordinate()) return out;
    VectorField br = commutator(fr.fields[i], fr.fields[j], fr.vars);
    if (fr.size() == 1) {
      out[0] = br.coef[0] / fr.fields[0].coef[0];
      return out;
    }
    if (fr.size() == 2 && fr.vars.size() == 2) {
      const Expr &a11 = fr.fields[0].coef[0], &a12 = fr.fields[0].coef[1];
      const Expr &a21 = fr.fields[1].coef[0], &a22 = fr.fields[1].coef[1];
      Expr det = a11 * a22 - a21 * a12;
      if (det.is_zero()) throw FrameError("frame fields are linearly dependent");
      out[0] = (br.coef[0] * a22 - br.coef[1] * a21) / det;
      out[1] = (a11 * br.coef[1] - a12 * br.coef[0]) / det;
      return out;
    }
    throw FrameError("structure coefficients implemented for frames of size 1 or 2");
  }

 private:
  static std::size_t descent(const std::vector<int>& w) {
    for (std::size_t k = 0; k + 1 < w.size(); ++k)
      if (w[k] > w[k + 1]) return k;
    return w.size();
  }

  static DiffOp word_op(const Frame& fr, std::vector<int> w) {
    DiffOp p(fr);
    p.monos_.push_back({Expr::integer(1), std::move(w)});
    return p;
  }

  void insert_sorted(OpMonomial m) {
    auto cmp = [](const std::vector<int>& a, const std::vector<int>& b) {
      if (a.size() != b.size()) return a.size() < b.size();
      return a < b;
    };
    auto it = std::lower_bound(monos_.begin(), monos_.end(), m.word,
                               [&](const OpMonomial& x, const std::vector<int>& w) {
                                 return cmp(x.word, w);
                               });
    if (it != monos_.end() && it->word == m.word) {
      it->coef = it->coef + m.coef;
      if (it->coef.is_zero()) monos_.erase(it);
    } else {
      monos_.insert(it, std::move(m));
    }
  }

  Frame frame_;
  std::vector<OpMonomial> monos_;
};

// Composition by the Leibniz rule.
inline DiffOp compose(const DiffOp& p, const DiffOp& q) {
  if (!same_frame(p.frame(), q.frame()))
    throw FrameError("frame mismatch in operator composition");
  const Frame& fr = p.frame();
  // generator i applied to q: Y ∘ (d · W) = Y(d) · W + d · (Y W)
  auto apply_gen = [&](int i, const std::vector<OpMonomial>& ms) {
    std::vector<OpMonomial> out;
    out.reserve(ms.size() * 2);
    for (const auto& m : ms) {
      Expr dc;
      if (fr.coordinate())
        dc = diff(m.coef, fr.vars[i]);
      else
        dc = apply_field(fr.fields[i], m.coef, fr.vars);
      if (!dc.is_zero()) out.push_back({dc, m.word});
      std::vector<int> w;
      w.reserve(m.word.size() + 1);
      w.push_back(i);
      w.insert(w.end(), m.word.begin(), m.word.end());
      out.push_back({m.coef, std::move(w)});
    }
    return out;
  };
  std::vector<OpMonomial> acc;
  for (const auto& pm : p.monomials()) {
    std::vector<OpMonomial> cur = q.monomials();
    for (auto it = pm.word.rbegin(); it != pm.word.rend(); ++it) cur = apply_gen(*it, cur);
    for (auto& m : cur) {
      m.coef = pm.coef * m.coef;
      acc.push_back(std::move(m));
    }
  }
  return DiffOp::make(fr, std::move(acc));
}

// s^left ∘ p ∘ s^right as an operator in the same frame; powers may carry
// parameters (e.g. gamma and 2-gamma).
inline DiffOp conjugate_by_weight(const DiffOp& p, const Expr& s, const LinExp& left,
                                  const LinExp& right) {
  DiffOp right_mult = DiffOp::multiplication(p.frame(), pow(s, right));
  DiffOp inner = compose(p, right_mult);
  Expr sl = pow(s, left);
  return sl * inner;
}

// ---------------------------------------------------------------------------
// Smoothness certification and frame substitution
// ---------------------------------------------------------------------------

namespace detail {

// Primitive, positive-leading copy of a normalized expression (the canonical
// base used by the fraction machinery for denominators).
inline Expr primitive_part(const Expr& e) {
  const auto& ts = e.data().terms;
  if (ts.empty()) return e;
  Rational content = terms_content(ts);
  if (ts.front().coef < 0) content = -content;
  std::vector<Term> prim = ts;
  for (auto& t : prim) t.coef /= content;
  return make_expr_from_terms(std::move(prim));
}

// Exact rational roots of p seen as a polynomial in v alone. Returns nullopt
// when p is not a plain polynomial in v (other symbols, special factors, or
// fractional exponents), so callers can fall back to coarser tests.
inline std::optional<std::vector<Rational>> rational_roots_univariate(const Expr& p,
                                                                      const std::string& v) {
  std::map<long, Rational> coef;
  for (const auto& t : p.data().terms) {
    long deg = 0;
    for (const auto& f : t.factors) {
      if (f.base.kind != BaseKind::symbol || f.base.name != v) return std::nullopt;
      if (!f.exp.is_integer()) return std::nullopt;
      long k = f.exp.as_integer();
      if (k < 0) return std::nullopt;
      deg += k;
    }
    coef[deg] += t.coef;
  }
  while (!coef.empty() && coef.begin()->second == 0) coef.erase(coef.begin());
  std::vector<Rational> roots;
  if (coef.empty()) return roots;  // zero polynomial: callers treat separately
  long low = coef.begin()->first;
  if (low > 0) roots.push_back(Rational(0));
  // clear denominators and strip the v^low factor
  long n = coef.rbegin()->first;
  long denom_lcm = 1;
  for (const auto& [d, c] : coef) denom_lcm = std::lcm(denom_lcm, to_long(den(c)));
  std::vector<long> ic(static_cast<std::size_t>(n - low) + 1, 0);
  for (const auto& [d, c] : coef)
    ic[static_cast<std::size_t>(d - low)] = to_long(num(c) * (denom_lcm / to_long(den(c))));
  auto divisors = [](long m) {
    m = m < 0 ? -m : m;
    std::vector<long> out;
    for (long d = 1; d * d <= m; ++d)
      if (m % d == 0) {
        out.push_back(d);
        if (d != m / d) out.push_back(m / d);
      }
    return out;
  };
  auto value_at = [&](const Rational& r) {
    Rational acc(0);
    for (auto it = ic.rbegin(); it != ic.rend(); ++it) acc = acc * r + Rational(*it);
    return acc;
  };
  for (long pnum : divisors(ic.front()))
    for (long qden : divisors(ic.back()))
      for (int sgn : {1, -1}) {
        Rational cand(sgn * pnum, qden);
        if (value_at(cand) == 0 &&
            std::find(roots.begin(), roots.end(), cand) == roots.end())
          roots.push_back(cand);
      }
  return roots;
}

}  // namespace detail

// True iff the normal form of c carries no negative (or fractional, or
// parameter-dependent) powers tied to s: powers of s itself when s is a sum,
// or powers of the symbols in s's support when s is a single term (exponential
// factors count as units and are ignored). When s is a univariate polynomial
// its exact rational zeros are probed as well, so a factor singular at just
// one component of {s = 0} (say 1/x against s = x - x^2) is caught. For
// multivariate sums the test is divisibility by the primitive part of s, which
// covers every coefficient the conjugation machinery produces.
inline bool smoothness_check(const Expr& c, const Expr& s) {
  Expr sn = s;
  const auto& sterms = sn.data().terms;
  if (sterms.empty()) throw FrameError("smoothness check against the zero weight");

  std::set<std::string> mono_support;
  Expr prim;
  bool s_is_monomial = sterms.size() == 1;
  std::optional<std::vector<Rational>> uni_roots;  // exact zeros when s is univariate
  std::string uni_var;
  if (s_is_monomial) {
    for (const auto& f : sterms[0].factors)
      if (f.base.kind == BaseKind::symbol) mono_support.insert(f.base.name);
  } else {
    prim = detail::primitive_part(sn);
    std::set<std::string> sup;
    for (const auto& t : prim.data().terms)
      for (const auto& f : t.factors)
        if (f.base.kind == BaseKind::symbol) sup.insert(f.base.name);
    if (sup.size() == 1) {
      uni_var = *sup.begin();
      uni_roots = detail::rational_roots_univariate(prim, uni_var);
    }
  }

  auto smooth_exp = [](const LinExp& e) { return e.is_integer() && e.as_integer() >= 0; };

  for (const auto& t : c.data().terms) {
    for (const auto& f : t.factors) {
      if (smooth_exp(f.exp) || f.base.kind == BaseKind::exponential) continue;
      // only powers that could fail smoothness reach this point; decide
      // whether the base is tied to the singular set {s = 0}
      bool tied = false;
      if (f.base.kind == BaseKind::symbol) {
        if (s_is_monomial && mono_support.count(f.base.name)) tied = true;
        // bare variable power when s has a rational zero at the origin of it
        if (uni_roots && f.base.name == uni_var)
          for (const auto& r : *uni_roots)
            if (r == 0) tied = true;
      } else if (f.base.kind == BaseKind::opaque || f.base.kind == BaseKind::absval) {
        if (!s_is_monomial && identical(f.base.arg, prim)) tied = true;
        // a residual base that vanishes somewhere on {s = 0} is just as singular
        if (!tied && s_is_monomial) {
          for (const auto& v : mono_support) {
            try {
              if (substitute(f.base.arg, v, Expr()).is_zero()) { tied = true; break; }
            } catch (const PoleError&) {
              tied = true;  // base not even defined on {s = 0}
              break;
            }
          }
        }
        if (!tied && !s_is_monomial) {
          std::vector<Term> q;
          if (detail::try_divide_terms(f.base.arg.data().terms, prim.data().terms, q))
            tied = true;
        }
        if (!tied && uni_roots) {
          for (const auto& r : *uni_roots) {
            try {
              if (substitute(f.base.arg, uni_var, Expr::number(r)).is_zero()) {
                tied = true;
                break;
              }
            } catch (const PoleError&) {
              tied = true;
              break;
            }
          }
        }
      }
      if (tied) return false;
    }
  }
  return true;
}

// Rewrite a coordinate-frame operator in a named frame by exact substitution
// of the inverted frame relations, then certify that every coefficient is
// smooth across {s = 0}. Throws NotInFrameAlgebra with the offending
// coefficient otherwise.
inline DiffOp to_frame(const DiffOp& p, const Frame& target, const Expr& s) {
  if (!p.frame().coordinate())
    throw FrameError("to_frame expects an operator in the coordinate frame");
  if (target.coordinate()) throw FrameError("target frame must be a named frame");
  if (target.vars != p.frame().vars) throw FrameError("variable mismatch in to_frame");
  const std::size_t n = target.vars.size();
  if (target.fields.size() != n)
    throw FrameError("to_frame needs as many fields as variables");

  // invert: partial_j = sum_i B_ji Y_i
  std::vector<std::vector<Expr>> B(n, std::vector<Expr>(n));
  if (n == 1) {
    B[0][0] = 1 / target.fields[0].coef[0];
  } else if (n == 2) {
    const Expr &a11 = target.fields[0].coef[0], &a12 = target.fields[0].coef[1];
    const Expr &a21 = target.fields[1].coef[0], &a22 = target.fields[1].coef[1];
    Expr det = a11 * a22 - a21 * a12;
    if (det.is_zero()) throw FrameError("frame fields are linearly dependent");
    B[0][0] = a22 / det;
    B[0][1] = -(a21 / det);
    B[1][0] = -(a12 / det);
    B[1][1] = a11 / det;
  } else {
    throw FrameError("to_frame implemented for 1 or 2 variables");
  }

  std::vector<DiffOp> subst;  // substitution operator for each partial
  subst.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<OpMonomial> ms;
    for (std::size_t i = 0; i < n; ++i)
      if (!B[j][i].is_zero()) ms.push_back({B[j][i], {static_cast<int>(i)}});
    subst.push_back(DiffOp::make(target, std::move(ms)));
  }

  DiffOp result = DiffOp::zero(target);
  for (const auto& m : p.monomials()) {
    DiffOp acc = DiffOp::multiplication(target, Expr::integer(1));
    for (auto it = m.word.rbegin(); it != m.word.rend(); ++it)
      acc = compose(subst[*it], acc);
    result = result + m.coef * acc;
  }

  for (const auto& m : result.monomials())
    if (!smoothness_check(m.coef, s))
      throw NotInFrameAlgebra("coefficient not smooth across the singular set: " +
                              print(m.coef));
  return result;
}

// ---------------------------------------------------------------------------
// Display and comparison
// ---------------------------------------------------------------------------

inline std::string print(const DiffOp& p) {
  if (p.monomials().empty()) return "0";
  std::string out;
  bool first = true;
  for (const auto& m : p.monomials()) {
    std::string word;
    for (std::size_t k = 0; k < m.word.size();) {
      std::size_t run = k;
      while (run < m.word.size() && m.word[run] == m.word[k]) ++run;
      if (!word.empty()) word += "*";
      word += p.frame().names[m.word[k]];
      if (run - k > 1) word += "^" + std::to_string(run - k);
      k = run;
    }
    std::string coef;
    bool neg = false;
    if (m.coef.is_rational()) {
      Rational c = m.coef.as_rational();
      neg = c < 0;
      Rational a = neg ? -c : c;
      if (a != 1 || word.empty()) coef = to_string(a);
    } else if (m.coef.data().terms.size() == 1) {
      Expr c = m.coef;
      if (c.data().terms[0].coef < 0) {
        neg = true;
        c = -c;
      }
      coef = print(c);
      if (coef.find(' ') != std::string::npos || coef.find('/') != std::string::npos)
        coef = "(" + coef + ")";
    } else {
      coef = "(" + print(m.coef) + ")";
    }
    std::string piece = coef.empty() ? word : (word.empty() ? coef : coef + "*" + word);
    if (first) {
      out += (neg ? "-" : "") + piece;
      first = false;
    } else {
      out += (neg ? " - " : " + ") + piece;
    }
  }
  return out;
}

// Structural equality monomial by monomial (frames must match).
inline Equality op_equality(const DiffOp& a, const DiffOp& b) {
  if (!same_frame(a.frame(), b.frame())) return Equality::distinct;
  DiffOp d = a - b;
  if (d.is_zero()) return Equality::equal;
  Equality worst = Equality::equal;
  for (const auto& m : d.monomials()) {
    Equality e = equality(m.coef, Expr());
    if (e == Equality::distinct) return Equality::distinct;
    worst = Equality::probably_equal;
  }
  return worst;
}

inline bool op_equals(const DiffOp& a, const DiffOp& b) {
  return op_equality(a, b) != Equality::distinct;
}

}  // namespace arclosure
