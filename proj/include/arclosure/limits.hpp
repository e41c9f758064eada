#pragma once

// Constant-coefficient limit operators at singular points: identify the
// isotropy group by evaluating the frame bracket relation (never by guessing),
// freeze certified frame operators by evaluating their coefficients at the
// point, and rescale affine representatives to the unit bracket relation.

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "arclosure/chart.hpp"
#include "arclosure/diffop.hpp"
#include "arclosure/expr.hpp"
#include "arclosure/expr_io.hpp"

namespace arclosure {

struct LimitsError : ExprError {
  explicit LimitsError(const std::string& m) : ExprError(m) {}
};

enum class GroupKind { abelian, affine };

struct GroupTag {
  GroupKind kind = GroupKind::abelian;
  int rank = 1;

  std::string str() const {
    return kind == GroupKind::affine ? "Affine" : "Abelian(" + std::to_string(rank) + ")";
  }
  friend bool operator==(const GroupTag& a, const GroupTag& b) {
    return a.kind == b.kind && a.rank == b.rank;
  }
  friend bool operator!=(const GroupTag& a, const GroupTag& b) { return !(a == b); }
};

// A coefficient evaluated at a point. `sym` is the exact symbolic value and
// may still carry parameters (h0, alpha, ...); `exact` is set when it is a
// rational constant, `value` whenever it is parameter-free.
struct FrozenCoef {
  Expr sym;
  std::optional<Rational> exact;
  std::optional<double> value;

  static FrozenCoef of(Expr e) {
    FrozenCoef r;
    r.sym = std::move(e);
    if (r.sym.is_rational()) {
      r.exact = r.sym.as_rational();
      r.value = to_double(*r.exact);
    } else {
      try {
        r.value = eval(r.sym, {});
      } catch (const ExprError&) {
        // parameters left: numeric value undefined until they are bound
      }
    }
    return r;
  }
};

inline FrozenCoef freeze_value(const Expr& e, const std::vector<std::string>& vars,
                               const std::vector<Rational>& pt) {
  Expr v = e;
  for (std::size_t i = 0; i < vars.size(); ++i)
    v = substitute(v, vars[i], Expr::number(pt[i]));
  return FrozenCoef::of(std::move(v));
}

struct LimitMonomial {
  FrozenCoef coef;
  std::vector<int> word;  // nondecreasing generator indices (multi-index)
};

struct LimitOperator {
  GroupTag group;
  std::vector<std::string> names;  // generator display names
  std::vector<LimitMonomial> monomials;
  std::vector<Rational> point;
  std::string provenance;
  FrozenCoef bracket_factor;  // affine only: b in [Z1, Z2] = b Z2 at chart scale

  Expr coefficient(const std::vector<int>& word) const {
    for (const auto& m : monomials)
      if (m.word == word) return m.coef.sym;
    return Expr();
  }
  bool is_zero() const { return monomials.empty(); }
  int order() const {
    int k = 0;
    for (const auto& m : monomials) k = std::max<int>(k, static_cast<int>(m.word.size()));
    return k;
  }
};

// ---------------------------------------------------------------------------
// Isotropy group identification
// ---------------------------------------------------------------------------

inline GroupTag isotropy_type(const ARChart& chart, const Rational& qx,
                              const Rational& qy = Rational(0)) {
  Classification c = classify_point(chart, qx, qy);
  if (c.cls == PointClass::riemannian)
    throw LimitsError("no limit operator at a nonsingular point");
  if (c.cls == PointClass::nongeneric) throw LimitsError("nongeneric point: " + c.reason);
  if (chart.dim == 1) return {GroupKind::abelian, 1};

  Frame fr = lie_frame(chart);
  auto cs = DiffOp::structure_coefficients(fr, 0, 1);
  std::map<std::string, Rational> pt{{"x", qx}, {"y", qy}};
  auto s1 = sign_at(cs[0], pt), s2 = sign_at(cs[1], pt);
  if (!s1 || !s2) throw LimitsError("cannot decide the bracket relation at the point");
  if (*s1 != 0)
    throw LimitsError("bracket relation has a component along the first generator");
  GroupTag tag = *s2 == 0 ? GroupTag{GroupKind::abelian, 2} : GroupTag{GroupKind::affine, 2};
  bool grushin_like = tag.kind == GroupKind::affine;
  if (grushin_like != (c.cls == PointClass::grushin))
    throw LimitsError("bracket evaluation disagrees with the point classification");
  return tag;
}

// ---------------------------------------------------------------------------
// Freezing
// ---------------------------------------------------------------------------

// Low-level freeze: evaluate every coefficient at the point and map frame
// generators to group generators word for word. The caller vouches for the
// group tag; use the chart-based overload whenever the frame is the rescaled
// singular frame of a chart.
inline LimitOperator freeze_at(const DiffOp& p, const std::vector<Rational>& pt,
                               GroupTag group, std::vector<std::string> names,
                               std::string provenance = "") {
  LimitOperator lo;
  lo.group = group;
  lo.names = std::move(names);
  lo.point = pt;
  lo.provenance = std::move(provenance);
  for (const auto& m : p.monomials()) {
    FrozenCoef fc = freeze_value(m.coef, p.frame().vars, pt);
    if (fc.sym.is_zero()) continue;
    lo.monomials.push_back({std::move(fc), m.word});
  }
  return lo;
}

inline LimitOperator freeze(const DiffOp& p, const ARChart& chart, const Rational& qx,
                            const Rational& qy = Rational(0), std::string provenance = "") {
  Frame fr = lie_frame(chart);
  if (!same_frame(p.frame(), fr))
    throw LimitsError("operator must be expressed in the rescaled singular frame");
  GroupTag tag = isotropy_type(chart, qx, qy);
  std::vector<Rational> pt =
      chart.dim == 1 ? std::vector<Rational>{qx} : std::vector<Rational>{qx, qy};
  std::vector<std::string> names = chart.dim == 1 ? std::vector<std::string>{"Z"}
                                                  : std::vector<std::string>{"Z1", "Z2"};
  LimitOperator lo = freeze_at(p, pt, tag, std::move(names), std::move(provenance));
  if (tag.kind == GroupKind::affine) {
    auto cs = DiffOp::structure_coefficients(fr, 0, 1);
    lo.bracket_factor = freeze_value(cs[1], chart.vars(), pt);
  }
  return lo;
}

// Frozen zero-order coefficient of the twice-weighted operator, straight from
// the chart data: -(df/dx)^2 - h at the point.
inline FrozenCoef general_freeze_constant(const ARChart& chart, const Rational& qx,
                                          const Rational& qy = Rational(0)) {
  if (chart.dim != 2) throw LimitsError("the frozen-constant shortcut is a 2D operation");
  Expr fx = diff(chart.f, "x");
  Expr e = -pow(fx, 2) - chart.h;
  return freeze_value(e, chart.vars(), {qx, qy});
}

// ---------------------------------------------------------------------------
// Affine normalization
// ---------------------------------------------------------------------------

// Rescale generators so that the bracket relation becomes [Z1, Z2] = 2 Z2:
// with raw factor b, each generator is divided by c = b/2 and the whole
// operator by c^2, so a word of length k picks up c^{k-2}.
inline LimitOperator affine_normalize(const LimitOperator& op) {
  if (op.group.kind != GroupKind::affine)
    throw LimitsError("normalization applies to affine limit operators");
  if (op.bracket_factor.sym.is_zero())
    throw LimitsError("affine operator carries no bracket factor");
  Expr c = op.bracket_factor.sym / 2;
  LimitOperator r = op;
  for (auto& m : r.monomials) {
    long k = static_cast<long>(m.word.size());
    m.coef = FrozenCoef::of(m.coef.sym * pow(c, k - 2));
  }
  r.bracket_factor = FrozenCoef::of(Expr::integer(2));
  return r;
}

// ---------------------------------------------------------------------------
// Whole-pipeline helper, display, and comparison
// ---------------------------------------------------------------------------

// s^left (Delta - h/s^2) s^right rewritten in the rescaled singular frame,
// with every coefficient certified smooth across {s = 0}.
inline DiffOp frame_conjugated_operator(const ARChart& chart, const LinExp& left,
                                        const LinExp& right) {
  DiffOp wl = weighted_laplacian(chart);
  DiffOp conj = conjugate_by_weight(wl, chart.s, left, right);
  return to_frame(conj, lie_frame(chart), chart.s);
}

inline DiffOp substitute(const DiffOp& p, const std::string& name, const Expr& value) {
  std::vector<OpMonomial> raw = p.monomials();
  for (auto& m : raw) m.coef = substitute(m.coef, name, value);
  return DiffOp::make(p.frame(), std::move(raw));
}

inline LimitOperator substitute(const LimitOperator& op, const std::string& name,
                                const Expr& value) {
  LimitOperator r;
  r.group = op.group;
  r.names = op.names;
  r.point = op.point;
  r.provenance = op.provenance;
  if (!op.bracket_factor.sym.is_zero())
    r.bracket_factor = FrozenCoef::of(substitute(op.bracket_factor.sym, name, value));
  for (const auto& m : op.monomials) {
    FrozenCoef fc = FrozenCoef::of(substitute(m.coef.sym, name, value));
    if (fc.sym.is_zero()) continue;
    r.monomials.push_back({std::move(fc), m.word});
  }
  return r;
}

inline std::string print(const LimitOperator& op) {
  if (op.monomials.empty()) return "0";
  // display order: differential words by descending order (lexicographic
  // within a given order), the zero-order part last
  std::vector<const LimitMonomial*> ordered;
  ordered.reserve(op.monomials.size());
  for (const auto& m : op.monomials) ordered.push_back(&m);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const LimitMonomial* a, const LimitMonomial* b) {
                     return a->word.size() > b->word.size();
                   });
  std::string out;
  bool first = true;
  for (const LimitMonomial* mp : ordered) {
    const auto& m = *mp;
    if (m.word.empty()) {
      // zero-order part: splice the printed sum directly
      std::string raw = print(m.coef.sym);
      if (first)
        out += raw;
      else if (!raw.empty() && raw[0] == '-')
        out += " - " + raw.substr(1);
      else
        out += " + " + raw;
      first = false;
      continue;
    }
    std::string word;
    for (std::size_t k = 0; k < m.word.size();) {
      std::size_t run = k;
      while (run < m.word.size() && m.word[run] == m.word[k]) ++run;
      if (!word.empty()) word += "*";
      word += op.names[m.word[k]];
      if (run - k > 1) word += "^" + std::to_string(run - k);
      k = run;
    }
    std::string coef;
    bool neg = false;
    Expr c = m.coef.sym;
    if (c.is_rational()) {
      Rational q = c.as_rational();
      neg = q < 0;
      Rational a = neg ? -q : q;
      if (a != 1) coef = to_string(a);
    } else if (c.data().terms.size() == 1) {
      if (c.data().terms[0].coef < 0) {
        neg = true;
        c = -c;
      }
      coef = print(c);
      if (coef.find(' ') != std::string::npos || coef.find('/') != std::string::npos)
        coef = "(" + coef + ")";
    } else {
      coef = "(" + print(c) + ")";
    }
    std::string piece = coef.empty() ? word : coef + "*" + word;
    if (first) {
      out += (neg ? "-" : "") + piece;
      first = false;
    } else {
      out += (neg ? " - " : " + ") + piece;
    }
  }
  return out;
}

inline Equality limit_equality(const LimitOperator& a, const LimitOperator& b) {
  if (a.group != b.group) return Equality::distinct;
  Equality worst = Equality::equal;
  auto scan = [&](const LimitOperator& p, const LimitOperator& q) {
    for (const auto& m : p.monomials) {
      Equality e = equality(m.coef.sym, q.coefficient(m.word));
      if (e == Equality::distinct) return false;
      if (e == Equality::probably_equal) worst = Equality::probably_equal;
    }
    return true;
  };
  if (!scan(a, b) || !scan(b, a)) return Equality::distinct;
  return worst;
}

inline bool limit_equals(const LimitOperator& a, const LimitOperator& b) {
  return limit_equality(a, b) != Equality::distinct;
}

}  // namespace arclosure
