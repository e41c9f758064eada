#pragma once

// Local charts for two-dimensional structures with frame X1 = d/dx,
// X2 = f(x,y) d/dy degenerating on {f = 0}, and one-dimensional half-line /
// interval models with a defining weight s. Provides exact point
// classification, a grid-plus-bisection scan of the singular set, the
// degenerate Laplacian, divergences, and the metric/volume data.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "arclosure/diffop.hpp"
#include "arclosure/expr.hpp"
#include "arclosure/expr_io.hpp"

namespace arclosure {

struct Interval {
  Rational lo, hi;
};

struct ChartError : ExprError {
  explicit ChartError(const std::string& m) : ExprError(m) {}
};

struct ARChart {
  int dim = 2;
  Expr f;  // 2D degeneracy function (unused in 1D)
  Expr s;  // defining weight; defaults to f in 2D
  Expr h;  // zero-order weight: the perturbed operator is Delta - h/s^2
  Interval x{Rational(-1), Rational(1)};
  Interval y{Rational(-1), Rational(1)};

  std::vector<std::string> vars() const {
    return dim == 1 ? std::vector<std::string>{"x"} : std::vector<std::string>{"x", "y"};
  }

  static ARChart plane(const Expr& f, Expr h = Expr()) {
    ARChart c;
    c.dim = 2;
    c.f = f;
    c.s = f;
    c.h = std::move(h);
    if (c.f.is_zero()) throw ChartError("degeneracy function must not vanish identically");
    return c;
  }

  static ARChart line(const Expr& s, Expr h = Expr()) {
    ARChart c;
    c.dim = 1;
    c.s = s;
    c.h = std::move(h);
    c.x = {Rational(0), Rational(1)};
    if (c.s.is_zero()) throw ChartError("defining weight must not vanish identically");
    return c;
  }
};

enum class PointClass { riemannian, grushin, tangency, nongeneric };

inline std::string to_string(PointClass c) {
  switch (c) {
    case PointClass::riemannian: return "Riemannian";
    case PointClass::grushin: return "Grushin";
    case PointClass::tangency: return "Tangency";
    case PointClass::nongeneric: return "NonGeneric";
  }
  return "?";
}

struct Classification {
  PointClass cls;
  std::string reason;  // filled for NonGeneric: the first violated condition
};

namespace detail {

// Strip an exponential factor common to every term (exponentials never
// vanish), leaving an expression whose zero set is unchanged.
inline Expr strip_exponential_units(const Expr& e) {
  const auto& ts = e.data().terms;
  if (ts.empty()) return e;
  const Expr* arg = nullptr;
  for (const auto& f : ts[0].factors)
    if (f.base.kind == BaseKind::exponential) arg = &f.base.arg;
  if (!arg) return e;
  Expr stripped = e * exp(-*arg);
  for (const auto& t : stripped.data().terms)
    for (const auto& f : t.factors)
      if (f.base.kind == BaseKind::exponential) return e;  // not common after all
  return stripped;
}

}  // namespace detail

// Exact sign of e at a rational point, when decidable in rational arithmetic
// (exponential unit factors are discarded first).
inline std::optional<int> sign_at(const Expr& e, const std::map<std::string, Rational>& pt) {
  Expr core = detail::strip_exponential_units(e);
  auto v = eval_exact(core, pt);
  if (!v) return std::nullopt;
  return sign(*v);
}

inline Classification classify_point(const ARChart& chart, const Rational& qx,
                                     const Rational& qy = Rational(0)) {
  std::map<std::string, Rational> pt{{"x", qx}};
  if (chart.dim == 2) pt["y"] = qy;

  auto need = [&](const Expr& e, const std::string& what) {
    auto s = sign_at(e, pt);
    if (!s) throw ChartError("cannot decide the sign of " + what + " at the given point");
    return *s;
  };

  if (chart.dim == 1) {
    if (need(chart.s, "s") != 0) return {PointClass::riemannian, ""};
    if (need(diff(chart.s, "x"), "s'") != 0) return {PointClass::grushin, ""};
    return {PointClass::nongeneric, "s has a zero of order >= 2"};
  }

  if (need(chart.f, "f") != 0) return {PointClass::riemannian, ""};
  Expr fx = diff(chart.f, "x");
  if (need(fx, "df/dx") != 0) return {PointClass::grushin, ""};
  if (need(diff(chart.f, "y"), "df/dy") == 0)
    return {PointClass::nongeneric, "f and df vanish together: the singular set is not a curve"};
  if (need(diff(fx, "x"), "d2f/dx2") == 0)
    return {PointClass::nongeneric, "the flag stalls: d2f/dx2 = 0 at a tangency candidate"};
  return {PointClass::tangency, ""};
}

// ---------------------------------------------------------------------------
// Scan of the singular set
// ---------------------------------------------------------------------------

struct SingularSample {
  Rational x, y;
  PointClass cls;
  bool exact;  // classification certified in rational arithmetic
  std::string note;
};

struct ScanResult {
  std::vector<SingularSample> samples;           // points on {f = 0}
  std::vector<SingularSample> tangency_points;   // subset (also in samples)
  std::vector<std::string> nongeneric_findings;  // empty iff scan is clean
  bool clean() const { return nongeneric_findings.empty(); }
};

namespace detail {

// Bisect a sign change of e(fix, t) in t over [lo, hi] to width < 1e-10.
inline Rational bisect_root(const Expr& e, const std::string& movevar, const Rational& lo0,
                            const Rational& hi0, const std::map<std::string, Rational>& fixed) {
  Rational lo = lo0, hi = hi0;
  auto sgn = [&](const Rational& t) {
    auto pt = fixed;
    pt[movevar] = t;
    auto s = sign_at(e, pt);
    if (!s) throw ChartError("sign undecidable during bisection");
    return *s;
  };
  int slo = sgn(lo);
  if (slo == 0) return lo;
  if (sgn(hi) == 0) return hi;
  const Rational width_tol(1, 10000000000LL);  // 1e-10
  while (hi - lo > width_tol) {
    Rational mid = (lo + hi) / 2;
    int sm = sgn(mid);
    if (sm == 0) return mid;
    if (sm == slo)
      lo = mid;
    else
      hi = mid;
  }
  return (lo + hi) / 2;
}

// Rational reconstruction: smallest-denominator rational in [v-eps, v+eps].
inline Rational snap_rational(const Rational& v, const Rational& eps) {
  // Stern-Brocot walk restricted to the interval.
  Rational lo = v - eps, hi = v + eps;
  if (lo <= 0 && hi >= 0) return Rational(0);
  bool neg = hi < 0;
  if (neg) {
    Rational t = -lo;
    lo = -hi;
    hi = t;
  }
  // continued-fraction of the interval
  BigInt a_num = num(lo), a_den = den(lo), b_num = num(hi), b_den = den(hi);
  BigInt p0 = 0, q0 = 1, p1 = 1, q1 = 0;
  for (int it = 0; it < 128; ++it) {
    BigInt fl = a_num / a_den;  // floor since positive
    Rational rem_lo = Rational(a_num, a_den) - Rational(fl);
    Rational rem_hi = Rational(b_num, b_den) - Rational(fl);
    BigInt p2 = fl * p1 + p0, q2 = fl * q1 + q0;
    if (rem_lo == 0 || rem_hi > 1 || rem_hi < 0) {
      // fl (or fl+1 on the hi side) lies in the interval at this level
      if (rem_hi >= 1) {
        p2 = (fl + 1) * p1 + p0;
        q2 = (fl + 1) * q1 + q0;
      }
      Rational cand(p2, q2);
      return neg ? -cand : cand;
    }
    p0 = p1; q0 = q1; p1 = p2; q1 = q2;
    // invert the fractional parts, swapping ends
    BigInt na = num(rem_hi), nda = den(rem_hi), nb = num(rem_lo), ndb = den(rem_lo);
    a_num = nda; a_den = na; b_num = ndb; b_den = nb;
  }
  return v;
}

}  // namespace detail

// Grid scan with exact sign evaluation: locates samples of {f = 0} by
// bisection on grid edges, classifies them, pins down tangency points by a
// nested bisection, and snaps tangency coordinates to exact rationals when
// the snapped point verifies exactly.
inline ScanResult genericity_scan(const ARChart& chart, int nx = 33, int ny = 33) {
  ScanResult out;
  if (chart.dim == 1) {
    // roots of s in [lo, hi]
    Rational lo = chart.x.lo, hi = chart.x.hi, step = (hi - lo) / nx;
    std::vector<Rational> roots;
    auto sgn = [&](const Rational& t) {
      auto sg = sign_at(chart.s, {{"x", t}});
      if (!sg) throw ChartError("sign of s undecidable on the grid");
      return *sg;
    };
    int prev = sgn(lo);
    if (prev == 0) roots.push_back(lo);
    for (int i = 1; i <= nx; ++i) {
      Rational t = lo + step * i;
      int cur = sgn(t);
      if (cur == 0)
        roots.push_back(t);
      else if (cur * prev < 0)
        roots.push_back(detail::bisect_root(chart.s, "x", lo + step * (i - 1), t, {}));
      prev = cur;
    }
    for (const auto& r : roots) {
      Classification c = classify_point(chart, r);
      out.samples.push_back({r, Rational(0), c.cls, true, c.reason});
      if (c.cls == PointClass::nongeneric)
        out.nongeneric_findings.push_back("x=" + to_string(r) + ": " + c.reason);
    }
    return out;
  }

  Rational sx = (chart.x.hi - chart.x.lo) / nx;
  Rational sy = (chart.y.hi - chart.y.lo) / ny;

  auto sgn = [&](const Rational& px, const Rational& py) {
    auto sg = sign_at(chart.f, {{"x", px}, {"y", py}});
    if (!sg) throw ChartError("sign of f undecidable on the grid");
    return *sg;
  };

  std::vector<std::pair<Rational, Rational>> found;
  auto record = [&](const Rational& px, const Rational& py) {
    for (const auto& [ox, oy] : found) {
      Rational dx = px - ox, dy = py - oy;
      if (dx < 0) dx = -dx;
      if (dy < 0) dy = -dy;
      if (dx < sx / 4 && dy < sy / 4) return;
    }
    found.emplace_back(px, py);
  };

  // vertical edges (y varies) and horizontal edges (x varies)
  std::vector<std::vector<int>> node_sign(nx + 1, std::vector<int>(ny + 1));
  for (int i = 0; i <= nx; ++i)
    for (int j = 0; j <= ny; ++j)
      node_sign[i][j] = sgn(chart.x.lo + sx * i, chart.y.lo + sy * j);

  for (int i = 0; i <= nx; ++i)
    for (int j = 0; j <= ny; ++j) {
      Rational px = chart.x.lo + sx * i, py = chart.y.lo + sy * j;
      if (node_sign[i][j] == 0) record(px, py);
      if (i < nx && node_sign[i][j] * node_sign[i + 1][j] < 0)
        record(detail::bisect_root(chart.f, "x", px, px + sx, {{"y", py}}), py);
      if (j < ny && node_sign[i][j] * node_sign[i][j + 1] < 0)
        record(px, detail::bisect_root(chart.f, "y", py, py + sy, {{"x", px}}));
    }

  // classify samples; refined points are near-zero rather than exactly zero,
  // so classify the underlying exact point when it verifies, otherwise use
  // derivative magnitudes at the sample
  Expr fx = diff(chart.f, "x");
  std::vector<std::pair<Rational, Rational>> pinned;
  for (const auto& [px, py] : found) {
    std::map<std::string, Rational> pt{{"x", px}, {"y", py}};
    auto s0 = sign_at(chart.f, pt);
    if (s0 && *s0 == 0) {
      Classification c = classify_point(chart, px, py);
      out.samples.push_back({px, py, c.cls, true, c.reason});
      if (c.cls == PointClass::nongeneric)
        out.nongeneric_findings.push_back("(" + to_string(px) + "," + to_string(py) +
                                          "): " + c.reason);
      if (c.cls == PointClass::tangency) {
        pinned.emplace_back(px, py);
        out.tangency_points.push_back({px, py, PointClass::tangency, true, ""});
      }
      continue;
    }
    // near-zero sample from bisection: classify by the derivative magnitude
    double vfx = eval(fx, {{"x", to_double(px)}, {"y", to_double(py)}});
    PointClass cls = std::fabs(vfx) > 1e-6 ? PointClass::grushin : PointClass::tangency;
    out.samples.push_back({px, py, cls, false, ""});
  }

  // pin down tangency points: along {f = 0}, df/dx changes sign through a
  // nondegenerate tangency, so bracket sign flips of df/dx between nearby
  // curve samples and bisect along the curve (solving f(x, .) = 0 in y)
  auto solve_on_curve = [&](const Rational& cx, const Rational& cy) -> std::optional<Rational> {
    Rational wy = sy;
    for (int widen = 0; widen < 4; ++widen) {
      Rational lo = cy - wy, hi = cy + wy;
      auto pl = sign_at(chart.f, {{"x", cx}, {"y", lo}});
      auto ph = sign_at(chart.f, {{"x", cx}, {"y", hi}});
      if (pl && ph) {
        if (*pl == 0) return lo;
        if (*ph == 0) return hi;
        if (*pl * *ph < 0)
          return detail::bisect_root(chart.f, "y", lo, hi, {{"x", cx}});
      }
      wy = wy * 2;
    }
    return std::nullopt;
  };

  auto fx_on_curve = [&](const Rational& cx, const Rational& cy) -> std::optional<Rational> {
    auto ys = solve_on_curve(cx, cy);
    if (!ys) return std::nullopt;
    double v = eval(fx, {{"x", to_double(cx)}, {"y", to_double(*ys)}});
    return rational_from_double(v);
  };

  struct Seed {
    Rational lo, hi, yhint;
  };
  std::vector<Seed> seeds;
  std::vector<double> fxv(out.samples.size());
  for (std::size_t i = 0; i < out.samples.size(); ++i)
    fxv[i] = eval(fx, {{"x", to_double(out.samples[i].x)}, {"y", to_double(out.samples[i].y)}});
  for (std::size_t a = 0; a < out.samples.size(); ++a)
    for (std::size_t b = a + 1; b < out.samples.size(); ++b) {
      Rational dx = out.samples[a].x - out.samples[b].x;
      Rational dy = out.samples[a].y - out.samples[b].y;
      if (dx < 0) dx = -dx;
      if (dy < 0) dy = -dy;
      if (dx > sx * 3 / 2 || dy > sy * 3 / 2) continue;
      bool flip = (fxv[a] < 0 && fxv[b] > 0) || (fxv[a] > 0 && fxv[b] < 0);
      if (!flip) continue;
      bool a_left = out.samples[a].x <= out.samples[b].x;
      seeds.push_back({out.samples[a_left ? a : b].x, out.samples[a_left ? b : a].x,
                       (out.samples[a].y + out.samples[b].y) / 2});
    }

  for (const auto& sd : seeds) {
    auto flo = fx_on_curve(sd.lo, sd.yhint), fhi = fx_on_curve(sd.hi, sd.yhint);
    if (!flo || !fhi || sign(*flo) * sign(*fhi) >= 0) continue;
    Rational a = sd.lo, b = sd.hi;
    Rational fa = *flo;
    const Rational tol(1, 10000000000LL);
    while (b - a > tol) {
      Rational mid = (a + b) / 2;
      auto fm = fx_on_curve(mid, sd.yhint);
      if (!fm) break;
      if (*fm == 0) { a = b = mid; break; }
      if (sign(*fm) == sign(fa))
        a = mid;
      else
        b = mid;
    }
    Rational bx = (a + b) / 2, by = sd.yhint;
    if (auto yy = solve_on_curve(bx, sd.yhint)) by = *yy;

    // snap to a small-denominator rational point and verify exactly
    Rational eps(1, 1000000);
    Rational cx = detail::snap_rational(bx, eps), cy = detail::snap_rational(by, eps);
    auto v0 = sign_at(chart.f, {{"x", cx}, {"y", cy}});
    auto v1 = sign_at(fx, {{"x", cx}, {"y", cy}});
    if (v0 && *v0 == 0 && v1 && *v1 == 0) {
      Classification c = classify_point(chart, cx, cy);
      if (c.cls == PointClass::tangency) {
        bool dup = false;
        for (const auto& [ox, oy] : pinned)
          if (ox == cx && oy == cy) dup = true;
        if (!dup) {
          pinned.emplace_back(cx, cy);
          out.tangency_points.push_back({cx, cy, PointClass::tangency, true, ""});
        }
        continue;
      }
      out.nongeneric_findings.push_back("(" + to_string(cx) + "," + to_string(cy) +
                                        "): " + c.reason);
      continue;
    }
    // could not certify: keep the numeric candidate
    bool dup = false;
    for (const auto& [ox, oy] : pinned) {
      Rational dx = ox - bx, dy = oy - by;
      if (dx < 0) dx = -dx;
      if (dy < 0) dy = -dy;
      if (dx < sx / 2 && dy < sy / 2) dup = true;
    }
    if (!dup) {
      pinned.emplace_back(bx, by);
      out.tangency_points.push_back({bx, by, PointClass::tangency, false, "numeric candidate"});
    }
  }

  // isolation (grid adjacency): two certified tangency points closer than one
  // grid cell violate the genericity assumptions
  for (std::size_t a = 0; a < out.tangency_points.size(); ++a)
    for (std::size_t b = a + 1; b < out.tangency_points.size(); ++b) {
      Rational dx = out.tangency_points[a].x - out.tangency_points[b].x;
      Rational dy = out.tangency_points[a].y - out.tangency_points[b].y;
      if (dx < 0) dx = -dx;
      if (dy < 0) dy = -dy;
      if (dx < sx && dy < sy)
        out.nongeneric_findings.push_back("tangency points are not isolated near (" +
                                          to_string(out.tangency_points[a].x) + "," +
                                          to_string(out.tangency_points[a].y) + ")");
    }

  return out;
}

// ---------------------------------------------------------------------------
// Operator-level chart data
// ---------------------------------------------------------------------------

struct MetricVolume {
  Expr g_xx, g_xy, g_yy;  // metric making (X1, X2) orthonormal
  Expr density;           // Riemannian density relative to dx dy
};

inline MetricVolume metric_and_volume(const ARChart& chart) {
  if (chart.dim != 2) throw ChartError("metric_and_volume is a 2D operation");
  MetricVolume mv;
  mv.g_xx = Expr::integer(1);
  mv.g_xy = Expr();
  mv.g_yy = 1 / pow(chart.f, 2);
  mv.density = 1 / abs(chart.f);
  return mv;
}

// X1 = d/dx, X2 = f d/dy as vector fields.
inline VectorField chart_X1(const ARChart&) {
  VectorField v;
  v.coef = {Expr::integer(1), Expr()};
  return v;
}
inline VectorField chart_X2(const ARChart& chart) {
  VectorField v;
  v.coef = {Expr(), chart.f};
  return v;
}

// Divergence w.r.t. the Riemannian volume |f|^{-1} dx dy:
// div X = sum_i d_i(X_i) - X(f)/f  (the density contributes -X(f)/f).
inline Expr divergence(const ARChart& chart, const VectorField& X) {
  if (chart.dim != 2) throw ChartError("divergence is a 2D operation");
  Expr d = diff(X.coef[0], "x") + diff(X.coef[1], "y");
  Expr xf = apply_field(X, chart.f, chart.vars());
  return d - xf / chart.f;
}

enum class FrameField { X1, X2 };

// First-order data of the degenerate Laplacian attached to each frame field:
// X1 -> -df/dx / f, X2 -> f * df/dy. The X1 value is the honest volume
// divergence of d/dx; the X2 value is the d/dy coefficient of the Laplacian
// (it equals X2(f), while the volume divergence of f d/dy itself is zero --
// the d/dy coefficient comes out of X2 squared, as the integration-by-parts
// checks in the test suite confirm).
inline Expr divergence(const ARChart& chart, FrameField which) {
  if (chart.dim != 2) throw ChartError("divergence is a 2D operation");
  if (which == FrameField::X1) return -diff(chart.f, "x") / chart.f;
  return chart.f * diff(chart.f, "y");
}

// Degenerate Laplacian: Delta = dxx + f^2 dyy - (fx/f) dx + f fy dy in 2D,
// plain dxx in 1D.
inline DiffOp laplace_beltrami(const ARChart& chart) {
  Frame fr = Frame::coords(chart.vars());
  if (chart.dim == 1) {
    return DiffOp::make(fr, {{Expr::integer(1), {0, 0}}});
  }
  Expr f = chart.f;
  std::vector<OpMonomial> ms;
  ms.push_back({Expr::integer(1), {0, 0}});
  ms.push_back({pow(f, 2), {1, 1}});
  ms.push_back({-(diff(f, "x") / f), {0}});
  ms.push_back({f * diff(f, "y"), {1}});
  return DiffOp::make(fr, std::move(ms));
}

// Delta - h/s^2 (the zero-order weight enters with the defining function).
inline DiffOp weighted_laplacian(const ARChart& chart) {
  DiffOp delta = laplace_beltrami(chart);
  if (chart.h.is_zero()) return delta;
  return delta - DiffOp::multiplication(delta.frame(), chart.h / pow(chart.s, 2));
}

// Frame {Y1 = s X1, Y2 = s X2} (2D) or {Y = s d/dx} (1D).
inline Frame lie_frame(const ARChart& chart) {
  if (chart.dim == 1) {
    VectorField y;
    y.coef = {chart.s};
    return Frame::named({"x"}, {"Y"}, {y});
  }
  VectorField y1, y2;
  y1.coef = {chart.s, Expr()};
  y2.coef = {Expr(), chart.s * chart.f};
  return Frame::named({"x", "y"}, {"Y1", "Y2"}, {y1, y2});
}

// ---------------------------------------------------------------------------
// Normal-form constructors
// ---------------------------------------------------------------------------

// Grushin-type normal form f = x e^phi.
inline ARChart grushin_normal_form(const Expr& phi, Expr h = Expr()) {
  return ARChart::plane(Expr::sym("x") * exp(phi), std::move(h));
}

// Tangency-type normal form f = (y - x^2 psi(x)) e^Psi with psi(0) != 0 and
// Psi(0, y) = 0.
inline ARChart tangency_normal_form(const Expr& psi, const Expr& Psi, Expr h = Expr()) {
  auto psi0 = eval_exact(psi, {{"x", Rational(0)}});
  if (psi0 && *psi0 == 0) throw ChartError("tangency normal form needs psi(0) != 0");
  if (!substitute(Psi, "x", Expr()).is_zero())
    throw ChartError("tangency normal form needs Psi(0, y) = 0");
  Expr x = Expr::sym("x"), y = Expr::sym("y");
  return ARChart::plane((y - pow(x, 2) * psi) * exp(Psi), std::move(h));
}

}  // namespace arclosure
