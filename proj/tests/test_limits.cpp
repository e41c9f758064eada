#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "arclosure/chart.hpp"
#include "arclosure/expr_io.hpp"
#include "arclosure/limits.hpp"

using namespace arclosure;

namespace {

ARChart interval_chart() {
  Expr x = Expr::sym("x");
  Expr s = x * (1 - x);
  Expr h = Expr::number(Rational(3, 4)) + Expr::sym("alpha");
  return ARChart::line(s, h);
}

Expr rand_poly2(std::mt19937& rng, int maxdeg, int nterms) {
  std::uniform_int_distribution<int> cdist(-3, 3), edist(0, maxdeg);
  Expr r;
  for (int t = 0; t < nterms; ++t) {
    int c = cdist(rng);
    if (c == 0) c = 1;
    r = r + Expr::integer(c) * pow(Expr::sym("x"), edist(rng)) * pow(Expr::sym("y"), edist(rng));
  }
  return r;
}

}  // namespace

// Oracle: expand s^{2-g} (d_xx - h/s^2) s^g by hand calculus. With s = x - x^2
// and X = s d/dx the result must be
//   X^2 + (2g-1)(1-2x) X + g(g-1) + (4g^2-2g)(x^2-x) - h,
// built here independently, term by term, and compared structurally.
TEST_CASE("gamma_conjugated_interval_operator_matches_expansion") {
  ARChart chart = interval_chart();
  LinExp g = LinExp::param("gamma");
  DiffOp got = frame_conjugated_operator(chart, LinExp(2) - g, g);

  Frame fr = lie_frame(chart);
  Expr x = Expr::sym("x"), gs = Expr::sym("gamma"), al = Expr::sym("alpha");
  Expr c1 = (2 * gs - 1) * (1 - 2 * x);
  Expr c0 = gs * (gs - 1) + (4 * pow(gs, 2) - 2 * gs) * (pow(x, 2) - x) -
            Expr::number(Rational(3, 4)) - al;
  DiffOp expected =
      DiffOp::make(fr, {{Expr::integer(1), {0, 0}}, {c1, {0}}, {c0, {}}});
  CHECK(op_equality(got, expected) == Equality::equal);

  // cross-check at a rational gamma: the grouped display form
  // g(g - 1 + 2(x-1)x(2g-1)) - h agrees with the expanded constant
  DiffOp at2 = substitute(got, "gamma", Expr::integer(2));
  Expr grouped = 2 * (Expr::integer(1) + 2 * (x - 1) * x * 3) -
                 Expr::number(Rational(3, 4)) - al;
  CHECK(equality(at2.coefficient({}), grouped) == Equality::equal);
  CHECK(identical(at2.coefficient({0, 0}), Expr::integer(1)));
  CHECK(equality(at2.coefficient({0}), 3 * (1 - 2 * x)) == Equality::equal);
}

TEST_CASE("interval_endpoint_freezes_match_threshold_weight") {
  ARChart chart = interval_chart();
  LinExp g = LinExp::param("gamma");
  DiffOp fam = frame_conjugated_operator(chart, LinExp(2) - g, g);
  DiffOp at32 = substitute(fam, "gamma", Expr::number(Rational(3, 2)));

  Expr al = Expr::sym("alpha");
  LimitOperator left = freeze(at32, chart, Rational(0));
  CHECK(left.group == (GroupTag{GroupKind::abelian, 1}));
  CHECK(left.monomials.size() == 3);
  CHECK(identical(left.coefficient({0, 0}), Expr::integer(1)));
  CHECK(identical(left.coefficient({0}), Expr::integer(2)));
  CHECK(equality(left.coefficient({}), -al) == Equality::equal);

  LimitOperator right = freeze(at32, chart, Rational(1));
  CHECK(identical(right.coefficient({0, 0}), Expr::integer(1)));
  CHECK(identical(right.coefficient({0}), Expr::integer(-2)));
  CHECK(equality(right.coefficient({}), -al) == Equality::equal);

  // freezing with symbolic gamma then binding gamma = 3/2 matches binding
  // first and freezing after (exact comparison)
  LimitOperator sym_frozen = freeze(fam, chart, Rational(0));
  LimitOperator bound_after = substitute(sym_frozen, "gamma", Expr::number(Rational(3, 2)));
  CHECK(limit_equality(bound_after, left) == Equality::equal);
}

TEST_CASE("grushin_plane_freeze_is_affine_with_unit_bracket") {
  Expr x = Expr::sym("x");
  ARChart chart = ARChart::plane(x, Expr::sym("h0"));
  DiffOp sq = frame_conjugated_operator(chart, 1, 1);

  LimitOperator lo = freeze(sq, chart, Rational(0), Rational(0));
  CHECK(lo.group == (GroupTag{GroupKind::affine, 2}));
  CHECK(lo.group.str() == "Affine");
  Expr h0 = Expr::sym("h0");
  CHECK(identical(lo.coefficient({0, 0}), Expr::integer(1)));
  CHECK(identical(lo.coefficient({1, 1}), Expr::integer(1)));
  CHECK(equality(lo.coefficient({}), -1 - h0) == Equality::equal);
  CHECK(lo.coefficient({0}).is_zero());
  CHECK(lo.coefficient({1}).is_zero());
  CHECK(lo.coefficient({0, 1}).is_zero());
  CHECK(lo.bracket_factor.exact.has_value());
  CHECK(*lo.bracket_factor.exact == 2);

  // already at the unit bracket relation: normalization is the identity
  LimitOperator norm = affine_normalize(lo);
  CHECK(limit_equality(norm, lo) == Equality::equal);

  // the frozen constant shortcut agrees with the full freeze
  FrozenCoef c = general_freeze_constant(chart, Rational(0), Rational(0));
  CHECK(equality(c.sym, lo.coefficient({})) == Equality::equal);
}

TEST_CASE("tangency_plane_freeze_is_abelian") {
  Expr x = Expr::sym("x"), y = Expr::sym("y");
  ARChart chart = ARChart::plane(y - pow(x, 2), Expr::sym("h0"));
  DiffOp sq = frame_conjugated_operator(chart, 1, 1);

  LimitOperator lo = freeze(sq, chart, Rational(0), Rational(0));
  CHECK(lo.group == (GroupTag{GroupKind::abelian, 2}));
  CHECK(lo.group.str() == "Abelian(2)");
  CHECK(identical(lo.coefficient({0, 0}), Expr::integer(1)));
  CHECK(identical(lo.coefficient({1, 1}), Expr::integer(1)));
  CHECK(equality(lo.coefficient({}), -Expr::sym("h0")) == Equality::equal);
  CHECK(lo.coefficient({0}).is_zero());
  CHECK(lo.coefficient({1}).is_zero());
  CHECK(lo.bracket_factor.sym.is_zero());
  CHECK_THROWS_AS(affine_normalize(lo), LimitsError);
}

TEST_CASE("frozen_constant_examples") {
  Expr x = Expr::sym("x"), y = Expr::sym("y");
  FrozenCoef a = general_freeze_constant(ARChart::plane(x, Expr::integer(3)), Rational(0));
  CHECK(a.exact.has_value());
  CHECK(*a.exact == -4);

  FrozenCoef b = general_freeze_constant(ARChart::plane(2 * x), Rational(0));
  CHECK(b.exact.has_value());
  CHECK(*b.exact == -4);

  FrozenCoef c =
      general_freeze_constant(ARChart::plane(y - pow(x, 2), Expr::integer(5)), Rational(0));
  CHECK(c.exact.has_value());
  CHECK(*c.exact == -5);

  CHECK_THROWS_AS(general_freeze_constant(interval_chart(), Rational(0)), LimitsError);
}

TEST_CASE("isotropy_identification_and_refusals") {
  Expr x = Expr::sym("x"), y = Expr::sym("y");
  CHECK(isotropy_type(ARChart::plane(x), Rational(0), Rational(1, 3)) ==
        (GroupTag{GroupKind::affine, 2}));
  CHECK(isotropy_type(ARChart::plane(y - pow(x, 2)), Rational(0), Rational(0)) ==
        (GroupTag{GroupKind::abelian, 2}));
  // circle: generic Grushin at (1/2, 0), tangency at (0, 1/2)
  Expr circ = pow(x, 2) + pow(y, 2) - Expr::number(Rational(1, 4));
  CHECK(isotropy_type(ARChart::plane(circ), Rational(1, 2), Rational(0)).kind ==
        GroupKind::affine);
  CHECK(isotropy_type(ARChart::plane(circ), Rational(0), Rational(1, 2)) ==
        (GroupTag{GroupKind::abelian, 2}));
  CHECK(isotropy_type(interval_chart(), Rational(0)) == (GroupTag{GroupKind::abelian, 1}));

  // refusals: nonsingular and nongeneric points carry no limit operator
  CHECK_THROWS_AS(isotropy_type(ARChart::plane(x), Rational(1, 2), Rational(0)), LimitsError);
  CHECK_THROWS_AS(isotropy_type(ARChart::plane(x * y), Rational(0), Rational(0)), LimitsError);
  CHECK_THROWS_AS(isotropy_type(ARChart::plane(pow(x, 2)), Rational(0), Rational(0)),
                  LimitsError);
}

TEST_CASE("freeze_requires_the_rescaled_frame") {
  Expr x = Expr::sym("x");
  ARChart chart = ARChart::plane(x);
  CHECK_THROWS_AS(freeze(laplace_beltrami(chart), chart, Rational(0), Rational(0)),
                  LimitsError);
}

TEST_CASE("freeze_is_linear") {
  Expr x = Expr::sym("x");
  ARChart chart = ARChart::plane(x, Expr::sym("h0"));
  Frame fr = lie_frame(chart);
  std::mt19937 rng(2024);
  for (int trial = 0; trial < 6; ++trial) {
    std::vector<OpMonomial> pm, qm;
    std::vector<std::vector<int>> words = {{}, {0}, {1}, {0, 0}, {0, 1}, {1, 1}};
    for (const auto& w : words) {
      pm.push_back({rand_poly2(rng, 2, 2), w});
      qm.push_back({rand_poly2(rng, 2, 2), w});
    }
    DiffOp p = DiffOp::make(fr, std::move(pm));
    DiffOp q = DiffOp::make(fr, std::move(qm));
    LimitOperator lsum = freeze(p + q, chart, Rational(0), Rational(1, 3));
    LimitOperator lp = freeze(p, chart, Rational(0), Rational(1, 3));
    LimitOperator lq = freeze(q, chart, Rational(0), Rational(1, 3));
    for (const auto& w : words) {
      Expr want = lp.coefficient(w) + lq.coefficient(w);
      CHECK(equality(lsum.coefficient(w), want) == Equality::equal);
    }
  }
}

// A chart whose bracket factor is not 2: f = 2x gives [Y1, Y2] = 4 Y2, so the
// generators are rescaled by c = 2 and the frozen constant -4 - h0 must land
// at -1 - h0/4 after normalization.
TEST_CASE("affine_normalization_rescales_to_unit_bracket") {
  Expr x = Expr::sym("x");
  ARChart chart = ARChart::plane(2 * x, Expr::sym("h0"));
  DiffOp sq = frame_conjugated_operator(chart, 1, 1);
  LimitOperator lo = freeze(sq, chart, Rational(0), Rational(0));
  CHECK(lo.bracket_factor.exact.has_value());
  CHECK(*lo.bracket_factor.exact == 4);
  CHECK(equality(lo.coefficient({}), Expr::integer(-4) - Expr::sym("h0")) == Equality::equal);

  LimitOperator norm = affine_normalize(lo);
  CHECK(*norm.bracket_factor.exact == 2);
  CHECK(identical(norm.coefficient({0, 0}), Expr::integer(1)));
  CHECK(identical(norm.coefficient({1, 1}), Expr::integer(1)));
  Expr want = Expr::integer(-1) - Expr::sym("h0") / 4;
  CHECK(equality(norm.coefficient({}), want) == Equality::equal);

  // invariance of the key dichotomy: the normalized constant equals -1 exactly
  // when h0 = 0, mirroring the raw constant equalling -(df/dx)^2
  LimitOperator zero_h = substitute(norm, "h0", Expr());
  CHECK(equality(zero_h.coefficient({}), Expr::integer(-1)) == Equality::equal);
}

// Exponential dressing of the same line keeps the verdict data: f = x e^1 has
// bracket factor 2e, and normalization divides the constant by e^2.
TEST_CASE("affine_normalization_with_exponential_dressing") {
  ARChart chart = grushin_normal_form(Expr::integer(1), Expr::number(Rational(1, 2)));
  DiffOp sq = frame_conjugated_operator(chart, 1, 1);
  LimitOperator lo = freeze(sq, chart, Rational(0), Rational(0));
  CHECK(lo.group.kind == GroupKind::affine);
  CHECK_FALSE(lo.bracket_factor.exact.has_value());
  CHECK(lo.bracket_factor.value.has_value());
  double e1 = std::exp(1.0);
  CHECK(*lo.bracket_factor.value == Catch::Approx(2 * e1).epsilon(1e-12));

  LimitOperator norm = affine_normalize(lo);
  CHECK(*norm.bracket_factor.exact == 2);
  CHECK(identical(norm.coefficient({0, 0}), Expr::integer(1)));
  CHECK(identical(norm.coefficient({1, 1}), Expr::integer(1)));
  double e2 = e1 * e1;
  double want = -(e2 + 0.5) / e2;
  const LimitMonomial& cm = norm.monomials.front();  // zero-order term sorts first
  CHECK(cm.word.empty());
  CHECK_FALSE(cm.coef.sym.is_rational());
  CHECK(cm.coef.value.has_value());
  CHECK(*cm.coef.value == Catch::Approx(want).epsilon(1e-12));
}

// Structural identity behind the frame rewrite: for random polynomial f and
// s = f, the twice-weighted operator equals
//   sum_i Y_i^2 + (X_i(s) + s div X_i) Y_i + (s X_i^2(s) + s X_i(s) div X_i) - h
// with the honest volume divergences div X1 = -f_x/f, div X2 = 0.
TEST_CASE("squared_weight_rewrite_matches_divergence_expansion") {
  std::mt19937 rng(555);
  int done = 0;
  for (int trial = 0; trial < 40 && done < 10; ++trial) {
    Expr f = rand_poly2(rng, 2, 3);
    if (f.is_zero()) continue;
    Expr h = rand_poly2(rng, 2, 2);
    ARChart chart = ARChart::plane(f, h);
    DiffOp got = frame_conjugated_operator(chart, 1, 1);
    Frame fr = lie_frame(chart);
    auto vars = chart.vars();
    VectorField x1 = chart_X1(chart), x2 = chart_X2(chart);
    Expr d1 = divergence(chart, x1), d2 = divergence(chart, x2);
    Expr s = chart.s;
    Expr a1 = apply_field(x1, s, vars) + s * d1;
    Expr a2 = apply_field(x2, s, vars) + s * d2;
    Expr z = s * apply_field(x1, apply_field(x1, s, vars), vars) +
             s * apply_field(x1, s, vars) * d1 +
             s * apply_field(x2, apply_field(x2, s, vars), vars) +
             s * apply_field(x2, s, vars) * d2 - h;
    DiffOp expected = DiffOp::make(
        fr, {{Expr::integer(1), {0, 0}}, {Expr::integer(1), {1, 1}}, {a1, {0}}, {a2, {1}}, {z, {}}});
    CHECK(op_equality(got, expected) == Equality::equal);
    ++done;
  }
  CHECK(done == 10);
}

TEST_CASE("limit_operator_rendering") {
  Expr x = Expr::sym("x");
  ARChart chart = ARChart::plane(x, Expr::sym("h0"));
  DiffOp sq = frame_conjugated_operator(chart, 1, 1);
  LimitOperator lo = freeze(sq, chart, Rational(0), Rational(0));
  CHECK(print(lo) == "Z1^2 + Z2^2 - h0 - 1");

  ARChart tan = ARChart::plane(Expr::sym("y") - pow(x, 2));
  LimitOperator lt = freeze(frame_conjugated_operator(tan, 1, 1), tan, Rational(0), Rational(0));
  CHECK(print(lt) == "Z1^2 + Z2^2");

  LimitOperator empty;
  CHECK(print(empty) == "0");
}
