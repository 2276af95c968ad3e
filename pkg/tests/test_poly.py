import json
from fractions import Fraction as Q

import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from leontief_reduction.errors import BoundError, MissingVariableError, ParseError
from leontief_reduction.poly import (
    Polynomial,
    evaluate,
    format_rational,
    make_system,
    parse_system,
    rational_size,
    residual,
    serialize_system,
    system_size,
    to_rational,
)

WORKED = {
    "vars": 2,
    "bounds": [["0", "2"], ["0", "2"]],
    "polys": [[{"c": "4", "e": {"1": 2, "2": 1}}, {"c": "3", "e": {"1": 1, "2": 1}}, {"c": "-1", "e": {"1": 1}}, {"c": "-2", "e": {}}]],
}


def P(*terms):
    return Polynomial.from_terms(terms)


# ---- strategies -----------------------------------------------------------

rationals = st.fractions(min_value=-8, max_value=8, max_denominator=12)
exps = st.dictionaries(st.integers(1, 4), st.integers(0, 3), max_size=3)
polys = st.lists(st.tuples(rationals, exps), max_size=6).map(Polynomial.from_terms)
points = st.lists(st.fractions(min_value=0, max_value=3, max_denominator=9), min_size=4, max_size=4)


def sympy_value(p: Polynomial, z):
    """Independent evaluator: build a sympy expression and substitute."""
    xs = sympy.symbols("x1:5")
    expr = sympy.Integer(0)
    for m in p.monomials:
        term = sympy.Rational(m.coeff.numerator, m.coeff.denominator)
        for v, e in m.exps:
            term *= xs[v - 1] ** e
        expr += term
    val = expr.subs({xs[i]: sympy.Rational(z[i].numerator, z[i].denominator) for i in range(4)})
    return Q(int(sympy.fraction(val)[0]), int(sympy.fraction(val)[1]))


# ---- rationals --------------------------------------------------------------


def test_rational_parsing_and_format():
    assert to_rational("6/4") == Q(3, 2)
    assert to_rational(" -3 ") == -3
    assert to_rational(0.5) == Q(1, 2)
    assert format_rational(Q(3, 2)) == "3/2"
    assert format_rational(Q(-4)) == "-4"
    with pytest.raises(ParseError):
        to_rational("1/0")
    with pytest.raises(ParseError):
        to_rational("abc")


def test_rational_size_convention():
    assert rational_size(Q(0)) == 2
    assert rational_size(Q(5)) == 3 + 1
    assert rational_size(Q(-3, 4)) == 2 + 3


# ---- parsing ----------------------------------------------------------------


def test_parse_square_root_system():
    F = parse_system(json.dumps({"vars": 1, "bounds": [["0", "2"]], "polys": [[{"c": "1", "e": {"1": 2}}, {"c": "-2", "e": {}}]]}))
    assert F.m == 1 and len(F.polys[0]) == 2


def test_parse_worked_example():
    F = parse_system(json.dumps(WORKED))
    assert len(F.polys[0]) == 4
    assert F.bounds == ((0, 2), (0, 2))


def test_parse_bound_order_violated():
    doc = {"vars": 1, "bounds": [["3", "2"]], "polys": [[{"c": "1", "e": {"1": 1}}]]}
    with pytest.raises(BoundError, match="bound order violated"):
        parse_system(json.dumps(doc))


def test_parse_errors():
    with pytest.raises(ParseError) as info:
        parse_system('{"vars": 1,\n "bounds": [}')
    assert info.value.line == 2
    with pytest.raises(BoundError):
        parse_system(json.dumps({"vars": 1, "bounds": [["-1", "2"]], "polys": [[{"c": "1", "e": {"1": 1}}]]}))
    with pytest.raises(ParseError):
        parse_system(json.dumps({"vars": 1, "bounds": [["0", "1/0"]], "polys": [[{"c": "1", "e": {"1": 1}}]]}))
    with pytest.raises(ParseError):
        parse_system(json.dumps({"vars": 1, "bounds": [["0", "1"]], "polys": []}))


def test_parse_merges_duplicates_and_drops_zeros():
    doc = {"vars": 1, "bounds": [["0", "1"]], "polys": [[{"c": "1", "e": {"1": 1}}, {"c": "2", "e": {"1": 1}}, {"c": "0", "e": {}}]]}
    F = parse_system(json.dumps(doc))
    assert F.polys[0] == P((3, {1: 1}))


# ---- evaluation -------------------------------------------------------------


def test_evaluate_examples():
    assert evaluate(P((1, {1: 2}), (-2, {})), [1]) == -1
    worked = P((4, {1: 2, 2: 1}), (3, {1: 1, 2: 1}), (-1, {1: 1}), (-2, {}))
    assert evaluate(worked, [1, Q(1, 2)]) == Q(1, 2)
    assert evaluate(Polynomial(), [5]) == 0
    with pytest.raises(MissingVariableError):
        evaluate(P((1, {3: 1})), [1, 2])


def test_residual_examples():
    F = make_system([P((1, {1: 1}), (-1, {2: 1}))], [(0, 2), (0, 2)])
    r = residual(F, [1, 1])
    assert r.values == (0,) and r.is_solution
    r = residual(F, [3, 3])
    assert r.values == (0,)
    assert [(j, side) for j, side, _ in r.violations] == [(1, "upper"), (2, "upper")]
    G = make_system([P((1, {1: 2}), (-2, {}))], [(0, 2)])
    r = residual(G, [Q(141421, 100000)])
    assert r.values[0] == Q(141421, 100000) ** 2 - 2
    assert r.values[0] == Q(-100759, 10**10)


def test_system_size_examples():
    s = system_size(make_system([P((1, {1: 2}), (-2, {}))], [(0, 2)]))
    assert (s.max_degree, s.monomial_count_max, s.U_max) == (2, 2, 2)
    worked = make_system([P((4, {1: 2, 2: 1}), (3, {1: 1, 2: 1}), (-1, {1: 1}), (-2, {}))], [(0, 2), (0, 2)])
    s = system_size(worked)
    assert (s.max_degree, s.monomial_count_max, s.U_max) == (3, 4, 4)
    s = system_size(make_system([P((-2, {}))], [(0, 1)]))
    assert (s.max_degree, s.monomial_count_max) == (0, 1)


# ---- properties -------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(polys, points)
def test_evaluate_matches_sympy(p, z):
    assert evaluate(p, z) == sympy_value(p, z)


@settings(max_examples=80, deadline=None)
@given(polys, polys, points)
def test_evaluate_is_additive_and_multiplicative(p, q, z):
    assert evaluate(p + q, z) == evaluate(p, z) + evaluate(q, z)
    assert evaluate(p * q, z) == evaluate(p, z) * evaluate(q, z)
    assert evaluate(p - p, z) == 0


@settings(max_examples=60, deadline=None)
@given(st.lists(polys.filter(lambda p: not p.is_zero()), min_size=1, max_size=3), st.data())
def test_serialize_parse_round_trip(ps, data):
    n = max([max(p.variables(), default=1) for p in ps] + [1])
    bounds = [(Q(0), data.draw(st.fractions(min_value=0, max_value=5, max_denominator=7))) for _ in range(n)]
    F = make_system(ps, bounds)
    assert parse_system(serialize_system(F)) == F


@settings(max_examples=60, deadline=None)
@given(polys, points)
def test_residual_zero_iff_monomialwise_sum_zero(p, z):
    F = make_system([p] if not p.is_zero() else [P((0, {}))], [(0, 3)] * 4)
    # brute force: expand each monomial by repeated multiplication
    total = Q(0)
    for m in p.monomials:
        term = m.coeff
        for v, e in m.exps:
            for _ in range(e):
                term = term * z[v - 1]
        total += term
    assert residual(F, z).is_solution == (total == 0)
