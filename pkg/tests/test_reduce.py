from fractions import Fraction as Q

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from casebook import round_trip_cases
from leontief_reduction.errors import AlreadyHomogenizedError
from leontief_reduction.poly import Polynomial, evaluate, make_system, rational_size, residual, system_size
from leontief_reduction.reduce import (
    Relation,
    RelationSystem,
    compute_H,
    decompose,
    eval_relations,
    extend,
    h_bound,
    homogenize,
    parse_relations,
    reduce_system,
    relation_size,
    serialize_relations,
)


def P(*terms):
    return Polynomial.from_terms(terms)


WORKED = make_system([P((4, {1: 2, 2: 1}), (3, {1: 1, 2: 1}), (-1, {1: 1}), (-2, {}))], [(0, 2), (0, 2)])
DIFF = make_system([P((1, {1: 1}), (-1, {2: 1}))], [(0, 2), (0, 2)])
SQRT2 = make_system([P((1, {1: 2}), (-2, {}))], [(0, 2)])


def by_label(R):
    return {r.label: r for r in R.relations}


def test_decompose_worked_example():
    R = decompose(WORKED)
    rel = by_label(R)
    # z1^2 z2 -> t1 = z1*z1, t2 = t1*z2 ; z1 z2 -> t1 = z1*z2
    a2, a1, b1 = rel["f1.m1.t1"], rel["f1.m1.t2"], rel["f1.m2.t1"]
    assert (a2.kind, a2.b, a2.c) == ("QD", 1, 1)
    assert (a1.kind, a1.b, a1.c) == ("QD", a2.a, 2)
    assert (b1.kind, b1.b, b1.c) == ("QD", 1, 2)
    e, f = rel["f1.e"], rel["f1.f"]
    assert set(e.right) == {(4, a1.a), (3, b1.a)}
    assert set(f.right) == {(1, 1), (2, 0)}  # z1 + 2 * p_s
    assert (rel["f1"].a, rel["f1"].b) == (e.target, f.target)
    assert sum(1 for r in R.relations if r.label.startswith(("lower", "upper"))) == 4
    assert R.K == 3 + 2 + 1 + 4


def test_decompose_folds_differences():
    R = decompose(DIFF)
    assert R.relations[0] == Relation.eq(1, 2)
    assert R.K == 1 + 4


def test_decompose_square_root_system():
    rel = by_label(decompose(SQRT2))
    assert (rel["f1.m1.t1"].b, rel["f1.m1.t1"].c) == (1, 1)
    assert rel["f1.f"].right == ((2, 0),)


def test_decompose_is_deterministic():
    assert serialize_relations(decompose(WORKED)) == serialize_relations(decompose(WORKED))


def test_homogenize():
    R = decompose(WORKED)
    Rp = homogenize(R)
    assert Rp.numeraire == 0 and Rp.H == 257
    assert Rp.relations == R.relations
    with pytest.raises(AlreadyHomogenizedError):
        homogenize(Rp)


def test_compute_H_examples():
    assert compute_H(SQRT2) == 9
    assert compute_H(WORKED) == 257
    # {1 - 1 = 0}: d = 0, M_max = 2, U_max = 1. Parsing merges the constants,
    # so the formula is exercised on the raw parameters.
    assert h_bound(0, 2, 1) == 3


def test_eval_relations_examples():
    R = reduce_system(DIFF)
    p = extend(R, [1, 1])
    assert p[3:] == [1, 1, 1, 1] and eval_relations(R, p).ok
    p[2] = Q(2)
    assert eval_relations(R, p).residuals[0] == -1
    R = reduce_system(SQRT2)
    p = extend(R, [Q(3, 2)])
    rep = eval_relations(R, p)
    assert p[by_label(R)["f1.m1.t1"].a] == Q(9, 4)
    assert rep.residuals[[r.label for r in R.relations].index("f1")] == Q(1, 4)


def test_eval_relations_reports_negatives():
    R = reduce_system(DIFF)
    p = extend(R, [3, 3])  # above U = 2: upper slacks go negative
    rep = eval_relations(R, p)
    assert not rep.ok and rep.negatives


def test_relation_size():
    R = reduce_system(DIFF)
    s = relation_size(R)
    assert s.var_count == R.N + 1 == 7
    assert s.relation_or_poly_count == 5
    coef_bits = sum(rational_size(c) for r in R.relations if r.kind == "LIN" for c in r.coefficients())
    assert s.total_bit_size == 7 + 5 + coef_bits
    empty = RelationSystem(N=3, original_n=3, relations=())
    assert relation_size(empty).total_bit_size == 3


def test_json_round_trip():
    R = reduce_system(WORKED)
    assert parse_relations(serialize_relations(R)) == R


def test_empty_lin_side_allowed_but_not_both():
    r = Relation.lin([(1, 3)], [])
    assert r.right == ()
    with pytest.raises(ValueError):
        Relation.lin([], [])
    with pytest.raises(ValueError):
        Relation.lin([(-1, 3)], [(1, 2)])


def test_extension_can_exceed_H_on_side_sums():
    """A side-sum auxiliary is bounded by sum |alpha| U^d, which can exceed H."""
    F = make_system([P((3, {1: 1}), (-3, {2: 1}))], [(0, 3), (0, 3)])
    R = reduce_system(F)
    p = extend(R, [3, 3])
    e = by_label(R)["f1.e"].target
    assert R.H == 7 and p[e] == 9
    assert eval_relations(R, p).ok


# ---- properties -------------------------------------------------------------

coef = st.fractions(min_value=-4, max_value=4, max_denominator=6).filter(lambda x: x != 0)
monos = st.dictionaries(st.integers(1, 3), st.integers(1, 3), max_size=3).filter(lambda d: sum(d.values()) <= 3)
system_polys = st.lists(st.lists(st.tuples(coef, monos), min_size=1, max_size=4).map(Polynomial.from_terms).filter(lambda p: not p.is_zero()), min_size=1, max_size=3)
vals = st.fractions(min_value=0, max_value=2, max_denominator=8)


@settings(max_examples=80, deadline=None)
@given(system_polys, st.lists(vals, min_size=3, max_size=3))
def test_extension_residuals_track_F(ps, z):
    F = make_system(ps, [(0, 2)] * 3)
    R = reduce_system(F)
    p = extend(R, z)
    rep = eval_relations(R, p)
    labels = [r.label for r in R.relations]
    for i, poly in enumerate(F.polys, 1):
        # the joining EQ (or folded difference) carries exactly f_i(z)
        assert rep.residuals[labels.index(f"f{i}")] == evaluate(poly, z)
    # every defining relation holds identically
    for r, res in zip(R.relations, rep.residuals):
        if r.target is not None:
            assert res == 0
    assert rep.ok == residual(F, z).is_solution


@settings(max_examples=80, deadline=None)
@given(system_polys, st.lists(vals, min_size=3, max_size=3))
def test_solution_restricts_to_solution(ps, z):
    F = make_system(ps, [(0, 2)] * 3)
    R = reduce_system(F)
    p = extend(R, z)
    if eval_relations(R, p).ok:
        assert residual(F, p[1:4]).is_solution


@settings(max_examples=80, deadline=None)
@given(system_polys, st.lists(vals, min_size=3, max_size=3))
def test_boundedness_of_primary_and_product_variables(ps, z):
    """Originals, slacks, partial products and QD c-inputs stay <= H."""
    F = make_system(ps, [(0, 2)] * 3)
    R = reduce_system(F)
    p = extend(R, z)
    watched = set(range(1, 4))
    for r in R.relations:
        if r.kind == "QD":
            watched |= {r.a, r.c}
        elif r.label.startswith(("lower", "upper")):
            watched.add(r.target)
    assert all(p[v] <= R.H for v in watched)


@settings(max_examples=40, deadline=None)
@given(system_polys)
def test_relation_size_polynomial_in_system_size(ps):
    F = make_system(ps, [(0, 2)] * 3)
    s = relation_size(reduce_system(F)).total_bit_size
    poly_part = sum(p.degree**2 * sum(rational_size(m.coeff) + 3 for m in p.monomials) + 1 for p in F.polys)
    bound_part = sum(rational_size(lo) + rational_size(hi) for lo, hi in F.bounds)
    assert s <= 8 * poly_part + 8 * bound_part


def test_round_trip_cases_reduce_cleanly():
    for name, F, z in round_trip_cases():
        R = reduce_system(F)
        p = extend(R, z)
        assert eval_relations(R, p).ok, name
        assert system_size(F).total_bit_size > 0
