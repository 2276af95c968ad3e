from fractions import Fraction as Q

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from casebook import round_trip_cases
from leontief_reduction.errors import InvalidCertificateError
from leontief_reduction.gadgets import compile_market, gadget_market, lift
from leontief_reduction.market import Agent, EquilibriumCertificate, MarketInstance, certificate_from_prices, verify_equilibrium
from leontief_reduction.ncp import (
    NCPCandidate,
    PLCAgent,
    PLCMarket,
    UtilityPiece,
    build_ncp,
    candidate_from_certificate,
    certificate_from_candidate,
    check_ncp,
    check_smtlib,
    count_asserts,
    export_etr,
    leontief_firm,
    parse_plc,
    plc_to_obj,
)
from leontief_reduction.reduce import Relation, reduce_system

import json

ONE = PLCMarket(("g",), (PLCAgent({0: Q(1)}, (UtilityPiece({0: Q(1)}),)),))
FIRM = PLCMarket(
    ("in", "out"),
    (PLCAgent({0: Q(1)}, (UtilityPiece({1: Q(1)}),), {0: Q(1)}),),
    (leontief_firm(1, {0: 1}),),
)


def one_candidate(x):
    return NCPCandidate({"p_0": Q(1), "x_0_0": Q(x), "lam_0": Q(1), "gam_0_0": Q(1), "u_0": Q(1)})


def test_single_agent_rows_and_check():
    I = build_ncp(ONE)
    assert {k: len(v) for k, v in I.families().items()} == {"agent": 4, "budget": 2, "clearing": 2, "normalization": 3}
    assert check_ncp(I, one_candidate(1)).ok
    rep = check_ncp(I, one_candidate(2))
    assert not rep.ok and any(lab.startswith("clear_0") for lab, _ in rep.violations)


def test_exchange_market_has_no_production_rows():
    I = build_ncp(ONE)
    assert not any(r.family == "production" for r in I.rows)
    assert not any(n.startswith("phi") for n in I.var_names)


def test_leontief_firm_hand_equilibrium():
    I = build_ncp(FIRM)
    vals = {
        "p_0": Q(1, 2), "p_1": Q(1, 2), "x_0_1": Q(1), "xs_0_1": Q(1), "xr_0_0": Q(1),
        "lam_0": Q(2), "gam_0_0": Q(1), "del_0_0": Q(1, 2), "u_0": Q(1), "phi_0": Q(0),
    }
    assert check_ncp(I, NCPCandidate(vals)).ok
    bad = dict(vals, xs_0_1=Q(2))
    assert not check_ncp(I, NCPCandidate(bad)).ok


def test_invalid_plc_markets():
    with pytest.raises(ValueError):
        PLCMarket(("g",), ())
    with pytest.raises(ValueError):
        PLCMarket(("g",), (PLCAgent({0: Q(1)}, (UtilityPiece({0: Q(1)}, Q(1)),)),))
    with pytest.raises(ValueError):
        PLCMarket(("a", "b"), (PLCAgent({0: Q(1)}, (UtilityPiece({1: Q(1)}),), {0: Q(1, 2)}),), (leontief_firm(1, {0: 1}),))


def test_export_single_agent():
    doc = export_etr(build_ncp(ONE))
    assert count_asserts(doc) == 5
    assert check_smtlib(doc) == []
    assert doc.strip().endswith("(check-sat)")
    assert export_etr(build_ncp(ONE)) == doc


def test_export_clears_denominators():
    P = PLCMarket(("a", "b"), (PLCAgent({0: Q(2, 3)}, (UtilityPiece({1: Q(5, 7)}),)), PLCAgent({1: Q(1, 4)}, (UtilityPiece({0: Q(3)}),))))
    doc = export_etr(build_ncp(P))
    assert check_smtlib(doc) == []
    assert "/" not in doc.replace("; ", "")
    assert check_smtlib(doc.replace("(check-sat)", "(assert (<= p_0 1/2))")) != []


def test_export_unsatisfiable_market_is_well_formed():
    # the agent owns only good 0, which nobody values
    P = PLCMarket(("junk", "want"), (PLCAgent({0: Q(1)}, (UtilityPiece({1: Q(1)}),)),))
    doc = export_etr(build_ncp(P))
    assert check_smtlib(doc) == [] and count_asserts(doc) == 5


def test_grammar_checker_negatives():
    assert check_smtlib("(assert (<= x 0)") != []
    assert check_smtlib("(declare-const x Real)\n(assert (frob x 0))") != []
    assert check_smtlib("(assert (<= y 0))") != []


def test_plc_json_round_trip():
    assert parse_plc(json.dumps(plc_to_obj(FIRM))) == FIRM


def test_candidate_json_round_trip():
    c = one_candidate(Q(1, 3))
    assert NCPCandidate.from_obj(json.loads(json.dumps(c.to_obj()))) == c


def test_zero_cost_agent_has_no_multiplier():
    M = MarketInstance(("a", "b"), (Agent({0: Q(1)}, {1: Q(1)}), Agent({1: Q(1)}, {1: Q(1)})))
    c = EquilibriumCertificate((Q(1), Q(0)), (Q(1), Q(1)))
    with pytest.raises(InvalidCertificateError):
        candidate_from_certificate(PLCMarket.from_leontief(M), c)


def lifted_markets():
    out = []
    for name, F, z in round_trip_cases():
        M, tr = compile_market(reduce_system(F))
        out.append((name, M, lift(tr, z, M)))
    for rel, z in (
        (Relation.eq(1, 2), (2, 2, 0)),
        (Relation.lin([(1, 1)], [(2, 2), (3, 0)]), (5, 1, 0)),
        (Relation.qd(1, 2, 3), (4, 2, 2)),
    ):
        M, tr = gadget_market(rel, 3, H=5)
        out.append((rel.kind, M, lift(tr, [Q(x) for x in z], M)))
    return out


def test_consistency_on_lifted_certificates():
    cases = lifted_markets()
    for name, M, cert in cases:
        P = PLCMarket.from_leontief(M)
        I = build_ncp(P)
        cand = candidate_from_certificate(P, cert)
        assert check_ncp(I, cand).ok, name
        back = certificate_from_candidate(P, cand, numeraire=0)
        assert verify_equilibrium(M, back).ok, name


GADGETS = {
    "EQ": gadget_market(Relation.eq(1, 2), 3, H=5)[0],
    "LIN": gadget_market(Relation.lin([(1, 1)], [(1, 2), (1, 3)]), 3, H=5)[0],
}


@settings(max_examples=80, deadline=None)
@given(st.sampled_from(sorted(GADGETS)), st.lists(st.integers(1, 4), min_size=8, max_size=8))
def test_ncp_acceptance_matches_verification(kind, ks):
    M = GADGETS[kind]
    p = [Q(k) for k in ks[: M.g]]
    p[0] = Q(1)
    cert = certificate_from_prices(M, p)
    P = PLCMarket.from_leontief(M)
    ok_ncp = check_ncp(build_ncp(P), candidate_from_certificate(P, cert)).ok
    assert ok_ncp == verify_equilibrium(M, cert).ok
