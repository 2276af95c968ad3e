"""Polynomial system -> basic relations (EQ / LIN / QD) over nonnegative prices.

Variable id 0 is the constant 1 in an unhomogenized system and the
numeraire price ``p_s`` once homogenized; ids ``1..n`` are the original
variables, followed by auxiliaries and finally the slack pairs
``s^l_j, s^u_j``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction

from .errors import AlreadyHomogenizedError, MissingVariableError, ParseError
from .poly import (
    PolynomialSystem,
    SizeReport,
    format_rational,
    rational_size,
    to_rational,
    u_max,
)

SCHEMA = "leontief-reduction/relations@1"
NUMERAIRE = 0

Terms = tuple[tuple[Fraction, int], ...]


def _terms(seq) -> Terms:
    out = []
    for coef, var in seq:
        coef = to_rational(coef)
        if coef < 0:
            raise ValueError(f"negative LIN coefficient {coef}")
        if coef != 0:
            out.append((coef, int(var)))
    return tuple(out)


@dataclass(frozen=True)
class Relation:
    """One basic relation.

    EQ:  p_a = p_b
    LIN: sum(left) = sum(right), all coefficients >= 0; an empty side means 0
    QD:  p_a * p_s = p_b * p_c
    """

    kind: str
    a: int | None = None
    b: int | None = None
    c: int | None = None
    left: Terms = ()
    right: Terms = ()
    target: int | None = None
    label: str = field(default="", compare=False)

    @classmethod
    def eq(cls, a, b, label=""):
        return cls("EQ", a=a, b=b, label=label)

    @classmethod
    def lin(cls, left, right, target=None, label=""):
        left, right = _terms(left), _terms(right)
        if not left and not right:
            raise ValueError("LIN relation with both sides empty")
        return cls("LIN", left=left, right=right, target=target, label=label)

    @classmethod
    def qd(cls, a, b, c, label=""):
        return cls("QD", a=a, b=b, c=c, target=a, label=label)

    def variables(self) -> set[int]:
        if self.kind == "EQ":
            return {self.a, self.b}
        if self.kind == "QD":
            return {self.a, self.b, self.c}
        return {v for _, v in self.left} | {v for _, v in self.right}

    def coefficients(self):
        return [c for c, _ in self.left] + [c for c, _ in self.right]

    def __str__(self):
        if self.kind == "EQ":
            return f"p{self.a} = p{self.b}"
        if self.kind == "QD":
            return f"p{self.a} = p{self.b}*p{self.c}/p0"

        def side(ts):
            if not ts:
                return "0"
            return " + ".join(f"p{v}" if c == 1 else f"{format_rational(c)}*p{v}" for c, v in ts)

        return f"{side(self.left)} = {side(self.right)}"


@dataclass(frozen=True)
class RelationSystem:
    N: int
    original_n: int
    relations: tuple[Relation, ...]
    numeraire: int | None = None
    H: Fraction | None = None
    h_params: tuple | None = None  # (d, M_max, U_max) of the source system
    labels: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        for r in self.relations:
            for v in r.variables():
                if not 0 <= v <= self.N:
                    raise ValueError(f"relation {r} references unknown variable {v}")

    @property
    def homogenized(self) -> bool:
        return self.numeraire is not None

    @property
    def K(self) -> int:
        return len(self.relations)

    def var_label(self, v: int) -> str:
        if v == NUMERAIRE:
            return "s"
        if self.labels and v <= len(self.labels):
            return self.labels[v - 1]
        return f"v{v}"


# --------------------------------------------------------------------------
# H


def h_bound(d, m_max, umax) -> Fraction:
    return Fraction(m_max) * Fraction(umax) ** d + 1


def compute_H(F: PolynomialSystem) -> Fraction:
    d = max(p.degree for p in F.polys)
    m_max = max(len(p) for p in F.polys)
    return h_bound(d, m_max, u_max(F))


# --------------------------------------------------------------------------
# decomposition


def _is_difference(poly):
    """True for polynomials of the form z_a - z_b (folded straight into EQ)."""
    if len(poly) != 2:
        return None
    m1, m2 = poly.monomials
    if m1.degree != 1 or m2.degree != 1:
        return None
    if m1.exps[0][1] != 1 or m2.exps[0][1] != 1:
        return None
    if {m1.coeff, m2.coeff} != {Fraction(1), Fraction(-1)}:
        return None
    pos, neg = (m1, m2) if m1.coeff > 0 else (m2, m1)
    return pos.exps[0][0], neg.exps[0][0]


def decompose(F: PolynomialSystem) -> RelationSystem:
    """R(F): QD chains per monomial, one LIN per side, one EQ, then bounds."""
    n = F.n_vars
    labels = [F.var_label(j) for j in range(1, n + 1)]
    rels: list[Relation] = []

    def fresh(label):
        labels.append(label)
        return len(labels)

    for i, poly in enumerate(F.polys, 1):
        pair = _is_difference(poly)
        if pair is not None:
            rels.append(Relation.eq(*pair, label=f"f{i}"))
            continue
        pos, neg = [], []
        for k, mono in enumerate(poly.monomials, 1):
            if mono.degree == 0:
                var = NUMERAIRE
            elif mono.degree == 1:
                var = mono.exps[0][0]
            else:
                factors = mono.factors()
                var = factors[0]
                for step, nxt in enumerate(factors[1:], 1):
                    t = fresh(f"f{i}.m{k}.t{step}")
                    # the new factor (an original variable) is always the c input,
                    # so QD capacity p_c/p_s <= H only ever involves a bounded z_j
                    rels.append(Relation.qd(t, var, nxt, label=f"f{i}.m{k}.t{step}"))
                    var = t
            (pos if mono.coeff > 0 else neg).append((abs(mono.coeff), var))
        e = fresh(f"f{i}.e")
        rels.append(Relation.lin([(1, e)], pos, target=e, label=f"f{i}.e"))
        f = fresh(f"f{i}.f")
        rels.append(Relation.lin([(1, f)], neg, target=f, label=f"f{i}.f"))
        rels.append(Relation.eq(e, f, label=f"f{i}"))

    slack = {}
    for j in range(1, n + 1):
        slack[j] = (fresh(f"sl{j}"), fresh(f"su{j}"))
    for j, (lo, hi) in enumerate(F.bounds, 1):
        sl, su = slack[j]
        rels.append(Relation.lin([(1, j)], [(1, sl), (lo, NUMERAIRE)], target=sl, label=f"lower{j}"))
        rels.append(Relation.lin([(1, j), (1, su)], [(hi, NUMERAIRE)], target=su, label=f"upper{j}"))

    d = max(p.degree for p in F.polys)
    m_max = max(len(p) for p in F.polys)
    return RelationSystem(
        N=len(labels),
        original_n=n,
        relations=tuple(rels),
        h_params=(d, m_max, u_max(F)),
        labels=tuple(labels),
    )


def homogenize(R: RelationSystem, H=None) -> RelationSystem:
    """R'(F): constants become multiples of p_s, products get divided by p_s.

    With variable 0 doubling as constant and numeraire, the rewrite is a
    reinterpretation; what changes is the stored numeraire id and ``H``.
    """
    if R.homogenized:
        raise AlreadyHomogenizedError("relation system is already homogenized")
    if H is None:
        if R.h_params is None:
            raise ValueError("H unknown: pass it explicitly for hand-built systems")
        H = h_bound(*R.h_params)
    return replace(R, numeraire=NUMERAIRE, H=to_rational(H))


def reduce_system(F: PolynomialSystem) -> RelationSystem:
    return homogenize(decompose(F))


# --------------------------------------------------------------------------
# evaluation


def _value(p, v):
    try:
        return p[v]
    except (KeyError, IndexError):
        raise MissingVariableError(f"assignment has no value for variable {v}") from None


def relation_residual(r: Relation, p, ps=1):
    if r.kind == "EQ":
        return _value(p, r.a) - _value(p, r.b)
    if r.kind == "QD":
        return _value(p, r.a) * ps - _value(p, r.b) * _value(p, r.c)
    return sum(c * _value(p, v) for c, v in r.left) - sum(c * _value(p, v) for c, v in r.right)


@dataclass(frozen=True)
class RelationReport:
    residuals: tuple
    negatives: tuple  # variable ids with negative values

    @property
    def ok(self) -> bool:
        return not self.negatives and all(r == 0 for r in self.residuals)

    def max_abs(self):
        return max((abs(r) for r in self.residuals), default=0)


def _as_full(R: RelationSystem, p):
    if isinstance(p, dict):
        full = dict(p)
        if not R.homogenized:
            full.setdefault(NUMERAIRE, Fraction(1))
        return full
    p = list(p)
    if len(p) == R.N and not R.homogenized:
        p = [Fraction(1)] + p
    return p


def eval_relations(R: RelationSystem, p) -> RelationReport:
    """Residual per relation; ``p`` is indexed by variable id (0 = p_s).

    For an unhomogenized system ``p`` may omit id 0 (it is the constant 1);
    a length-N sequence is then read as ids 1..N.
    """
    full = _as_full(R, p)
    ps = _value(full, NUMERAIRE) if R.homogenized else 1
    res = tuple(relation_residual(r, full, ps) for r in R.relations)
    ids = full.keys() if isinstance(full, dict) else range(len(full))
    neg = tuple(v for v in ids if full[v] < 0)
    return RelationReport(res, neg)


def _solve_for(r: Relation, v: int, p, ps):
    """Value of variable v making relation r hold, given all other values."""
    if r.kind == "QD":
        if ps == 0:
            raise ZeroDivisionError("p_s = 0")
        return p[r.b] * p[r.c] / ps
    coef = None
    rest = 0
    for sign, side in ((1, r.left), (-1, r.right)):
        for c, u in side:
            if u == v:
                if coef is not None:
                    raise ValueError(f"variable {v} occurs twice in {r}")
                coef = sign * c
            else:
                rest += sign * c * p[u]
    return -rest / coef


def extend(R: RelationSystem, z, ps=Fraction(1)) -> list:
    """Forward-evaluate every defining relation from original values ``z``.

    ``z`` is a sequence (z[j-1] for j = 1..n) or a mapping. Returns the
    full assignment indexed by variable id with ``p[0] = ps``.
    """
    p: list = [None] * (R.N + 1)
    p[NUMERAIRE] = ps
    for j in range(1, R.original_n + 1):
        val = z[j] if isinstance(z, dict) else z[j - 1]
        p[j] = to_rational(val) if not isinstance(val, float) else val
    pending = [r for r in R.relations if r.target is not None]
    while pending:
        progress = False
        rest = []
        for r in pending:
            needed = r.variables() - {r.target}
            if all(p[u] is not None for u in needed):
                p[r.target] = _solve_for(r, r.target, p, ps)
                progress = True
            else:
                rest.append(r)
        if not progress:
            missing = sorted({u for r in rest for u in r.variables() if p[u] is None})
            raise MissingVariableError(f"cannot forward-evaluate variables {missing}")
        pending = rest
    missing = [v for v in range(R.N + 1) if p[v] is None]
    if missing:
        raise MissingVariableError(f"variables {missing} are not defined by any relation")
    return p


# --------------------------------------------------------------------------
# size


def relation_size(R: RelationSystem) -> SizeReport:
    nvars = R.N + (1 if R.homogenized else 0)
    coef_bits = sum(rational_size(c) for r in R.relations if r.kind == "LIN" for c in r.coefficients())
    lin_terms = [len(r.left) + len(r.right) for r in R.relations if r.kind == "LIN"]
    coefs = [c for r in R.relations for c in r.coefficients()]
    return SizeReport(
        var_count=nvars,
        relation_or_poly_count=R.K,
        total_bit_size=nvars + R.K + coef_bits,
        max_degree=2 if any(r.kind == "QD" for r in R.relations) else (1 if R.K else 0),
        monomial_count_max=max(lin_terms, default=0),
        U_max=max(coefs, default=Fraction(0)),
    )


# --------------------------------------------------------------------------
# JSON


def _terms_obj(ts):
    return [[format_rational(c), v] for c, v in ts]


def relation_to_obj(r: Relation) -> dict:
    if r.kind == "EQ":
        d = {"kind": "EQ", "a": r.a, "b": r.b}
    elif r.kind == "QD":
        d = {"kind": "QD", "a": r.a, "b": r.b, "c": r.c}
    else:
        d = {"kind": "LIN", "left": _terms_obj(r.left), "right": _terms_obj(r.right)}
        if r.target is not None:
            d["target"] = r.target
    if r.label:
        d["label"] = r.label
    return d


def relation_from_obj(d) -> Relation:
    kind = d.get("kind")
    label = d.get("label", "")
    if kind == "EQ":
        return Relation.eq(int(d["a"]), int(d["b"]), label=label)
    if kind == "QD":
        return Relation.qd(int(d["a"]), int(d["b"]), int(d["c"]), label=label)
    if kind == "LIN":
        left = [(to_rational(c), int(v)) for c, v in d["left"]]
        right = [(to_rational(c), int(v)) for c, v in d["right"]]
        return Relation.lin(left, right, target=d.get("target"), label=label)
    raise ParseError(f"unknown relation kind {kind!r}")


def relations_to_obj(R: RelationSystem) -> dict:
    obj = {
        "schema": SCHEMA,
        "N": R.N,
        "original_n": R.original_n,
        "numeraire": R.numeraire,
        "H": None if R.H is None else format_rational(R.H),
        "relations": [relation_to_obj(r) for r in R.relations],
    }
    if R.h_params is not None:
        d, m, u = R.h_params
        obj["h_params"] = {"d": d, "M_max": m, "U_max": format_rational(u)}
    if R.labels:
        obj["labels"] = list(R.labels)
    return obj


def relations_from_obj(obj) -> RelationSystem:
    schema = obj.get("schema")
    if schema is not None and schema != SCHEMA:
        raise ParseError(f"unexpected schema {schema!r}")
    hp = obj.get("h_params")
    h_params = None if hp is None else (int(hp["d"]), int(hp["M_max"]), to_rational(hp["U_max"]))
    return RelationSystem(
        N=int(obj["N"]),
        original_n=int(obj.get("original_n", 0)),
        relations=tuple(relation_from_obj(d) for d in obj["relations"]),
        numeraire=obj.get("numeraire"),
        H=None if obj.get("H") is None else to_rational(obj["H"]),
        h_params=h_params,
        labels=tuple(obj.get("labels", ())),
    )


def serialize_relations(R: RelationSystem) -> str:
    return json.dumps(relations_to_obj(R), indent=1)


def parse_relations(text: str) -> RelationSystem:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"syntax error: {exc.msg}", exc.lineno, exc.colno) from None
    return relations_from_obj(obj)
