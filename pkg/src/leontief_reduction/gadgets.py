"""Compile a homogenized relation system into a Leontief exchange market.

Every relation becomes a small closed submarket ("gadget") that enforces it
at equilibrium.  Good ``j`` for ``0 <= j <= N`` carries the price of
relation variable ``j`` (good 0 is the numeraire ``G_s``); gadget-internal
goods follow.  Names use the scheme ``rel{K}/{role}``.

A product gadget p_a * p_s = p_b * p_c is assembled from two converters,
a combiner and a splitter.  Named goods (``g1`` .. ``g7``) move as follows,
with l = p_c / p_s::

    A1 --1 g1--> Conv1 --l g2--> Comb --l g3--> Spl --l g4--> A1
    A2 --1 g6--> Conv2 --l g7-->                    --l g5--> A2

Linear side conditions (``g2 = s``, ``g5 = p_b + s``, ...) are themselves
EQ/LIN gadgets nested in the parent's record.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import InvalidCertificateError, LiftError, ParseError
from .market import (
    Agent,
    EquilibriumCertificate,
    MarketInstance,
    demand_betas,
    verify_equilibrium,
)
from .poly import Polynomial, PolynomialSystem, evaluate, poly_from_obj, poly_to_obj, residual
from .reduce import (
    NUMERAIRE,
    Relation,
    RelationSystem,
    eval_relations,
    extend,
    relation_from_obj,
    relation_to_obj,
    relations_from_obj,
    relations_to_obj,
)

TRACE_SCHEMA = "leontief-reduction/trace@1"
S = NUMERAIRE


# --------------------------------------------------------------------------
# price formulas


@dataclass(frozen=True)
class PriceFormula:
    """``num(p) / p_s**den_pow`` with ``num`` a polynomial over variable ids."""

    num: Polynomial
    den_pow: int = 0

    def __call__(self, p):
        env = p if isinstance(p, dict) else dict(enumerate(p))
        val = evaluate(self.num, env)
        if self.den_pow:
            val = val / env[S] ** self.den_pow
        return val

    def to_obj(self):
        return {"num": poly_to_obj(self.num), "den_pow": self.den_pow}

    @classmethod
    def from_obj(cls, d):
        return cls(poly_from_obj(d["num"]), int(d.get("den_pow", 0)))


def _v(j, coeff=1) -> Polynomial:
    return Polynomial.var(j, coeff)


def _lin_poly(terms) -> Polynomial:
    out = Polynomial()
    for c, v in terms:
        out = out + _v(v, c)
    return out


# --------------------------------------------------------------------------
# records


@dataclass
class GadgetRecord:
    path: str
    kind: str  # NUMERAIRE | EQ | LIN | QD
    relation: Relation | None = None  # over good ids
    relation_id: int | None = None  # index into R.relations for top-level records
    agents: list = field(default_factory=list)
    goods: list = field(default_factory=list)
    exclusive: list = field(default_factory=list)
    roles: dict = field(default_factory=dict)
    children: list = field(default_factory=list)

    def all_agents(self) -> list:
        out = list(self.agents)
        for ch in self.children:
            out.extend(ch.all_agents())
        return out

    def walk(self):
        yield self
        for ch in self.children:
            yield from ch.walk()

    def to_obj(self):
        d = {
            "path": self.path,
            "kind": self.kind,
            "agents": self.agents,
            "goods": self.goods,
            "exclusive": self.exclusive,
        }
        if self.relation is not None:
            d["relation"] = relation_to_obj(self.relation)
        if self.relation_id is not None:
            d["relation_id"] = self.relation_id
        if self.roles:
            d["roles"] = self.roles
        if self.children:
            d["children"] = [c.to_obj() for c in self.children]
        return d

    @classmethod
    def from_obj(cls, d):
        return cls(
            path=d["path"],
            kind=d["kind"],
            relation=relation_from_obj(d["relation"]) if "relation" in d else None,
            relation_id=d.get("relation_id"),
            agents=list(d.get("agents", [])),
            goods=list(d.get("goods", [])),
            exclusive=list(d.get("exclusive", [])),
            roles=dict(d.get("roles", {})),
            children=[cls.from_obj(c) for c in d.get("children", [])],
        )


@dataclass
class GadgetTrace:
    relations: RelationSystem
    numeraire: GadgetRecord
    records: list
    formulas: list  # PriceFormula per good
    goods: list  # good labels

    def to_obj(self):
        return {
            "schema": TRACE_SCHEMA,
            "relations": relations_to_obj(self.relations),
            "goods": self.goods,
            "formulas": [f.to_obj() for f in self.formulas],
            "numeraire": self.numeraire.to_obj(),
            "records": [r.to_obj() for r in self.records],
        }

    @classmethod
    def from_obj(cls, obj):
        schema = obj.get("schema")
        if schema is not None and schema != TRACE_SCHEMA:
            raise ParseError(f"unexpected schema {schema!r}")
        return cls(
            relations=relations_from_obj(obj["relations"]),
            numeraire=GadgetRecord.from_obj(obj["numeraire"]),
            records=[GadgetRecord.from_obj(r) for r in obj["records"]],
            formulas=[PriceFormula.from_obj(f) for f in obj["formulas"]],
            goods=list(obj["goods"]),
        )

    def all_records(self):
        yield self.numeraire
        for r in self.records:
            yield from r.walk()

    def complete_prices(self, p):
        """Full market price vector from relation-variable values ``p[0..N]``."""
        return [f(p) for f in self.formulas]


def serialize_trace(trace: GadgetTrace) -> str:
    return json.dumps(trace.to_obj(), indent=1)


def parse_trace(text: str) -> GadgetTrace:
    try:
        return GadgetTrace.from_obj(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ParseError(f"syntax error: {exc.msg}", exc.lineno, exc.colno) from None


# --------------------------------------------------------------------------
# builder


class MarketBuilder:
    """Accumulates goods (with lift formulas) and agents."""

    def __init__(self, labels=(), formulas=()):
        self.labels = list(labels)
        self.formulas = list(formulas)
        self.agents: list[Agent] = []

    @classmethod
    def for_relations(cls, R: RelationSystem) -> "MarketBuilder":
        labels = ["G_s"] + [f"var/{R.var_label(j)}" for j in range(1, R.N + 1)]
        formulas = [PriceFormula(_v(j)) for j in range(R.N + 1)]
        return cls(labels, formulas)

    def add_good(self, label, formula: PriceFormula) -> int:
        self.labels.append(label)
        self.formulas.append(formula)
        return len(self.labels) - 1

    def add_agent(self, label, W, A) -> int:
        self.agents.append(Agent(_bundle(W), _bundle(A), label))
        return len(self.agents) - 1

    def market(self) -> MarketInstance:
        return MarketInstance(tuple(self.labels), tuple(self.agents))


def _bundle(pairs) -> dict:
    """Merge ``{good: amount}`` or ``[(amount, good)]`` into a sparse map."""
    out: dict = {}
    items = pairs.items() if isinstance(pairs, dict) else ((g, c) for c, g in pairs)
    for g, c in items:
        c = Fraction(c)
        if c:
            out[g] = out.get(g, Fraction(0)) + c
    return out


_EXCLUSIVE = PriceFormula(_v(S))  # exclusive goods are priced like the numeraire (1 after normalizing)


def build_numeraire(b: MarketBuilder) -> GadgetRecord:
    ag = b.add_agent("A_s", {S: 1}, {S: 1})
    return GadgetRecord("numeraire", "NUMERAIRE", agents=[ag], roles={"G_s": S})


def build_eq(b: MarketBuilder, path: str, a: int, bb: int) -> GadgetRecord:
    """p_a = p_b via two agents swapping a and b, each also holding one exclusive r."""
    r = b.add_good(f"{path}/r", _EXCLUSIVE)
    a1 = b.add_agent(f"{path}/A1", {bb: 1, r: 1}, {a: 1, r: 1})
    a2 = b.add_agent(f"{path}/A2", {a: 1, r: 1}, {bb: 1, r: 1})
    return GadgetRecord(
        path, "EQ", relation=Relation.eq(a, bb), agents=[a1, a2], goods=[r], exclusive=[r], roles={"r": r}
    )


def build_lin(b: MarketBuilder, path: str, left, right) -> GadgetRecord:
    """sum(left) = sum(right) with nonnegative coefficients.

    ``left``/``right`` are ``[(coef, good)]``.  A1 owns the left bundle and
    wants the right one, A2 the reverse; both also hold and want one unit
    of an exclusive good r.  An empty side stands for 0.
    """
    rel = Relation.lin(left, right)
    r = b.add_good(f"{path}/r", _EXCLUSIVE)
    L = list(rel.left) + [(Fraction(1), r)]
    Rt = list(rel.right) + [(Fraction(1), r)]
    a1 = b.add_agent(f"{path}/A1", L, Rt)
    a2 = b.add_agent(f"{path}/A2", Rt, L)
    return GadgetRecord(path, "LIN", relation=rel, agents=[a1, a2], goods=[r], exclusive=[r], roles={"r": r})


def _build_linear(b, path, left, right) -> GadgetRecord:
    """EQ gadget when both sides are a single unit term, otherwise LIN."""
    if len(left) == 1 and len(right) == 1 and left[0][0] == 1 and right[0][0] == 1:
        return build_eq(b, path, left[0][1], right[0][1])
    return build_lin(b, path, left, right)


def build_qd(b: MarketBuilder, path: str, a: int, bb: int, c: int, H) -> GadgetRecord:
    """p_a * p_s = p_b * p_c, valid while p_c / p_s <= H."""
    H = Fraction(H)
    s = S
    va, vb, vc, vs = _v(a), _v(bb), _v(c), _v(s)
    B = vb + vs  # p_b + s
    bc = vb * vc
    sc = vs * vc
    G = {}
    G["g1"] = b.add_good(f"{path}/g1", PriceFormula(vc))
    G["g2"] = b.add_good(f"{path}/g2", PriceFormula(vs))
    G["g3"] = b.add_good(f"{path}/g3", PriceFormula(vb + 2 * vs))
    G["g4"] = b.add_good(f"{path}/g4", PriceFormula(vs))
    G["g5"] = b.add_good(f"{path}/g5", PriceFormula(B))
    G["g6"] = b.add_good(f"{path}/g6", PriceFormula(va + vc))
    G["g7"] = b.add_good(f"{path}/g7", PriceFormula(B))
    G["conv1/c3"] = b.add_good(f"{path}/conv1/c3", PriceFormula(H * vs - vc))
    G["conv2/c3"] = b.add_good(f"{path}/conv2/c3", PriceFormula(H * B - va - vc))
    inflow = bc + 2 * sc  # l * (p_b + 2 s) * s
    G["comb/c4"] = b.add_good(f"{path}/comb/c4", PriceFormula(inflow, 1))
    G["comb/c5"] = b.add_good(f"{path}/comb/c5", PriceFormula(H * (vb + 2 * vs) * vs - inflow, 1))
    G["spl/d4"] = b.add_good(f"{path}/spl/d4", PriceFormula(inflow, 1))
    G["spl/d5"] = b.add_good(f"{path}/spl/d5", PriceFormula(H * (vb + 2 * vs) * vs - inflow, 1))
    g = G
    agents = []
    roles = dict(G)

    def agent(role, W, A):
        i = b.add_agent(f"{path}/{role}", W, A)
        agents.append(i)
        roles[role] = i

    agent("A1", {g["g1"]: 1}, {g["g4"]: 1})
    agent("A2", {g["g6"]: 1}, {g["g5"]: 1})
    # converters: A1 holds H of the output and wants input + c3; A2 sells c3 for output
    for name, inp, out in (("conv1", "g1", "g2"), ("conv2", "g6", "g7")):
        agent(f"{name}/A1", {g[out]: H}, {g[inp]: 1, g[f"{name}/c3"]: 1})
        agent(f"{name}/A2", {g[f"{name}/c3"]: 1}, {g[out]: 1})
    agent("comb/A1", {g["comb/c4"]: 1}, {g["g2"]: 1, g["g7"]: 1})
    agent("comb/A2", {g["g3"]: H}, {g["comb/c4"]: 1, g["comb/c5"]: 1})
    agent("comb/A3", {g["comb/c5"]: 1}, {g["g3"]: 1})
    agent("spl/A1", {g["spl/d4"]: 1}, {g["g3"]: 1})
    agent("spl/A2", {g["g4"]: H, g["g5"]: H}, {g["spl/d4"]: 1, g["spl/d5"]: 1})
    agent("spl/A3", {g["spl/d5"]: 1}, {g["g4"]: 1, g["g5"]: 1})

    one = Fraction(1)
    part2 = [
        ([(one, g["g1"])], [(one, c)]),
        ([(one, g["g2"])], [(one, s)]),
        ([(one, g["g4"])], [(one, s)]),
        ([(one, g["g5"])], [(one, bb), (one, s)]),
        ([(one, g["g7"])], [(one, bb), (one, s)]),
        ([(one, a), (one, c)], [(one, g["g6"])]),
        # Conv(q): output priced q, c3 + input = H q
        ([(one, g["g2"])], [(one, s)]),
        ([(one, g["conv1/c3"]), (one, g["g1"])], [(H, s)]),
        ([(one, g["g7"])], [(one, bb), (one, s)]),
        ([(one, g["conv2/c3"]), (one, g["g6"])], [(H, bb), (H, s)]),
        # Comb: output = sum of inputs, c5 + c4 = H * (inputs)
        ([(one, g["g3"])], [(one, g["g2"]), (one, g["g7"])]),
        ([(one, g["comb/c5"]), (one, g["comb/c4"])], [(H, g["g2"]), (H, g["g7"])]),
        # Spl: outputs priced s and p_b + s, d5 + d4 = H * (outputs)
        ([(one, g["g4"])], [(one, s)]),
        ([(one, g["g5"])], [(one, bb), (one, s)]),
        ([(one, g["spl/d5"]), (one, g["spl/d4"])], [(H, g["g4"]), (H, g["g5"])]),
    ]
    children = [_build_linear(b, f"{path}/p2.{k}", L, Rr) for k, (L, Rr) in enumerate(part2, 1)]
    own = list(G.values())
    return GadgetRecord(
        path,
        "QD",
        relation=Relation.qd(a, bb, c),
        agents=agents,
        goods=own,
        exclusive=own,
        roles=roles,
        children=children,
    )


def build_relation(b: MarketBuilder, path: str, r: Relation, H) -> GadgetRecord:
    if r.kind == "EQ":
        return build_eq(b, path, r.a, r.b)
    if r.kind == "LIN":
        return build_lin(b, path, list(r.left), list(r.right))
    return build_qd(b, path, r.a, r.b, r.c, H)


# --------------------------------------------------------------------------
# compile / lift / project / audit


def compile_market(R: RelationSystem) -> tuple[MarketInstance, GadgetTrace]:
    if not R.homogenized or R.H is None:
        raise ValueError("compile needs a homogenized relation system with H")
    b = MarketBuilder.for_relations(R)
    num = build_numeraire(b)
    records = []
    for k, r in enumerate(R.relations, 1):
        rec = build_relation(b, f"rel{k}", r, R.H)
        rec.relation_id = k - 1
        records.append(rec)
    M = b.market()
    return M, GadgetTrace(R, num, records, b.formulas, b.labels)


def market_from_trace(trace: GadgetTrace) -> MarketInstance:
    return compile_market(trace.relations)[0]


def _is_exact(x):
    return isinstance(x, (int, Fraction))


def lift(trace: GadgetTrace, z, M: MarketInstance | None = None, mode="exact", eps=None) -> EquilibriumCertificate:
    """Equilibrium certificate (with p_s = 1) from a solution ``z`` of F."""
    R = trace.relations
    exact = mode == "exact"
    tol = 0 if exact else (eps if eps is not None else 1e-9)
    try:
        p = extend(R, z, ps=Fraction(1))
    except ZeroDivisionError as exc:
        raise LiftError(str(exc)) from None
    rep = eval_relations(R, p)
    bad = [k for k, res in enumerate(rep.residuals) if abs(res) > tol]
    if bad:
        raise LiftError(f"assignment violates relations {bad[:5]} (residual {max(abs(rep.residuals[k]) for k in bad)})")
    neg = [v for v in range(len(p)) if p[v] < -tol]
    if neg:
        names = [R.var_label(v) for v in neg[:5]]
        raise LiftError(f"bound/slack infeasible: negative values for {names}")
    for k, r in enumerate(R.relations):
        if r.kind == "QD" and p[r.c] > R.H + tol:
            raise LiftError(f"QD capacity exceeded in relation {k}: {p[r.c]} > H = {R.H}")
    if not exact:
        p = [max(x, 0.0) if not _is_exact(x) else x for x in p]
    if M is None:
        M = market_from_trace(trace)
    prices = trace.complete_prices(p)
    cert = EquilibriumCertificate(tuple(prices), tuple(demand_betas(M, prices)), S)
    report = verify_equilibrium(M, cert, mode=mode, eps=eps)
    if not report.ok:
        raise LiftError(f"lifted certificate fails verification: {[v.to_obj() for v in report.violations[:3]]}")
    return cert


def project(
    trace: GadgetTrace,
    cert: EquilibriumCertificate,
    M: MarketInstance | None = None,
    F: PolynomialSystem | None = None,
    mode="exact",
    eps=None,
) -> list:
    """Solution z_j = p_j / p_s of F from a verified certificate."""
    if M is None:
        M = market_from_trace(trace)
    report = verify_equilibrium(M, cert, mode=mode, eps=eps)
    if not report.ok:
        raise InvalidCertificateError(
            f"certificate fails verification: {[v.to_obj() for v in report.violations[:3]]}"
        )
    ps = cert.p[S]
    if ps == 0 or (mode != "exact" and ps <= (eps or 0)):
        raise InvalidCertificateError("numeraire price is zero")
    R = trace.relations
    p = [x / ps for x in cert.p[: R.N + 1]]
    tol = 0 if mode == "exact" else (eps if eps is not None else 1e-9)
    rel = eval_relations(R, p)
    if any(abs(x) > tol * max(1, abs(ps)) * 100 for x in rel.residuals):
        raise InvalidCertificateError("projected prices do not satisfy the relation system")
    z = p[1 : R.original_n + 1]
    if F is not None:
        res = residual(F, z)
        if mode == "exact" and not res.is_solution:
            raise InvalidCertificateError("projection is not a solution of F")
    return z


@dataclass(frozen=True)
class AuditEntry:
    path: str
    kind: str
    imbalances: tuple  # (good, consumption - endowment) for nonzero rows

    @property
    def ok(self):
        return not self.imbalances


@dataclass(frozen=True)
class AuditReport:
    entries: tuple

    @property
    def ok(self):
        return all(e.ok for e in self.entries)

    def failures(self):
        return [e for e in self.entries if not e.ok]

    def to_obj(self):
        return {
            "ok": self.ok,
            "gadgets": len(self.entries),
            "failures": [
                {"path": e.path, "kind": e.kind, "imbalances": [[g, str(x)] for g, x in e.imbalances]}
                for e in self.failures()
            ],
        }


def _net(M, agents, beta):
    net: dict = {}
    for i in agents:
        ag = M.agents[i]
        for j, a in ag.A.items():
            net[j] = net.get(j, 0) + beta[i] * a
        for j, w in ag.W.items():
            net[j] = net.get(j, 0) - w
    return net


def audit_closed(trace: GadgetTrace, M: MarketInstance, cert: EquilibriumCertificate, eps=0) -> AuditReport:
    """Net consumption of every gadget's agent set, good by good.

    Top-level gadgets are checked with their nested side gadgets included;
    the nested EQ/LIN gadgets are also checked on their own.
    """
    entries = []
    for rec in trace.all_records():
        net = _net(M, rec.all_agents(), cert.beta)
        bad = tuple(sorted((j, x) for j, x in net.items() if abs(x) > eps))
        entries.append(AuditEntry(rec.path, rec.kind, bad))
    return AuditReport(tuple(entries))


def check_exclusivity(trace: GadgetTrace, M: MarketInstance) -> list:
    """(good, agent) pairs where an exclusive good leaks outside its gadget."""
    leaks = []
    for rec in trace.all_records():
        owners = set(rec.all_agents())
        for gd in rec.exclusive:
            for i, ag in enumerate(M.agents):
                if i not in owners and (gd in ag.W or gd in ag.A):
                    leaks.append((gd, i))
    return leaks


def exclusive_goods(trace: GadgetTrace) -> set:
    return {g for rec in trace.all_records() for g in rec.exclusive}


# --------------------------------------------------------------------------
# standalone gadget markets (numeraire plus one gadget)


def gadget_market(relation: Relation, n_vars: int, H=None) -> tuple[MarketInstance, GadgetTrace]:
    """A market made of the numeraire agent and one gadget over ids 0..n_vars."""
    R = RelationSystem(
        N=n_vars, original_n=n_vars, relations=(relation,), numeraire=S, H=Fraction(H if H is not None else 1)
    )
    return compile_market(R)
