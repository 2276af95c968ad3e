"""Complementarity formulation of Arrow-Debreu equilibrium for PLC markets.

Agents have piecewise-linear concave utilities
``U_i(x) = min_k (sum_j U^k_ij x_ij + T^k_i)`` and firms have polyhedral
production sets ``sum_j D^k_fj xs_fj <= sum_j C^k_fj xr_fj + T^k_f``.
``build_ncp`` lists every inequality/complementarity row over nonnegative
variables; ``export_etr`` writes the conjunction as an SMT-LIB sentence.

Consumption variables x_ij exist only for goods agent i values in some
piece; for the others the agent row forces x_ij = 0 anyway.
"""

from __future__ import annotations

import json
import math
import os
import subprocess
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import InvalidCertificateError, ParseError
from .market import EquilibriumCertificate, MarketInstance
from .poly import Polynomial, evaluate, format_rational, to_rational

PLC_SCHEMA = "leontief-reduction/plc-market@1"
CAND_SCHEMA = "leontief-reduction/ncp-candidate@1"
SOLVER_ENV = "LEONTIEF_SMT_SOLVER"


# --------------------------------------------------------------------------
# market data


@dataclass(frozen=True)
class UtilityPiece:
    U: dict  # good -> coefficient
    T: Fraction = Fraction(0)


@dataclass(frozen=True)
class PLCAgent:
    W: dict
    pieces: tuple
    shares: dict = field(default_factory=dict)  # firm -> Theta
    label: str = ""

    def valued_goods(self) -> list:
        return sorted({j for pc in self.pieces for j, u in pc.U.items() if u})


@dataclass(frozen=True)
class ProductionPiece:
    D: dict  # output good -> coefficient
    C: dict  # input good -> coefficient
    T: Fraction = Fraction(0)


@dataclass(frozen=True)
class PLCFirm:
    outputs: tuple  # S_f
    inputs: tuple  # R_f
    pieces: tuple
    label: str = ""


@dataclass(frozen=True)
class PLCMarket:
    goods: tuple
    agents: tuple
    firms: tuple = ()

    def __post_init__(self):
        g = len(self.goods)
        if g < 1:
            raise ValueError("a market needs at least one good")
        if not self.agents:
            raise ValueError("a market needs at least one agent")
        for i, ag in enumerate(self.agents):
            if not ag.pieces:
                raise ValueError(f"agent {i} has no utility pieces")
            if not any(pc.T == 0 for pc in ag.pieces):
                raise ValueError(f"agent {i}: at least one utility piece must have T = 0")
            for vec in [ag.W] + [pc.U for pc in ag.pieces]:
                if any(not 0 <= j < g or x < 0 for j, x in vec.items()):
                    raise ValueError(f"agent {i} has an invalid entry")
        for f, firm in enumerate(self.firms):
            if set(firm.outputs) & set(firm.inputs):
                raise ValueError(f"firm {f}: output and input sets overlap")
            if not any(pc.T == 0 for pc in firm.pieces):
                raise ValueError(f"firm {f}: at least one production piece must have T = 0")
            for pc in firm.pieces:
                if any(j not in firm.outputs for j in pc.D) or any(j not in firm.inputs for j in pc.C):
                    raise ValueError(f"firm {f}: piece uses goods outside its output/input sets")
            total = sum(ag.shares.get(f, 0) for ag in self.agents)
            if total != 1:
                raise ValueError(f"shares of firm {f} sum to {total}, not 1")

    @property
    def g(self):
        return len(self.goods)

    def supply(self):
        s = [Fraction(0)] * self.g
        for ag in self.agents:
            for j, w in ag.W.items():
                s[j] += w
        return s

    @classmethod
    def from_leontief(cls, M: MarketInstance) -> "PLCMarket":
        """min_j x_ij / A_ij as one linear piece per desired good."""
        agents = []
        for ag in M.agents:
            pieces = tuple(UtilityPiece({j: 1 / Fraction(a)}) for j, a in sorted(ag.A.items()) if a)
            agents.append(PLCAgent(dict(ag.W), pieces, {}, ag.label))
        return cls(tuple(M.goods), tuple(agents))


def leontief_firm(output: int, inputs: dict, label="") -> PLCFirm:
    """xs_output <= min_j xr_j / D_j as one piece per input good."""
    pieces = tuple(ProductionPiece({output: Fraction(1)}, {j: 1 / Fraction(d)}) for j, d in sorted(inputs.items()))
    return PLCFirm((output,), tuple(sorted(inputs)), pieces, label)


# --------------------------------------------------------------------------
# instance


@dataclass(frozen=True)
class NCPRow:
    family: str  # production | agent | budget | clearing | normalization
    label: str
    sense: str  # "<=" (expr <= 0) or "==" (expr == 0)
    expr: Polynomial


@dataclass(frozen=True)
class NCPInstance:
    var_names: tuple
    rows: tuple
    n_agents: int
    n_goods: int

    def var_id(self, name) -> int:
        return self.var_names.index(name) + 1

    def families(self):
        out = {}
        for r in self.rows:
            out.setdefault(r.family, []).append(r)
        return out


class _Vars:
    def __init__(self):
        self.names = []
        self.ids = {}

    def new(self, name):
        self.names.append(name)
        self.ids[name] = len(self.names)
        return self.ids[name]

    def __call__(self, name) -> Polynomial:
        return Polynomial.var(self.ids[name])


def _name_p(j):
    return f"p_{j}"


def build_ncp(P: PLCMarket) -> NCPInstance:
    V = _Vars()
    g = P.g
    for j in range(g):
        V.new(_name_p(j))
    valued = [ag.valued_goods() for ag in P.agents]
    for i, js in enumerate(valued):
        for j in js:
            V.new(f"x_{i}_{j}")
    for f, firm in enumerate(P.firms):
        for j in firm.outputs:
            V.new(f"xs_{f}_{j}")
        for j in firm.inputs:
            V.new(f"xr_{f}_{j}")
    for i in range(len(P.agents)):
        V.new(f"lam_{i}")
    for i, ag in enumerate(P.agents):
        for k in range(len(ag.pieces)):
            V.new(f"gam_{i}_{k}")
    for f, firm in enumerate(P.firms):
        for k in range(len(firm.pieces)):
            V.new(f"del_{f}_{k}")
    for i in range(len(P.agents)):
        V.new(f"u_{i}")
    for f in range(len(P.firms)):
        V.new(f"phi_{f}")

    rows = []

    def compl(family, label, slack: Polynomial, mult: Polynomial):
        # slack <= 0 and mult * slack == 0
        rows.append(NCPRow(family, label, "<=", slack))
        rows.append(NCPRow(family, label + ".c", "==", mult * slack))

    zero = Polynomial()
    for f, firm in enumerate(P.firms):
        for k, pc in enumerate(firm.pieces):
            e = zero
            for j, d in pc.D.items():
                e = e + d * V(f"xs_{f}_{j}")
            for j, c in pc.C.items():
                e = e - c * V(f"xr_{f}_{j}")
            e = e - pc.T
            compl("production", f"tech_{f}_{k}", e, V(f"del_{f}_{k}"))
        for j in firm.outputs:
            e = V(_name_p(j))
            for k, pc in enumerate(firm.pieces):
                e = e - pc.D.get(j, 0) * V(f"del_{f}_{k}")
            compl("production", f"out_{f}_{j}", e, V(f"xs_{f}_{j}"))
        for j in firm.inputs:
            e = -V(_name_p(j))
            for k, pc in enumerate(firm.pieces):
                e = e + pc.C.get(j, 0) * V(f"del_{f}_{k}")
            compl("production", f"in_{f}_{j}", e, V(f"xr_{f}_{j}"))

    for i, ag in enumerate(P.agents):
        for j in valued[i]:
            e = -(V(f"lam_{i}") * V(_name_p(j)))
            for k, pc in enumerate(ag.pieces):
                e = e + pc.U.get(j, 0) * V(f"gam_{i}_{k}")
            compl("agent", f"bang_{i}_{j}", e, V(f"x_{i}_{j}"))
        for k, pc in enumerate(ag.pieces):
            e = V(f"u_{i}") - pc.T
            for j, u in pc.U.items():
                if u:
                    e = e - u * V(f"x_{i}_{j}")
            compl("agent", f"piece_{i}_{k}", e, V(f"gam_{i}_{k}"))

    def income(i, ag):
        e = zero
        for j, w in ag.W.items():
            e = e + w * V(_name_p(j))
        for f, th in ag.shares.items():
            e = e + th * V(f"phi_{f}")
        return e

    for i, ag in enumerate(P.agents):
        e = zero
        for j in valued[i]:
            e = e + V(f"x_{i}_{j}") * V(_name_p(j))
        compl("budget", f"budget_{i}", e - income(i, ag), V(f"lam_{i}"))

    supply = P.supply()
    for j in range(g):
        e = zero - supply[j]
        for i, js in enumerate(valued):
            if j in js:
                e = e + V(f"x_{i}_{j}")
        for f, firm in enumerate(P.firms):
            if j in firm.inputs:
                e = e + V(f"xr_{f}_{j}")
            if j in firm.outputs:
                e = e - V(f"xs_{f}_{j}")
        compl("clearing", f"clear_{j}", e, V(_name_p(j)))

    for i, ag in enumerate(P.agents):
        e = zero - 1
        for k in range(len(ag.pieces)):
            e = e + V(f"gam_{i}_{k}")
        rows.append(NCPRow("normalization", f"gamma_sum_{i}", "==", e))
        e = V(f"u_{i}") - V(f"lam_{i}") * income(i, ag)
        for k, pc in enumerate(ag.pieces):
            e = e - pc.T * V(f"gam_{i}_{k}")
        rows.append(NCPRow("normalization", f"utility_{i}", "==", e))
    for f, firm in enumerate(P.firms):
        e = V(f"phi_{f}")
        for k, pc in enumerate(firm.pieces):
            e = e - pc.T * V(f"del_{f}_{k}")
        rows.append(NCPRow("normalization", f"profit_{f}", "==", e))
    e = zero - 1
    for j in range(g):
        e = e + V(_name_p(j))
    rows.append(NCPRow("normalization", "price_sum", "==", e))
    return NCPInstance(tuple(V.names), tuple(rows), len(P.agents), g)


# --------------------------------------------------------------------------
# candidates


@dataclass(frozen=True)
class NCPCandidate:
    """Values by variable name (p_j, x_i_j, xs_f_j, xr_f_j, lam_i, gam_i_k, del_f_k, u_i, phi_f)."""

    values: dict

    def get(self, name, default=0):
        return self.values.get(name, default)

    def assignment(self, inst: NCPInstance) -> dict:
        missing = [n for n in inst.var_names if n not in self.values]
        if missing:
            raise ValueError(f"candidate lacks values for {missing[:5]}")
        return {k + 1: self.values[n] for k, n in enumerate(inst.var_names)}

    def to_obj(self):
        def fmt(x):
            return format_rational(x) if isinstance(x, (int, Fraction)) else float(x)

        return {"schema": CAND_SCHEMA, "values": {k: fmt(v) for k, v in self.values.items()}}

    @classmethod
    def from_obj(cls, obj):
        schema = obj.get("schema")
        if schema is not None and schema != CAND_SCHEMA:
            raise ParseError(f"unexpected schema {schema!r}")
        return cls({k: (v if isinstance(v, float) else to_rational(v)) for k, v in obj["values"].items()})


@dataclass(frozen=True)
class NCPReport:
    ok: bool
    violations: tuple  # (label, value)

    def to_obj(self):
        return {"ok": self.ok, "violations": [[lab, str(v)] for lab, v in self.violations]}


def check_ncp(inst: NCPInstance, cand: NCPCandidate, mode="exact", eps=None) -> NCPReport:
    tol = 0 if mode == "exact" else (eps if eps is not None else 1e-9)
    if len(cand.values) != len(inst.var_names) or set(cand.values) != set(inst.var_names):
        raise ValueError("candidate dimensions do not match the instance")
    z = cand.assignment(inst)
    viol = []
    for name in inst.var_names:
        if cand.values[name] < -tol:
            viol.append((f"nonneg:{name}", cand.values[name]))
    for row in inst.rows:
        v = evaluate(row.expr, z)
        if row.sense == "<=" and v > tol:
            viol.append((row.label, v))
        elif row.sense == "==" and abs(v) > tol:
            viol.append((row.label, v))
    return NCPReport(not viol, tuple(viol))


def candidate_from_certificate(P: PLCMarket, cert: EquilibriumCertificate) -> NCPCandidate:
    """Explicit multipliers for a Leontief exchange equilibrium.

    Prices are rescaled to sum to one; x_ij = beta_i A_ij, u_i = beta_i,
    lambda_i = 1 / cost_i and gamma^j_i = lambda_i p_j A_ij.
    """
    if P.firms:
        raise ValueError("only exchange markets are supported")
    total = sum(cert.p)
    if total <= 0:
        raise InvalidCertificateError("prices sum to zero")
    p = [x / total for x in cert.p]
    vals = {_name_p(j): p[j] for j in range(P.g)}
    for i, (ag, beta) in enumerate(zip(P.agents, cert.beta)):
        A = {}
        for pc in ag.pieces:
            (j, u), = pc.U.items()
            A[j] = 1 / u
        cost = sum(a * p[j] for j, a in A.items())
        if cost == 0:
            raise InvalidCertificateError(f"agent {i} faces zero cost: no finite multiplier exists")
        lam = 1 / cost
        vals[f"lam_{i}"] = lam
        vals[f"u_{i}"] = beta
        for k, pc in enumerate(ag.pieces):
            (j, u), = pc.U.items()
            vals[f"gam_{i}_{k}"] = lam * p[j] * A[j]
        for j in ag.valued_goods():
            vals[f"x_{i}_{j}"] = beta * A[j]
    return NCPCandidate(vals)


def certificate_from_candidate(P: PLCMarket, cand: NCPCandidate, numeraire=None) -> EquilibriumCertificate:
    """(p, beta = u) read back from an NCP candidate of a Leontief exchange market."""
    p = tuple(cand.values[_name_p(j)] for j in range(P.g))
    beta = tuple(cand.values[f"u_{i}"] for i in range(len(P.agents)))
    return EquilibriumCertificate(p, beta, numeraire)


# --------------------------------------------------------------------------
# SMT-LIB export

_FAMILY_ORDER = ("production", "agent", "budget", "clearing", "normalization")


def _smt_num(c: int) -> str:
    return str(c) if c >= 0 else f"(- {-c})"


def _smt_poly(expr: Polynomial, names) -> str:
    den = math.lcm(*(m.coeff.denominator for m in expr.monomials)) if expr.monomials else 1
    terms = []
    for m in expr.monomials:
        c = int(m.coeff * den)
        factors = []
        for v, e in m.exps:
            factors.extend([names[v - 1]] * e)
        if not factors:
            terms.append(_smt_num(c))
        elif c == 1:
            terms.append(factors[0] if len(factors) == 1 else f"(* {' '.join(factors)})")
        else:
            terms.append(f"(* {_smt_num(c)} {' '.join(factors)})")
    if not terms:
        return "0"
    return terms[0] if len(terms) == 1 else f"(+ {' '.join(terms)})"


def _smt_row(row: NCPRow, names) -> str:
    op = "<=" if row.sense == "<=" else "="
    return f"({op} {_smt_poly(row.expr, names)} 0)"


def _conj(atoms) -> str:
    if not atoms:
        return "true"
    if len(atoms) == 1:
        return atoms[0]
    return "(and " + " ".join(atoms) + ")"


def export_etr(inst: NCPInstance) -> str:
    """Existence of an AD-NCP solution as an SMT-LIB (QF_NRA) document."""
    names = list(inst.var_names)
    lines = [
        "; existence of a market equilibrium (complementarity form)",
        "(set-logic QF_NRA)",
    ]
    lines += [f"(declare-const {n} Real)" for n in names]
    lines.append(f"(assert {_conj([f'(>= {n} 0)' for n in names])})")
    fams = inst.families()
    for fam in _FAMILY_ORDER:
        if fam in fams:
            lines.append(f"; {fam}")
            lines.append(f"(assert {_conj([_smt_row(r, names) for r in fams[fam]])})")
    lines.append("(check-sat)")
    return "\n".join(lines) + "\n"


_COMMANDS = {"set-logic", "set-info", "set-option", "declare-const", "declare-fun", "assert", "check-sat", "get-model", "exit"}
_OPS = {"+", "-", "*", "<=", ">=", "<", ">", "=", "and", "or", "not"}


def _tokens(text):
    out = []
    for line in text.splitlines():
        line = line.split(";", 1)[0]
        out.extend(line.replace("(", " ( ").replace(")", " ) ").split())
    return out


def _sexprs(tokens):
    stack = [[]]
    for t in tokens:
        if t == "(":
            stack.append([])
        elif t == ")":
            if len(stack) == 1:
                raise ParseError("unbalanced ')'")
            done = stack.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(t)
    if len(stack) != 1:
        raise ParseError("unbalanced '('")
    return stack[0]


def check_smtlib(text: str) -> list:
    """Grammar check for the exported fragment; returns a list of problems.

    Numerals must be integers (no decimals, no division), every symbol
    must be declared before use, and every assertion must be Boolean.
    """
    errors = []
    try:
        cmds = _sexprs(_tokens(text))
    except ParseError as exc:
        return [str(exc)]
    declared = set()
    saw_check = False

    def term(t, boolean):
        if isinstance(t, str):
            if t in ("true", "false"):
                if not boolean:
                    errors.append(f"Boolean literal {t} in arithmetic position")
                return
            if boolean:
                errors.append(f"atom {t} in Boolean position")
            if t.isdigit():
                return
            if t not in declared:
                errors.append(f"undeclared symbol {t}")
            return
        if not t or not isinstance(t[0], str) or t[0] not in _OPS:
            errors.append(f"bad operator in {t!r:.60}")
            return
        op, args = t[0], t[1:]
        if op in ("and", "or", "not"):
            if not boolean:
                errors.append(f"{op} in arithmetic position")
            for a in args:
                term(a, True)
        elif op in ("<=", ">=", "<", ">", "="):
            if not boolean:
                errors.append(f"{op} in arithmetic position")
            if len(args) != 2:
                errors.append(f"{op} needs two arguments")
            for a in args:
                term(a, False)
        else:
            if boolean:
                errors.append(f"{op} in Boolean position")
            if not args:
                errors.append(f"{op} without arguments")
            for a in args:
                term(a, False)

    for c in cmds:
        if not isinstance(c, list) or not c or c[0] not in _COMMANDS:
            errors.append(f"unknown command {c!r:.60}")
            continue
        head = c[0]
        if head == "declare-const":
            if len(c) != 3 or c[2] != "Real" or not isinstance(c[1], str):
                errors.append(f"bad declaration {c!r:.60}")
            elif c[1] in declared:
                errors.append(f"duplicate declaration {c[1]}")
            else:
                declared.add(c[1])
        elif head == "assert":
            if len(c) != 2:
                errors.append("assert takes one term")
            else:
                term(c[1], True)
        elif head == "check-sat":
            saw_check = True
    if not saw_check:
        errors.append("missing (check-sat)")
    return errors


def count_asserts(text: str) -> int:
    return sum(1 for c in _sexprs(_tokens(text)) if isinstance(c, list) and c and c[0] == "assert")


def run_solver(text: str, solver: str | None = None, timeout=60) -> str | None:
    """Pipe the document to an external solver; None when none is configured."""
    solver = solver or os.environ.get(SOLVER_ENV)
    if not solver:
        return None
    out = subprocess.run([solver, "-in"] if "z3" in os.path.basename(solver) else [solver],
                         input=text, capture_output=True, text=True, timeout=timeout)
    return out.stdout.strip().splitlines()[0] if out.stdout.strip() else "unknown"


# --------------------------------------------------------------------------
# JSON


def _dense(vec, g):
    return [format_rational(vec.get(j, 0)) for j in range(g)]


def _sparse(lst):
    return {j: to_rational(x) for j, x in enumerate(lst) if to_rational(x) != 0}


def plc_to_obj(P: PLCMarket) -> dict:
    g = P.g
    return {
        "schema": PLC_SCHEMA,
        "goods": list(P.goods),
        "agents": [
            {
                "W": _dense(ag.W, g),
                "pieces": [{"U": _dense(pc.U, g), "T": format_rational(pc.T)} for pc in ag.pieces],
                "shares": {str(f): format_rational(t) for f, t in ag.shares.items()},
                **({"label": ag.label} if ag.label else {}),
            }
            for ag in P.agents
        ],
        "firms": [
            {
                "outputs": list(f.outputs),
                "inputs": list(f.inputs),
                "pieces": [{"D": _dense(pc.D, g), "C": _dense(pc.C, g), "T": format_rational(pc.T)} for pc in f.pieces],
            }
            for f in P.firms
        ],
    }


def plc_from_obj(obj) -> PLCMarket:
    schema = obj.get("schema")
    if schema is not None and schema != PLC_SCHEMA:
        raise ParseError(f"unexpected schema {schema!r}")
    agents = tuple(
        PLCAgent(
            _sparse(a["W"]),
            tuple(UtilityPiece(_sparse(pc["U"]), to_rational(pc.get("T", 0))) for pc in a["pieces"]),
            {int(f): to_rational(t) for f, t in a.get("shares", {}).items()},
            a.get("label", ""),
        )
        for a in obj["agents"]
    )
    firms = tuple(
        PLCFirm(
            tuple(f["outputs"]),
            tuple(f["inputs"]),
            tuple(
                ProductionPiece(_sparse(pc["D"]), _sparse(pc["C"]), to_rational(pc.get("T", 0))) for pc in f["pieces"]
            ),
        )
        for f in obj.get("firms", [])
    )
    try:
        return PLCMarket(tuple(obj["goods"]), agents, firms)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def parse_plc(text: str) -> PLCMarket:
    try:
        return plc_from_obj(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ParseError(f"syntax error: {exc.msg}", exc.lineno, exc.colno) from None
