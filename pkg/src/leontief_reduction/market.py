"""Leontief exchange markets: demand, excess demand, equilibrium checks.

Allocations are carried as per-agent utility levels ``beta``; the bundle of
agent i is ``beta_i * A_i``.  Endowment and coefficient vectors are stored
sparsely as ``{good: amount}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ParseError, UnboundedDemandError, ZeroNumeraireError
from .poly import format_rational, rational_size, to_rational

MARKET_SCHEMA = "leontief-reduction/market@1"
CERT_SCHEMA = "leontief-reduction/certificate@1"


@dataclass(frozen=True)
class Agent:
    W: dict
    A: dict
    label: str = field(default="", compare=False)

    def income(self, p):
        return sum(w * p[j] for j, w in self.W.items())

    def cost(self, p):
        return sum(a * p[j] for j, a in self.A.items())


@dataclass(frozen=True)
class MarketInstance:
    goods: tuple[str, ...]
    agents: tuple[Agent, ...]

    def __post_init__(self):
        if not self.goods:
            raise ValueError("a market needs at least one good")
        g = len(self.goods)
        for i, ag in enumerate(self.agents):
            for vec in (ag.W, ag.A):
                for j, x in vec.items():
                    if not 0 <= j < g:
                        raise ValueError(f"agent {i} references unknown good {j}")
                    if x < 0:
                        raise ValueError(f"agent {i} has a negative entry for good {j}")
            if not any(x > 0 for x in ag.W.values()):
                raise ValueError(f"agent {i} ({ag.label}) has an empty endowment")
            if not any(x > 0 for x in ag.A.values()):
                raise ValueError(f"agent {i} ({ag.label}) desires nothing")

    @property
    def g(self) -> int:
        return len(self.goods)

    def supply(self) -> list:
        s = [Fraction(0)] * self.g
        for ag in self.agents:
            for j, w in ag.W.items():
                s[j] += w
        return s

    def good_index(self, label: str) -> int:
        return self.goods.index(label)


@dataclass(frozen=True)
class EquilibriumCertificate:
    p: tuple
    beta: tuple
    numeraire: int | None = None

    def scaled(self, alpha) -> "EquilibriumCertificate":
        return EquilibriumCertificate(tuple(alpha * x for x in self.p), self.beta, self.numeraire)


# --------------------------------------------------------------------------
# demand


def leontief_demand(W, A, p):
    """Optimal utility level and bundle of a Leontief agent.

    ``W`` and ``A`` are ``{good: amount}`` maps (or dense sequences).
    Returns ``(beta, bundle)``; raises UnboundedDemandError when every
    desired good is free while the endowment is worth something.
    """
    W = _sparse(W)
    A = _sparse(A)
    income = sum(w * p[j] for j, w in W.items())
    cost = sum(a * p[j] for j, a in A.items())
    if cost == 0:
        if income == 0:
            return income * 0, {j: income * 0 for j in A}
        raise UnboundedDemandError("positive income but all desired goods are free")
    beta = income / cost
    return beta, {j: beta * a for j, a in A.items()}


def _sparse(v):
    if isinstance(v, dict):
        return v
    return {j: x for j, x in enumerate(v) if x}


def demand_betas(M: MarketInstance, p) -> list:
    out = []
    for i, ag in enumerate(M.agents):
        try:
            out.append(leontief_demand(ag.W, ag.A, p)[0])
        except UnboundedDemandError as exc:
            exc.agent = i
            raise
    return out


def excess_demand(M: MarketInstance, p) -> list:
    """Z_j = sum_i beta_i A_ij - sum_i W_ij at prices ``p``."""
    _check_prices(p)
    betas = demand_betas(M, p)
    return _excess(M, betas)


def _excess(M, betas):
    Z = [-s for s in M.supply()]
    for b, ag in zip(betas, M.agents):
        for j, a in ag.A.items():
            Z[j] += b * a
    return Z


def _check_prices(p):
    if any(x < 0 for x in p):
        raise ValueError("prices must be nonnegative")
    if not any(x > 0 for x in p):
        raise ValueError("prices must not all be zero")


def normalize(cert: EquilibriumCertificate, s: int) -> EquilibriumCertificate:
    ps = cert.p[s]
    if ps == 0:
        raise ZeroNumeraireError(f"numeraire good {s} has price zero")
    return EquilibriumCertificate(tuple(x / ps for x in cert.p), cert.beta, s)


# --------------------------------------------------------------------------
# verification


@dataclass(frozen=True)
class Violation:
    kind: str  # price | optimality | unbounded | budget | clearing | shape
    index: int
    magnitude: object

    def to_obj(self):
        mag = self.magnitude
        if isinstance(mag, Fraction):
            mag = format_rational(mag)
        elif mag is not None:
            mag = float(mag)
        return {"kind": self.kind, "index": self.index, "magnitude": mag}


@dataclass(frozen=True)
class VerifyReport:
    ok: bool
    budget_residuals: tuple
    optimal: tuple
    clearing_residuals: tuple  # supply - demand per good
    violations: tuple

    def to_obj(self):
        return {
            "ok": self.ok,
            "violations": [v.to_obj() for v in self.violations],
        }


def _num(x):
    if isinstance(x, (Fraction, int)):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(x)
    return to_rational(x)


def verify_equilibrium(M: MarketInstance, cert: EquilibriumCertificate, mode="exact", eps=None) -> VerifyReport:
    """Check optimality, budget and clearing of a (p, beta) certificate.

    ``mode="exact"`` demands rational equality; ``mode="tol"`` accepts
    residuals up to ``eps``.  In tolerance mode a good counts as priced
    (and must clear with equality) only when its price exceeds ``eps``.
    """
    if mode not in ("exact", "tol", "tolerance"):
        raise ValueError(f"unknown mode {mode!r}")
    exact = mode == "exact"
    tol = Fraction(0) if exact else _num(eps if eps is not None else 1e-9)
    viol = []
    if len(cert.p) != M.g or len(cert.beta) != len(M.agents):
        viol.append(Violation("shape", -1, None))
        return VerifyReport(False, (), (), (), tuple(viol))
    p = [_num(x) for x in cert.p]
    beta = [_num(x) for x in cert.beta]

    for j, x in enumerate(p):
        if x < 0:
            viol.append(Violation("price", j, x))
    if not any(x > 0 for x in p):
        viol.append(Violation("price", -1, Fraction(0)))
    for i, b in enumerate(beta):
        if b < 0:
            viol.append(Violation("beta", i, b))

    budget, optimal = [], []
    for i, (ag, b) in enumerate(zip(M.agents, beta)):
        income = ag.income(p)
        cost = ag.cost(p)
        br = b * cost - income
        budget.append(br)
        if abs(br) > tol:
            viol.append(Violation("budget", i, br))
        if cost == 0:
            if income > tol:
                viol.append(Violation("unbounded", i, income))
                optimal.append(False)
                continue
            star = Fraction(0)
        else:
            star = income / cost
        good = abs(b - star) <= tol
        optimal.append(good)
        if not good:
            viol.append(Violation("optimality", i, b - star))

    clearing = []
    for j, z in enumerate(_excess(M, beta)):
        clearing.append(-z)
        if z > tol:
            viol.append(Violation("clearing", j, z))
        elif p[j] > tol and abs(z) > tol:
            viol.append(Violation("clearing", j, z))

    return VerifyReport(not viol, tuple(budget), tuple(optimal), tuple(clearing), tuple(viol))


def certificate_from_prices(M: MarketInstance, p, numeraire=None) -> EquilibriumCertificate:
    """Attach demand-optimal betas to a price vector."""
    return EquilibriumCertificate(tuple(p), tuple(demand_betas(M, p)), numeraire)


# --------------------------------------------------------------------------
# batch screening


@dataclass(frozen=True)
class DenseMarket:
    W: np.ndarray  # agents x goods, float64
    A: np.ndarray
    supply: np.ndarray

    @classmethod
    def of(cls, M: MarketInstance) -> "DenseMarket":
        W = np.zeros((len(M.agents), M.g))
        A = np.zeros((len(M.agents), M.g))
        for i, ag in enumerate(M.agents):
            for j, w in ag.W.items():
                W[i, j] = float(w)
            for j, a in ag.A.items():
                A[i, j] = float(a)
        return cls(W, A, W.sum(axis=0))

    def excess(self, P: np.ndarray):
        """Excess demand for a batch of price rows; NaN rows are unbounded."""
        income = P @ self.W.T
        cost = P @ self.A.T
        with np.errstate(divide="ignore", invalid="ignore"):
            beta = np.where(cost > 0, income / np.where(cost > 0, cost, 1.0), 0.0)
        unbounded = ((cost <= 0) & (income > 0)).any(axis=1)
        Z = beta @ self.A - self.supply
        Z[unbounded] = np.nan
        return Z


def screen_prices(dense: DenseMarket, P: np.ndarray, thr=1e-8) -> np.ndarray:
    """Float pre-filter: False rows certainly fail exact verification.

    Sound whenever floating error stays below ``thr``, which holds for
    modest dyadic prices; surviving rows still need an exact check.
    """
    Z = dense.excess(P)
    bad = np.isnan(Z).any(axis=1)
    Zf = np.nan_to_num(Z)
    bad |= (Zf > thr).any(axis=1)
    bad |= ((P > 0) & (np.abs(Zf) > thr)).any(axis=1)
    bad |= (P < 0).any(axis=1)
    bad |= ~(P > 0).any(axis=1)
    return ~bad


# --------------------------------------------------------------------------
# size


def market_size(M: MarketInstance) -> int:
    """Bits to write the market as (good id, coefficient) lists per agent."""
    gid = max(1, M.g.bit_length())
    total = M.g + len(M.agents)
    for ag in M.agents:
        for vec in (ag.W, ag.A):
            total += sum(gid + rational_size(x) for x in vec.values() if x)
    return total


# --------------------------------------------------------------------------
# JSON


def market_to_obj(M: MarketInstance) -> dict:
    agents = []
    for ag in M.agents:
        W = [format_rational(ag.W.get(j, 0)) for j in range(M.g)]
        A = [format_rational(ag.A.get(j, 0)) for j in range(M.g)]
        d = {"W": W, "A": A}
        if ag.label:
            d["label"] = ag.label
        agents.append(d)
    return {"schema": MARKET_SCHEMA, "g": M.g, "goods": list(M.goods), "agents": agents}


def market_from_obj(obj) -> MarketInstance:
    schema = obj.get("schema")
    if schema is not None and schema != MARKET_SCHEMA:
        raise ParseError(f"unexpected schema {schema!r}")
    g = int(obj["g"])
    goods = tuple(obj.get("goods") or [f"G{j + 1}" for j in range(g)])
    if len(goods) != g:
        raise ParseError("goods list does not match g")
    agents = []
    for d in obj["agents"]:
        W = [to_rational(x) for x in d["W"]]
        A = [to_rational(x) for x in d["A"]]
        if len(W) != g or len(A) != g:
            raise ParseError("agent vector length does not match g")
        agents.append(Agent(_sparse(W), _sparse(A), d.get("label", "")))
    return MarketInstance(goods, tuple(agents))


def cert_to_obj(cert: EquilibriumCertificate) -> dict:
    def fmt(x):
        return format_rational(x) if isinstance(x, (Fraction, int)) else float(x)

    d = {"schema": CERT_SCHEMA, "p": [fmt(x) for x in cert.p], "beta": [fmt(x) for x in cert.beta]}
    if cert.numeraire is not None:
        d["numeraire"] = cert.numeraire
    return d


def cert_from_obj(obj) -> EquilibriumCertificate:
    schema = obj.get("schema")
    if schema is not None and schema != CERT_SCHEMA:
        raise ParseError(f"unexpected schema {schema!r}")

    def rd(x):
        return x if isinstance(x, float) else to_rational(x)

    return EquilibriumCertificate(
        tuple(rd(x) for x in obj["p"]), tuple(rd(x) for x in obj["beta"]), obj.get("numeraire")
    )


def serialize_market(M: MarketInstance) -> str:
    return json.dumps(market_to_obj(M), indent=1)


def parse_market(text: str) -> MarketInstance:
    try:
        return market_from_obj(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ParseError(f"syntax error: {exc.msg}", exc.lineno, exc.colno) from None
