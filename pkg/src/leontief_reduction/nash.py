"""Three-player normal-form games as bounded polynomial systems.

Variable layout for a game with ``ns`` strategies per player (ids are
1-based, player p and strategy s are 0-based)::

    z[p][s]    -> 1 + p*ns + s
    beta[p][s] -> 1 + 3*ns + p*ns + s
    delta[p]   -> 1 + 6*ns + p

Equations come in the order: three simplex sums, 3*ns payoff-slack
identities pi_p(s, z_-p) + beta_ps - delta_p = 0, then 3*ns
complementarity products z_ps * beta_ps = 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from itertools import product

from .errors import ParseError
from .poly import Polynomial, PolynomialSystem, format_rational, rational_size, to_rational

GAME_SCHEMA = "leontief-reduction/game3@1"


@dataclass(frozen=True)
class Game3:
    ns: int
    A1: tuple
    A2: tuple
    A3: tuple

    def __post_init__(self):
        if self.ns < 1:
            raise ValueError("ns must be positive")
        for t in self.tensors:
            if len(t) != self.ns**3:
                raise ValueError(f"payoff tensor must have {self.ns ** 3} entries")

    @classmethod
    def from_lists(cls, ns, A1, A2, A3) -> "Game3":
        return cls(ns, *(tuple(to_rational(x) for x in t) for t in (A1, A2, A3)))

    @property
    def tensors(self):
        return (self.A1, self.A2, self.A3)

    def index(self, s1, s2, s3) -> int:
        return (s1 * self.ns + s2) * self.ns + s3

    def payoff(self, p, prof) -> Fraction:
        return self.tensors[p][self.index(*prof)]

    def is_normalized(self) -> bool:
        return all(0 <= x <= 1 for t in self.tensors for x in t)


def normalize_payoffs(G: Game3) -> Game3:
    """Per-player affine rescale of payoffs onto [0, 1]; constants map to 0."""
    out = []
    for t in G.tensors:
        lo, hi = min(t), max(t)
        if lo == hi:
            out.append(tuple(Fraction(0) for _ in t))
        else:
            out.append(tuple((Fraction(x) - lo) / (hi - lo) for x in t))
    return Game3(G.ns, *out)


# --------------------------------------------------------------------------
# variable ids


def z_id(ns, p, s):
    return 1 + p * ns + s


def beta_id(ns, p, s):
    return 1 + 3 * ns + p * ns + s


def delta_id(ns, p):
    return 1 + 6 * ns + p


def _others(p):
    return [q for q in range(3) if q != p]


def payoff_poly(G: Game3, p: int, s: int) -> Polynomial:
    """pi_p(s, z_-p) as an explicit bilinear polynomial in the other players' z."""
    q, r = _others(p)
    terms = []
    for sq, sr in product(range(G.ns), repeat=2):
        prof = [0, 0, 0]
        prof[p], prof[q], prof[r] = s, sq, sr
        c = G.payoff(p, prof)
        if c:
            terms.append((c, {z_id(G.ns, q, sq): 1, z_id(G.ns, r, sr): 1}))
    return Polynomial.from_terms(terms)


def encode_ne(G: Game3, z_upper=Fraction(1)) -> PolynomialSystem:
    """System whose solutions projected onto z are exactly the Nash equilibria."""
    if not G.is_normalized():
        raise ValueError("payoffs must lie in [0, 1]; call normalize_payoffs first")
    ns = G.ns
    polys = []
    for p in range(3):
        polys.append(Polynomial.from_terms([(1, {z_id(ns, p, s): 1}) for s in range(ns)] + [(-1, {})]))
    for p in range(3):
        for s in range(ns):
            polys.append(payoff_poly(G, p, s) + Polynomial.var(beta_id(ns, p, s)) - Polynomial.var(delta_id(ns, p)))
    for p in range(3):
        for s in range(ns):
            polys.append(Polynomial.from_terms([(1, {z_id(ns, p, s): 1, beta_id(ns, p, s): 1})]))
    one = Fraction(1)
    bounds = [(Fraction(0), Fraction(z_upper))] * (3 * ns) + [(Fraction(0), one)] * (3 * ns + 3)
    labels = (
        [f"z{p + 1}_{s + 1}" for p in range(3) for s in range(ns)]
        + [f"beta{p + 1}_{s + 1}" for p in range(3) for s in range(ns)]
        + [f"delta{p + 1}" for p in range(3)]
    )
    return PolynomialSystem(6 * ns + 3, tuple(polys), tuple(bounds), tuple(labels))


def encode_decision_ne(G: Game3) -> PolynomialSystem:
    """Same system with every strategy probability capped at 1/2."""
    return encode_ne(G, z_upper=Fraction(1, 2))


# --------------------------------------------------------------------------
# direct checks


def _profile(G: Game3, z):
    """Accept a flat list of 3*ns values or three per-player lists."""
    if len(z) == 3 and all(hasattr(x, "__len__") for x in z):
        rows = [list(x) for x in z]
    else:
        flat = list(z)
        if len(flat) < 3 * G.ns:
            raise ValueError(f"profile needs {3 * G.ns} entries, got {len(flat)}")
        rows = [flat[p * G.ns : (p + 1) * G.ns] for p in range(3)]
    if any(len(r) != G.ns for r in rows):
        raise ValueError("malformed profile")
    return rows


def payoffs_against(G: Game3, z, p: int) -> list:
    """pi_p(s, z_-p) for every pure strategy s of player p."""
    rows = _profile(G, z)
    q, r = _others(p)
    out = []
    for s in range(G.ns):
        tot = 0
        for sq, sr in product(range(G.ns), repeat=2):
            prof = [0, 0, 0]
            prof[p], prof[q], prof[r] = s, sq, sr
            tot = tot + G.payoff(p, prof) * rows[q][sq] * rows[r][sr]
        out.append(tot)
    return out


def verify_ne(G: Game3, z, eps=1e-9) -> bool:
    rows = _profile(G, z)
    for row in rows:
        if any(x < -eps for x in row) or abs(sum(row) - 1) > eps:
            return False
    for p in range(3):
        pis = payoffs_against(G, rows, p)
        delta = max(pis)
        for s in range(G.ns):
            if rows[p][s] > eps and abs(pis[s] - delta) > eps:
                return False
    return True


def ne_extension(G: Game3, z) -> list:
    """Full F_NE assignment (z, beta, delta) for a profile ``z``."""
    rows = _profile(G, z)
    betas, deltas = [], []
    for p in range(3):
        pis = payoffs_against(G, rows, p)
        d = max(pis)
        deltas.append(d)
        betas.extend(d - x for x in pis)
    return [x for row in rows for x in row] + betas + deltas


def project_ne(G: Game3, assignment) -> list:
    """Per-player strategy rows from an F_NE assignment (sequence over ids 1..)."""
    ns = G.ns
    return [[assignment[z_id(ns, p, s) - 1] for s in range(ns)] for p in range(3)]


def game_size(G: Game3) -> int:
    return 1 + sum(rational_size(x) for t in G.tensors for x in t)


# --------------------------------------------------------------------------
# JSON


def game_to_obj(G: Game3) -> dict:
    d = {"schema": GAME_SCHEMA, "ns": G.ns}
    for k, t in zip(("A1", "A2", "A3"), G.tensors):
        d[k] = [format_rational(x) for x in t]
    return d


def game_from_obj(obj) -> Game3:
    schema = obj.get("schema")
    if schema is not None and schema != GAME_SCHEMA:
        raise ParseError(f"unexpected schema {schema!r}")
    try:
        return Game3.from_lists(int(obj["ns"]), obj["A1"], obj["A2"], obj["A3"])
    except KeyError as exc:
        raise ParseError(f"missing key {exc.args[0]!r}") from None
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def parse_game(text: str) -> Game3:
    try:
        return game_from_obj(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ParseError(f"syntax error: {exc.msg}", exc.lineno, exc.colno) from None


def serialize_game(G: Game3) -> str:
    return json.dumps(game_to_obj(G), indent=1)
