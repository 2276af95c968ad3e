"""Exact multivariate polynomial systems over bounded nonnegative boxes.

Variables are identified by positive integers ``1..n``.  Id ``0`` is
reserved: downstream it denotes the numeraire price (or the constant 1
before homogenization), so polynomials built here never mention it unless
a caller does so on purpose.
"""

from __future__ import annotations

import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import BoundError, MissingVariableError, ParseError

SCHEMA = "leontief-reduction/polysys@1"


# --------------------------------------------------------------------------
# rationals


def to_rational(value) -> Fraction:
    """Coerce ints, Fractions and ``"num/den"`` strings to a Fraction.

    Floats are converted exactly (binary expansion), never rounded.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ParseError(f"not a rational: {value!r}")
    if isinstance(value, (int, float)):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except ZeroDivisionError:
            raise ParseError(f"zero denominator in {value!r}") from None
        except ValueError:
            raise ParseError(f"not a rational: {value!r}") from None
    raise ParseError(f"not a rational: {value!r}")


def format_rational(q: Fraction) -> str:
    q = Fraction(q)
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


def rational_size(q) -> int:
    """Bits of |numerator| plus bits of denominator, each at least 1."""
    q = Fraction(q)
    return max(1, abs(q.numerator).bit_length()) + max(1, q.denominator.bit_length())


# --------------------------------------------------------------------------
# monomials and polynomials


@dataclass(frozen=True)
class Monomial:
    coeff: Fraction
    exps: tuple[tuple[int, int], ...] = ()  # sorted (var, exponent > 0)

    @property
    def degree(self) -> int:
        return sum(e for _, e in self.exps)

    def variables(self):
        return tuple(v for v, _ in self.exps)

    def exponent(self, var: int) -> int:
        for v, e in self.exps:
            if v == var:
                return e
        return 0

    def factors(self) -> list[int]:
        """Variables with multiplicity, ascending: z1^2 z2 -> [1, 1, 2]."""
        out = []
        for v, e in self.exps:
            out.extend([v] * e)
        return out


def _canon_key(exps):
    deg = sum(e for _, e in exps)
    return (-deg, tuple((v, -e) for v, e in exps))


def _norm_exps(exps) -> tuple[tuple[int, int], ...]:
    if isinstance(exps, Mapping):
        items = exps.items()
    else:
        items = exps
    acc: dict[int, int] = {}
    for v, e in items:
        v, e = int(v), int(e)
        if e < 0:
            raise ParseError(f"negative exponent {e} on variable {v}")
        if v < 0:
            raise ParseError(f"negative variable id {v}")
        if e:
            acc[v] = acc.get(v, 0) + e
    return tuple(sorted(acc.items()))


@dataclass(frozen=True)
class Polynomial:
    """Canonical sum of monomials: merged, nonzero, degree-then-lex order."""

    monomials: tuple[Monomial, ...] = ()

    @classmethod
    def from_terms(cls, terms) -> "Polynomial":
        """Build from ``(coeff, exps)`` pairs; merges duplicates, drops zeros."""
        acc: dict[tuple, Fraction] = {}
        for coeff, exps in terms:
            key = _norm_exps(exps)
            acc[key] = acc.get(key, Fraction(0)) + to_rational(coeff)
        return cls._from_dict(acc)

    @classmethod
    def _from_dict(cls, acc) -> "Polynomial":
        keys = sorted((k for k, c in acc.items() if c != 0), key=_canon_key)
        return cls(tuple(Monomial(acc[k], k) for k in keys))

    @classmethod
    def const(cls, c) -> "Polynomial":
        return cls.from_terms([(c, ())])

    @classmethod
    def var(cls, v: int, coeff=1) -> "Polynomial":
        return cls.from_terms([(coeff, ((v, 1),))])

    def as_dict(self) -> dict:
        return {m.exps: m.coeff for m in self.monomials}

    @property
    def degree(self) -> int:
        return max((m.degree for m in self.monomials), default=0)

    def variables(self) -> set[int]:
        return {v for m in self.monomials for v, _ in m.exps}

    def is_zero(self) -> bool:
        return not self.monomials

    def __len__(self):
        return len(self.monomials)

    def __add__(self, other):
        other = _as_poly(other)
        acc = self.as_dict()
        for k, c in other.as_dict().items():
            acc[k] = acc.get(k, Fraction(0)) + c
        return Polynomial._from_dict(acc)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(tuple(Monomial(-m.coeff, m.exps) for m in self.monomials))

    def __sub__(self, other):
        return self + (-_as_poly(other))

    def __rsub__(self, other):
        return _as_poly(other) - self

    def __mul__(self, other):
        other = _as_poly(other)
        acc: dict[tuple, Fraction] = {}
        for m1 in self.monomials:
            for m2 in other.monomials:
                key = _norm_exps(m1.exps + m2.exps)
                acc[key] = acc.get(key, Fraction(0)) + m1.coeff * m2.coeff
        return Polynomial._from_dict(acc)

    __rmul__ = __mul__

    def __str__(self):
        if not self.monomials:
            return "0"
        parts = []
        for m in self.monomials:
            body = "*".join(f"z{v}" if e == 1 else f"z{v}^{e}" for v, e in m.exps)
            c = m.coeff
            if body:
                s = body if abs(c) == 1 else f"{format_rational(abs(c))}*{body}"
            else:
                s = format_rational(abs(c))
            parts.append(("- " if c < 0 else "+ ") + s)
        out = " ".join(parts)
        return out[2:] if out.startswith("+ ") else "-" + out[2:]


def _as_poly(x) -> Polynomial:
    if isinstance(x, Polynomial):
        return x
    return Polynomial.const(x)


# --------------------------------------------------------------------------
# systems


@dataclass(frozen=True)
class PolynomialSystem:
    """Equations ``f_i(z) = 0`` with box bounds ``L_j <= z_j <= U_j``."""

    n_vars: int
    polys: tuple[Polynomial, ...]
    bounds: tuple[tuple[Fraction, Fraction], ...]
    labels: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if len(self.bounds) != self.n_vars:
            raise BoundError(f"expected {self.n_vars} bound pairs, got {len(self.bounds)}")
        if not self.polys:
            raise ParseError("a system needs at least one polynomial")
        for j, (lo, hi) in enumerate(self.bounds, 1):
            if lo < 0 or hi < 0:
                raise BoundError(f"negative bound on z{j}")
            if lo > hi:
                raise BoundError(f"bound order violated on z{j}: {lo} > {hi}")
        for i, p in enumerate(self.polys, 1):
            for v in p.variables():
                if not 1 <= v <= self.n_vars:
                    raise ParseError(f"polynomial {i} uses unknown variable {v}")

    @property
    def m(self) -> int:
        return len(self.polys)

    def var_label(self, j: int) -> str:
        if self.labels and j <= len(self.labels):
            return self.labels[j - 1]
        return f"z{j}"


def make_system(polys, bounds, labels=()) -> PolynomialSystem:
    """Convenience constructor: ``polys`` are Polynomials or term lists."""
    ps = tuple(p if isinstance(p, Polynomial) else Polynomial.from_terms(p) for p in polys)
    bs = tuple((to_rational(lo), to_rational(hi)) for lo, hi in bounds)
    return PolynomialSystem(len(bs), ps, bs, tuple(labels))


# --------------------------------------------------------------------------
# evaluation


def _lookup(z, v: int):
    if isinstance(z, Mapping):
        if v not in z:
            raise MissingVariableError(f"assignment has no value for z{v}")
        return z[v]
    if isinstance(z, Sequence) or hasattr(z, "__getitem__"):
        if not 1 <= v <= len(z):
            raise MissingVariableError(f"assignment has no value for z{v}")
        return z[v - 1]
    raise TypeError(f"unsupported assignment type {type(z).__name__}")


def evaluate(p: Polynomial, z):
    """Value of ``p`` at ``z`` (mapping var->value, or sequence with z[j-1]).

    Exact when the inputs are Fractions/ints; floats work too.
    """
    total = 0
    for m in p.monomials:
        term = m.coeff
        for v, e in m.exps:
            term = term * _lookup(z, v) ** e
        total = total + term
    return total


@dataclass(frozen=True)
class Residual:
    values: tuple
    violations: tuple  # (var, "lower"|"upper", amount)

    @property
    def is_solution(self) -> bool:
        return not self.violations and all(v == 0 for v in self.values)

    def max_abs(self):
        return max((abs(v) for v in self.values), default=0)


def residual(F: PolynomialSystem, z) -> Residual:
    vals = tuple(evaluate(p, z) for p in F.polys)
    viol = []
    for j, (lo, hi) in enumerate(F.bounds, 1):
        x = _lookup(z, j)
        if x < lo:
            viol.append((j, "lower", lo - x))
        elif x > hi:
            viol.append((j, "upper", x - hi))
    return Residual(vals, tuple(viol))


# --------------------------------------------------------------------------
# size accounting


@dataclass(frozen=True)
class SizeReport:
    var_count: int
    relation_or_poly_count: int
    total_bit_size: int
    max_degree: int
    monomial_count_max: int
    U_max: Fraction


def monomial_size(m: Monomial, n_vars: int) -> int:
    # the tuple (alpha, d_1..d_n) carries one exponent field per variable
    return rational_size(m.coeff) + sum(max(1, m.exponent(j).bit_length()) for j in range(1, n_vars + 1))


def poly_size(p: Polynomial, n_vars: int) -> int:
    return sum(monomial_size(m, n_vars) for m in p.monomials)


def u_max(F: PolynomialSystem) -> Fraction:
    vals = [hi for _, hi in F.bounds]
    vals += [abs(m.coeff) for p in F.polys for m in p.monomials]
    return max(vals, default=Fraction(0))


def system_size(F: PolynomialSystem) -> SizeReport:
    total = F.m + F.n_vars
    total += sum(rational_size(lo) + rational_size(hi) for lo, hi in F.bounds)
    total += sum(p.degree + poly_size(p, F.n_vars) for p in F.polys)
    return SizeReport(
        var_count=F.n_vars,
        relation_or_poly_count=F.m,
        total_bit_size=total,
        max_degree=max(p.degree for p in F.polys),
        monomial_count_max=max(len(p) for p in F.polys),
        U_max=u_max(F),
    )


# --------------------------------------------------------------------------
# JSON


def poly_to_obj(p: Polynomial) -> list:
    return [{"c": format_rational(m.coeff), "e": {str(v): e for v, e in m.exps}} for m in p.monomials]


def poly_from_obj(obj) -> Polynomial:
    if not isinstance(obj, list):
        raise ParseError("polynomial must be a list of monomials")
    terms = []
    for mono in obj:
        if not isinstance(mono, dict) or "c" not in mono:
            raise ParseError(f"malformed monomial {mono!r}")
        exps = mono.get("e", {})
        if not isinstance(exps, dict):
            raise ParseError(f"malformed exponent map {exps!r}")
        try:
            exps = {int(k): int(v) for k, v in exps.items()}
        except (TypeError, ValueError):
            raise ParseError(f"malformed exponent map {exps!r}") from None
        terms.append((to_rational(mono["c"]), exps))
    return Polynomial.from_terms(terms)


def system_to_obj(F: PolynomialSystem) -> dict:
    obj = {
        "schema": SCHEMA,
        "vars": F.n_vars,
        "bounds": [[format_rational(lo), format_rational(hi)] for lo, hi in F.bounds],
        "polys": [poly_to_obj(p) for p in F.polys],
    }
    if F.labels:
        obj["labels"] = list(F.labels)
    return obj


def system_from_obj(obj) -> PolynomialSystem:
    if not isinstance(obj, dict):
        raise ParseError("system document must be a JSON object")
    schema = obj.get("schema")
    if schema is not None and schema != SCHEMA:
        raise ParseError(f"unexpected schema {schema!r}")
    for key in ("vars", "bounds", "polys"):
        if key not in obj:
            raise ParseError(f"missing key {key!r}")
    n = obj["vars"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 0:
        raise ParseError("'vars' must be a nonnegative integer")
    bounds = []
    for pair in obj["bounds"]:
        if not isinstance(pair, list) or len(pair) != 2:
            raise ParseError(f"malformed bound pair {pair!r}")
        bounds.append((to_rational(pair[0]), to_rational(pair[1])))
    polys = tuple(poly_from_obj(p) for p in obj["polys"])
    if len(bounds) != n:
        raise BoundError(f"expected {n} bound pairs, got {len(bounds)}")
    return PolynomialSystem(n, polys, tuple(bounds), tuple(obj.get("labels", ())))


def parse_system(text: str) -> PolynomialSystem:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"syntax error: {exc.msg}", exc.lineno, exc.colno) from None
    return system_from_obj(obj)


def serialize_system(F: PolynomialSystem) -> str:
    return json.dumps(system_to_obj(F), indent=1)
