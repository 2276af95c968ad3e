"""Desk-scale numerical oracles used as independent ground truth.

None of these certify nonexistence: an empty answer only means nothing was
found within the configured resolution and caps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

import numpy as np

from .errors import CapExceededError, NotConvergedError
from .market import DenseMarket, MarketInstance
from .poly import PolynomialSystem


@dataclass(frozen=True)
class SearchConfig:
    resolution: int = 2  # pieces per split (poly) / simplex divisions (market)
    depth: int = 10  # refinement levels
    eps: float = 1e-9  # acceptance tolerance on residuals
    max_cells: int = 200_000
    max_iters: int = 100_000
    dedupe: float = 1e-6  # max-norm distance under which two answers coincide

    def __post_init__(self):
        if self.resolution < 2:
            raise ValueError("resolution must be at least 2")
        if not self.eps > 0:
            raise ValueError("eps must be positive")


# --------------------------------------------------------------------------
# polynomial systems: interval branch-and-prune with Newton polish

_PAD = 1e-12


class _Compiled:
    """Float form of a system: per polynomial a list of (coef, [(idx, exp)])."""

    def __init__(self, F: PolynomialSystem):
        self.n = F.n_vars
        self.polys = [
            [(float(m.coeff), [(v - 1, e) for v, e in m.exps]) for m in p.monomials] for p in F.polys
        ]
        self.lo = np.array([float(lo) for lo, _ in F.bounds])
        self.hi = np.array([float(hi) for _, hi in F.bounds])
        self.scale = max(1.0, max(abs(c) for poly in self.polys for c, _ in poly))

    def values(self, x):
        return np.array([sum(c * math.prod(x[i] ** e for i, e in ex) for c, ex in poly) for poly in self.polys])

    def jacobian(self, x):
        J = np.zeros((len(self.polys), self.n))
        for r, poly in enumerate(self.polys):
            for c, ex in poly:
                for k, (i, e) in enumerate(ex):
                    d = c * e * x[i] ** (e - 1)
                    for k2, (i2, e2) in enumerate(ex):
                        if k2 != k:
                            d *= x[i2] ** e2
                    J[r, i] += d
        return J


def _mono_range(c, ex, lo, hi):
    a = b = c
    for i, e in ex:
        a *= lo[i] ** e
        b *= hi[i] ** e
    return (a, b) if c >= 0 else (b, a)


def _contract(C: _Compiled, lo, hi):
    """Constraint propagation on a nonnegative box; returns None if empty."""
    for _ in range(8):
        changed = False
        for poly in C.polys:
            ranges = [_mono_range(c, ex, lo, hi) for c, ex in poly]
            tot_lo = sum(r[0] for r in ranges)
            tot_hi = sum(r[1] for r in ranges)
            tol = _PAD * C.scale * (1 + abs(tot_lo) + abs(tot_hi))
            if tot_lo > tol or tot_hi < -tol:
                return None
            for k, (c, ex) in enumerate(poly):
                if not ex:
                    continue
                olo = tot_lo - ranges[k][0]
                ohi = tot_hi - ranges[k][1]
                # c * mono in [-ohi, -olo]
                tlo, thi = (-ohi / c, -olo / c) if c > 0 else (-olo / c, -ohi / c)
                tlo -= tol / abs(c)
                thi += tol / abs(c)
                if thi < 0:
                    return None
                for i, e in ex:
                    rlo = rhi = 1.0
                    for i2, e2 in ex:
                        if i2 != i:
                            rlo *= lo[i2] ** e2
                            rhi *= hi[i2] ** e2
                    new_hi = hi[i]
                    new_lo = lo[i]
                    if rlo > 0:
                        new_hi = min(new_hi, (thi / rlo) ** (1.0 / e) * (1 + _PAD) + _PAD)
                    if tlo > 0:
                        if rhi <= 0:
                            return None
                        new_lo = max(new_lo, (tlo / rhi) ** (1.0 / e) * (1 - _PAD) - _PAD)
                    if new_lo > new_hi:
                        return None
                    if new_hi < hi[i] - 1e-3 * (hi[i] - lo[i]) or new_lo > lo[i] + 1e-3 * (hi[i] - lo[i]):
                        changed = True
                    lo[i], hi[i] = new_lo, new_hi
                # ranges of this monomial may have shrunk; recompute lazily next sweep
        if not changed:
            break
    return lo, hi


def newton_polish(C: _Compiled, x0, iters=60, lo=None, hi=None):
    """Gauss-Newton (least-squares steps) clipped to the box."""
    lo = C.lo if lo is None else lo
    hi = C.hi if hi is None else hi
    x = np.clip(np.array(x0, dtype=float), lo, hi)
    f = C.values(x)
    for _ in range(iters):
        if np.max(np.abs(f), initial=0) < 1e-15 * C.scale:
            break
        step = np.linalg.lstsq(C.jacobian(x), -f, rcond=None)[0]
        x_new = np.clip(x + step, lo, hi)
        f_new = C.values(x_new)
        if np.max(np.abs(f_new), initial=0) >= np.max(np.abs(f), initial=0):
            # damped retry before giving up
            x_new = np.clip(x + 0.5 * step, lo, hi)
            f_new = C.values(x_new)
            if np.max(np.abs(f_new), initial=0) >= np.max(np.abs(f), initial=0):
                break
        x, f = x_new, f_new
    return x, float(np.max(np.abs(f), initial=0))


def _dedupe(points, tol):
    out = []
    for p in points:
        if not any(np.max(np.abs(p - q)) <= tol for q in out):
            out.append(p)
    return out


def solve_poly_grid(F: PolynomialSystem, cfg: SearchConfig = SearchConfig()) -> list:
    """Approximate solutions of F inside its bounding box.

    Boxes are split ``resolution`` ways along their widest side (relative to
    the original box), pruned by interval bounds and constraint
    propagation, down to width (U - L) / resolution**depth.  Each surviving
    leaf is polished by Gauss-Newton from its midpoint; points whose max
    residual is <= eps are returned, deduplicated and sorted.
    """
    C = _Compiled(F)
    width0 = np.where(C.hi > C.lo, C.hi - C.lo, 1.0)
    leaf = width0 / cfg.resolution**cfg.depth
    stack = [(C.lo.copy(), C.hi.copy())]
    found = []
    cells = 0
    while stack:
        lo, hi = stack.pop()
        cells += 1
        if cells > cfg.max_cells:
            raise CapExceededError(f"cell cap {cfg.max_cells} reached")
        res = _contract(C, lo, hi)
        if res is None:
            continue
        lo, hi = res
        rel = (hi - lo) / width0
        k = int(np.argmax(rel))
        if hi[k] - lo[k] <= leaf[k]:
            x, r = newton_polish(C, (lo + hi) / 2)
            if r <= cfg.eps:
                found.append(x)
            continue
        edges = np.linspace(lo[k], hi[k], cfg.resolution + 1)
        for a, b in reversed(list(zip(edges[:-1], edges[1:]))):
            l2, h2 = lo.copy(), hi.copy()
            l2[k], h2[k] = a, b
            stack.append((l2, h2))
    pts = _dedupe(found, cfg.dedupe)
    return sorted((tuple(float(v) for v in p) for p in pts))


def poly_max_residual(F: PolynomialSystem, x) -> float:
    return float(np.max(np.abs(_Compiled(F).values(np.asarray(x, dtype=float))), initial=0))


def snap(x, max_den=1000) -> Fraction:
    return Fraction(x).limit_denominator(max_den)


# --------------------------------------------------------------------------
# markets


def clipped_excess_norm(dense: DenseMarket, P: np.ndarray) -> np.ndarray:
    """max_j of |Z_j| on priced goods and max(Z_j, 0) on free goods; inf if unbounded."""
    Z = dense.excess(P)
    E = np.where(P > 0, np.abs(Z), np.maximum(Z, 0))
    out = np.max(E, axis=1)
    return np.where(np.isnan(out), np.inf, out)


def simplex_grid(g: int, n: int) -> np.ndarray:
    """All price vectors with entries in {0, 1/n, ..., 1} summing to 1."""
    rows = []
    for bars in combinations(range(n + g - 1), g - 1):
        prev = -1
        row = []
        for b in bars:
            row.append(b - prev - 1)
            prev = b
        row.append(n + g - 2 - prev)
        rows.append(row)
    return np.array(rows, dtype=float) / n


def solve_market_grid(M: MarketInstance, cfg: SearchConfig = SearchConfig(resolution=16, depth=3, eps=1e-9)) -> list:
    """Price vectors on the simplex whose clipped excess demand is <= eps.

    A coarse simplex grid with ``resolution`` divisions is scored; the best
    points are refined ``depth`` times on local grids ten times finer.
    """
    dense = DenseMarket.of(M)
    g = M.g
    n_pts = math.comb(cfg.resolution + g - 1, g - 1)
    if n_pts > cfg.max_cells:
        raise CapExceededError(f"simplex grid needs {n_pts} cells (cap {cfg.max_cells})")
    P = simplex_grid(g, cfg.resolution)
    E = clipped_excess_norm(dense, P)
    hits = list(P[E <= cfg.eps])
    h = 1.0 / cfg.resolution
    frontier = P[np.argsort(E)[: max(1, 4 * g)]]
    frontier = frontier[np.isfinite(clipped_excess_norm(dense, frontier))]
    offsets = np.array(np.meshgrid(*[[-1, 0, 1]] * g)).reshape(g, -1).T
    cells = len(P)
    for _ in range(cfg.depth):
        h /= 10
        cand = (frontier[:, None, :] + h * offsets[None, :, :]).reshape(-1, g)
        cand = np.clip(cand, 0, None)
        sums = cand.sum(axis=1)
        cand = cand[sums > 0] / sums[sums > 0][:, None]
        cells += len(cand)
        if cells > cfg.max_cells:
            raise CapExceededError(f"cell cap {cfg.max_cells} reached")
        Ec = clipped_excess_norm(dense, cand)
        hits.extend(cand[Ec <= cfg.eps])
        order = np.argsort(Ec)[: max(1, 4 * g)]
        frontier = cand[order][np.isfinite(Ec[order])]
        if not len(frontier):
            break
    pts = _dedupe([np.asarray(p) for p in hits], cfg.dedupe)
    return sorted(tuple(float(v) for v in p) for p in pts)


def tatonnement(
    M: MarketInstance,
    step: float = 0.1,
    iters: int = 10_000,
    eps: float = 1e-9,
    p0=None,
    seed: int = 0,
    max_restarts: int = 20,
) -> np.ndarray:
    """p <- max(0, p + step * Z(p)), renormalized to the simplex each round."""
    dense = DenseMarket.of(M)
    rng = np.random.default_rng(seed)
    p = np.full(M.g, 1.0 / M.g) if p0 is None else np.asarray(p0, dtype=float)
    if np.any(p < 0) or not np.any(p > 0):
        raise ValueError("initial prices must be nonnegative and not all zero")
    p = p / p.sum()
    restarts = 0
    for _ in range(iters):
        Z = dense.excess(p[None, :])[0]
        if np.any(np.isnan(Z)):
            restarts += 1
            if restarts > max_restarts:
                break
            p = p + rng.uniform(0.01, 0.1, size=M.g) / M.g
            p = p / p.sum()
            continue
        norm = np.max(np.where(p > 0, np.abs(Z), np.maximum(Z, 0)))
        if norm <= eps:
            return p
        p = np.maximum(0.0, p + step * Z)
        if not np.any(p > 0):
            p = np.full(M.g, 1.0 / M.g)
        p = p / p.sum()
    raise NotConvergedError(f"no convergence within {iters} iterations", prices=p.tolist())
