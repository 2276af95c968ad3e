"""Tabulate size[F], relation count K, size[R'(F)] = L and size[M] for random systems.

Usage: python scripts/size_scaling.py [--seed N] [--steps N]
"""

import argparse
import random
from fractions import Fraction

import numpy as np

from leontief_reduction import compile_market, reduce_system
from leontief_reduction.market import market_size
from leontief_reduction.poly import Polynomial, make_system, system_size
from leontief_reduction.reduce import relation_size


def random_system(rng, n_polys, n_terms, max_deg=3, n=4):
    polys = []
    for _ in range(n_polys):
        terms = []
        for _ in range(n_terms):
            exps = {}
            for _ in range(rng.randint(0, max_deg)):
                v = rng.randint(1, n)
                exps[v] = exps.get(v, 0) + 1
            terms.append((Fraction(rng.randint(-9, 9) or 1, rng.randint(1, 5)), exps))
        polys.append(Polynomial.from_terms(terms))
    return make_system(polys, [(0, Fraction(rng.randint(1, 4)))] * n)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--steps", type=int, default=12)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    rows = []
    print(f"{'size[F]':>8} {'K':>5} {'L':>7} {'goods':>6} {'agents':>7} {'size[M]':>9} {'M/(KL)':>7}")
    for scale in range(1, args.steps + 1):
        F = random_system(rng, 1 + scale // 2, scale)
        R = reduce_system(F)
        M, _ = compile_market(R)
        K, L, sm = len(R.relations), relation_size(R).total_bit_size, market_size(M)
        rows.append((K * L, sm))
        print(f"{system_size(F).total_bit_size:>8} {K:>5} {L:>7} {M.g:>6} {len(M.agents):>7} {sm:>9} {sm / (K * L):>7.3f}")
    kl, sm = np.log(np.array(rows, dtype=float)).T
    print(f"fitted exponent of size[M] against K*L: {np.polyfit(kl, sm, 1)[0]:.2f}")


if __name__ == "__main__":
    main()
