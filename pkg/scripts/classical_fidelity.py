"""Best fidelity with the BB84 assemblage reachable by local-hidden-state models.

Each candidate mixes the four deterministic response functions
``lambda = (a for x=0, a for x=1)`` with weights ``p`` and attaches a pure
qubit state in the x-z plane to each; its assemblage is scored by the dual
fidelity oracle. The maximum over the grid is the horizontal reference line
of the CHSH curve.

Usage::

    python scripts/classical_fidelity.py [--angles 8]
"""

from __future__ import annotations

import argparse
import itertools
import math

import numpy as np

from robust_selftest import qmat
from robust_selftest.scenarios import FidelityWeights, bb84_assemblage, fidelity_oracle_dual
from robust_selftest.scenarios.oracle import assemblage_weights

LAMBDAS = list(itertools.product((0, 1), repeat=2))
WEIGHTS = [np.full(4, 0.25), np.array([0.4, 0.1, 0.1, 0.4]), np.array([0.1, 0.4, 0.4, 0.1])]


def assemblage(p, thetas):
    sigma = np.zeros((2, 2, 2, 2), dtype=complex)  # [x, a]
    for pl, lam, t in zip(p, LAMBDAS, thetas):
        rho = (np.eye(2) + math.cos(t) * qmat.Z + math.sin(t) * qmat.X) / 2
        for x in range(2):
            sigma[x, lam[x]] += pl * rho
    return sigma


def score(sigma, ref) -> float:
    p = np.einsum("xaii->ax", sigma).real
    c = assemblage_weights(p, ref.p_ref)
    res = [sigma[x, a] for x in range(2) for a in range(2)]
    target = [ref.sigma_ref[x][a] for x in range(2) for a in range(2)]
    return fidelity_oracle_dual(res, target, FidelityWeights([c[a, x] for x in range(2) for a in range(2)]))


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--angles", type=int, default=8, help="grid points on the x-z great circle")
    args = ap.parse_args(argv)
    ref = bb84_assemblage()
    angles = [2 * math.pi * k / args.angles for k in range(args.angles)]
    cache: dict = {}
    best, arg = -math.inf, None
    for p in WEIGHTS:
        for thetas in itertools.product(angles, repeat=4):
            sigma = assemblage(p, thetas)
            key = np.round(sigma, 12).tobytes()
            if key not in cache:
                cache[key] = score(sigma, ref)
            if cache[key] > best:
                best, arg = cache[key], (p, thetas)
    n = len(WEIGHTS) * args.angles ** 4
    print(f"{n} candidates, {len(cache)} distinct assemblages")
    print(f"max fidelity {best:.6f}  (2 + sqrt 2)/4 = {(2 + math.sqrt(2)) / 4:.6f}")
    print(f"attained with p = {arg[0].tolist()}, angles/pi = {[round(t / math.pi, 3) for t in arg[1]]}")


if __name__ == "__main__":
    main()
