"""Brute-force oracles for the diagram transport costs.

exact_cost_enumerated: try every partial matching between two tiny diagrams
(each point either matches a point of the other diagram or its diagonal
projection) and return the cheapest total.  Exponential; fine for N, M <= 5.

entropic_cost_grid: minimise the entropic objective over plans directly by
iterated grid refinement on the N*M entries (N*M <= 4), respecting the
row/column sum caps.  Slow and crude on purpose: it shares no code path
with the solver under test.
"""

from itertools import permutations

import numpy as np
from scipy.special import xlogy


def _diag_cost(pt):
    return (pt[1] - pt[0]) ** 2 / 2.0


def exact_cost_enumerated(apts, bpts):
    apts = np.asarray(apts, dtype=float).reshape(-1, 2)
    bpts = np.asarray(bpts, dtype=float).reshape(-1, 2)
    N, M = len(apts), len(bpts)
    base = sum(_diag_cost(p) for p in apts) + sum(_diag_cost(q) for q in bpts)
    best = base
    # choose k matched alpha points, k matched beta points, and a bijection
    from itertools import combinations

    for k in range(1, min(N, M) + 1):
        for ai in combinations(range(N), k):
            for bi in combinations(range(M), k):
                for perm in permutations(bi):
                    cost = base
                    for i, j in zip(ai, perm):
                        cost += float(np.sum((apts[i] - bpts[j]) ** 2))
                        cost -= _diag_cost(apts[i]) + _diag_cost(bpts[j])
                    best = min(best, cost)
    return best


def entropic_objective(P, apts, bpts, eps):
    apts = np.asarray(apts, dtype=float).reshape(-1, 2)
    bpts = np.asarray(bpts, dtype=float).reshape(-1, 2)
    a = (apts[:, 1] - apts[:, 0]) ** 2 / 2.0
    b = (bpts[:, 1] - bpts[:, 0]) ** 2 / 2.0
    ra, rb = a.sum(), b.sum()
    diff = apts[:, None, :] - bpts[None, :, :]
    C = np.sum(diff * diff, axis=2)
    ref = np.outer(a, b)
    kl_a = float(np.sum(xlogy(P, P) - xlogy(P, ref / ra) - P)) + rb
    kl_b = float(np.sum(xlogy(P, P) - xlogy(P, ref / rb) - P)) + ra
    return (
        float(np.sum(C * P))
        + float(a @ (1 - P.sum(axis=1)))
        + float(b @ (1 - P.sum(axis=0)))
        + eps * 0.5 * (kl_a + kl_b)
    )


def entropic_cost_grid(apts, bpts, eps, rounds=60, grid=7):
    """Iterated grid refinement over the plan entries."""
    apts = np.asarray(apts, dtype=float).reshape(-1, 2)
    bpts = np.asarray(bpts, dtype=float).reshape(-1, 2)
    N, M = len(apts), len(bpts)
    assert 1 <= N * M <= 4

    center = np.full(N * M, 0.5)
    radius = 0.5
    best_val = np.inf
    best = center
    for _ in range(rounds):
        axes = [
            np.clip(np.linspace(c - radius, c + radius, grid), 0.0, 1.0)
            for c in center
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        flat = np.stack([m.ravel() for m in mesh], axis=1)
        for row in flat:
            P = row.reshape(N, M)
            if np.any(P.sum(axis=1) > 1 + 1e-12) or np.any(P.sum(axis=0) > 1 + 1e-12):
                continue
            v = entropic_objective(P, apts, bpts, eps)
            if v < best_val:
                best_val = v
                best = row.copy()
        center = best
        radius *= 0.55
    return best_val, best.reshape(N, M)
