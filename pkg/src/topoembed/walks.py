"""Second-order biased random walks and empirical neighborhood distributions.

Each vertex v gets a probability vector T_v over vertices: the visit
frequencies of r walks of length l started at v (the start vertex itself is
not counted).  The transition out of (prev, curr) reweights the weight row
of curr by the usual return/in-out bias: factor 1/p to step back to prev,
1 to a common neighbour of prev and curr, 1/q otherwise.

r = INFINITE_WALKS short-circuits sampling: with walk length 1 the
frequencies converge to the normalised weight row, so that row is returned
directly and deterministically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import WeightedGraph

INFINITE_WALKS = math.inf


@dataclass(frozen=True)
class WalkConfig:
    l: int = 1
    r: float = INFINITE_WALKS
    p: float = 1.0
    q: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not (isinstance(self.l, int) and self.l >= 1):
            raise ValueError(f"walk length l must be an integer >= 1, got {self.l}")
        if self.r != INFINITE_WALKS and not (
            float(self.r).is_integer() and self.r >= 1
        ):
            raise ValueError(f"walk count r must be an integer >= 1 or infinite, got {self.r}")
        if not self.p > 0:
            raise ValueError(f"return parameter p must be positive, got {self.p}")
        if not self.q > 0:
            raise ValueError(f"in-out parameter q must be positive, got {self.q}")
        if not (isinstance(self.seed, int) and self.seed >= 0):
            raise ValueError(f"seed must be a nonnegative integer, got {self.seed}")


@dataclass(frozen=True)
class TrainingNeighborhoods:
    """One probability vector per vertex; zero rows for isolated vertices."""

    vectors: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"vectors must be square, got shape {v.shape}")
        object.__setattr__(self, "vectors", v)


def xi(prev: int, curr: int, nxt: int, g: WeightedGraph, cfg: WalkConfig) -> float:
    """Bias factor applied to the weight of edge (curr, nxt) after arriving from prev."""
    if g.weights[curr, nxt] == 0:
        return 0.0
    if nxt == prev:
        return 1.0 / cfg.p
    if g.weights[prev, nxt] > 0:
        return 1.0
    return 1.0 / cfg.q


def step_distribution(
    prev: int | None, curr: int, g: WeightedGraph, cfg: WalkConfig
) -> np.ndarray:
    """Transition distribution out of curr, given the walk arrived from prev.

    prev = None means this is the first step: plain normalised weights.
    All-zero rows (isolated vertex) come back as the zero vector.
    """
    w = g.weights[curr].copy()
    if prev is not None:
        bias = np.full(g.n, 1.0 / cfg.q)
        bias[np.nonzero(g.weights[prev])] = 1.0
        bias[prev] = 1.0 / cfg.p
        w *= bias
    total = w.sum()
    if total == 0:
        return w
    return w / total


def _walk_counts(v: int, g: WeightedGraph, cfg: WalkConfig, rng) -> np.ndarray:
    """Visit counts of cfg.r walks of length cfg.l from v, start not counted."""
    n = g.n
    counts = np.zeros(n)
    steps_taken = 0
    for _ in range(int(cfg.r)):
        prev: int | None = None
        curr = v
        for _ in range(cfg.l):
            probs = step_distribution(prev, curr, g, cfg)
            if probs.sum() == 0:
                break
            nxt = int(rng.choice(n, p=probs))
            counts[nxt] += 1
            steps_taken += 1
            prev, curr = curr, nxt
    if steps_taken:
        counts /= steps_taken
    return counts


def generate_neighborhoods(
    g: WeightedGraph,
    cfg: WalkConfig,
    epoch: int = 0,
    vertices=None,
) -> TrainingNeighborhoods:
    """Sample T_v for every requested vertex (all by default).

    Sampling is deterministic per (seed, vertex, epoch): each vertex draws
    from its own generator, so the distribution for one vertex does not
    depend on which other vertices were requested.

    With r = INFINITE_WALKS the rows are the normalised weight rows and the
    epoch is irrelevant.
    """
    n = g.n
    vectors = np.zeros((n, n))
    if vertices is None:
        vertices = range(n)
    if cfg.r == INFINITE_WALKS:
        totals = g.weights.sum(axis=1)
        for v in vertices:
            if totals[v] > 0:
                vectors[v] = g.weights[v] / totals[v]
        return TrainingNeighborhoods(vectors)
    for v in vertices:
        rng = np.random.default_rng((cfg.seed, int(v), int(epoch)))
        vectors[v] = _walk_counts(int(v), g, cfg, rng)
    return TrainingNeighborhoods(vectors)
