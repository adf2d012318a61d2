"""Weighted graphs, point clouds, file ingestion, and the weight/distance transforms.

Conventions: a graph lives on vertices 0..n-1 and is stored as a dense
symmetric nonnegative weight matrix with zero diagonal.  Weight 0 means
"no edge".  Larger weight means closer; the filtration transform
``1 / (w + gamma)**nu`` turns weights into edge insertion times for the
Rips machinery.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputFormatError


@dataclass(frozen=True)
class FiltrationParams:
    """Parameters of the weight-to-distance transform 1/(w + gamma)**nu."""

    nu: float = 1.0
    gamma: float = 1e-9

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")


@dataclass(frozen=True)
class WeightedGraph:
    """Undirected weighted graph as a dense symmetric matrix."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"weight matrix must be square, got shape {w.shape}")
        if not np.array_equal(w, w.T):
            raise ValueError("weight matrix must be symmetric")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if np.any(np.diagonal(w) != 0):
            raise ValueError("self-weights must be zero")
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def degree_weights(self) -> np.ndarray:
        """Row sums of the weight matrix."""
        return self.weights.sum(axis=1)


@dataclass(frozen=True)
class PointCloud:
    """n points in R^m, one per row."""

    points: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        if p.ndim != 2 or p.shape[1] < 1:
            raise ValueError(f"points must be a 2-d array, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValueError("points must be finite")
        object.__setattr__(self, "points", p)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def distance_matrix(self) -> np.ndarray:
        return pairwise_distances(self.points)


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix with an exactly zero diagonal."""
    p = np.asarray(points, dtype=float)
    sq = np.sum(p * p, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (p @ p.T)
    np.maximum(d2, 0.0, out=d2)
    d = np.sqrt(d2)
    # enforce exact symmetry; the quadratic expansion is not symmetric in floats
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    return d


def graph_filtration_distances(g: WeightedGraph, fp: FiltrationParams) -> np.ndarray:
    """Edge insertion times 1/(w + gamma)**nu, zero on the diagonal.

    Monotone decreasing in w: heavy edges appear early.  Zero-weight pairs
    get the finite ceiling 1/gamma**nu rather than infinity so downstream
    code never sees non-finite distances.
    """
    d = 1.0 / np.power(g.weights + fp.gamma, fp.nu)
    np.fill_diagonal(d, 0.0)
    return d


def pointcloud_to_graph(pc: PointCloud, fp: FiltrationParams) -> WeightedGraph:
    """Complete graph with reciprocal-distance weights.

    With nu = 1 and gamma small, graph_filtration_distances inverts this
    transform up to gamma, so Rips diagrams of the cloud and of the graph
    agree.  Duplicate points are rejected (weight would be infinite).

    fp fixes the convention the inverse transform uses; the weights
    themselves are plain reciprocals.
    """
    del fp
    d = pc.distance_matrix()
    off = ~np.eye(pc.n, dtype=bool)
    if np.any(d[off] == 0):
        i, j = np.argwhere((d == 0) & off)[0]
        raise InputFormatError(f"duplicate points {i} and {j} in point cloud")
    w = np.zeros_like(d)
    w[off] = 1.0 / d[off]
    return WeightedGraph(w)


def load_edge_list(path) -> WeightedGraph:
    """Read a whitespace-separated edge list: one ``u v w`` triple per line.

    Lines starting with '#' are comments.  An optional ``# n=<int>`` header
    fixes the vertex count; otherwise it is max vertex id + 1.  Edges are
    undirected: a second occurrence of a pair (in either order) must carry
    the same weight.
    """
    path = Path(path)
    n_declared = None
    triples = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("n="):
                    try:
                        n_declared = int(body[2:])
                    except ValueError:
                        raise InputFormatError(
                            f"{path}:{lineno}: bad vertex count header {line!r}"
                        ) from None
                continue
            parts = line.split()
            if len(parts) != 3:
                raise InputFormatError(
                    f"{path}:{lineno}: expected 'u v w', got {line!r}"
                )
            try:
                u, v = int(parts[0]), int(parts[1])
                w = float(parts[2])
            except ValueError:
                raise InputFormatError(
                    f"{path}:{lineno}: expected 'u v w', got {line!r}"
                ) from None
            if u < 0 or v < 0:
                raise InputFormatError(f"{path}:{lineno}: negative vertex id")
            if not np.isfinite(w) or w < 0:
                raise InputFormatError(f"{path}:{lineno}: weight must be finite and >= 0")
            if u == v and w > 0:
                raise InputFormatError(f"{path}:{lineno}: self-loop with positive weight")
            triples.append((lineno, u, v, w))

    n_seen = max((max(u, v) for _, u, v, _ in triples), default=-1) + 1
    n = n_declared if n_declared is not None else n_seen
    if n_declared is not None and n_seen > n_declared:
        raise InputFormatError(
            f"{path}: vertex id {n_seen - 1} exceeds declared n={n_declared}"
        )
    weights = np.zeros((n, n))
    seen: dict[tuple[int, int], tuple[int, float]] = {}
    for lineno, u, v, w in triples:
        key = (min(u, v), max(u, v))
        if key in seen:
            first_line, first_w = seen[key]
            if first_w != w:
                raise InputFormatError(
                    f"{path}:{lineno}: edge {key} already set to {first_w} "
                    f"at line {first_line}, conflicting value {w}"
                )
            continue
        seen[key] = (lineno, w)
        weights[u, v] = weights[v, u] = w
    return WeightedGraph(weights)


def save_edge_list(path, g: WeightedGraph) -> None:
    """Write nonzero edges as ``u v w`` with a ``# n=`` header."""
    iu, ju = np.triu_indices(g.n, k=1)
    mask = g.weights[iu, ju] > 0
    with open(path, "w") as fh:
        fh.write(f"# n={g.n}\n")
        for u, v in zip(iu[mask], ju[mask]):
            fh.write(f"{u}\t{v}\t{g.weights[u, v]:.17g}\n")


def load_weight_matrix(path) -> WeightedGraph:
    """Read a dense weight matrix from CSV (no header, comma-separated)."""
    path = Path(path)
    try:
        w = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise InputFormatError(f"{path}: {exc}") from None
    try:
        return WeightedGraph(w)
    except ValueError as exc:
        raise InputFormatError(f"{path}: {exc}") from None


def save_weight_matrix(path, g: WeightedGraph) -> None:
    np.savetxt(path, g.weights, delimiter=",", fmt="%.17g")


def load_point_cloud(path) -> PointCloud:
    """Read a point cloud from CSV, one point per row."""
    path = Path(path)
    try:
        p = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise InputFormatError(f"{path}: {exc}") from None
    try:
        return PointCloud(p)
    except ValueError as exc:
        raise InputFormatError(f"{path}: {exc}") from None


def save_point_cloud(path, pc: PointCloud) -> None:
    np.savetxt(path, pc.points, delimiter=",", fmt="%.17g")
