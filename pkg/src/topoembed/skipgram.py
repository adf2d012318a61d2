"""Skip-gram style embedding model and its cross-entropy loss.

Parameters are two dense matrices W1 (n x m) and W2 (m x n).  The embedding
of vertex v is row v of W1.  The model's neighbourhood prediction for v is
softmax(W1[v] @ W2), and the loss is the cross entropy between these
predictions and the walk-derived neighbourhood distributions, written in
the numerically safe form

    L0 = sum_v [ -T_v . u_v + logsumexp(u_v) ],   u_v = W1[v] @ W2,

summed over vertices whose T_v is not identically zero.  Both gradients
have closed forms in terms of C_v = softmax(u_v):

    dL0/dW1[v] = W2 @ (C_v - T_v)
    dL0/dW2    = W1^T @ (C - T)
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import InputFormatError
from .walks import TrainingNeighborhoods


@dataclass
class ModelParams:
    W1: np.ndarray
    W2: np.ndarray

    def __post_init__(self):
        self.W1 = np.asarray(self.W1, dtype=float)
        self.W2 = np.asarray(self.W2, dtype=float)
        if self.W1.ndim != 2 or self.W2.ndim != 2:
            raise ValueError("W1 and W2 must be matrices")
        n, m = self.W1.shape
        if self.W2.shape != (m, n):
            raise ValueError(
                f"shape mismatch: W1 is {self.W1.shape}, W2 must be {(m, n)}, "
                f"got {self.W2.shape}"
            )

    @property
    def n(self) -> int:
        return self.W1.shape[0]

    @property
    def m(self) -> int:
        return self.W1.shape[1]


def embedding(params: ModelParams) -> np.ndarray:
    """The embedded point cloud: rows of W1 (a view, not a copy)."""
    return params.W1


def init_params(n: int, m: int, seed: int) -> ModelParams:
    """Both matrices i.i.d. uniform on (-1, 1), deterministic per seed."""
    if n < 1 or m < 1:
        raise ValueError(f"need n >= 1 and m >= 1, got n={n}, m={m}")
    rng = np.random.default_rng(seed)
    return ModelParams(rng.uniform(-1.0, 1.0, (n, m)), rng.uniform(-1.0, 1.0, (m, n)))


def predict_neighborhood(v: int, params: ModelParams) -> np.ndarray:
    """softmax(W1[v] @ W2), computed with the usual max shift."""
    return softmax(params.W1[v] @ params.W2)


def _active_rows(T: TrainingNeighborhoods) -> np.ndarray:
    """Vertices with a nonzero neighbourhood distribution."""
    return T.vectors.sum(axis=1) > 0


def loss_L0(T: TrainingNeighborhoods, params: ModelParams, vertices=None) -> float:
    """Cross-entropy loss, optionally restricted to a subset of vertices.

    Vertices with all-zero T rows contribute exactly 0.
    """
    rows = _select_rows(T, params, vertices)
    if rows.size == 0:
        return 0.0
    U = params.W1[rows] @ params.W2
    Tv = T.vectors[rows]
    return float(np.sum(logsumexp(U, axis=1) - np.sum(Tv * U, axis=1)))


def grad_L0(
    T: TrainingNeighborhoods, params: ModelParams, vertices=None
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of loss_L0 w.r.t. (W1, W2), as full-size arrays.

    Restricting to a vertex subset zeroes the W1 gradient outside those rows
    and drops those vertices' terms from the W2 gradient; rows with zero T
    never contribute.
    """
    gW1 = np.zeros_like(params.W1)
    gW2 = np.zeros_like(params.W2)
    rows = _select_rows(T, params, vertices)
    if rows.size == 0:
        return gW1, gW2
    U = params.W1[rows] @ params.W2
    D = softmax(U, axis=1) - T.vectors[rows]
    gW1[rows] = D @ params.W2.T
    gW2[:] = params.W1[rows].T @ D
    return gW1, gW2


def _select_rows(T: TrainingNeighborhoods, params: ModelParams, vertices) -> np.ndarray:
    if T.vectors.shape[0] != params.n:
        raise ValueError(
            f"T has {T.vectors.shape[0]} rows but the model has {params.n} vertices"
        )
    active = _active_rows(T)
    if vertices is not None:
        mask = np.zeros(params.n, dtype=bool)
        mask[np.asarray(vertices, dtype=int)] = True
        active &= mask
    return np.flatnonzero(active)


def save_params(directory, params: ModelParams, epoch: int, seed: int) -> None:
    """Checkpoint: W1/W2 as CSV plus a JSON sidecar with shapes, epoch, seed."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    np.savetxt(directory / "W1.csv", params.W1, delimiter=",", fmt="%.17g")
    np.savetxt(directory / "W2.csv", params.W2, delimiter=",", fmt="%.17g")
    meta = {"n": params.n, "m": params.m, "epoch": epoch, "seed": seed}
    with open(directory / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_params(directory) -> tuple[ModelParams, dict]:
    directory = Path(directory)
    try:
        with open(directory / "meta.json") as fh:
            meta = json.load(fh)
        W1 = np.loadtxt(directory / "W1.csv", delimiter=",", ndmin=2)
        W2 = np.loadtxt(directory / "W2.csv", delimiter=",", ndmin=2)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        raise InputFormatError(f"bad checkpoint in {directory}: {exc}") from None
    params = ModelParams(W1, W2)
    if params.n != meta.get("n") or params.m != meta.get("m"):
        raise InputFormatError(
            f"checkpoint shape {(params.n, params.m)} disagrees with meta {meta}"
        )
    return params, meta
