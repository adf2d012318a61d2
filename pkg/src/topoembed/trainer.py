"""Joint gradient-descent loop over both losses, with minibatching.

Each epoch selects a vertex minibatch, computes the neighborhood
cross-entropy gradient restricted to the batch, the diagram-matching
gradient on the batch's embedded sub-cloud, and applies

    params <- params - eta * (lambda0 * grad_L0 + lambda1 * grad_L1).

Small minibatches matter beyond speed: the points realising a feature's
birth and death change from batch to batch, so the topological pull is
spread over the cloud instead of repeatedly distorting the same few
points.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import TrainingAbort
from .graph import WeightedGraph
from .persistence import diagram_of_graph
from .skipgram import ModelParams, grad_L0, init_params, loss_L0, save_params
from .topo import TopoLoss, TopoLossConfig
from .walks import (
    INFINITE_WALKS,
    TrainingNeighborhoods,
    WalkConfig,
    generate_neighborhoods,
)

# namespacing constant so the batch stream never collides with the
# per-vertex walk streams, which are keyed (seed, vertex, epoch)
_BATCH_STREAM = 7771


@dataclass(frozen=True)
class MinibatchSchedule:
    """Fraction of vertices trained on, per epoch.

    "constant" uses `start` throughout; "linear" ramps from `start` at
    epoch 0 to `end` at the final epoch of the budget.
    """

    kind: str = "constant"
    start: float = 1.0
    end: float | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "linear"):
            raise ValueError(f"schedule kind must be constant or linear, got {self.kind!r}")
        if not 0.0 < self.start <= 1.0:
            raise ValueError(f"start fraction must be in (0, 1], got {self.start}")
        if self.kind == "linear":
            if self.end is None or not 0.0 < self.end <= 1.0:
                raise ValueError(f"linear schedule needs end in (0, 1], got {self.end}")
        elif self.end is not None:
            raise ValueError("end is only meaningful for the linear schedule")

    def fraction(self, epoch: int, epochs: int) -> float:
        if self.kind == "constant":
            return self.start
        if epochs <= 1:
            return float(self.end)
        t = min(epoch / (epochs - 1), 1.0)
        return float(self.start + t * (self.end - self.start))


@dataclass(frozen=True)
class Convergence:
    """Stop when the mean combined loss of the window's recent half sits
    within rel_improvement (relatively) of the earlier half's mean."""

    window: int = 50
    rel_improvement: float = 1e-5

    def __post_init__(self):
        if self.window < 2:
            raise ValueError(f"window must be >= 2, got {self.window}")
        if self.rel_improvement < 0:
            raise ValueError("rel_improvement must be nonnegative")

    def satisfied(self, history: list[float]) -> bool:
        w = self.window
        if len(history) < w:
            return False
        half = w // 2
        first = float(np.mean(history[-w:-half]))
        second = float(np.mean(history[-half:]))
        return first - second <= self.rel_improvement * max(abs(first), 1e-12)


@dataclass(frozen=True)
class TrainConfig:
    m: int = 2
    eta: float = 0.05
    lambda0: float = 1.0
    lambda1: float = 0.0
    epochs: int = 500
    minibatch: MinibatchSchedule = field(default_factory=MinibatchSchedule)
    walk_cfg: WalkConfig = field(default_factory=WalkConfig)
    topo_cfg: TopoLossConfig | None = None
    seed: int = 0
    convergence: Convergence | None = field(default_factory=Convergence)
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"embedding dimension must be >= 1, got {self.m}")
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.lambda0 < 0 or self.lambda1 < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.lambda0 + self.lambda1 == 0:
            raise ValueError("at least one loss weight must be positive")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.lambda1 > 0 and self.topo_cfg is None:
            raise ValueError("lambda1 > 0 requires a topo_cfg")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")


@dataclass
class TrainState:
    params: ModelParams
    epoch: int = 0
    metrics: list = field(default_factory=list)


def minibatch_select(n: int, fraction: float, rng) -> np.ndarray:
    """Sorted uniform sample, without replacement, of ceil(fraction * n)."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    k = math.ceil(fraction * n)
    if k >= n:
        return np.arange(n)
    return np.sort(rng.choice(n, size=k, replace=False))


def epoch_batch(cfg: TrainConfig, n: int, epoch: int) -> np.ndarray:
    """The epoch's minibatch; deterministic per (seed, epoch)."""
    rng = np.random.default_rng((cfg.seed, _BATCH_STREAM, epoch))
    return minibatch_select(n, cfg.minibatch.fraction(epoch, cfg.epochs), rng)


def train_epoch(
    state: TrainState,
    g: WeightedGraph,
    T: TrainingNeighborhoods | None,
    cfg: TrainConfig,
    topo: TopoLoss | None = None,
    batch: np.ndarray | None = None,
) -> TrainState:
    """One update step; mutates state.params and appends a metrics record.

    topo carries the run's precomputed target diagrams and must be given
    when cfg.lambda1 > 0.  T may be None when cfg.lambda0 == 0.  batch
    defaults to this epoch's deterministic selection.
    """
    t0 = time.perf_counter()
    params = state.params
    if batch is None:
        batch = epoch_batch(cfg, params.n, state.epoch)
    gW1 = np.zeros_like(params.W1)
    gW2 = np.zeros_like(params.W2)
    l0 = l1 = 0.0
    warnings = 0

    if cfg.lambda0 > 0:
        if T is None:
            raise ValueError("lambda0 > 0 requires neighborhoods T")
        l0 = loss_L0(T, params, vertices=batch)
        g1, g2 = grad_L0(T, params, vertices=batch)
        gW1 += cfg.lambda0 * g1
        gW2 += cfg.lambda0 * g2

    if cfg.lambda1 > 0:
        if topo is None:
            raise ValueError("lambda1 > 0 requires a prepared TopoLoss")
        l1, gsub, warnings = topo.evaluate(params.W1[batch], want_grad=True)
        gW1[batch] += cfg.lambda1 * gsub

    if not (np.all(np.isfinite(gW1)) and np.all(np.isfinite(gW2))):
        raise TrainingAbort(
            f"non-finite gradient at epoch {state.epoch}; "
            "the learning rate is likely too high"
        )
    params.W1 -= cfg.eta * gW1
    params.W2 -= cfg.eta * gW2

    state.metrics.append(
        {
            "epoch": state.epoch,
            "L0": float(l0),
            "L1": float(l1),
            "combined": float(cfg.lambda0 * l0 + cfg.lambda1 * l1),
            "grad_norm_W1": float(np.linalg.norm(gW1)),
            "grad_norm_W2": float(np.linalg.norm(gW2)),
            "batch_size": int(len(batch)),
            "batch_fraction": float(len(batch) / params.n),
            "gp_warnings": int(warnings),
            "millis": round((time.perf_counter() - t0) * 1e3, 3),
        }
    )
    state.epoch += 1
    return state


def train(
    g: WeightedGraph,
    cfg: TrainConfig,
    checkpoint_dir=None,
    on_epoch=None,
) -> tuple[ModelParams, list[dict]]:
    """Run the loop until the epoch budget or convergence.

    Fully deterministic given the config.  Target diagrams are computed
    once up front; neighborhoods are regenerated per epoch for finite walk
    counts and fixed for the infinite-walk limit.  on_epoch, when given,
    receives each metrics record as it is produced.
    """
    n = g.n
    state = TrainState(init_params(n, cfg.m, cfg.seed))

    topo = None
    if cfg.lambda1 > 0:
        targets = diagram_of_graph(
            g, cfg.topo_cfg.filtration, max_dim=max(cfg.topo_cfg.dims)
        )
        topo = TopoLoss(targets, cfg.topo_cfg)

    T = None
    regenerate = cfg.lambda0 > 0 and cfg.walk_cfg.r != INFINITE_WALKS
    if cfg.lambda0 > 0 and not regenerate:
        T = generate_neighborhoods(g, cfg.walk_cfg)

    combined: list[float] = []
    for epoch in range(cfg.epochs):
        batch = epoch_batch(cfg, n, epoch)
        if regenerate:
            T = generate_neighborhoods(g, cfg.walk_cfg, epoch=epoch, vertices=batch)
        train_epoch(state, g, T, cfg, topo=topo, batch=batch)
        record = state.metrics[-1]
        if on_epoch is not None:
            on_epoch(record)
        if checkpoint_dir is not None and cfg.checkpoint_every:
            if (epoch + 1) % cfg.checkpoint_every == 0:
                out = Path(checkpoint_dir) / f"epoch_{epoch + 1:06d}"
                out.mkdir(parents=True, exist_ok=True)
                save_params(out, state.params, epoch + 1, cfg.seed)
        combined.append(record["combined"])
        if cfg.convergence is not None and cfg.convergence.satisfied(combined):
            break
    return state.params, state.metrics
