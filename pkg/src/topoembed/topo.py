"""Topological loss on embeddings and its gradient through critical edges.

The loss compares the persistence diagrams of the embedded point cloud
against fixed target diagrams with the debiased entropic divergence, one
term per configured homology dimension.  Its gradient flows through the
diagram coordinates onto the at most four points spanning each feature's
birth and death edges: lengthening the birth edge delays the birth,
shortening the death edge hastens the death.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import FiltrationParams, PointCloud, pairwise_distances
from .persistence import (
    DiagramPoint,
    PersistenceDiagram,
    check_general_position,
    rips_diagram,
)
from .transport import PDPointSet, fg_entropic, grad_sfg, sfg


@dataclass(frozen=True)
class TopoLossConfig:
    """Parameters of the diagram-matching loss.

    epsilon None picks, per dimension, 1% of the target diagram's mean
    diagonal cost (death - birth)^2 / 2, so the blur tracks the scale of a
    typical feature; dimensions with an empty target fall back to 1e-2.
    Much smaller blurs sharpen the matching but stall the solver.
    dim_weights None means unit weight for every configured dimension.
    tol/max_iter default to training-grade accuracy; tighten for analysis.
    """

    epsilon: float | None = None
    dims: tuple[int, ...] = (1,)
    dim_weights: tuple[float, ...] | None = None
    filtration: FiltrationParams = field(default_factory=FiltrationParams)
    tol: float = 1e-4
    max_iter: int = 200_000

    def __post_init__(self):
        dims = tuple(int(k) for k in self.dims)
        object.__setattr__(self, "dims", dims)
        if not dims:
            raise ValueError("dims must be nonempty")
        if len(set(dims)) != len(dims) or not set(dims) <= {1, 2}:
            raise ValueError(f"dims must be distinct members of {{1, 2}}, got {dims}")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.dim_weights is not None:
            w = tuple(float(x) for x in self.dim_weights)
            object.__setattr__(self, "dim_weights", w)
            if len(w) != len(dims) or any(x < 0 for x in w):
                raise ValueError("dim_weights must be nonnegative, one per dim")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")

    @property
    def weights(self) -> tuple[float, ...]:
        return self.dim_weights or (1.0,) * len(self.dims)


@dataclass(frozen=True)
class PointGradient:
    """Loss gradient per embedding point, aligned with embedding rows.

    Rows of vertices incident to no critical edge are exactly zero.
    """

    grads: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grads, dtype=float)
        if g.ndim != 2:
            raise ValueError("grads must be an (n, m) array")
        if not np.all(np.isfinite(g)):
            raise ValueError("grads must be finite")
        object.__setattr__(self, "grads", g)


def _edge_unit(pts: np.ndarray, edge) -> np.ndarray | None:
    """(p_i - p_j)/|p_i - p_j|, or None when the endpoints coincide."""
    u = pts[edge[0]] - pts[edge[1]]
    nrm = float(np.sqrt(u @ u))
    if nrm == 0.0:
        return None
    return u / nrm


def rips_point_partial(
    x: DiagramPoint, pc: PointCloud
) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Partials of (birth, death) w.r.t. each point, as a sparse map.

    Only the endpoints of the critical edges appear: for the birth edge
    (i, j), d birth/d p_i is the unit vector from p_j to p_i and d birth/d
    p_j its negation; likewise for the death edge.  Dimension-0 points have
    no birth edge and contribute death partials only.
    """
    pts = pc.points
    m = pts.shape[1]
    out: dict[int, list[np.ndarray]] = {}

    def add(vertex: int, slot: int, vec: np.ndarray) -> None:
        pair = out.setdefault(int(vertex), [np.zeros(m), np.zeros(m)])
        pair[slot] = pair[slot] + vec

    for slot, edge in ((0, x.birth_edge), (1, x.death_edge)):
        if edge is None:
            continue
        u = _edge_unit(pts, edge)
        if u is None:
            raise ValueError(
                f"coincident endpoints on critical edge {edge}: "
                "the diagram map is not differentiable here"
            )
        add(edge[0], slot, u)
        add(edge[1], slot, -u)
    return {v: (db, dd) for v, (db, dd) in out.items()}


class TopoLoss:
    """The loss bound to fixed target diagrams, evaluated on point arrays.

    Target point sets, the per-dimension epsilon, and the targets'
    self-transport costs are computed once and reused across evaluations,
    which is what the training loop needs: the target never changes, the
    cloud does.
    """

    def __init__(self, target_diagrams: list[PersistenceDiagram], cfg: TopoLossConfig):
        self.cfg = cfg
        self.max_dim = max(cfg.dims)
        self.targets: list[PDPointSet] = []
        self.epsilons: list[float] = []
        for k in cfg.dims:
            pd = (
                target_diagrams[k]
                if k < len(target_diagrams)
                else PersistenceDiagram(k, ())
            )
            beta = PDPointSet.from_diagram(pd)
            self.targets.append(beta)
            if cfg.epsilon is not None:
                self.epsilons.append(cfg.epsilon)
            else:
                mean_cost = float(beta.diag_costs.mean()) if beta.n else 0.0
                self.epsilons.append(1e-2 * mean_cost if mean_cost > 0 else 1e-2)
        self._self_costs: list[float | None] = [None] * len(cfg.dims)

    def _beta_self(self, t: int) -> float:
        if self._self_costs[t] is None:
            beta = self.targets[t]
            cost, _, _ = fg_entropic(
                beta, beta, self.epsilons[t], self.cfg.tol, self.cfg.max_iter
            )
            self._self_costs[t] = cost
        return self._self_costs[t]

    def evaluate(self, pts: np.ndarray, want_grad: bool, entropic_correction=True):
        """(loss, gradient or None, general-position warning count)."""
        pts = np.asarray(pts, dtype=float)
        d = pairwise_distances(pts)
        ok, _ = check_general_position(d)
        warnings = 0 if ok else 1
        diagrams = rips_diagram(d, max_dim=self.max_dim)
        loss = 0.0
        grad = np.zeros_like(pts) if want_grad else None
        for t, (k, w) in enumerate(zip(self.cfg.dims, self.cfg.weights)):
            dgm = diagrams[k]
            alpha = PDPointSet.from_diagram(dgm)
            eps = self.epsilons[t]
            loss += w * sfg(
                alpha,
                self.targets[t],
                eps,
                self.cfg.tol,
                self.cfg.max_iter,
                beta_self_cost=self._beta_self(t),
            )
            if not want_grad or alpha.n == 0 or w == 0.0:
                continue
            zeta = grad_sfg(
                alpha,
                self.targets[t],
                eps,
                self.cfg.tol,
                self.cfg.max_iter,
                entropic_correction=entropic_correction,
            )
            for i, p in enumerate(dgm.points):
                for slot, edge in ((0, p.birth_edge), (1, p.death_edge)):
                    if edge is None:
                        continue
                    u = _edge_unit(pts, edge)
                    if u is None:
                        # repeated points collapsed a critical edge; the map
                        # is not differentiable there, skip and flag
                        warnings += 1
                        continue
                    coeff = w * float(zeta[i, slot])
                    grad[edge[0]] += coeff * u
                    grad[edge[1]] -= coeff * u
        return loss, grad, warnings


def loss_L1(g_target_pd: list[PersistenceDiagram], params, cfg: TopoLossConfig) -> float:
    """Sum over configured dims of the debiased divergence between the
    embedding's diagram and the target diagram."""
    from .skipgram import embedding

    value, _, _ = TopoLoss(g_target_pd, cfg).evaluate(embedding(params), want_grad=False)
    return value


def grad_L1(
    g_target_pd: list[PersistenceDiagram],
    params,
    cfg: TopoLossConfig,
    entropic_correction: bool = True,
) -> PointGradient:
    """Gradient of loss_L1 w.r.t. the embedding points (rows of W1).

    The gradient w.r.t. W2 is identically zero and not represented.
    entropic_correction=False drops the term accounting for the reference
    measure's dependence on the moving diagram; it exists only to show the
    term matters and must stay on in real use.
    """
    from .skipgram import embedding

    _, grad, _ = TopoLoss(g_target_pd, cfg).evaluate(
        embedding(params), want_grad=True, entropic_correction=entropic_correction
    )
    return PointGradient(grad)
