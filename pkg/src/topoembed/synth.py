"""Synthetic benchmark geometries and quantitative evaluation helpers.

The generators build the two reference shapes: a ring of small circles
whose cycles the plain embedding loses, and a regular grid over a torus.
Evaluation covers a persistence-based prominence count, an inscribed-
sphere profile that quantifies whether an embedded torus kept its tube,
and a diagram-matching report.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .graph import PointCloud, pairwise_distances
from .persistence import DiagramPoint, PersistenceDiagram
from .transport import PDPointSet, fg_exact, sfg

PROMINENCE_RATIO = 5.0


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for one synthetic cloud.

    counts and radii are interpreted per kind:
      eight_circles: counts = (circles, points per circle),
                     radii = (small circle radius, arrangement radius);
      torus:         counts = (major grid, minor grid),
                     radii = (tube radius, center-circle radius);
      circle:        counts = (1, points), radii = (_, radius).
    """

    kind: str
    counts: tuple[int, int]
    radii: tuple[float, float]
    jitter: float = 5e-3
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("eight_circles", "torus", "circle"):
            raise ValueError(f"unknown kind {self.kind!r}")
        if any(c < 1 for c in self.counts):
            raise ValueError(f"counts must be positive, got {self.counts}")
        if any(not r > 0 for r in self.radii):
            raise ValueError(f"radii must be positive, got {self.radii}")
        if self.jitter < 0:
            raise ValueError(f"jitter must be nonnegative, got {self.jitter}")


# radius 0.30 puts adjacent circles close enough that the gaps between them
# carry a tail of small cycles; the nine main cycles then clear the 5x-median
# prominence bar, which a cleaner diagram (e.g. radius 0.25, only ten points)
# cannot do because the median lands on the main cycles themselves
def eight_circles_spec(seed: int = 0, jitter: float = 5e-3) -> SyntheticSpec:
    return SyntheticSpec("eight_circles", (8, 16), (0.3, 1.0), jitter, seed)


# tube radius 0.4: the grid's short inter-ring cycles (persistence ~0.155)
# must stay below the 5x-median prominence bar so that exactly the two
# essential cycles clear it; thinner tubes (0.3, 0.35) push 30-odd of those
# mesh cycles over the bar
def torus_spec(seed: int = 0, jitter: float = 5e-3) -> SyntheticSpec:
    return SyntheticSpec("torus", (32, 16), (0.4, 1.0), jitter, seed)


def _jittered(pts: np.ndarray, spec: SyntheticSpec) -> PointCloud:
    rng = np.random.default_rng(spec.seed)
    return PointCloud(pts + rng.uniform(-spec.jitter, spec.jitter, size=pts.shape))


def gen_eight_circles(spec: SyntheticSpec) -> PointCloud:
    """Small circles centered evenly on a large circle, points even by angle."""
    if spec.kind != "eight_circles":
        raise ValueError(f"spec kind is {spec.kind!r}, not eight_circles")
    circles, per = spec.counts
    small, big = spec.radii
    centers = np.stack(
        [
            np.cos(2 * np.pi * np.arange(circles) / circles),
            np.sin(2 * np.pi * np.arange(circles) / circles),
        ],
        axis=1,
    ) * big
    th = 2 * np.pi * np.arange(per) / per
    ring = np.stack([np.cos(th), np.sin(th)], axis=1) * small
    return _jittered((centers[:, None, :] + ring[None, :, :]).reshape(-1, 2), spec)


def gen_torus(spec: SyntheticSpec) -> PointCloud:
    """A (major x minor) grid of angles mapped to the standard torus in R^3."""
    if spec.kind != "torus":
        raise ValueError(f"spec kind is {spec.kind!r}, not torus")
    r, R = spec.radii
    if r >= R:
        raise ValueError(f"tube radius must be below the center radius, got r={r} R={R}")
    nu, nv = spec.counts
    u = 2 * np.pi * np.arange(nu) / nu
    v = 2 * np.pi * np.arange(nv) / nv
    uu, vv = np.meshgrid(u, v, indexing="ij")
    pts = np.stack(
        [
            (R + r * np.cos(vv)) * np.cos(uu),
            (R + r * np.cos(vv)) * np.sin(uu),
            r * np.sin(vv),
        ],
        axis=-1,
    ).reshape(-1, 3)
    return _jittered(pts, spec)


def gen_circle(spec: SyntheticSpec) -> PointCloud:
    if spec.kind != "circle":
        raise ValueError(f"spec kind is {spec.kind!r}, not circle")
    per = spec.counts[1]
    radius = spec.radii[1]
    th = 2 * np.pi * np.arange(per) / per
    return _jittered(np.stack([np.cos(th), np.sin(th)], axis=1) * radius, spec)


def generate(spec: SyntheticSpec) -> PointCloud:
    return {
        "eight_circles": gen_eight_circles,
        "torus": gen_torus,
        "circle": gen_circle,
    }[spec.kind](spec)


def prominent_points(
    pd: PersistenceDiagram, ratio: float = PROMINENCE_RATIO
) -> list[DiagramPoint]:
    """Points whose persistence exceeds ratio x the diagram's median persistence."""
    if not pd.points:
        return []
    med = float(np.median([p.persistence for p in pd.points]))
    return [p for p in pd.points if p.persistence > ratio * med]


@dataclass(frozen=True)
class SphereProfile:
    """Largest-inscribed-sphere radii around the cloud, normalized by diameter."""

    angles: np.ndarray
    radii: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.angles, dtype=float)
        r = np.asarray(self.radii, dtype=float)
        if a.shape != r.shape or a.ndim != 1:
            raise ValueError("angles and radii must be aligned vectors")
        if np.any(r < 0):
            raise ValueError("radii must be nonnegative")
        object.__setattr__(self, "angles", a)
        object.__setattr__(self, "radii", r)

    def coefficient_of_variation(self) -> float:
        mean = float(self.radii.mean())
        if mean == 0.0:
            return float("inf")
        return float(self.radii.std() / mean)


def inscribed_sphere_profile(
    pc: PointCloud, K: int = 100, slab_width: float | None = None
) -> SphereProfile:
    """Tube-thickness diagnostic for torus-like clouds in R^3.

    For each of K evenly spaced angles about the z axis, takes the wedge of
    points whose azimuth lies within the slab (width measured as arc length
    at the cloud's mean ring radius), averages them to a center c, and
    records the largest sphere around c that touches no cloud point, i.e.
    radius min_p |p - c|.  Radii are normalized by the cloud's diameter.
    The default slab width is 5% of the diameter.  On a densely sampled
    torus with tube radius r and center radius R every wedge holds full
    tube cross sections, so c sits on the center ring and the profile is
    flat at r / (2 (R + r)).

    Slab membership must follow the azimuth, not the perpendicular offset
    to the half-plane: a fixed-thickness slab would pick up the inner rim
    of neighboring cross sections and drag c off the ring.
    """
    if pc.dim != 3:
        raise ValueError(f"profile needs points in R^3, got dimension {pc.dim}")
    if K < 4:
        raise ValueError(f"need at least 4 angles, got {K}")
    pts = pc.points - pc.points.mean(axis=0)
    diam = float(pairwise_distances(pts).max())
    if diam == 0.0:
        raise ValueError("cannot profile a single-location cloud")
    if slab_width is None:
        slab_width = 0.05 * diam
    ring = float(np.hypot(pts[:, 0], pts[:, 1]).mean())
    if ring == 0.0:
        raise ValueError("cloud is concentrated on the z axis; no ring to slice")
    half_angle = slab_width / 2.0 / ring
    azimuth = np.arctan2(pts[:, 1], pts[:, 0])
    angles = 2 * np.pi * np.arange(K) / K
    radii = np.zeros(K)
    for k, th in enumerate(angles):
        diff = np.abs((azimuth - th + np.pi) % (2 * np.pi) - np.pi)
        sel = diff <= half_angle
        if not np.any(sel):
            warnings.warn(f"empty slab at angle {th:.3f}; radius recorded as 0")
            continue
        c = pts[sel].mean(axis=0)
        radii[k] = float(np.sqrt(((pts - c) ** 2).sum(axis=1)).min())
    return SphereProfile(angles, radii / diam)


def write_profile(path, profile: SphereProfile) -> None:
    with open(path, "w") as fh:
        fh.write("angle,radius\n")
        for a, r in zip(profile.angles, profile.radii):
            fh.write(f"{a:.17g},{r:.17g}\n")


def diagram_match_report(
    emb_pd: PersistenceDiagram, target_pd: PersistenceDiagram, epsilon: float
) -> dict:
    """Exact and entropic diagram distances plus the optimal exact matching.

    pairs lists [i, j] for embedding point i matched to target point j;
    None on either side marks a match to the diagonal.
    """
    alpha = PDPointSet.from_diagram(emb_pd)
    beta = PDPointSet.from_diagram(target_pd)
    cost, plan = fg_exact(alpha, beta)
    pairs: list[list] = []
    matched_cols = set()
    for i in range(alpha.n):
        js = np.flatnonzero(plan.P[i] > 0.5)
        if js.size:
            pairs.append([i, int(js[0])])
            matched_cols.add(int(js[0]))
        else:
            pairs.append([i, None])
    pairs.extend([None, j] for j in range(beta.n) if j not in matched_cols)
    return {
        "dim": emb_pd.dim,
        "fg_exact": float(cost),
        "sfg": float(sfg(alpha, beta, epsilon)),
        "epsilon": float(epsilon),
        "pairs": pairs,
    }


def pca_projection(points: np.ndarray) -> np.ndarray:
    """(n, 3) view for plotting: two leading principal axes plus depth.

    Components beyond the cloud's rank (or ambient dimension) are zero.
    """
    pts = np.asarray(points, dtype=float)
    centered = pts - pts.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    out = np.zeros((pts.shape[0], 3))
    k = min(3, vt.shape[0])
    out[:, :k] = centered @ vt[:k].T
    return out
