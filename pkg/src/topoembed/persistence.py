"""Vietoris-Rips persistence diagrams with critical-edge attribution.

The filtration value of a simplex is its diameter (longest edge).  Ties are
broken by dimension, then lexicographically by sorted vertex tuple, which
keeps every face strictly before its cofaces in the simplexwise order.

Dimension 0 is paired by a union-find sweep over edges.  Dimension k >= 1
is paired by reducing that dimension's coboundary block: columns are the
k-simplices processed youngest-first, a column holds the cofacets of its
simplex, and the pivot is the column's earliest cofacet.  Columns known in
advance to reduce to zero (the death simplices of dimension k-1, "clearing")
are skipped.  This returns exactly the pairs of the standard boundary-matrix
reduction while never materialising columns for the top-dimensional
simplices, which is what makes H2 affordable.

Classes still alive at max_scale are dropped.  The default max_scale is the
enclosing radius min_i max_j d(i, j); beyond it the complex is a cone, so
nothing of positive dimension survives and the truncation is exact.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np

from .errors import InputFormatError
from .graph import FiltrationParams, WeightedGraph, graph_filtration_distances

Edge = tuple[int, int]


@dataclass(frozen=True)
class DiagramPoint:
    """One birth/death pair with the edges that created and filled it.

    birth_edge is None in dimension 0 (vertices are born at 0, not at an
    edge).  For dimension >= 1 both edges are critical: distances[birth_edge]
    equals birth and distances[death_edge] equals death, exactly.
    """

    dim: int
    birth: float
    death: float
    birth_edge: Edge | None
    death_edge: Edge

    @property
    def persistence(self) -> float:
        return self.death - self.birth


@dataclass(frozen=True)
class PersistenceDiagram:
    dim: int
    points: tuple[DiagramPoint, ...]

    def births_deaths(self) -> np.ndarray:
        """(k, 2) array of (birth, death) rows."""
        if not self.points:
            return np.zeros((0, 2))
        return np.array([(p.birth, p.death) for p in self.points])

    def total_persistence(self) -> float:
        return float(sum(p.persistence for p in self.points))


def enclosing_radius(distances: np.ndarray) -> float:
    """min_i max_j d(i, j); 0 for a single point."""
    if distances.shape[0] < 2:
        return 0.0
    return float(distances.max(axis=1).min())


def _validate_distances(d: np.ndarray) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError(f"distance matrix must be square, got shape {d.shape}")
    if not np.all(np.isfinite(d)):
        raise ValueError("distances must be finite")
    if not np.array_equal(d, d.T):
        raise ValueError("distance matrix must be symmetric")
    if np.any(np.diagonal(d) != 0):
        raise ValueError("distance matrix must have a zero diagonal")
    if np.any(d < 0):
        raise ValueError("distances must be nonnegative")
    return d


def _longest_edge(verts, d: np.ndarray) -> Edge:
    """Longest edge of a simplex; lexicographically smallest pair on ties."""
    best: Edge | None = None
    best_val = -1.0
    for a, b in combinations(sorted(int(v) for v in verts), 2):
        if d[a, b] > best_val:
            best_val = d[a, b]
            best = (a, b)
    assert best is not None
    return best


def _merge_pairs(n: int, iu, ju, vals) -> list[tuple[float, Edge]]:
    """Union-find sweep: the edges that merge components, in insertion order."""
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    out = []
    for e in np.lexsort((ju, iu, vals)):
        u, v = int(iu[e]), int(ju[e])
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
            out.append((float(vals[e]), (u, v)))
    return out


def _cofacet_arrays(d: np.ndarray, nbr: np.ndarray, verts, diam: float, n: int):
    """Packed ids and diameters of all cofacets of a simplex, vectorised.

    Returns (ids, diams) aligned arrays; ids encode the sorted vertex tuple
    in base n, so numeric order on ids equals lexicographic order.
    """
    mask = nbr[int(verts[0])] & nbr[int(verts[1])]
    for v in verts[2:]:
        mask = mask & nbr[int(v)]
    cand = np.flatnonzero(mask)
    if cand.size == 0:
        return cand.astype(np.int64), np.zeros(0)
    cd = np.maximum(d[int(verts[0]), cand], d[int(verts[1]), cand])
    for v in verts[2:]:
        np.maximum(cd, d[int(v), cand], out=cd)
    np.maximum(cd, diam, out=cd)
    n = np.int64(n)
    if len(verts) == 2:
        i, j = (np.int64(int(v)) for v in verts)
        ids = np.where(
            cand < i,
            (cand * n + i) * n + j,
            np.where(cand < j, (i * n + cand) * n + j, (i * n + j) * n + cand),
        )
    else:
        i, j, k = (np.int64(int(v)) for v in verts)
        base = ((i * n + j) * n + k) * n
        ids = np.where(
            cand < i,
            ((cand * n + i) * n + j) * n + k,
            np.where(
                cand < j,
                ((i * n + cand) * n + j) * n + k,
                np.where(cand < k, ((i * n + j) * n + cand) * n + k, base + cand),
            ),
        )
    return ids, cd


def _unpack(packed: int, width: int, n: int) -> tuple[int, ...]:
    out = []
    for _ in range(width):
        packed, v = divmod(packed, n)
        out.append(int(v))
    return tuple(reversed(out))


def _pack(verts, n: int) -> int:
    out = 0
    for v in verts:
        out = out * n + int(v)
    return out


def _diam_of(verts, d: np.ndarray) -> float:
    return max(float(d[a, b]) for a, b in combinations(verts, 2))


def _pack_insert(simps: np.ndarray, extra: np.ndarray, n: int) -> np.ndarray:
    """Packed id of each row of `simps` with `extra` inserted in sorted position."""
    n64 = np.int64(n)
    if simps.shape[1] == 2:
        i, j = simps[:, 0], simps[:, 1]
        return np.where(
            extra < i,
            (extra * n64 + i) * n64 + j,
            np.where(extra < j, (i * n64 + extra) * n64 + j, (i * n64 + j) * n64 + extra),
        )
    i, j, k = simps[:, 0], simps[:, 1], simps[:, 2]
    return np.where(
        extra < i,
        ((extra * n64 + i) * n64 + j) * n64 + k,
        np.where(
            extra < j,
            ((i * n64 + extra) * n64 + j) * n64 + k,
            np.where(
                extra < k,
                ((i * n64 + j) * n64 + extra) * n64 + k,
                ((i * n64 + j) * n64 + k) * n64 + extra,
            ),
        ),
    )


def _initial_pivots(d, nbr, simps, diams, n, chunk=4096):
    """Earliest cofacet of every simplex at once.

    Returns (packed id, diameter, added vertex) arrays; id -1 marks
    simplices with no cofacet below the scale.  Among cofacets of equal
    diameter the lexicographically smallest wins, which for a fixed simplex
    is the one adding the smallest vertex.  Chunked so the (chunk x n)
    broadcast temporaries stay small.
    """
    S = simps.shape[0]
    piv = np.full(S, -1, dtype=np.int64)
    pdm = np.zeros(S)
    pvv = np.full(S, -1, dtype=np.int64)
    cand = np.arange(n, dtype=np.int64)[None, :]
    for s0 in range(0, S, chunk):
        sl = slice(s0, min(s0 + chunk, S))
        vs = simps[sl]
        valid = nbr[vs[:, 0]] & nbr[vs[:, 1]]
        cd = np.maximum(d[vs[:, 0]], d[vs[:, 1]])
        for t in range(2, vs.shape[1]):
            valid &= nbr[vs[:, t]]
            np.maximum(cd, d[vs[:, t]], out=cd)
        np.maximum(cd, diams[sl][:, None], out=cd)
        cd = np.where(valid, cd, np.inf)
        mrow = cd.min(axis=1)
        has = np.isfinite(mrow)
        eq = (cd == mrow[:, None]) & valid
        v = np.where(eq, cand, n).min(axis=1)
        v[~has] = 0  # any in-range value; masked out below
        piv[sl] = np.where(has, _pack_insert(vs, v, n), -1)
        pdm[sl] = np.where(has, mrow, 0.0)
        pvv[sl] = np.where(has, v, -1)
    return piv, pdm, pvv


def _apparent_mask(d, simps, diams, piv_vertex, n, chunk=65536):
    """Columns whose simplex is the latest facet of its earliest cofacet.

    Such (simplex, cofacet) pairs are pairs of the reduction and need no
    bookkeeping: any later column whose pivot lands on that cofacet can
    reconstruct the owning column from the cofacet alone.
    """
    S = simps.shape[0]
    w = simps.shape[1]
    n64 = np.int64(n)
    out = np.zeros(S, dtype=bool)
    for s0 in range(0, S, chunk):
        sl = slice(s0, min(s0 + chunk, S))
        vs = simps[sl]
        v = piv_vertex[sl]
        ok = v >= 0
        dsig = diams[sl]
        if w == 2:
            idsig = vs[:, 0] * n64 + vs[:, 1]
        else:
            idsig = (vs[:, 0] * n64 + vs[:, 1]) * n64 + vs[:, 2]
        vsafe = np.where(ok, v, 0)
        for drop in range(w):
            kept = vs[:, [t for t in range(w) if t != drop]]
            if w == 2:
                a = kept[:, 0]
                dpsi = d[a, vsafe]
                idpsi = np.where(a < vsafe, a * n64 + vsafe, vsafe * n64 + a)
            else:
                a, b = kept[:, 0], kept[:, 1]
                dpsi = np.maximum(d[a, b], np.maximum(d[a, vsafe], d[b, vsafe]))
                idpsi = _pack_insert(kept, vsafe, n)
            ok &= (dpsi < dsig) | ((dpsi == dsig) & (idpsi < idsig))
        out[sl] = ok
    return out


def _reduce_block(d, nbr, simps, diams, cleared_ids, n, collect_deaths):
    """Pair the k-simplices in `simps` against their (k+1)-cofacets.

    Columns are processed youngest-first (largest (diameter, id)); the pivot
    of a column is its earliest surviving cofacet.  Pivot collisions are
    resolved by symmetric difference over Z/2, exactly as in boundary-matrix
    reduction.

    Apparent pairs (the bulk of all pairs) are extracted without touching
    per-column state: whenever a later column needs the owner of such a
    pivot, it recovers it as the pivot's latest facet.  Only the remaining
    columns run sequentially with an ownership table.

    Returns (pairs, death_ids): pairs are (column index, death diameter,
    death packed id) triples with strictly positive persistence, death_ids
    the packed ids of all paired cofacets (for clearing the next dimension,
    only if collect_deaths).  Columns that reduce to zero are unpaired
    (essential, dropped).
    """
    if simps.shape[0] == 0:
        return [], np.zeros(0, dtype=np.int64)
    n64 = np.int64(n)
    if simps.shape[1] == 2:
        col_ids = simps[:, 0] * n64 + simps[:, 1]
    else:
        col_ids = (simps[:, 0] * n64 + simps[:, 1]) * n64 + simps[:, 2]
    alive = ~np.isin(col_ids, cleared_ids) if cleared_ids.size else np.ones(
        simps.shape[0], dtype=bool
    )
    piv0, pdm0, pvv = _initial_pivots(d, nbr, simps, diams, n)
    apparent = _apparent_mask(d, simps, diams, pvv, n) & alive

    pairs = [
        (int(idx), float(pdm0[idx]), int(piv0[idx]))
        for idx in np.flatnonzero(apparent & (pdm0 > diams))
    ]
    death_parts = [piv0[apparent]] if collect_deaths else []

    # sequential pass over the columns that need actual reduction
    rest = np.flatnonzero(alive & ~apparent & (piv0 >= 0))
    order = rest[np.lexsort((col_ids[rest], diams[rest]))[::-1]]
    sorted_pos = np.argsort(col_ids)
    sorted_ids = col_ids[sorted_pos]
    width = simps.shape[1] + 1
    owner: dict[int, list] = {}
    memo: dict[int, float] = {}

    def column_of(sigma_idx: int) -> set:
        oids, ods = _cofacet_arrays(
            d, nbr, simps[sigma_idx], float(diams[sigma_idx]), n
        )
        memo.update(zip(oids.tolist(), ods.tolist()))
        return set(oids.tolist())

    def implicit_owner(pid: int) -> int:
        """Column index of the apparent pair owning cofacet pid, or -1."""
        verts = _unpack(pid, width, n)
        best = None
        for drop in range(width):
            psi = verts[:drop] + verts[drop + 1 :]
            key = (_diam_of(psi, d), _pack(psi, n))
            if best is None or key > best:
                best = key
        pos = int(np.searchsorted(sorted_ids, best[1]))
        if pos == sorted_ids.size or sorted_ids[pos] != best[1]:
            return -1
        idx = int(sorted_pos[pos])
        if apparent[idx] and int(piv0[idx]) == pid:
            return idx
        return -1

    for idx in order:
        idx = int(idx)
        cids, cds = _cofacet_arrays(d, nbr, simps[idx], float(diams[idx]), n)
        memo.update(zip(cids.tolist(), cds.tolist()))
        col = set(cids.tolist())
        # lazy min-heap over (diameter, id); the set is the source of truth,
        # stale heap entries are skipped at pop time
        heap = list(zip(cds.tolist(), cids.tolist()))
        heapq.heapify(heap)
        while True:
            pivot = None
            while heap:
                pdm, t = heap[0]
                if t in col:
                    pivot = t
                    break
                heapq.heappop(heap)
            if pivot is None:
                break
            ent = owner.get(pivot)
            if ent is None:
                oidx = implicit_owner(pivot)
                if oidx < 0:
                    owner[pivot] = [col, idx]
                    if pdm > diams[idx]:
                        pairs.append((idx, pdm, pivot))
                    if collect_deaths:
                        death_parts.append(np.array([pivot], dtype=np.int64))
                    break
                ent = owner[pivot] = [None, oidx]
            if ent[0] is None:
                ent[0] = column_of(ent[1])
            ocol = ent[0]
            col ^= ocol
            for t in ocol:
                if t in col:
                    heapq.heappush(heap, (memo[t], t))
    deaths = (
        np.concatenate(death_parts) if death_parts else np.zeros(0, dtype=np.int64)
    )
    return pairs, deaths


def rips_diagram(
    distances: np.ndarray, max_dim: int = 1, max_scale: float | None = None
) -> list[PersistenceDiagram]:
    """Persistence diagrams of the Rips filtration, dimensions 0..max_dim.

    Zero-persistence pairs and essential classes are omitted, so every point
    satisfies death > birth and all values are finite.
    """
    d = _validate_distances(distances)
    if max_dim not in (0, 1, 2):
        raise ValueError(f"max_dim must be 0, 1 or 2, got {max_dim}")
    n = d.shape[0]
    scale = enclosing_radius(d) if max_scale is None else float(max_scale)

    iu, ju = np.triu_indices(n, k=1)
    vals = d[iu, ju]
    keep = vals <= scale
    iu, ju, vals = iu[keep].astype(np.int64), ju[keep].astype(np.int64), vals[keep]

    points: list[list[DiagramPoint]] = [[] for _ in range(max_dim + 1)]
    merges = _merge_pairs(n, iu, ju, vals)
    for death, edge in merges:
        if death > 0.0:
            points[0].append(DiagramPoint(0, 0.0, death, None, edge))

    if max_dim >= 1:
        nbr = d <= scale
        np.fill_diagonal(nbr, False)
        n64 = np.int64(n)
        cleared = np.array(
            sorted(int(u) * n64 + int(v) for _, (u, v) in merges), dtype=np.int64
        )
        edges = np.column_stack([iu, ju])
        pairs1, deaths1 = _reduce_block(
            d, nbr, edges, vals, cleared, n, collect_deaths=max_dim >= 2
        )
        for idx, death, pid in pairs1:
            sigma = (int(edges[idx, 0]), int(edges[idx, 1]))
            tau = _unpack(pid, 3, n)
            points[1].append(
                DiagramPoint(1, float(vals[idx]), death, sigma, _longest_edge(tau, d))
            )

        if max_dim >= 2:
            tri_parts = []
            diam_parts = []
            for e in range(edges.shape[0]):
                i, j = int(edges[e, 0]), int(edges[e, 1])
                third = np.flatnonzero(nbr[i] & nbr[j])
                third = third[third > j].astype(np.int64)
                if third.size == 0:
                    continue
                td = np.maximum(d[i, third], d[j, third])
                np.maximum(td, vals[e], out=td)
                tri = np.empty((third.size, 3), dtype=np.int64)
                tri[:, 0] = i
                tri[:, 1] = j
                tri[:, 2] = third
                tri_parts.append(tri)
                diam_parts.append(td)
            if tri_parts:
                tris = np.concatenate(tri_parts)
                tdiams = np.concatenate(diam_parts)
                pairs2, _ = _reduce_block(
                    d, nbr, tris, tdiams, np.sort(deaths1), n, collect_deaths=False
                )
                for idx, death, pid in pairs2:
                    sigma = tuple(int(v) for v in tris[idx])
                    tau = _unpack(pid, 4, n)
                    points[2].append(
                        DiagramPoint(
                            2,
                            float(tdiams[idx]),
                            death,
                            _longest_edge(sigma, d),
                            _longest_edge(tau, d),
                        )
                    )

    for pts in points:
        pts.sort(key=lambda p: (p.birth, p.death, p.birth_edge or (-1, -1), p.death_edge))
    return [PersistenceDiagram(k, tuple(points[k])) for k in range(max_dim + 1)]


def diagram_of_graph(
    g: WeightedGraph, fp: FiltrationParams, max_dim: int = 1
) -> list[PersistenceDiagram]:
    """Diagrams of the graph's filtration distances 1/(w + gamma)**nu."""
    return rips_diagram(graph_filtration_distances(g, fp), max_dim)


def check_general_position(distances: np.ndarray):
    """Whether all off-diagonal distances are pairwise distinct.

    Returns (ok, duplicates) where duplicates lists pairs of vertex pairs
    ((i, j), (k, l)) realising the same distance.
    """
    d = np.asarray(distances, dtype=float)
    n = d.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    vals = d[iu, ju]
    order = np.lexsort((ju, iu, vals))
    sv = vals[order]
    dup_idx = np.flatnonzero(sv[1:] == sv[:-1])
    dups = [
        (
            (int(iu[order[t]]), int(ju[order[t]])),
            (int(iu[order[t + 1]]), int(ju[order[t + 1]])),
        )
        for t in dup_idx
    ]
    return len(dups) == 0, dups


_CSV_HEADER = "dim,birth,death,bi,bj,di,dj"


def write_diagrams(path, diagrams: list[PersistenceDiagram]) -> None:
    """One CSV row per point: dim,birth,death,bi,bj,di,dj (-1,-1 birth edge in dim 0)."""
    with open(path, "w") as fh:
        fh.write(_CSV_HEADER + "\n")
        for pd in diagrams:
            for p in pd.points:
                bi, bj = p.birth_edge if p.birth_edge is not None else (-1, -1)
                di, dj = p.death_edge
                fh.write(
                    f"{p.dim},{p.birth:.17g},{p.death:.17g},{bi},{bj},{di},{dj}\n"
                )


def read_diagrams(path) -> list[PersistenceDiagram]:
    """Inverse of write_diagrams; returns diagrams for dims 0..max dim seen."""
    path = Path(path)
    by_dim: dict[int, list[DiagramPoint]] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#") or line.startswith("dim"):
                continue
            parts = line.split(",")
            if len(parts) != 7:
                raise InputFormatError(f"{path}:{lineno}: expected 7 fields, got {line!r}")
            try:
                dim = int(parts[0])
                birth, death = float(parts[1]), float(parts[2])
                bi, bj, di, dj = (int(x) for x in parts[3:])
            except ValueError:
                raise InputFormatError(f"{path}:{lineno}: bad row {line!r}") from None
            birth_edge = None if bi < 0 else (bi, bj)
            if dim > 0 and birth_edge is None:
                raise InputFormatError(f"{path}:{lineno}: missing birth edge in dim {dim}")
            if death <= birth:
                raise InputFormatError(f"{path}:{lineno}: death must exceed birth")
            by_dim.setdefault(dim, []).append(
                DiagramPoint(dim, birth, death, birth_edge, (di, dj))
            )
    max_dim = max(by_dim, default=0)
    return [
        PersistenceDiagram(k, tuple(by_dim.get(k, ()))) for k in range(max_dim + 1)
    ]
