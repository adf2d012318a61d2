"""Optimal-transport distances between persistence diagrams.

Diagrams are compared as point sets above the diagonal, with the diagonal
acting as a reservoir: any point may be matched to its orthogonal
projection instead of to a point of the other diagram.  The exact distance
fg_exact is the squared 2-Wasserstein cost of the best such partial
matching.  fg_entropic is its entropic relaxation: mass moves along a plan
P with row/column sums at most one (the remainder paying the
diagonal-projection cost), penalised by eps times the KL divergence of P
from the product reference a b^T / sqrt(pers(alpha) pers(beta)), plus the
constant eps/2 (sqrt pers(alpha) - sqrt pers(beta))^2.  Here a_i is half
the squared diagonal gap of point i, and pers() is the sum of those.

sfg symmetrises away the entropic bias:

    sfg(alpha, beta) = fg_eps(alpha, beta)
                       - fg_eps(alpha, alpha)/2 - fg_eps(beta, beta)/2.

The entropic solver is a capped Sinkhorn iteration in the log domain; its
dual potentials certify convergence through the primal-dual gap.  Near-tied
instances can creep sublinearly, so a stalled iteration hands its
potentials to a bound-constrained quasi-Newton finish on the concave dual;
the certificate is checked again afterwards.
grad_sfg differentiates sfg in the coordinates of the first diagram; the
plans enter through barycentric maps plus a small explicit eps-correction
for the dependence of the reference measure on the points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment, minimize
from scipy.special import xlogy

from .errors import ConvergenceError
from .persistence import PersistenceDiagram

# 1e-6 is comfortably below anything the losses need while staying above
# the ~1e-8 floor of the primal-dual certificate in double precision
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 5000


@dataclass(frozen=True)
class PDPointSet:
    """Finite off-diagonal part of a persistence diagram, as an (N, 2) array."""

    pts: np.ndarray
    pers: float = field(init=False)

    def __post_init__(self):
        p = np.asarray(self.pts, dtype=float).reshape(-1, 2)
        if p.size and not np.all(p[:, 1] > p[:, 0]):
            raise ValueError("diagram points must satisfy death > birth")
        if not np.all(np.isfinite(p)):
            raise ValueError("diagram points must be finite")
        object.__setattr__(self, "pts", p)
        object.__setattr__(self, "pers", float(np.sum(self.gaps**2) / 2.0))

    @classmethod
    def from_diagram(cls, pd: PersistenceDiagram) -> "PDPointSet":
        return cls(pd.births_deaths())

    @property
    def n(self) -> int:
        return self.pts.shape[0]

    @property
    def gaps(self) -> np.ndarray:
        """death - birth, per point."""
        return self.pts[:, 1] - self.pts[:, 0]

    @property
    def diag_costs(self) -> np.ndarray:
        """Cost of sending each point to the diagonal: (death - birth)^2 / 2."""
        return self.gaps**2 / 2.0

    def diag_projections(self) -> np.ndarray:
        mid = self.pts.mean(axis=1)
        return np.column_stack([mid, mid])


def diag_proj(x) -> tuple[np.ndarray, float]:
    """Orthogonal projection of one point onto the diagonal, and its cost."""
    b, d = float(x[0]), float(x[1])
    m = (b + d) / 2.0
    return np.array([m, m]), (d - b) ** 2 / 2.0


@dataclass(frozen=True)
class TransportPlan:
    """Sub-coupling between two diagrams; slack is the mass left for the diagonal."""

    P: np.ndarray
    row_slack: np.ndarray = field(init=False)
    col_slack: np.ndarray = field(init=False)

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        if P.ndim != 2:
            raise ValueError("plan must be a matrix")
        if np.any(P < 0):
            raise ValueError("plan entries must be nonnegative")
        rs = 1.0 - P.sum(axis=1)
        cs = 1.0 - P.sum(axis=0)
        if P.size and (rs.min(initial=0.0) < -1e-9 or cs.min(initial=0.0) < -1e-9):
            raise ValueError("plan row/column sums must not exceed 1")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "row_slack", rs)
        object.__setattr__(self, "col_slack", cs)


def _lse(A: np.ndarray, axis: int) -> np.ndarray:
    """log sum exp along an axis; leaner than the scipy version for the
    small matrices hit thousands of times per solve."""
    m = A.max(axis=axis, keepdims=True)
    out = np.log(np.sum(np.exp(A - m), axis=axis))
    out += np.squeeze(m, axis=axis)
    return out


def _sq_dists(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - y[None, :, :]
    return np.sum(diff * diff, axis=2)


def fg_exact(alpha: PDPointSet, beta: PDPointSet) -> tuple[float, TransportPlan]:
    """Exact squared 2-Wasserstein matching cost with the diagonal reservoir.

    Solved as a square assignment problem of size N + M: each point of one
    diagram may match a point of the other or its own diagonal projection,
    and the (diagonal, diagonal) block is free.
    """
    N, M = alpha.n, beta.n
    if N == 0 and M == 0:
        return 0.0, TransportPlan(np.zeros((0, 0)))
    cross = _sq_dists(alpha.pts, beta.pts) if N and M else np.zeros((N, M))
    a = alpha.diag_costs
    b = beta.diag_costs
    big = 2.0 * (cross.sum() + a.sum() + b.sum()) + 1.0
    Q = np.full((N + M, N + M), big)
    Q[:N, :M] = cross
    Q[N:, M:] = 0.0
    Q[np.arange(N), M + np.arange(N)] = a
    Q[N + np.arange(M), np.arange(M)] = b
    rows, cols = linear_sum_assignment(Q)
    value = float(Q[rows, cols].sum())
    P = np.zeros((N, M))
    for i, j in zip(rows, cols):
        if i < N and j < M:
            P[i, j] = 1.0
    return value, TransportPlan(P)


def _rounded_plan(logP: np.ndarray, symmetric: bool) -> np.ndarray:
    """Exponentiate and rescale so row/column sums are at most one.

    Entries are clipped at 1 before rescaling: above 1 only happens far from
    convergence, and the result only needs to be some feasible plan.
    """
    P = np.exp(np.minimum(logP, 0.0))
    rs = np.maximum(P.sum(axis=1), 1.0)
    P = P / rs[:, None]
    cs = np.maximum(P.sum(axis=0), 1.0)
    P = P / cs[None, :]
    if symmetric:
        P = 0.5 * (P + P.T)
    return P


def _objective(P: np.ndarray, cross: np.ndarray, a, b, ra, rb, eps) -> float:
    """Primal objective at a feasible plan.

    The KL terms are taken against the two product references a b^T / pers;
    their average already carries the full entropic penalty, including the
    (sqrt pers(alpha) - sqrt pers(beta))^2 / 2 constant.
    """
    transport = float(np.sum(cross * P))
    slack = float(a @ (1.0 - P.sum(axis=1)) + b @ (1.0 - P.sum(axis=0)))
    ref = np.outer(a, b)
    kl_a = float(np.sum(xlogy(P, P) - xlogy(P, ref / ra) - P)) + rb
    kl_b = float(np.sum(xlogy(P, P) - xlogy(P, ref / rb) - P)) + ra
    return transport + slack + eps * 0.5 * (kl_a + kl_b)


def fg_entropic(
    alpha: PDPointSet,
    beta: PDPointSet,
    eps: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> tuple[float, TransportPlan, bool]:
    """Entropic diagram transport cost, its plan, and a convergence flag.

    The returned value is the primal objective of the returned (feasible)
    plan; on convergence it is within tol (relatively) of the optimum, as
    certified by the dual potentials.  Empty diagrams short-circuit:
    against an empty diagram everything pays its diagonal cost.
    """
    value, plan, _, _, converged = _solve_entropic(
        alpha, beta, eps, tol, max_iter, symmetric=False
    )
    return value, plan, converged


def _dual_polish(base, eps, f, g):
    """Quasi-Newton finish for a stalled scaling iteration.

    The dual is smooth and concave in (f, g) with box constraints <= 0, so
    L-BFGS-B started from the current potentials closes the remaining gap
    in a few dozen steps where the alternating updates creep sublinearly
    (near-ties between matching and the diagonal).  Restarts clear a stale
    curvature estimate; the second round routinely gains three digits.
    """
    N, M = base.shape

    def negdual(z):
        fz, gz = z[:N], z[N:]
        E = np.exp(np.minimum(base + (fz[:, None] + gz[None, :]) / eps, 700.0))
        val = eps * E.sum() - fz.sum() - gz.sum()
        grad = np.concatenate([E.sum(axis=1) - 1.0, E.sum(axis=0) - 1.0])
        return val, grad

    z = np.concatenate([f, g])
    for _ in range(3):
        res = minimize(
            negdual,
            z,
            jac=True,
            method="L-BFGS-B",
            bounds=[(None, 0.0)] * (N + M),
            options={"maxiter": 500, "ftol": 1e-18, "gtol": 1e-14},
        )
        z = res.x
        if res.nit == 0:
            break
    return z[:N], z[N:]


def _solve_entropic(alpha, beta, eps, tol, max_iter, symmetric):
    """Returns (value, plan, row mass, col mass, converged flag)."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    N, M = alpha.n, beta.n
    if N == 0 or M == 0:
        value = alpha.pers + beta.pers
        P = np.zeros((N, M))
        return value, TransportPlan(P), np.zeros(N), np.zeros(M), True

    a, b = alpha.diag_costs, beta.diag_costs
    ra, rb = alpha.pers, beta.pers
    cross = _sq_dists(alpha.pts, beta.pts)
    chat = cross - a[:, None] - b[None, :]
    logref = np.log(a)[:, None] + np.log(b)[None, :] - 0.5 * (np.log(ra) + np.log(rb))
    const = ra + rb + 0.5 * eps * (np.sqrt(ra) - np.sqrt(rb)) ** 2
    base = logref - chat / eps

    def gap_at(f, g):
        logP = base + (f[:, None] + g[None, :]) / eps
        P = _rounded_plan(logP, symmetric)
        value = _objective(P, cross, a, b, ra, rb, eps)
        mass = np.exp(min(float(_lse(logP.reshape(-1), axis=0)), 700.0))
        dual = const + eps * (np.sqrt(ra * rb) - mass) + f.sum() + g.sum()
        return value, value - dual

    f = np.zeros(N)
    g = np.zeros(M)
    converged = False
    stall_gap = np.inf
    for it in range(1, max_iter + 1):
        if symmetric:
            fn = np.minimum(0.0, -eps * _lse(base + f[None, :] / eps, axis=1))
            f = 0.5 * (f + fn)
            g = f
        else:
            f = np.minimum(0.0, -eps * _lse(base + g[None, :] / eps, axis=1))
            g = np.minimum(0.0, -eps * _lse(base + f[:, None] / eps, axis=0))
        if it % 10 == 0 or it == max_iter:
            value, gap = gap_at(f, g)
            if gap <= tol * max(1.0, abs(value)):
                converged = True
                break
            # less than a halving of the gap across 500 iterations is a
            # creep that will not finish; hand over to the dual polish
            if it % 500 == 0:
                if gap > 0.5 * stall_gap:
                    break
                stall_gap = gap
    if not converged:
        f, g = _dual_polish(base, eps, f, g)
        if symmetric:
            f = g = 0.5 * (f + g)
        value, gap = gap_at(f, g)
        converged = gap <= tol * max(1.0, abs(value))
    P = _rounded_plan(base + (f[:, None] + g[None, :]) / eps, symmetric)
    value = _objective(P, cross, a, b, ra, rb, eps)
    return value, TransportPlan(P), P.sum(axis=1), P.sum(axis=0), converged


def _solve_or_raise(x, y, eps, tol, max_iter, symmetric, name):
    value, plan, rm, cm, ok = _solve_entropic(x, y, eps, tol, max_iter, symmetric)
    if not ok:
        raise ConvergenceError(
            f"entropic transport solve {name} did not reach tol={tol} "
            f"in {max_iter} iterations (eps={eps})"
        )
    return value, plan, rm, cm


def sfg(
    alpha: PDPointSet,
    beta: PDPointSet,
    eps: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    beta_self_cost: float | None = None,
) -> float:
    """Debiased entropic diagram divergence (Sinkhorn divergence).

    Zero when alpha == beta, nonnegative up to solver tolerance, and
    converging to fg_exact as eps -> 0.  Raises ConvergenceError if any of
    the underlying solves fails to converge.  beta_self_cost short-circuits
    the fg_eps(beta, beta) solve when the caller compares many diagrams
    against a fixed target.

    Identical diagrams are solved once with the damped symmetric iteration
    and the three terms cancel exactly; the plain alternating iteration can
    take O(1/tol) iterations there because the optimal plan saturates every
    marginal.
    """
    same = alpha.n == beta.n and np.array_equal(alpha.pts, beta.pts)
    v_ab = _solve_or_raise(alpha, beta, eps, tol, max_iter, same, "ab")[0]
    v_aa = (
        _solve_or_raise(alpha, alpha, eps, tol, max_iter, True, "aa")[0]
        if alpha.n
        else 0.0
    )
    if beta_self_cost is not None:
        v_bb = beta_self_cost
    else:
        v_bb = (
            _solve_or_raise(beta, beta, eps, tol, max_iter, True, "bb")[0]
            if beta.n
            else 0.0
        )
    return v_ab - 0.5 * v_aa - 0.5 * v_bb


def barycentric_map(
    alpha: PDPointSet, beta: PDPointSet, plan: TransportPlan, eps: float
) -> np.ndarray:
    """Per-point transport displacement target, scaled to match the gradient.

    Row i is 2 * (proj_diag(x_i) * (1 - row mass) + sum_j P_ij y_j): where
    the plan leaves slack, the point is pulled to the diagonal; matched mass
    pulls it onto the other diagram.  The factor 2 makes
    grad fg_eps(alpha, beta) = 2 x_i - (this row).  eps identifies the plan
    and does not enter the formula.
    """
    del eps
    if plan.P.shape != (alpha.n, beta.n):
        raise ValueError(
            f"plan shape {plan.P.shape} does not match diagrams {(alpha.n, beta.n)}"
        )
    mass = plan.P.sum(axis=1)
    matched = plan.P @ beta.pts if beta.n else np.zeros((alpha.n, 2))
    return 2.0 * (alpha.diag_projections() * (1.0 - mass)[:, None] + matched)


def grad_sfg(
    alpha: PDPointSet,
    beta: PDPointSet,
    eps: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    entropic_correction: bool = True,
) -> np.ndarray:
    """Gradient of sfg(alpha, beta) in the coordinates of alpha, shape (N, 2).

    The two barycentric maps nearly cancel; what remains is the displacement
    between the cross plan and the self plan, plus an O(eps) correction for
    the reference measure's dependence on alpha.  entropic_correction=False
    drops that correction (diagnostic only; the correction is part of the
    gradient).
    """
    N = alpha.n
    if N == 0:
        return np.zeros((0, 2))
    if beta.n and np.array_equal(alpha.pts, beta.pts):
        return np.zeros((N, 2))

    _, plan_ab, m_ab, _ = _solve_or_raise(alpha, beta, eps, tol, max_iter, False, "ab")
    _, plan_aa, m_aa, _ = _solve_or_raise(alpha, alpha, eps, tol, max_iter, True, "aa")

    t_ab = barycentric_map(alpha, beta, plan_ab, eps)
    t_aa = barycentric_map(alpha, alpha, plan_aa, eps)
    grad = t_aa - t_ab
    if entropic_correction:
        gaps = alpha.gaps
        total_ab = float(plan_ab.P.sum())
        total_aa = float(plan_aa.P.sum())
        scal = 0.5 * gaps / alpha.pers * (total_ab - total_aa) - 2.0 / gaps * (
            m_ab - m_aa
        )
        grad = grad + eps * scal[:, None] * np.array([-1.0, 1.0])
    return grad
