"""Explicit solution of a condensed mpQP by active-set enumeration.

Candidate active sets are grown one row at a time. A set whose equality
system is infeasible together with the remaining inequalities (over the
parameter box) cannot be part of any optimal active set, so none of its
supersets are tried.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .mpc import CondensedQP
from .numerics import DimensionError, as_vector, matrix_rank
from .opt import chebyshev_ball, regularize
from .polyhedra import Polyhedron, facet_adjacent

#: minimum Chebyshev radius for a region to count as full-dimensional
RADIUS_TOL = 1e-6


class NotPositiveDefinite(ValueError):
    pass


class NotFound(LookupError):
    pass


@dataclass(eq=False)
class CriticalRegion:
    """Polyhedron over ``theta`` on which ``U = gain @ theta + offset`` is optimal."""

    region: Polyhedron
    gain: np.ndarray
    offset: np.ndarray
    active_set: tuple
    id: int = -1
    radius: float = np.nan

    def law(self, theta) -> np.ndarray:
        return self.gain @ theta + self.offset

    def contains(self, theta, tol: float = 1e-7) -> bool:
        return bool(np.all(self.region.Phi @ theta <= self.region.phi + tol))


@dataclass(eq=False)
class ExplicitSolution:
    regions: list
    theta_box: Polyhedron
    problem: CondensedQP | None = None
    fingerprint: str = ""
    adjacency: list = field(default_factory=list)

    def __post_init__(self):
        self._stack()
        self._neighbors = None

    @property
    def n_CR(self) -> int:
        return len(self.regions)

    @property
    def n_par(self) -> int:
        return self.theta_box.dim

    def _stack(self):
        n = self.theta_box.dim
        rows = max((r.region.n_ineq for r in self.regions), default=0)
        k = len(self.regions)
        self._Phi = np.zeros((k, rows, n))
        self._phi = np.full((k, rows), np.inf)
        for v, r in enumerate(self.regions):
            m = r.region.n_ineq
            self._Phi[v, :m] = r.region.Phi
            self._phi[v, :m] = r.region.phi
        if k:
            self._gain = np.stack([r.gain for r in self.regions])
            self._offset = np.stack([r.offset for r in self.regions])

    def containing(self, theta, tol: float = 1e-7) -> np.ndarray:
        """Ids of every region whose inequalities hold at ``theta``."""
        if not self.regions:
            return np.zeros(0, dtype=int)
        lhs = np.einsum("vrn,n->vr", self._Phi, theta)
        return np.flatnonzero(np.all(lhs <= self._phi + tol, axis=1))

    def neighbors(self, v: int) -> list[int]:
        if self._neighbors is None:
            nb = [[] for _ in self.regions]
            for a, b in self.adjacency:
                nb[a].append(b)
                nb[b].append(a)
            self._neighbors = [sorted(set(x)) for x in nb]
        return self._neighbors[v]

    def set_adjacency(self, pairs):
        self.adjacency = [tuple(p) for p in pairs]
        self._neighbors = None


def _law(H, Hinv, H_t, c, G, b, F, S):
    """Affine primal and dual maps for active set ``S``."""
    n_par = F.shape[1]
    base_g = -Hinv @ H_t.T
    base_o = -Hinv @ c
    if not S:
        return base_g, base_o, np.zeros((0, n_par)), np.zeros(0)
    S = list(S)
    GS = G[S]
    Mm = GS @ Hinv @ GS.T
    Lg = -np.linalg.solve(Mm, F[S] + GS @ Hinv @ H_t.T)
    Lo = -np.linalg.solve(Mm, b[S] + GS @ Hinv @ c)
    Kg = base_g - Hinv @ GS.T @ Lg
    Ko = base_o - Hinv @ GS.T @ Lo
    return Kg, Ko, Lg, Lo


def _box_bounds(theta_box: Polyhedron):
    """``(lo, hi)`` if ``theta_box`` is an axis-aligned box, else ``None``."""
    n = theta_box.dim
    if theta_box.n_ineq != 2 * n:
        return None
    if not (np.array_equal(theta_box.Phi[:n], np.eye(n)) and np.array_equal(theta_box.Phi[n:], -np.eye(n))):
        return None
    return -theta_box.phi[n:], theta_box.phi[:n]


def _ray_certified(A, b, z0, n_dirs: int = 256) -> np.ndarray:
    """Rows hit first by rays from the interior point ``z0``.

    Such rows are facets, so they need no redundancy LP.
    """
    rng = np.random.Generator(np.random.PCG64(0))
    D = np.vstack([rng.standard_normal((n_dirs, A.shape[1])), A])
    slack = b - A @ z0
    AD = A @ D.T
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(AD > 1e-12, slack[:, None] / AD, np.inf)
    hit = np.zeros(A.shape[0], dtype=bool)
    if A.shape[0] == 1:
        hit[:] = np.isfinite(t[0]).any()
        return hit
    part = np.partition(t, 1, axis=0)
    first = np.argmin(t, axis=0)
    unique = np.isfinite(part[0]) & (part[1] > part[0] * (1.0 + 1e-9) + 1e-12)
    hit[first[unique]] = True
    return hit


def _prune_rows(A, b, lo_hi, z0=None, tol=1e-9):
    """Drop rows that cannot be tight inside the box, then LP-test the rest."""
    norms = np.linalg.norm(A, axis=1)
    keep = norms > 1e-12
    A, b = A[keep] / norms[keep, None], b[keep] / norms[keep]
    if lo_hi is not None:
        lo, hi = lo_hi
        mx = np.maximum(A * lo, A * hi).sum(axis=1)
        inside = mx > b + tol
        A, b = A[inside], b[inside]
        box_A = np.vstack([np.eye(len(lo)), -np.eye(len(lo))])
        box_b = np.concatenate([hi, -lo])
    else:
        box_A = np.zeros((0, A.shape[1]))
        box_b = np.zeros(0)
    # merge near-duplicate rows, keeping the tightest
    order = np.lexsort(np.vstack([b, np.round(A, 9).T[::-1]]))
    A, b = A[order], b[order]
    if A.shape[0]:
        uniq = [0]
        for j in range(1, A.shape[0]):
            if np.max(np.abs(A[j] - A[uniq[-1]])) > 1e-9:
                uniq.append(j)
        A, b = A[uniq], b[uniq]
    allA = np.vstack([A, box_A])
    allb = np.concatenate([b, box_b])
    certified = _ray_certified(allA, allb, z0) if z0 is not None else np.zeros(allA.shape[0], dtype=bool)
    keep = np.ones(allA.shape[0], dtype=bool)
    for j in np.flatnonzero(~certified):
        keep[j] = False
        Aj = np.vstack([allA[keep], allA[j]])
        bj = np.concatenate([allb[keep], [allb[j] + 1.0]])
        res = linprog(-allA[j], A_ub=Aj, b_ub=bj, bounds=(None, None), method="highs")
        if res.status != 0 or -res.fun > allb[j] + tol:
            keep[j] = True
    return allA[keep], allb[keep]


def _primal_feasible(G, b, F, S, box_A, box_b) -> bool:
    """Is there ``(U, theta)`` with rows ``S`` tight and all rows satisfied?"""
    nd, npar = G.shape[1], F.shape[1]
    A_ub = np.vstack([np.hstack([G, -F]), np.hstack([np.zeros((box_A.shape[0], nd)), box_A])])
    b_ub = np.concatenate([b, box_b])
    S = list(S)
    res = linprog(
        np.zeros(nd + npar),
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=np.hstack([G[S], -F[S]]),
        b_eq=b[S],
        bounds=(None, None),
        method="highs",
    )
    return res.status == 0


def solve_mpqp(p: CondensedQP, theta_box: Polyhedron, max_active: int | None = None, radius_tol: float = RADIUS_TOL, adjacency: bool = True) -> ExplicitSolution:
    """Enumerate the critical regions of ``p`` over ``theta_box``.

    Regions are returned full-dimensional, irredundant and with ids ordered by
    ``(len(active_set), active_set)``.
    """
    if theta_box.dim != p.n_par:
        raise DimensionError("theta_box dimension differs from the parameter count")
    lam = np.linalg.eigvalsh(p.H)
    if lam[0] <= 0.0 and lam[0] < -1e-9:
        raise NotPositiveDefinite("H is indefinite")
    H = regularize(p.H)
    Hinv = np.linalg.inv(H)
    G, b, F, H_t, c = p.G, p.b, p.F, p.H_t, p.c
    n_c, nd = G.shape
    max_active = nd if max_active is None else min(max_active, nd)
    lo_hi = _box_bounds(theta_box)

    found: dict[tuple, CriticalRegion] = {}
    alive: set[tuple] = set()
    level = [()]
    for k in range(0, max_active + 1):
        if k > 0:
            cands = []
            for S in sorted(level):
                last = S[-1] if S else -1
                for j in range(last + 1, n_c):
                    T = S + (j,)
                    if all(T[:q] + T[q + 1 :] in alive for q in range(k)):
                        cands.append(T)
        else:
            cands = [()]
        level = []
        for S in cands:
            if S and matrix_rank(G[list(S)]) < len(S):
                continue
            if S and not _primal_feasible(G, b, F, S, theta_box.Phi, theta_box.phi):
                continue
            alive.add(S)
            level.append(S)
            cr = _region_for(S, H, Hinv, H_t, c, G, b, F, theta_box, lo_hi, radius_tol)
            if cr is not None:
                found[S] = cr
        if not level:
            break

    keys = sorted(found, key=lambda s: (len(s), s))
    regions = []
    for v, key in enumerate(keys):
        cr = found[key]
        cr.id = v
        regions.append(cr)
    sol = ExplicitSolution(regions, theta_box, p, p.fingerprint())
    if adjacency:
        sol.set_adjacency(build_adjacency(sol))
    return sol


def _region_for(S, H, Hinv, H_t, c, G, b, F, theta_box, lo_hi, radius_tol):
    Kg, Ko, Lg, Lo = _law(H, Hinv, H_t, c, G, b, F, S)
    inactive = [j for j in range(G.shape[0]) if j not in S]
    A = np.vstack([G[inactive] @ Kg - F[inactive], -Lg, theta_box.Phi])
    rhs = np.concatenate([b[inactive] - G[inactive] @ Ko, Lo, theta_box.phi])
    norms = np.linalg.norm(A, axis=1)
    zero = norms <= 1e-12
    if np.any(rhs[zero] < -1e-9):
        return None
    A, rhs = A[~zero], rhs[~zero]
    z0, r = chebyshev_ball(A, rhs)
    if not r > radius_tol:
        return None
    Ar, br = _prune_rows(A, rhs, lo_hi, z0)
    return CriticalRegion(Polyhedron(Ar, br), Kg, Ko, tuple(S), radius=float(r))


def point_locate(sol: ExplicitSolution, theta, tol: float = 1e-7) -> CriticalRegion:
    """Region containing ``theta``; on boundaries, the lowest-objective law wins.

    Raises
    ------
    NotFound
        When no region contains ``theta``.
    """
    theta = as_vector(theta, "theta")
    if theta.shape[0] != sol.n_par:
        raise DimensionError(f"theta has length {theta.shape[0]}, expected {sol.n_par}")
    hits = sol.containing(theta, tol)
    if hits.size == 0:
        raise NotFound("theta lies outside every critical region")
    if hits.size == 1 or sol.problem is None:
        return sol.regions[int(hits[0])]
    best, best_val = None, np.inf
    for v in hits:
        U = sol.regions[v].law(theta)
        val = sol.problem.objective(U, theta)
        if val < best_val - 1e-12 * (1.0 + abs(best_val)) or best is None:
            best, best_val = int(v), val
    return sol.regions[best]


def evaluate(sol: ExplicitSolution, theta, tol: float = 1e-7) -> np.ndarray:
    return point_locate(sol, theta, tol).law(theta)


def build_adjacency(sol: ExplicitSolution, rel_tol: float = 1e-6) -> list[tuple[int, int]]:
    """Pairs of regions sharing a facet.

    Opposite facet rows are matched with one dense product over all
    normalised rows; only matched pairs go through the LP check in
    :func:`polyhedra.facet_adjacent`.
    """
    k = sol.n_CR
    if k < 2:
        return []
    rows, owner = [], []
    for v, r in enumerate(sol.regions):
        Phi, phi = r.region.Phi, r.region.phi
        nrm = np.linalg.norm(Phi, axis=1)
        rows.append(np.hstack([Phi / nrm[:, None], (phi / nrm)[:, None]]))
        owner.append(np.full(Phi.shape[0], v))
    R = np.vstack(rows)
    own = np.concatenate(owner)
    dirs = R[:, :-1]
    dots = dirs @ dirs.T
    cand = np.argwhere(dots < -1.0 + rel_tol)
    pairs = set()
    for a, bb in cand:
        va, vb = own[a], own[bb]
        if va >= vb:
            continue
        if abs(R[a, -1] + R[bb, -1]) > rel_tol * (1.0 + abs(R[a, -1])):
            continue
        pairs.add((int(va), int(vb)))
    out = []
    for va, vb in sorted(pairs):
        if facet_adjacent(sol.regions[va].region, sol.regions[vb].region, rel_tol):
            out.append((va, vb))
    return out


def neighborhood(sol: ExplicitSolution, v: int, depth: int = 1) -> list[int]:
    """``v`` plus every region within ``depth`` adjacency hops."""
    seen = {v}
    frontier = [v]
    for _ in range(depth):
        nxt = []
        for u in frontier:
            for w in sol.neighbors(u):
                if w not in seen:
                    seen.add(w)
                    nxt.append(w)
        frontier = nxt
    return sorted(seen)
