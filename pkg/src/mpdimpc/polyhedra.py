"""H-representation polyhedra ``{z : Phi z <= phi}`` and LP-backed predicates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .numerics import DimensionError, as_matrix, as_vector
from .opt import _lp, chebyshev_ball, solve_lp_feasibility

#: default absolute tolerance for membership tests
CONTAINS_TOL = 1e-7


class InfeasibleInput(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Polyhedron:
    Phi: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        Phi = np.asarray(self.Phi, dtype=float)
        phi = as_vector(self.phi, "phi") if np.size(self.phi) else np.zeros(0)
        if Phi.ndim == 1:
            Phi = Phi.reshape(phi.shape[0], -1)
        if Phi.shape[0] != phi.shape[0]:
            raise DimensionError(f"Phi has {Phi.shape[0]} rows, phi has {phi.shape[0]}")
        if Phi.shape[1] < 1:
            raise DimensionError("polyhedron dimension must be at least 1")
        zero = np.all(Phi == 0.0, axis=1)
        if np.any(zero & (phi < 0.0)):
            raise InfeasibleInput("row 0 <= negative value")
        object.__setattr__(self, "Phi", Phi)
        object.__setattr__(self, "phi", phi)

    @property
    def dim(self) -> int:
        return self.Phi.shape[1]

    @property
    def n_ineq(self) -> int:
        return self.Phi.shape[0]

    @classmethod
    def box(cls, lo, hi) -> "Polyhedron":
        lo, hi = as_vector(lo), as_vector(hi)
        n = lo.shape[0]
        return cls(np.vstack([np.eye(n), -np.eye(n)]), np.concatenate([hi, -lo]))

    def slacks(self, z) -> np.ndarray:
        return self.phi - self.Phi @ z

    def intersect(self, other: "Polyhedron") -> "Polyhedron":
        if other.dim != self.dim:
            raise DimensionError("dimension mismatch")
        return Polyhedron(np.vstack([self.Phi, other.Phi]), np.concatenate([self.phi, other.phi]))


def contains(P: Polyhedron, z, tol: float = CONTAINS_TOL) -> bool:
    z = as_vector(z, "z")
    if z.shape[0] != P.dim:
        raise DimensionError(f"point has dimension {z.shape[0]}, polyhedron {P.dim}")
    return bool(np.all(P.Phi @ z <= P.phi + tol))


def is_feasible(P: Polyhedron) -> bool:
    return solve_lp_feasibility(P.Phi, P.phi) is not None


def interior_radius(P: Polyhedron) -> float:
    """Radius of the largest ball inside ``P`` (``-inf`` if empty)."""
    return chebyshev_ball(P.Phi, P.phi)[1]


def _normalize(Phi, phi):
    norms = np.linalg.norm(Phi, axis=1)
    keep = norms > 0.0
    return Phi[keep] / norms[keep, None], phi[keep] / norms[keep], keep


def remove_redundant(P: Polyhedron, tol: float = 1e-9) -> Polyhedron:
    """Drop rows implied by the others.

    Duplicates (after row normalisation) are merged first, keeping the
    tightest; each remaining row is then tested with an LP that maximizes its
    left side over the rest.
    """
    if not is_feasible(P):
        raise InfeasibleInput("cannot remove redundancy from an empty polyhedron")
    A, b, _ = _normalize(P.Phi, P.phi)
    if A.shape[0] == 0:
        return Polyhedron(np.zeros((0, P.dim)), np.zeros(0))
    # merge parallel duplicates
    order = np.lexsort(np.vstack([b, np.round(A, 9).T[::-1]]))
    A, b = A[order], b[order]
    uniq = [0]
    for j in range(1, A.shape[0]):
        if np.max(np.abs(A[j] - A[uniq[-1]])) <= 1e-9:
            continue  # same direction, looser or equal bound (sorted by b)
        uniq.append(j)
    A, b = A[uniq], b[uniq]

    keep = np.ones(A.shape[0], dtype=bool)
    for j in range(A.shape[0]):
        keep[j] = False
        others = keep.copy()
        Aj = np.vstack([A[others], A[j]])
        bj = np.concatenate([b[others], [b[j] + 1.0]])
        res = _lp(-A[j], Aj, bj)
        if res.status != 0 or -res.fun > b[j] + tol:
            keep[j] = True
    return Polyhedron(A[keep], b[keep])


def _hyperplane_slice(g, h, A, b):
    """Restrict ``{z : A z <= b}`` to ``g z = h``; returns (A_y, b_y, z0, N)."""
    z0 = g * h / (g @ g)
    N = scipy.linalg.null_space(g[None, :])
    return A @ N, b - A @ z0, z0, N


def facet_adjacent(P: Polyhedron, Q: Polyhedron, rel_tol: float = 1e-6, radius_tol: float = 1e-7) -> bool:
    """True iff ``P`` and ``Q`` lie on opposite sides of a common facet."""
    if P.dim != Q.dim:
        raise DimensionError("dimension mismatch")
    Ap, bp, _ = _normalize(P.Phi, P.phi)
    Aq, bq, _ = _normalize(Q.Phi, Q.phi)
    opposite = np.max(np.abs(Ap[:, None, :] + Aq[None, :, :]), axis=2) <= rel_tol
    opposite &= np.abs(bp[:, None] + bq[None, :]) <= rel_tol * (1.0 + np.abs(bp[:, None]))
    for i, j in np.argwhere(opposite):
        rest = np.vstack([np.delete(Ap, i, axis=0), np.delete(Aq, j, axis=0)])
        rhs = np.concatenate([np.delete(bp, i), np.delete(bq, j)])
        Ay, by, z0, N = _hyperplane_slice(Ap[i], bp[i], rest, rhs)
        if N.shape[1] == 0:
            if np.all(by >= -rel_tol):
                return True
            continue
        if chebyshev_ball(Ay, by)[1] > radius_tol:
            return True
    return False
