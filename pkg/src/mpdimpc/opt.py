"""Dense convex QP (primal active-set) and LP feasibility.

The QP solver is written for the small problems met in distributed MPC:
a handful of decision variables and a few dozen inequality rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .numerics import DimensionError, SingularError, as_matrix, as_vector, matrix_rank, solve_linear


class QPError(RuntimeError):
    pass


class Infeasible(QPError):
    pass


class Unbounded(QPError):
    pass


class IterationLimit(QPError):
    pass


@dataclass
class FeasibleWitness:
    z: np.ndarray


def _lp(c, A, b, bounds=(None, None)):
    return linprog(c, A_ub=A, b_ub=b, bounds=bounds, method="highs")


def solve_lp_feasibility(G, b, tol: float = 1e-8) -> FeasibleWitness | None:
    """Find ``z`` with ``G z <= b`` using a zero objective; ``None`` if infeasible."""
    G = as_matrix(G, "G")
    b = as_vector(b, "b")
    if G.shape[0] != b.shape[0]:
        raise DimensionError("row counts of G and b differ")
    n = G.shape[1]
    if G.shape[0] == 0:
        return FeasibleWitness(np.zeros(n))
    res = _lp(np.zeros(n), G, b)
    if res.status != 0:
        return None
    z = res.x
    if np.max(G @ z - b) > tol * (1.0 + np.max(np.abs(b))):
        return None
    return FeasibleWitness(z)


def chebyshev_ball(G, b) -> tuple[np.ndarray | None, float]:
    """Largest inscribed ball of ``{z : G z <= b}``.

    Returns ``(center, radius)``; radius is ``-inf`` when the set is empty and
    ``inf`` when it is unbounded in every direction tested by the LP.
    """
    G = as_matrix(G)
    b = as_vector(b)
    n = G.shape[1]
    norms = np.linalg.norm(G, axis=1)
    A = np.hstack([G, norms[:, None]])
    c = np.zeros(n + 1)
    c[-1] = -1.0
    bounds = [(None, None)] * n + [(None, 1e6)]
    res = _lp(c, A, b, bounds)
    if res.status == 2:
        return None, -np.inf
    if res.status != 0:
        return None, -np.inf
    return res.x[:n], res.x[-1]


@dataclass
class QPProblem:
    """``min 1/2 x'Hx + f'x  s.t.  G x <= b``."""

    H: np.ndarray
    f: np.ndarray
    G: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    b: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        H = as_matrix(self.H, "H")
        self.H = 0.5 * (H + H.T)
        self.f = as_vector(self.f, "f")
        n = self.H.shape[0]
        if self.H.shape != (n, n) or self.f.shape != (n,):
            raise DimensionError("H and f do not conform")
        G = np.asarray(self.G, dtype=float)
        if G.size == 0:
            G = np.zeros((0, n))
        self.G = G.reshape(-1, n)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if self.G.shape[0] != self.b.shape[0]:
            raise DimensionError("row counts of G and b differ")

    @property
    def n(self) -> int:
        return self.H.shape[0]

    def objective(self, x) -> float:
        return float(0.5 * x @ self.H @ x + self.f @ x)


@dataclass
class QPSolution:
    x_opt: np.ndarray
    objective: float
    active_set: list[int]
    lagrange: np.ndarray
    iterations: int = 0


def regularize(H, eig_tol: float = 1e-9) -> np.ndarray:
    """Return ``H`` shifted by ``eig_tol * I`` when it is only semidefinite."""
    lam = np.linalg.eigvalsh(H)
    if lam[0] < -eig_tol:
        raise ValueError(f"H is not positive semidefinite (min eigenvalue {lam[0]:.3e})")
    if lam[0] < eig_tol:
        return H + eig_tol * np.eye(H.shape[0])
    return H


class ActiveSetQP:
    """Primal active-set solver for strictly convex (after regularization) QPs.

    One instance solves one problem at a time; it keeps the regularized
    Hessian so repeated solves with different ``f``/``b`` reuse it.
    """

    def __init__(self, H, feas_tol: float = 1e-9, max_iter: int | None = None):
        H = as_matrix(H, "H")
        self.H_raw = 0.5 * (H + H.T)
        self.H = regularize(self.H_raw)
        self.feas_tol = feas_tol
        self.max_iter = max_iter

    def _initial_point(self, G, b, x0):
        if x0 is not None:
            x0 = np.asarray(x0, dtype=float)
            if G.shape[0] == 0 or np.all(G @ x0 <= b + self.feas_tol):
                return x0
        origin = np.zeros(self.H.shape[0])
        if G.shape[0] == 0 or np.all(b >= 0):
            return origin
        w = solve_lp_feasibility(G, b, tol=self.feas_tol)
        if w is None:
            raise Infeasible("constraint set is empty")
        return w.z

    def _initial_working_set(self, G, b, x):
        W: list[int] = []
        slack = b - G @ x
        for i in np.flatnonzero(np.abs(slack) <= self.feas_tol * (1.0 + np.abs(b))):
            if matrix_rank(G[W + [i]]) == len(W) + 1:
                W.append(int(i))
        return W

    def _eqp(self, g, GW):
        n = self.H.shape[0]
        k = GW.shape[0]
        K = np.zeros((n + k, n + k))
        K[:n, :n] = self.H
        K[:n, n:] = GW.T
        K[n:, :n] = GW
        rhs = np.concatenate([-g, np.zeros(k)])
        sol = solve_linear(K, rhs)
        return sol[:n], sol[n:]

    def solve(self, f, G=None, b=None, x0=None) -> QPSolution:
        H = self.H
        n = H.shape[0]
        f = as_vector(f, "f")
        G = np.zeros((0, n)) if G is None else np.asarray(G, dtype=float).reshape(-1, n)
        b = np.zeros(0) if b is None else np.asarray(b, dtype=float).reshape(-1)
        m = G.shape[0]
        max_iter = self.max_iter or 50 * (n + m)

        x = self._initial_point(G, b, x0)
        W = self._initial_working_set(G, b, x)
        for it in range(1, max_iter + 1):
            g = H @ x + f
            GW = G[W]
            try:
                p, lam = self._eqp(g, GW)
            except SingularError:
                # dependent working rows: drop the last one added
                W.pop()
                continue
            if np.max(np.abs(p)) <= 1e-12 * (1.0 + np.max(np.abs(x))):
                if not W or np.min(lam) >= -1e-10:
                    lam = np.maximum(lam, 0.0) if W else lam
                    order = np.argsort(W, kind="stable")
                    W_sorted = [W[j] for j in order]
                    return QPSolution(x, float(0.5 * x @ self.H_raw @ x + f @ x), W_sorted, lam[order], it)
                # most negative multiplier leaves, ties to the lowest row index
                neg = np.min(lam)
                cands = [W[j] for j in range(len(W)) if lam[j] <= neg + 1e-14]
                W.remove(min(cands))
                continue
            Gp = G @ p
            alpha = 1.0
            block = None
            inW = np.zeros(m, dtype=bool)
            inW[W] = True
            for i in range(m):
                if inW[i] or Gp[i] <= 1e-14:
                    continue
                step = max(b[i] - G[i] @ x, 0.0) / Gp[i]
                if step < alpha - 1e-15:
                    alpha, block = step, i
            if block is None and np.max(np.abs(p)) > 1e12:
                raise Unbounded("unbounded descent direction")
            x = x + alpha * p
            if block is not None:
                W.append(block)
        raise IterationLimit(f"no convergence in {max_iter} iterations")


def solve_qp(p: QPProblem, x0=None) -> QPSolution:
    """Solve a convex QP with the primal active-set method.

    Raises
    ------
    Infeasible
        The constraint set is empty.
    IterationLimit
        More than ``50 (n + m)`` working-set changes.
    """
    return ActiveSetQP(p.H).solve(p.f, p.G, p.b, x0=x0)
