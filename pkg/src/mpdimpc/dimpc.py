"""Iterative cooperative distributed MPC with Wegstein relaxation.

Every local controller minimizes the plantwide cost over its own inputs with
the other controllers' inputs frozen at the current relaxed iterate. Local
solves within one pass all read the same iterate (Jacobi style). The relaxed
iterate is updated element-wise with the secant weight ``w = a / (a - 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .mpc import CondensedQP, MPCWeights, condense_local, decision_blocks, input_box, other_blocks
from .mpqp import ExplicitSolution, NotFound, point_locate
from .numerics import DimensionError
from .opt import ActiveSetQP, QPError
from .plant import SubsystemNetwork


class LocalSolveFailed(RuntimeError):
    def __init__(self, i: int, cause: Exception):
        super().__init__(f"local controller {i} failed: {cause}")
        self.i = i
        self.cause = cause


class OnlineLocal:
    """Local problem solved by the active-set QP at every call."""

    kind = "online"

    def __init__(self, qp: CondensedQP):
        self.qp = qp
        self.solver = ActiveSetQP(qp.H)

    def solve(self, theta, guess=None) -> np.ndarray:
        qp = self.qp
        return self.solver.solve(qp.linear_term(theta), qp.G, qp.rhs(theta), x0=guess).x_opt


class ExplicitLocal:
    """Local problem answered by point location in a precomputed partition."""

    kind = "explicit"

    def __init__(self, solution: ExplicitSolution):
        self.solution = solution

    def solve(self, theta, guess=None) -> np.ndarray:
        return point_locate(self.solution, theta).law(theta)


@dataclass
class DistributedProblem:
    """Local problems of a network plus the index bookkeeping between them."""

    net: SubsystemNetwork
    weights: MPCWeights
    locals: list
    own: list
    others: list
    U_min: np.ndarray
    U_max: np.ndarray

    @classmethod
    def build(cls, net: SubsystemNetwork, weights: MPCWeights, mode: str = "online", solutions=None) -> "DistributedProblem":
        Np = weights.Np
        if mode == "online":
            locals_ = [OnlineLocal(condense_local(net, weights, i)) for i in range(net.M)]
        elif mode == "explicit":
            if solutions is None or len(solutions) != net.M:
                raise ValueError("explicit mode needs one ExplicitSolution per subsystem")
            locals_ = [ExplicitLocal(s) for s in solutions]
        else:
            raise ValueError(f"unknown mode {mode!r}")
        U_min, U_max = input_box(net, Np)
        return cls(
            net,
            weights,
            locals_,
            decision_blocks(net, Np),
            [other_blocks(net, Np, i) for i in range(net.M)],
            U_min,
            U_max,
        )

    @property
    def M(self) -> int:
        return self.net.M

    @property
    def n_dec(self) -> int:
        return self.U_min.shape[0]

    def theta(self, i: int, x, U) -> np.ndarray:
        return np.concatenate([x, U[self.others[i]]])

    def best_response(self, x, U_bar) -> np.ndarray:
        """One Jacobi pass: each controller's optimum given ``U_bar``."""
        out = np.empty_like(U_bar)
        for i, loc in enumerate(self.locals):
            try:
                out[self.own[i]] = loc.solve(self.theta(i, x, U_bar), guess=U_bar[self.own[i]])
            except (QPError, NotFound, np.linalg.LinAlgError) as exc:
                raise LocalSolveFailed(i, exc) from exc
        return out


@dataclass
class WegsteinState:
    U_bar_prev: np.ndarray
    U_bar: np.ndarray
    U_raw: np.ndarray
    r: int = 1
    a: np.ndarray | None = None
    w: np.ndarray | None = None
    w_min: float = -5.0
    w_max: float = 0.9
    eps: float = 1e-8
    p_max: int = 100

    def __post_init__(self):
        if self.eps <= 0 or self.p_max < 0:
            raise ValueError("need eps > 0 and p_max >= 0")
        if self.w_min > self.w_max:
            raise ValueError("w_min exceeds w_max")

    @property
    def residual(self) -> float:
        return float(np.max(np.abs(self.U_bar - self.U_bar_prev))) if self.U_bar.size else 0.0


@dataclass
class IterationOutcome:
    U_star: np.ndarray
    iterations_used: int
    converged: bool
    transfers: int
    residual: float


def warm_start(U_prev, net: SubsystemNetwork, Np: int) -> np.ndarray:
    """Shift each subsystem's input sequence one slot forward, zero tail."""
    U_prev = np.asarray(U_prev, dtype=float)
    if U_prev.shape != (Np * net.n_u,):
        raise DimensionError(f"U_prev has shape {U_prev.shape}, expected ({Np * net.n_u},)")
    out = np.zeros_like(U_prev)
    for blk, nu in zip(decision_blocks(net, Np), net.n_u_i):
        seq = U_prev[blk]
        out[blk[: len(blk) - nu]] = seq[nu:]
    return out


def wegstein_weights(U_new, U_raw, U_bar, U_bar_prev, w_min: float, w_max: float, guard: float = 1e-12):
    """Element-wise secant slope ``a`` and clamped relaxation weight ``w``."""
    num = U_new - U_raw
    den = U_bar - U_bar_prev
    small = np.abs(den) < guard
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(small, 0.0, num / np.where(small, 1.0, den))
        w = a / (a - 1.0)
    w = np.where(np.isnan(w), 0.0, w)
    w = np.clip(w, w_min, w_max)
    return a, w


def iterate_step(problem: DistributedProblem, x, state: WegsteinState) -> WegsteinState:
    U_new = problem.best_response(x, state.U_bar)
    if state.r == 1:
        U_bar_prev, U_next, a, w, r = state.U_bar, U_new, None, None, 2
    else:
        a, w = wegstein_weights(U_new, state.U_raw, state.U_bar, state.U_bar_prev, state.w_min, state.w_max)
        U_next = w * state.U_bar + (1.0 - w) * U_new
        U_bar_prev, r = state.U_bar, 2
    U_next = np.minimum(np.maximum(U_next, problem.U_min), problem.U_max)
    return replace(state, U_bar_prev=U_bar_prev, U_bar=U_next, U_raw=U_new, r=r, a=a, w=w)


def run_iterations(
    problem: DistributedProblem,
    x,
    U_prev,
    eps: float = 1e-8,
    p_max: int = 100,
    w_min: float = -5.0,
    w_max: float = 0.9,
) -> IterationOutcome:
    """Iterate from the warm start of ``U_prev`` until converged or ``p_max``.

    Each pass ends with one broadcast of the relaxed iterate, so
    ``transfers == iterations_used``.
    """
    x = np.asarray(x, dtype=float)
    U0 = warm_start(U_prev, problem.net, problem.weights.Np)
    state = WegsteinState(U0.copy(), U0, U0.copy(), 1, w_min=w_min, w_max=w_max, eps=eps, p_max=p_max)
    p = 0
    converged = False
    residual = np.inf
    while p < p_max:
        state = iterate_step(problem, x, state)
        p += 1
        residual = state.residual
        if np.all(np.abs(state.U_bar - state.U_bar_prev) < eps):
            converged = True
            break
    return IterationOutcome(state.U_bar.copy(), p, converged, p, float(residual))
