"""Condensed (parameter-affine) MPC problem data.

Stacked input vectors are ordered subsystem-major: ``U = [U_1, ..., U_M]``
with ``U_i = [u_i(0), ..., u_i(Np-1)]``. The parametric QP is

    min_U  1/2 U'HU + (theta' H_t + c) U      s.t.  G U <= b + F theta

and the decision-independent part of the cost is ``1/2 theta' Y theta``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .numerics import DimensionError, as_matrix, as_vector, block_diag, powers
from .plant import Bounds, StateSpaceModel, SubsystemNetwork
from .polyhedra import Polyhedron


@dataclass(frozen=True, eq=False)
class MPCWeights:
    """Assembled weights; ``rho`` scales subsystem blocks of ``Q``, ``R``, ``P``."""

    Q: np.ndarray
    R: np.ndarray
    P: np.ndarray
    Np: int
    rho: np.ndarray = field(default_factory=lambda: np.ones(1))

    def __post_init__(self):
        for name in ("Q", "R", "P"):
            m = as_matrix(getattr(self, name), name)
            if not np.allclose(m, m.T, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
            object.__setattr__(self, name, m)
        if np.linalg.eigvalsh(self.Q)[0] < -1e-12 or np.linalg.eigvalsh(self.P)[0] < -1e-12:
            raise ValueError("Q and P must be positive semidefinite")
        if np.linalg.eigvalsh(self.R)[0] <= 0:
            raise ValueError("R must be positive definite")
        if self.Np < 1:
            raise ValueError("Np must be at least 1")
        rho = as_vector(self.rho, "rho")
        if np.any(rho <= 0):
            raise ValueError("rho must be positive")
        object.__setattr__(self, "rho", rho)

    @classmethod
    def default(cls, n_x: int, n_u: int, Np: int = 3, M: int = 1) -> "MPCWeights":
        return cls(np.eye(n_x), np.eye(n_u), np.eye(n_x), Np, np.ones(M))

    @classmethod
    def for_network(cls, net: SubsystemNetwork, Np: int = 3, rho=None) -> "MPCWeights":
        rho = np.ones(net.M) if rho is None else rho
        return cls(np.eye(net.n_x), np.eye(net.n_u), np.eye(net.n_x), Np, rho)

    def effective(self, n_x_i, n_u_i) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if len(n_x_i) != self.rho.shape[0]:
            if self.rho.shape[0] == 1:
                rho = np.full(len(n_x_i), self.rho[0])
            else:
                raise DimensionError("rho length does not match the number of subsystems")
        else:
            rho = self.rho
        dx = np.sqrt(np.repeat(rho, n_x_i))
        du = np.sqrt(np.repeat(rho, n_u_i))
        return (dx[:, None] * self.Q * dx), (du[:, None] * self.R * du), (dx[:, None] * self.P * dx)


@dataclass(frozen=True, eq=False)
class PredictionMatrices:
    """Stacked ``x(1..Np) = Sx x(0) + Su U`` with ``U`` time-major."""

    Sx: np.ndarray
    Su: np.ndarray


@dataclass(frozen=True, eq=False)
class CondensedQP:
    H: np.ndarray
    H_t: np.ndarray
    c: np.ndarray
    G: np.ndarray
    b: np.ndarray
    F: np.ndarray
    Y: np.ndarray | None = None

    def __post_init__(self):
        n_c = self.G.shape[0]
        if self.b.shape[0] != n_c or self.F.shape[0] != n_c:
            raise DimensionError("G, b, F row counts differ")
        if self.H_t.shape != (self.F.shape[1], self.G.shape[1]):
            raise DimensionError("H_t must be n_par x n_dec")

    @property
    def n_dec(self) -> int:
        return self.G.shape[1]

    @property
    def n_par(self) -> int:
        return self.F.shape[1]

    @property
    def n_c(self) -> int:
        return self.G.shape[0]

    def linear_term(self, theta) -> np.ndarray:
        return self.H_t.T @ theta + self.c

    def rhs(self, theta) -> np.ndarray:
        return self.b + self.F @ theta

    def objective(self, U, theta, full: bool = False) -> float:
        val = 0.5 * U @ self.H @ U + self.linear_term(theta) @ U
        if full and self.Y is not None:
            val += 0.5 * theta @ self.Y @ theta
        return float(val)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for arr in (self.H, self.H_t, self.c, self.G, self.b, self.F):
            a = np.ascontiguousarray(arr, dtype="<f8")
            h.update(str(a.shape).encode())
            h.update(a.tobytes())
        return h.hexdigest()


def build_prediction(model: StateSpaceModel, Np: int) -> PredictionMatrices:
    if Np < 1:
        raise ValueError("Np must be at least 1")
    A, B = model.A, model.B
    n, m = model.n_x, model.n_u
    Ap = powers(A, Np + 1)
    Sx = np.vstack(Ap[1:])
    Su = np.zeros((Np * n, Np * m))
    for l in range(Np):
        for q in range(l + 1):
            Su[l * n : (l + 1) * n, q * m : (q + 1) * m] = Ap[l - q] @ B
    return PredictionMatrices(Sx, Su)


def time_to_subsystem(n_u_i, Np: int) -> np.ndarray:
    """Permutation ``Pi`` with ``U_time = Pi @ U_subsystem``."""
    n_u = int(sum(n_u_i))
    Pi = np.zeros((Np * n_u, Np * n_u))
    uoff = np.concatenate([[0], np.cumsum(n_u_i)]).astype(int)
    for j, nj in enumerate(n_u_i):
        for l in range(Np):
            for c in range(nj):
                Pi[l * n_u + uoff[j] + c, Np * uoff[j] + l * nj + c] = 1.0
    return Pi


@dataclass(frozen=True, eq=False)
class _Stacked:
    Sx: np.ndarray
    Su: np.ndarray  # subsystem-major columns
    H: np.ndarray
    H_t: np.ndarray
    Y: np.ndarray
    U_max: np.ndarray
    U_min: np.ndarray
    X_max: np.ndarray
    X_min: np.ndarray


def _stack(model: StateSpaceModel, weights: MPCWeights, bounds: Bounds, n_x_i, n_u_i) -> _Stacked:
    Np = weights.Np
    if weights.Q.shape != (model.n_x, model.n_x) or weights.R.shape != (model.n_u, model.n_u):
        raise DimensionError("weights do not match the model")
    if bounds.x_min.shape[0] != model.n_x or bounds.u_min.shape[0] != model.n_u:
        raise DimensionError("bounds do not match the model")
    Qe, Re, Pe = weights.effective(n_x_i, n_u_i)
    pred = build_prediction(model, Np)
    Pi = time_to_subsystem(n_u_i, Np)
    Su = pred.Su @ Pi
    Qbar = block_diag(*([Qe] * (Np - 1) + [Pe]))
    Rbar = Pi.T @ np.kron(np.eye(Np), Re) @ Pi
    H = Su.T @ Qbar @ Su + Rbar
    H = 0.5 * (H + H.T)
    H_t = pred.Sx.T @ Qbar @ Su
    Y = Qe + pred.Sx.T @ Qbar @ pred.Sx
    return _Stacked(
        Sx=pred.Sx,
        Su=Su,
        H=H,
        H_t=H_t,
        Y=0.5 * (Y + Y.T),
        U_max=Pi.T @ np.tile(bounds.u_max, Np),
        U_min=Pi.T @ np.tile(bounds.u_min, Np),
        X_max=np.tile(bounds.x_max, Np),
        X_min=np.tile(bounds.x_min, Np),
    )


def condense_centralized(model: StateSpaceModel, weights: MPCWeights, bounds: Bounds, n_x_i=None, n_u_i=None) -> CondensedQP:
    """Condensed centralized problem with parameter ``theta = x(k)``.

    Rows are ordered: upper state bounds for ``l = 1..Np``, lower state
    bounds, upper input bounds, lower input bounds.
    """
    n_x_i = (model.n_x,) if n_x_i is None else tuple(n_x_i)
    n_u_i = (model.n_u,) if n_u_i is None else tuple(n_u_i)
    s = _stack(model, weights, bounds, n_x_i, n_u_i)
    nd = s.H.shape[0]
    G = np.vstack([s.Su, -s.Su, np.eye(nd), -np.eye(nd)])
    b = np.concatenate([s.X_max, -s.X_min, s.U_max, -s.U_min])
    F = np.vstack([-s.Sx, s.Sx, np.zeros((2 * nd, model.n_x))])
    return CondensedQP(s.H, s.H_t, np.zeros(nd), G, b, F, s.Y)


def condense_network(net: SubsystemNetwork, weights: MPCWeights) -> CondensedQP:
    return condense_centralized(net.model(), weights, net.bounds, net.n_x_i, net.n_u_i)


def decision_blocks(net: SubsystemNetwork, Np: int) -> list[np.ndarray]:
    """Index arrays of ``U_i`` inside the stacked ``U``."""
    off = np.concatenate([[0], np.cumsum(net.n_u_i)]).astype(int) * Np
    return [np.arange(off[i], off[i + 1]) for i in range(net.M)]


def other_blocks(net: SubsystemNetwork, Np: int, i: int) -> np.ndarray:
    """Index array of ``V_i`` (all inputs except controller ``i``) inside ``U``."""
    blocks = decision_blocks(net, Np)
    return np.concatenate([blocks[j] for j in range(net.M) if j != i] or [np.zeros(0, dtype=int)])


def condense_local(net: SubsystemNetwork, weights: MPCWeights, i: int, bounds: Bounds | None = None) -> CondensedQP:
    """Parametric problem of local controller ``i`` (0-based).

    Decision ``U_i``; parameter ``theta_i = [x(k), V_i]``. The objective is
    the plantwide cost; constraints are every state bound plus the own input
    box.
    """
    if not 0 <= i < net.M:
        raise IndexError(f"subsystem index {i} out of range for M={net.M}")
    bounds = net.bounds if bounds is None else bounds
    model = net.model()
    s = _stack(model, weights, bounds, net.n_x_i, net.n_u_i)
    E = decision_blocks(net, weights.Np)[i]
    W = other_blocks(net, weights.Np, i)
    H = s.H[np.ix_(E, E)]
    H_t = np.vstack([s.H_t[:, E], s.H[np.ix_(W, E)]])
    Y = np.block([[s.Y, s.H_t[:, W]], [s.H_t[:, W].T, s.H[np.ix_(W, W)]]])
    SuE, SuW = s.Su[:, E], s.Su[:, W]
    nd = E.shape[0]
    n_par = model.n_x + W.shape[0]
    G = np.vstack([SuE, -SuE, np.eye(nd), -np.eye(nd)])
    b = np.concatenate([s.X_max, -s.X_min, s.U_max[E], -s.U_min[E]])
    F = np.vstack(
        [
            np.hstack([-s.Sx, -SuW]),
            np.hstack([s.Sx, SuW]),
            np.zeros((2 * nd, n_par)),
        ]
    )
    return CondensedQP(H, H_t, np.zeros(nd), G, b, F, Y)


def input_box(net: SubsystemNetwork, Np: int) -> tuple[np.ndarray, np.ndarray]:
    """Stacked (subsystem-major) input bounds ``(U_min, U_max)``."""
    Pi = time_to_subsystem(net.n_u_i, Np)
    return Pi.T @ np.tile(net.bounds.u_min, Np), Pi.T @ np.tile(net.bounds.u_max, Np)


def local_theta_box(net: SubsystemNetwork, Np: int, i: int) -> Polyhedron:
    """Exploration box for ``theta_i``: state box times the foreign input boxes."""
    U_min, U_max = input_box(net, Np)
    W = other_blocks(net, Np, i)
    lo = np.concatenate([net.bounds.x_min, U_min[W]])
    hi = np.concatenate([net.bounds.x_max, U_max[W]])
    return Polyhedron.box(lo, hi)


def centralized_theta_box(net: SubsystemNetwork) -> Polyhedron:
    return Polyhedron.box(net.bounds.x_min, net.bounds.x_max)


def plantwide_cost(net: SubsystemNetwork, weights: MPCWeights, x0, U) -> float:
    """Plantwide cost by forward simulation of the assembled model."""
    model = net.model()
    Qe, Re, Pe = weights.effective(net.n_x_i, net.n_u_i)
    Np = weights.Np
    Pi = time_to_subsystem(net.n_u_i, Np)
    Ut = (Pi @ U).reshape(Np, net.n_u)
    x = np.asarray(x0, dtype=float)
    J = 0.0
    for l in range(Np):
        J += 0.5 * x @ Qe @ x + 0.5 * Ut[l] @ Re @ Ut[l]
        x = model.step(x, Ut[l])
    return float(J + 0.5 * x @ Pe @ x)


def first_input(net: SubsystemNetwork, Np: int, U) -> np.ndarray:
    """``u(0|k)`` from a stacked subsystem-major ``U``."""
    Pi = time_to_subsystem(net.n_u_i, Np)
    return (Pi @ U)[: net.n_u]
