"""Coupled LTI plants: data types, random generation and the two-subsystem fixture."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import DimensionError, as_matrix, as_vector, block_diag, matrix_rank


class GenerationExhausted(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """``x(k+1) = A x(k) + B u(k)``."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        B = as_matrix(self.B, "B")
        if A.shape[0] != A.shape[1] or B.shape[0] != A.shape[0]:
            raise DimensionError(f"A {A.shape} and B {B.shape} do not conform")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    def step(self, x, u) -> np.ndarray:
        return self.A @ x + self.B @ u

    def is_controllable(self, rel_tol: float = 1e-9) -> bool:
        return matrix_rank(controllability_matrix(self.A, self.B), rel_tol) == self.n_x


def controllability_matrix(A, B) -> np.ndarray:
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


@dataclass(frozen=True, eq=False)
class Bounds:
    x_min: np.ndarray
    x_max: np.ndarray
    u_min: np.ndarray
    u_max: np.ndarray

    def __post_init__(self):
        for name in ("x_min", "x_max", "u_min", "u_max"):
            object.__setattr__(self, name, as_vector(getattr(self, name), name))
        if self.x_min.shape != self.x_max.shape or self.u_min.shape != self.u_max.shape:
            raise DimensionError("bound vectors do not conform")
        if np.any(self.x_min >= 0) or np.any(self.x_max <= 0):
            raise ValueError("origin must lie strictly inside the state box")
        if np.any(self.u_min >= 0) or np.any(self.u_max <= 0):
            raise ValueError("origin must lie strictly inside the input box")

    @property
    def x_half_width(self) -> np.ndarray:
        return 0.5 * (self.x_max - self.x_min)


@dataclass(frozen=True, eq=False)
class SubsystemNetwork:
    """``M`` coupled subsystems ``x_i+ = A_i x_i + sum_j B_ij u_j``.

    ``B_ij[i][j]`` is the effect of input ``j`` on subsystem ``i``; bounds are
    for the assembled state and input vectors.
    """

    A_i: list
    B_ij: list
    bounds: Bounds
    seed: int | None = None
    n_x_i: tuple = field(init=False)
    n_u_i: tuple = field(init=False)

    def __post_init__(self):
        A_i = [as_matrix(a, "A_i") for a in self.A_i]
        M = len(A_i)
        if len(self.B_ij) != M or any(len(row) != M for row in self.B_ij):
            raise DimensionError("B_ij must be an M x M grid")
        B_ij = [[as_matrix(np.reshape(b, (A_i[i].shape[0], -1))) for b in row] for i, row in enumerate(self.B_ij)]
        n_x_i = tuple(a.shape[0] for a in A_i)
        n_u_i = tuple(B_ij[0][j].shape[1] for j in range(M))
        for i in range(M):
            for j in range(M):
                if B_ij[i][j].shape != (n_x_i[i], n_u_i[j]):
                    raise DimensionError(f"B_{i}{j} has shape {B_ij[i][j].shape}")
        if self.bounds.x_min.shape[0] != sum(n_x_i) or self.bounds.u_min.shape[0] != sum(n_u_i):
            raise DimensionError("bounds do not match the assembled dimensions")
        object.__setattr__(self, "A_i", A_i)
        object.__setattr__(self, "B_ij", B_ij)
        object.__setattr__(self, "n_x_i", n_x_i)
        object.__setattr__(self, "n_u_i", n_u_i)

    @property
    def M(self) -> int:
        return len(self.A_i)

    @property
    def n_x(self) -> int:
        return sum(self.n_x_i)

    @property
    def n_u(self) -> int:
        return sum(self.n_u_i)

    def B_j(self, j: int) -> np.ndarray:
        return np.vstack([self.B_ij[i][j] for i in range(self.M)])

    def model(self) -> StateSpaceModel:
        A = block_diag(*self.A_i)
        B = np.hstack([self.B_j(j) for j in range(self.M)])
        return StateSpaceModel(A, B)

    def x_slices(self) -> list[slice]:
        off = np.concatenate([[0], np.cumsum(self.n_x_i)])
        return [slice(int(off[i]), int(off[i + 1])) for i in range(self.M)]

    def u_slices(self) -> list[slice]:
        off = np.concatenate([[0], np.cumsum(self.n_u_i)])
        return [slice(int(off[i]), int(off[i + 1])) for i in range(self.M)]

    def outputs(self, x) -> np.ndarray:
        """Per-subsystem sum of states, used for plotting."""
        return np.array([np.sum(x[s]) for s in self.x_slices()])


def disassemble(model: StateSpaceModel, n_x_i, n_u_i) -> tuple[list, list]:
    """Recover ``A_i`` and ``B_ij`` blocks from an assembled model."""
    xo = np.concatenate([[0], np.cumsum(n_x_i)]).astype(int)
    uo = np.concatenate([[0], np.cumsum(n_u_i)]).astype(int)
    M = len(n_x_i)
    A_i = [model.A[xo[i] : xo[i + 1], xo[i] : xo[i + 1]] for i in range(M)]
    B_ij = [[model.B[xo[i] : xo[i + 1], uo[j] : uo[j + 1]] for j in range(M)] for i in range(M)]
    return A_i, B_ij


def generate_random_plant(
    M: int,
    seed: int,
    n_x_i: int = 2,
    n_u_i: int = 1,
    max_attempts: int = 1000,
) -> SubsystemNetwork:
    """Random controllable network with entries uniform on [-1, 1].

    State upper/lower bounds are drawn from [10, 100] / [-100, -10] and input
    bounds from [1, 5] / [-5, -1]. Draws come from a single PCG64 stream
    seeded with ``seed``; the matrices are redrawn from the same stream until
    the assembled pair is controllable.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    for _ in range(max_attempts):
        A_i = [rng.uniform(-1.0, 1.0, (n_x_i, n_x_i)) for _ in range(M)]
        B_ij = [[rng.uniform(-1.0, 1.0, (n_x_i, n_u_i)) for _ in range(M)] for _ in range(M)]
        bounds = Bounds(
            x_min=-rng.uniform(10.0, 100.0, M * n_x_i),
            x_max=rng.uniform(10.0, 100.0, M * n_x_i),
            u_min=-rng.uniform(1.0, 5.0, M * n_u_i),
            u_max=rng.uniform(1.0, 5.0, M * n_u_i),
        )
        net = SubsystemNetwork(A_i, B_ij, bounds, seed=seed)
        if net.model().is_controllable():
            return net
    raise GenerationExhausted(f"no controllable plant after {max_attempts} draws (seed={seed})")


def fixture_plant() -> SubsystemNetwork:
    """The published two-subsystem example (two states and one input each)."""
    A_i = [
        [[0.1645, 0.7399], [0.0815, -0.4704]],
        [[-0.0411, 0.0894], [0.2786, 0.2946]],
    ]
    B_ij = [
        [[[-0.3639], [-0.7616]], [[0.8797], [0.2911]]],
        [[[0.0878], [0.4421]], [[0.0450], [0.9874]]],
    ]
    bounds = Bounds(
        x_min=[-63.5878, -59.6464, -67.0765, -31.2846],
        x_max=[29.6809, 19.5218, 19.8728, 15.7232],
        u_min=[-1.2686, -1.1090],
        u_max=[3.5116, 4.0879],
    )
    return SubsystemNetwork(A_i, B_ij, bounds)


def sample_initial_state(net: SubsystemNetwork, seed: int, fraction: float = 0.5) -> np.ndarray:
    """Uniform draw from the state box shrunk towards the origin by ``fraction``."""
    rng = np.random.Generator(np.random.PCG64(seed))
    b = net.bounds
    return rng.uniform(fraction * b.x_min, fraction * b.x_max)
