"""Dense linear algebra helpers shared by the rest of the package.

Matrices and vectors are plain ``numpy.ndarray`` objects of dtype float64.
"""

from __future__ import annotations

import warnings
from typing import Sequence

import numpy as np
import scipy.linalg

#: Reciprocal condition numbers below this are treated as singular.
RCOND_TOL = 1e-12


class DimensionError(ValueError):
    """Operands have non-conforming shapes."""


class SingularError(np.linalg.LinAlgError):
    """A square system is (numerically) singular."""


class RankDeficient(np.linalg.LinAlgError):
    """A least-squares matrix lacks full column rank."""


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def as_vector(v, name: str = "vector") -> np.ndarray:
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    return v


def solve_linear(A, b, rcond_tol: float = RCOND_TOL) -> np.ndarray:
    """Solve ``A x = b`` with a partially pivoted LU factorization.

    Raises
    ------
    DimensionError
        If ``A`` is not square or does not conform with ``b``.
    SingularError
        If the 1-norm reciprocal condition estimate is below ``rcond_tol``.
    """
    A = as_matrix(A, "A")
    b = np.asarray(b, dtype=float)
    n, m = A.shape
    if n != m:
        raise DimensionError(f"A must be square, got {A.shape}")
    if b.shape[0] != n:
        raise DimensionError(f"b has {b.shape[0]} rows, expected {n}")
    if n == 0:
        return np.zeros_like(b)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    if np.any(np.diag(lu) == 0.0):
        raise SingularError("matrix is exactly singular")
    anorm = np.linalg.norm(A, 1)
    (gecon,) = scipy.linalg.get_lapack_funcs(("gecon",), (lu,))
    rcond, info = gecon(lu, anorm, norm="1")
    if info != 0 or rcond < rcond_tol:
        raise SingularError(f"matrix is ill-conditioned (rcond={rcond:.3e})")
    return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)


def solve_least_squares(A, b, rank_tol: float = 1e-10) -> np.ndarray:
    """Minimize ``||A x - b||_2`` for ``A`` of full column rank."""
    A = as_matrix(A, "A")
    b = as_vector(b, "b")
    if A.shape[0] != b.shape[0]:
        raise DimensionError(f"A has {A.shape[0]} rows, b has {b.shape[0]}")
    x, _, rank, sv = np.linalg.lstsq(A, b, rcond=None)
    if rank < A.shape[1] or (sv.size and sv[-1] <= rank_tol * sv[0]):
        raise RankDeficient(f"column rank {rank} < {A.shape[1]}")
    return x


def block_diag(*blocks) -> np.ndarray:
    return scipy.linalg.block_diag(*[as_matrix(b) for b in blocks])


def block_assemble(shape: tuple[int, int], blocks: Sequence[tuple[int, int, np.ndarray]]) -> np.ndarray:
    """Place each ``(row, col, block)`` into a zero matrix of ``shape``.

    Later blocks overwrite earlier ones where they overlap.
    """
    out = np.zeros(shape)
    for r, c, blk in blocks:
        blk = as_matrix(blk)
        if r < 0 or c < 0 or r + blk.shape[0] > shape[0] or c + blk.shape[1] > shape[1]:
            raise DimensionError(f"block of shape {blk.shape} at ({r}, {c}) exceeds {shape}")
        out[r : r + blk.shape[0], c : c + blk.shape[1]] = blk
    return out


def mat_power(A, k: int) -> np.ndarray:
    A = as_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise DimensionError("matrix power needs a square matrix")
    return np.linalg.matrix_power(A, k)


def powers(A, count: int) -> list[np.ndarray]:
    """Return ``[A^0, A^1, ..., A^(count-1)]``."""
    A = as_matrix(A)
    out = [np.eye(A.shape[0])]
    for _ in range(1, count):
        out.append(out[-1] @ A)
    return out


def matrix_rank(A, rel_tol: float = 1e-9) -> int:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0
    sv = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(sv > rel_tol * max(sv[0], 1.0)))
