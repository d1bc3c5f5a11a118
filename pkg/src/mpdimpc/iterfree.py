"""Iteration-free distributed explicit MPC.

Each local explicit law is affine in ``theta_i = [x, V_i]`` on its region,
``U_i = T x + S V_i + t``. Fixing one region per controller turns the
coupled laws into one square linear system in the stacked ``U``. A
combination is accepted when the solved ``U`` satisfies every chosen
region's inequalities; among accepted combinations the lowest plantwide
cost wins.

Three strategies choose which combinations to try: all of them
(:func:`if_mpdimpc_full`), those surviving a per-region LP feasibility test
(:func:`if_mpdimpc_v15`), or the neighbourhood of the regions located with
the previous step's inputs (:func:`if_mpdimpc_v2`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dimpc import DistributedProblem, ExplicitLocal, IterationOutcome, run_iterations
from .mpc import MPCWeights, plantwide_cost
from .mpqp import ExplicitSolution, NotFound, neighborhood, point_locate
from .numerics import SingularError, solve_linear
from .opt import solve_lp_feasibility

#: tolerance on region inequalities and the input box at a solved ``U``
VALID_TOL = 1e-6
#: extra slack on the V1.5 feasibility LP so it never drops a valid combination
PRUNE_SLACK = 1e-5


class NoValidCombination(RuntimeError):
    pass


class PointLocationFailed(RuntimeError):
    def __init__(self, i: int):
        super().__init__(f"no critical region of controller {i} contains theta_{i}")
        self.i = i


@dataclass
class LocalLawSplit:
    """Region data of one controller, split into state and foreign-input parts.

    Arrays are stacked over regions; region inequalities are padded with
    ``0 <= inf`` rows so every region has ``rows`` entries. ``S`` and
    ``Phi2`` are embedded into the full stacked-``U`` width (zero in the
    controller's own columns).
    """

    T: np.ndarray  # (n_CR, n_own, n_x)
    S: np.ndarray  # (n_CR, n_own, n_dec)
    t: np.ndarray  # (n_CR, n_own)
    Phi1: np.ndarray  # (n_CR, rows, n_x)
    Phi2: np.ndarray  # (n_CR, rows, n_dec)
    phi: np.ndarray  # (n_CR, rows)
    own: np.ndarray
    others: np.ndarray

    @property
    def n_CR(self) -> int:
        return self.T.shape[0]

    @classmethod
    def from_solution(cls, sol: ExplicitSolution, n_x: int, own, others, n_dec: int) -> "LocalLawSplit":
        k = sol.n_CR
        n_own = len(own)
        rows = max((r.region.n_ineq for r in sol.regions), default=0)
        T = np.zeros((k, n_own, n_x))
        S = np.zeros((k, n_own, n_dec))
        t = np.zeros((k, n_own))
        Phi1 = np.zeros((k, rows, n_x))
        Phi2 = np.zeros((k, rows, n_dec))
        phi = np.full((k, rows), np.inf)
        for v, r in enumerate(sol.regions):
            T[v] = r.gain[:, :n_x]
            S[v][:, others] = r.gain[:, n_x:]
            t[v] = r.offset
            m = r.region.n_ineq
            Phi1[v, :m] = r.region.Phi[:, :n_x]
            Phi2[v, :m][:, others] = r.region.Phi[:, n_x:]
            phi[v, :m] = r.region.phi
        return cls(T, S, t, Phi1, Phi2, phi, np.asarray(own), np.asarray(others))

    def foreign_rhs(self, x) -> np.ndarray:
        """``phi - Phi1 x`` per region: the bound on ``Phi2 V_i`` at this state."""
        return self.phi - np.einsum("vrn,n->vr", self.Phi1, x)


@dataclass
class SimultaneousResult:
    U: np.ndarray | None
    objective: float
    combination: tuple
    valid: bool
    singular: bool


@dataclass
class IFResult:
    U: np.ndarray
    combination: tuple
    objective: float
    combos_evaluated: int
    candidates: list = field(default_factory=list)
    used_fallback: bool = False
    iterations: int = 0
    transfers: int = 1


class IterationFreeController:
    """Precomputed data shared by the three iteration-free strategies."""

    def __init__(self, problem: DistributedProblem, solutions: list[ExplicitSolution], valid_tol: float = VALID_TOL, chunk: int = 20000):
        if len(solutions) != problem.M:
            raise ValueError("need one explicit solution per subsystem")
        self.problem = problem
        self.solutions = solutions
        self.valid_tol = valid_tol
        self.chunk = chunk
        n_x = problem.net.n_x
        n = problem.n_dec
        self.n_x = n_x
        self.splits = [
            LocalLawSplit.from_solution(s, n_x, problem.own[i], problem.others[i], n) for i, s in enumerate(solutions)
        ]
        # block row i of (I - A_comb) for every region of controller i
        self._rows = []
        for i, sp in enumerate(self.splits):
            E = np.zeros((len(sp.own), n))
            E[np.arange(len(sp.own)), sp.own] = 1.0
            self._rows.append(E[None] - sp.S)

    @property
    def net(self):
        return self.problem.net

    @property
    def weights(self) -> MPCWeights:
        return self.problem.weights

    def full_count(self) -> int:
        return int(np.prod([sp.n_CR for sp in self.splits], dtype=np.int64))

    def solve_combination(self, combination, x) -> SimultaneousResult:
        """Solve the stacked laws of one region combination at state ``x``."""
        L = tuple(int(v) for v in combination)
        K = np.vstack([self._rows[i][v] for i, v in enumerate(L)])
        rhs = np.concatenate([sp.T[v] @ x + sp.t[v] for sp, v in zip(self.splits, L)])
        # rows of K follow controller order; permute to stacked-U order
        order = np.concatenate([sp.own for sp in self.splits])
        Kp = np.zeros_like(K)
        rp = np.zeros_like(rhs)
        Kp[order] = K
        rp[order] = rhs
        try:
            U = solve_linear(Kp, rp)
        except SingularError:
            return SimultaneousResult(None, np.inf, L, False, True)
        ok = self._valid_one(L, x, U)
        J = plantwide_cost(self.net, self.weights, x, U) if ok else np.inf
        return SimultaneousResult(U, J, L, ok, False)

    def _valid_one(self, L, x, U) -> bool:
        tol = self.valid_tol
        p = self.problem
        if np.any(U < p.U_min - tol) or np.any(U > p.U_max + tol):
            return False
        for sp, v in zip(self.splits, L):
            if np.any(sp.Phi2[v] @ U > sp.phi[v] - sp.Phi1[v] @ x + tol):
                return False
        return True

    def _enumerate(self, candidates: list, x) -> tuple[SimultaneousResult | None, int]:
        """Evaluate the product of ``candidates`` (one id list per controller).

        Returns the selected result and the number of combinations tried.
        """
        sizes = [len(c) for c in candidates]
        total = int(np.prod(sizes, dtype=np.int64))
        if total == 0:
            return None, 0
        cand_arr = [np.asarray(c, dtype=np.int64) for c in candidates]
        order = np.concatenate([sp.own for sp in self.splits])
        inv = np.empty_like(order)
        inv[order] = np.arange(order.shape[0])
        rhs_i = [np.einsum("von,n->vo", sp.T, x) + sp.t for sp in self.splits]
        bnd_i = [sp.foreign_rhs(x) for sp in self.splits]
        p = self.problem
        tol = self.valid_tol
        valid_combos = []
        for start in range(0, total, self.chunk):
            flat = np.arange(start, min(total, start + self.chunk), dtype=np.int64)
            idx = np.stack(np.unravel_index(flat, sizes), axis=1)
            ids = np.stack([cand_arr[i][idx[:, i]] for i in range(len(sizes))], axis=1)
            K = np.concatenate([self._rows[i][ids[:, i]] for i in range(len(sizes))], axis=1)[:, inv]
            r = np.concatenate([rhs_i[i][ids[:, i]] for i in range(len(sizes))], axis=1)[:, inv]
            U, good = _batch_solve(K, r)
            good &= np.all(U >= p.U_min - tol, axis=1) & np.all(U <= p.U_max + tol, axis=1)
            for i, sp in enumerate(self.splits):
                sel = np.flatnonzero(good)
                if sel.size == 0:
                    break
                v = ids[sel, i]
                lhs = np.einsum("nrk,nk->nr", sp.Phi2[v], U[sel])
                good[sel] = np.all(lhs <= bnd_i[i][v] + tol, axis=1)
            for row in np.flatnonzero(good):
                valid_combos.append(tuple(int(a) for a in ids[row]))
        best = None
        results = []
        for L in valid_combos:
            res = self.solve_combination(L, x)
            if res.valid:
                results.append(res)
        if results:
            jmin = min(r.objective for r in results)
            ties = [r for r in results if r.objective <= jmin + 1e-10 * (1.0 + abs(jmin))]
            best = min(ties, key=lambda r: r.combination)
        return best, total

    def full(self, x) -> IFResult:
        """Enumerate every region combination.

        Raises
        ------
        NoValidCombination
            If no combination yields a consistent solution.
        """
        x = np.asarray(x, dtype=float)
        cands = [list(range(sp.n_CR)) for sp in self.splits]
        best, n = self._enumerate(cands, x)
        if best is None:
            raise NoValidCombination("no region combination is consistent at this state")
        return IFResult(best.U, best.combination, best.objective, n, cands)

    def pruned_candidates(self, x, slack: float = PRUNE_SLACK) -> list[list[int]]:
        """Regions whose inequalities admit some foreign-input vector at ``x``."""
        x = np.asarray(x, dtype=float)
        out = []
        for sp in self.splits:
            bnd = sp.foreign_rhs(x)
            keep = []
            for v in range(sp.n_CR):
                rows = np.isfinite(bnd[v])
                G = sp.Phi2[v][rows][:, sp.others]
                h = bnd[v][rows] + slack
                if G.shape[1] == 0:
                    if np.all(h >= 0.0):
                        keep.append(v)
                    continue
                zero = np.all(G == 0.0, axis=1)
                if np.any(h[zero] < 0.0):
                    continue
                if solve_lp_feasibility(G[~zero], h[~zero]) is not None:
                    keep.append(v)
            out.append(keep)
        return out

    def v15(self, x) -> IFResult:
        """Enumerate only the LP-feasible regions of each controller."""
        x = np.asarray(x, dtype=float)
        cands = self.pruned_candidates(x)
        best, n = self._enumerate(cands, x)
        if best is None:
            raise NoValidCombination("no region combination is consistent at this state")
        return IFResult(best.U, best.combination, best.objective, n, cands)

    def v2_candidates(self, x, U_prev, depth: int = 1) -> list[list[int]]:
        p = self.problem
        out = []
        for i, sol in enumerate(self.solutions):
            theta = p.theta(i, x, U_prev)
            try:
                v = point_locate(sol, theta).id
            except NotFound as exc:
                raise PointLocationFailed(i) from exc
            out.append(neighborhood(sol, v, depth))
        return out

    def v2(self, x, U_prev, depth: int = 1, eps: float = 1e-8, p_max: int = 100, w_min: float = -5.0, w_max: float = 0.9) -> IFResult:
        """Neighbourhood search around the previous step's regions.

        Falls back to the iterative explicit scheme when the neighbourhood
        holds no consistent combination or point location fails.
        """
        x = np.asarray(x, dtype=float)
        U_prev = np.asarray(U_prev, dtype=float)
        try:
            cands = self.v2_candidates(x, U_prev, depth)
        except PointLocationFailed:
            cands, best, n = [], None, 0
        else:
            best, n = self._enumerate(cands, x)
        if best is not None:
            return IFResult(best.U, best.combination, best.objective, n, cands)
        out: IterationOutcome = run_iterations(self.explicit, x, U_prev, eps=eps, p_max=p_max, w_min=w_min, w_max=w_max)
        J = plantwide_cost(self.net, self.weights, x, out.U_star)
        return IFResult(out.U_star, (), J, n, cands, used_fallback=True, iterations=out.iterations_used, transfers=out.transfers)

    @property
    def explicit(self) -> DistributedProblem:
        p = self.problem
        return DistributedProblem(p.net, p.weights, [ExplicitLocal(s) for s in self.solutions], p.own, p.others, p.U_min, p.U_max)


def _batch_solve(K, r):
    """Solve a stack of square systems; flags singular or non-finite ones."""
    n = K.shape[0]
    good = np.ones(n, dtype=bool)
    try:
        U = np.linalg.solve(K, r[..., None])[..., 0]
    except np.linalg.LinAlgError:
        U = np.full(r.shape, np.nan)
        for j in range(n):
            try:
                U[j] = np.linalg.solve(K[j], r[j])
            except np.linalg.LinAlgError:
                good[j] = False
    good &= np.all(np.isfinite(U), axis=1)
    return np.where(good[:, None], U, 0.0), good


def if_mpdimpc_full(ctrl: IterationFreeController, theta_bar) -> np.ndarray:
    return ctrl.full(theta_bar).U


def if_mpdimpc_v15(ctrl: IterationFreeController, theta_bar) -> np.ndarray:
    return ctrl.v15(theta_bar).U


def if_mpdimpc_v2(ctrl: IterationFreeController, theta_bar, U_prev, **kw) -> tuple[np.ndarray, bool]:
    res = ctrl.v2(theta_bar, U_prev, **kw)
    return res.U, res.used_fallback
