"""Closed-loop simulation and benchmarking of the controllers.

Controller kinds:

``cmpc``      centralized online QP
``dimpc``     iterative distributed, online local QPs
``impdimpc``  iterative distributed, explicit local laws
``if``        iteration-free, full enumeration of region combinations
``if15``      iteration-free, LP-pruned enumeration
``if2``       iteration-free, neighbour search with iterative fallback
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from .dimpc import DistributedProblem, LocalSolveFailed, run_iterations
from .iterfree import IterationFreeController, NoValidCombination
from .mpc import MPCWeights, condense_local, condense_network, first_input, local_theta_box
from .mpqp import ExplicitSolution, solve_mpqp
from .opt import ActiveSetQP, QPError
from .plant import SubsystemNetwork, generate_random_plant

KINDS = ("cmpc", "dimpc", "impdimpc", "if", "if15", "if2")
EXPLICIT_KINDS = ("impdimpc", "if", "if15", "if2")
ITERATION_FREE = ("if", "if15", "if2")
#: settling band as a fraction of each state's box half-width
SETTLING_FRACTION = 2e-4


class ControllerFailed(RuntimeError):
    def __init__(self, k: int, cause: Exception, trace: "SimulationTrace | None" = None):
        super().__init__(f"controller failed at step {k}: {cause}")
        self.k = k
        self.cause = cause
        self.trace = trace


@dataclass
class ControllerConfig:
    kind: str
    eps: float = 1e-8
    p_max: int = 100
    w_min: float = -5.0
    w_max: float = 0.9
    depth: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown controller kind {self.kind!r}; expected one of {KINDS}")


@dataclass
class StepResult:
    U: np.ndarray
    iterations: int = 1
    transfers: int = 0
    combos: int = 0
    used_fallback: bool = False
    converged: bool = True


class Controller:
    """Computes the stacked input sequence for one sample step."""

    def __init__(self, net: SubsystemNetwork, weights: MPCWeights, config: ControllerConfig, solutions=None):
        self.net = net
        self.weights = weights
        self.config = config
        kind = config.kind
        if kind in EXPLICIT_KINDS and solutions is None:
            solutions = build_explicit(net, weights)
        self.solutions = solutions
        if kind == "cmpc":
            self._qp = condense_network(net, weights)
            self._solver = ActiveSetQP(self._qp.H)
        elif kind == "dimpc":
            self._problem = DistributedProblem.build(net, weights, "online")
        elif kind == "impdimpc":
            self._problem = DistributedProblem.build(net, weights, "explicit", solutions)
        else:
            problem = DistributedProblem.build(net, weights, "explicit", solutions)
            self._if = IterationFreeController(problem, solutions)

    def compute(self, x, U_prev) -> StepResult:
        c = self.config
        kind = c.kind
        if kind == "cmpc":
            qp = self._qp
            sol = self._solver.solve(qp.linear_term(x), qp.G, qp.rhs(x))
            return StepResult(sol.x_opt, 1, 0)
        if kind in ("dimpc", "impdimpc"):
            out = run_iterations(self._problem, x, U_prev, c.eps, c.p_max, c.w_min, c.w_max)
            return StepResult(out.U_star, out.iterations_used, out.transfers, converged=out.converged)
        if kind == "if":
            r = self._if.full(x)
        elif kind == "if15":
            r = self._if.v15(x)
        else:
            r = self._if.v2(x, U_prev, c.depth, c.eps, c.p_max, c.w_min, c.w_max)
        # one exchange per step by definition; fallback work shows in ``iterations``
        return StepResult(r.U, max(1, r.iterations), 1, r.combos_evaluated, r.used_fallback)


def build_explicit(net: SubsystemNetwork, weights: MPCWeights, **kw) -> list[ExplicitSolution]:
    """Offline phase: one explicit solution per local controller."""
    return [solve_mpqp(condense_local(net, weights, i), local_theta_box(net, weights.Np, i), **kw) for i in range(net.M)]


@dataclass
class SimulationTrace:
    x: list = field(default_factory=list)  # x(0..K), one longer than u
    u: list = field(default_factory=list)
    y: list = field(default_factory=list)
    U: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    transfers: list = field(default_factory=list)
    combos: list = field(default_factory=list)
    used_fallback: list = field(default_factory=list)
    converged: list = field(default_factory=list)
    wall_time_ns: list = field(default_factory=list)
    failure: str | None = None
    failed_at: int | None = None

    @property
    def steps(self) -> int:
        return len(self.u)

    def states(self) -> np.ndarray:
        return np.array(self.x)

    def inputs(self) -> np.ndarray:
        return np.array(self.u)


def simulate(
    net: SubsystemNetwork,
    weights: MPCWeights,
    config: ControllerConfig | str,
    x0,
    steps: int = 100,
    solutions=None,
    controller: Controller | None = None,
    repeats: int = 1,
) -> SimulationTrace:
    """Receding-horizon closed loop over ``steps`` samples.

    ``repeats > 1`` reruns each step's computation and records the median
    wall time (benchmark mode). Raises :class:`ControllerFailed` carrying the
    truncated trace.
    """
    if isinstance(config, str):
        config = ControllerConfig(config)
    ctrl = controller or Controller(net, weights, config, solutions)
    model = net.model()
    b = net.bounds
    x = np.asarray(x0, dtype=float).copy()
    if np.any(x < b.x_min) or np.any(x > b.x_max):
        raise ValueError("x0 lies outside the state box")
    Np = weights.Np
    U_prev = np.zeros(Np * net.n_u)
    tr = SimulationTrace()
    tr.x.append(x.copy())
    tr.y.append(net.outputs(x))
    for k in range(steps):
        times = []
        try:
            for _ in range(max(1, repeats)):
                t0 = time.perf_counter_ns()
                res = ctrl.compute(x, U_prev)
                times.append(time.perf_counter_ns() - t0)
        except (QPError, LocalSolveFailed, NoValidCombination, np.linalg.LinAlgError) as exc:
            tr.failure = f"{type(exc).__name__}: {exc}"
            tr.failed_at = k
            raise ControllerFailed(k, exc, tr) from exc
        u = np.clip(first_input(net, Np, res.U), b.u_min, b.u_max)
        x = model.step(x, u)
        tr.u.append(u)
        tr.U.append(res.U)
        tr.x.append(x.copy())
        tr.y.append(net.outputs(x))
        tr.iterations.append(res.iterations)
        tr.transfers.append(res.transfers)
        tr.combos.append(res.combos)
        tr.used_fallback.append(res.used_fallback)
        tr.converged.append(res.converged)
        tr.wall_time_ns.append(int(statistics.median(times)))
        U_prev = res.U
    return tr


def settling_step(trace: SimulationTrace, net: SubsystemNetwork, band=None) -> int | None:
    """First step after which every state stays inside the equilibrium band.

    The default band is ``SETTLING_FRACTION`` times each state's box
    half-width; pass an absolute ``band`` (scalar or per state) to override.
    """
    X = trace.states()
    tol = SETTLING_FRACTION * net.bounds.x_half_width if band is None else np.broadcast_to(band, X.shape[1:])
    inside = np.all(np.abs(X) <= tol, axis=1)
    if not inside[-1]:
        return None
    out = np.flatnonzero(~inside)
    return 0 if out.size == 0 else int(out[-1] + 1)


def cmpc_feasible_run(net: SubsystemNetwork, weights: MPCWeights, x0, steps: int) -> bool:
    """True iff the centralized controller stays feasible for ``steps`` samples."""
    try:
        simulate(net, weights, "cmpc", x0, steps)
    except ControllerFailed:
        return False
    return True


def admissible_initial_state(
    net: SubsystemNetwork,
    weights: MPCWeights,
    seed: int,
    fraction: float = 0.5,
    steps: int = 100,
    max_attempts: int = 50,
) -> np.ndarray | None:
    """First draw from a seeded stream whose centralized closed loop stays feasible.

    Draws are uniform in the state box scaled by ``fraction``. Returns
    ``None`` when every attempt fails (an open-loop unstable plant can leave
    the state box under a short horizon from almost anywhere).
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    b = net.bounds
    for _ in range(max_attempts):
        x0 = rng.uniform(fraction * b.x_min, fraction * b.x_max)
        if cmpc_feasible_run(net, weights, x0, steps):
            return x0
    return None


@dataclass
class BenchmarkRecord:
    seed: int
    M: int
    controller: str
    settling_step: int | None
    total_wall_time: float
    settling_wall_time: float | None
    max_iterations: int
    mean_iterations: float
    total_transfers: int
    total_combos: int
    n_CR: list
    steps: int
    fallback_steps: int = 0
    failure: str | None = None

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def record_from_trace(tr: SimulationTrace, net: SubsystemNetwork, seed: int, kind: str, n_CR) -> BenchmarkRecord:
    s = settling_step(tr, net) if tr.failure is None and tr.steps else None
    wt = np.asarray(tr.wall_time_ns, dtype=float) * 1e-9
    its = tr.iterations or [0]
    return BenchmarkRecord(
        seed=seed,
        M=net.M,
        controller=kind,
        settling_step=s,
        total_wall_time=float(wt.sum()),
        settling_wall_time=None if s is None else float(wt[:s].sum()),
        max_iterations=int(max(its)),
        mean_iterations=float(np.mean(its)),
        total_transfers=int(sum(tr.transfers)),
        total_combos=int(sum(tr.combos)),
        n_CR=list(n_CR),
        steps=tr.steps,
        fallback_steps=int(sum(tr.used_fallback)),
        failure=tr.failure,
    )


def plant_seed(M: int, j: int, base_seed: int = 0) -> int:
    return base_seed + 1000 * M + j


def run_cell(M: int, j: int, controllers, base_seed=0, steps=100, Np=3, fraction=0.5, repeats=3, config=None) -> list[BenchmarkRecord]:
    """All controllers on plant ``j`` of size ``M``."""
    seed = plant_seed(M, j, base_seed)
    net = generate_random_plant(M, seed)
    w = MPCWeights.for_network(net, Np)
    x0 = admissible_initial_state(net, w, seed + 500, fraction, steps)
    sols = build_explicit(net, w) if any(c in EXPLICIT_KINDS for c in controllers) else None
    n_CR = [s.n_CR for s in sols] if sols else []
    out = []
    for kind in controllers:
        if x0 is None:
            tr = SimulationTrace(failure="no admissible initial state", failed_at=0)
        else:
            try:
                tr = simulate(net, w, ControllerConfig(kind, **(config or {})), x0, steps, solutions=sols, repeats=repeats)
            except ControllerFailed as exc:
                tr = exc.trace
        out.append(record_from_trace(tr, net, seed, kind, n_CR))
    return out


def benchmark_suite(
    M_list,
    n_plants: int,
    controllers,
    base_seed: int = 0,
    steps: int = 100,
    Np: int = 3,
    fraction: float = 0.5,
    repeats: int = 3,
    config: dict | None = None,
    jobs: int = 1,
    progress=None,
) -> list[BenchmarkRecord]:
    """Run every controller on ``n_plants`` random plants per ``M``.

    Plant ``j`` of size ``M`` uses seed ``base_seed + 1000 * M + j``; its
    initial state is the first admissible draw of stream ``seed + 500``.
    Failed runs are recorded with ``failure`` set and the suite continues.
    Records come back in (M, plant, controller) order whatever ``jobs`` is.
    """
    if n_plants < 1:
        raise ValueError("n_plants must be at least 1")
    cells = [(M, j) for M in M_list for j in range(n_plants)]
    args = (controllers, base_seed, steps, Np, fraction, repeats, config)
    records = []
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(jobs) as pool:
            futures = [pool.submit(run_cell, M, j, *args) for M, j in cells]
            for fut in futures:
                recs = fut.result()
                records.extend(recs)
                if progress:
                    for r in recs:
                        progress(r)
    else:
        for M, j in cells:
            recs = run_cell(M, j, *args)
            records.extend(recs)
            if progress:
                for r in recs:
                    progress(r)
    return records


def summarize(records) -> dict:
    """Per (M, controller) aggregates of the successful runs."""
    out: dict = {}
    for r in records:
        cell = out.setdefault(str(r.M), {}).setdefault(r.controller, {"runs": 0, "failures": 0, "_r": []})
        cell["runs"] += 1
        if r.failure:
            cell["failures"] += 1
        else:
            cell["_r"].append(r)
    for cells in out.values():
        for cell in cells.values():
            rs = cell.pop("_r")
            if not rs:
                continue
            cell["mean_total_wall_time"] = float(np.mean([r.total_wall_time for r in rs]))
            cell["mean_of_max_iterations"] = float(np.mean([r.max_iterations for r in rs]))
            cell["mean_iterations"] = float(np.mean([r.mean_iterations for r in rs]))
            cell["mean_total_transfers"] = float(np.mean([r.total_transfers for r in rs]))
            cell["mean_total_combos"] = float(np.mean([r.total_combos for r in rs]))
            cell["median_total_CR"] = float(np.median([sum(r.n_CR) for r in rs])) if rs[0].n_CR else None
    return out
