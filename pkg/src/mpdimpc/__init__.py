"""Explicit (multiparametric) and iteration-free distributed MPC."""

from .dimpc import DistributedProblem, IterationOutcome, run_iterations, warm_start
from .iterfree import IterationFreeController, NoValidCombination, PointLocationFailed
from .mpc import MPCWeights, CondensedQP, condense_local, condense_network
from .mpqp import CriticalRegion, ExplicitSolution, NotFound, point_locate, solve_mpqp
from .plant import SubsystemNetwork, fixture_plant, generate_random_plant
from .sim import ControllerConfig, ControllerFailed, admissible_initial_state, benchmark_suite, build_explicit, simulate

__version__ = "0.1.0"

__all__ = [
    "CondensedQP",
    "ControllerConfig",
    "ControllerFailed",
    "CriticalRegion",
    "DistributedProblem",
    "ExplicitSolution",
    "IterationFreeController",
    "IterationOutcome",
    "MPCWeights",
    "NoValidCombination",
    "NotFound",
    "PointLocationFailed",
    "SubsystemNetwork",
    "admissible_initial_state",
    "benchmark_suite",
    "build_explicit",
    "condense_local",
    "condense_network",
    "fixture_plant",
    "generate_random_plant",
    "point_locate",
    "run_iterations",
    "simulate",
    "solve_mpqp",
    "warm_start",
]
