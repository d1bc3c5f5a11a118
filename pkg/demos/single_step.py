"""One sample step, three ways: Wegstein iteration, full enumeration, neighbour search.

Run with ``python3 demos/single_step.py``.
"""

import numpy as np

from mpdimpc import MPCWeights, fixture_plant
from mpdimpc.dimpc import DistributedProblem, run_iterations
from mpdimpc.iterfree import IterationFreeController
from mpdimpc.sim import admissible_initial_state, build_explicit

net = fixture_plant()
w = MPCWeights.for_network(net)
sols = build_explicit(net, w)
prob = DistributedProblem.build(net, w, "explicit", sols)
ctrl = IterationFreeController(prob, sols)
x = admissible_initial_state(net, w, seed=500)
U_prev = np.zeros(6)

it = run_iterations(prob, x, U_prev)
print(f"iterative: {it.iterations_used} passes, residual {it.residual:.1e}")
print("  U* =", np.round(it.U_star, 6))

# Every (region of controller 1, region of controller 2) pair gives a
# square linear system; the valid solution with least plantwide cost wins.
full = ctrl.full(x)
print(f"\nfull enumeration: {full.combos_evaluated} combinations, winner {full.combination}")
print("  U  =", np.round(full.U, 6), f" |diff| = {np.max(np.abs(full.U - it.U_star)):.1e}")

v15 = ctrl.v15(x)
print(f"\npruned: candidates per controller {[len(k) for k in v15.candidates]}, {v15.combos_evaluated} combinations")

# Neighbour search around the regions holding [x, previous inputs].
v2 = ctrl.v2(x, full.U)
print(f"\nneighbour search from the previous optimum: {v2.combos_evaluated} combinations, fallback {v2.used_fallback}")
cold = ctrl.v2(x, U_prev)
print(f"neighbour search from zero inputs: {cold.combos_evaluated} combinations, fallback {cold.used_fallback}")
