import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from mpdimpc.mpc import condense_network
from mpdimpc.opt import (
    ActiveSetQP,
    Infeasible,
    QPProblem,
    chebyshev_ball,
    solve_lp_feasibility,
    solve_qp,
)
from mpdimpc.polyhedra import Polyhedron, is_feasible

from cases import fixture_case


def test_unconstrained_scalar():
    s = solve_qp(QPProblem([[1.0]], [1.0]))
    assert s.x_opt[0] == pytest.approx(-1.0)
    assert s.objective == pytest.approx(-0.5)


def test_bound_clipping_multiplier():
    s = solve_qp(QPProblem([[1.0]], [-10.0], [[1.0]], [2.0]))
    assert s.x_opt[0] == pytest.approx(2.0)
    assert s.active_set == [0]
    assert s.lagrange[0] == pytest.approx(8.0)


def test_infeasible():
    with pytest.raises(Infeasible):
        solve_qp(QPProblem(np.eye(1), [0.0], [[1.0], [-1.0]], [-1.0, -1.0]))


def _kkt_residual(p, s):
    g = p.H @ s.x_opt + p.f
    if s.active_set:
        g = g + p.G[s.active_set].T @ s.lagrange
    return np.max(np.abs(g))


def test_fixture_centralized_against_reference():
    c = fixture_case()
    qp = condense_network(c.net, c.w)
    x = np.ones(4)
    p = QPProblem(qp.H, qp.linear_term(x), qp.G, qp.rhs(x))
    s = solve_qp(p)
    # coarse grid over the input box, then a local refinement from the best node
    lo = np.tile(c.net.bounds.u_min, 3)
    hi = np.tile(c.net.bounds.u_max, 3)
    from mpdimpc.mpc import time_to_subsystem

    Pi = time_to_subsystem(c.net.n_u_i, 3)
    lo, hi = Pi.T @ lo, Pi.T @ hi
    axes = [np.linspace(l, h, 5) for l, h in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 6)
    feas = np.all(grid @ p.G.T <= p.b + 1e-9, axis=1)
    vals = 0.5 * np.einsum("ni,ij,nj->n", grid, p.H, grid) + grid @ p.f
    start = grid[feas][np.argmin(vals[feas])]
    ref = minimize(
        p.objective,
        start,
        jac=lambda u: p.H @ u + p.f,
        constraints=[{"type": "ineq", "fun": lambda u: p.b - p.G @ u, "jac": lambda u: -p.G}],
        method="SLSQP",
        options={"ftol": 1e-14, "maxiter": 500},
    )
    assert p.objective(s.x_opt) <= ref.fun + 1e-8
    np.testing.assert_allclose(s.x_opt, ref.x, atol=1e-5)
    assert _kkt_residual(p, s) <= 1e-7


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000))
def test_kkt_and_warm_start_uniqueness(seed):
    rng = np.random.default_rng(seed)
    n, m = 4, 8
    L = rng.normal(size=(n, n))
    H = L @ L.T + 0.1 * np.eye(n)
    f = rng.normal(size=n) * 5
    G = rng.normal(size=(m, n))
    b = np.abs(rng.normal(size=m)) + 0.1  # origin strictly feasible
    p = QPProblem(H, f, G, b)
    s = solve_qp(p)
    assert np.all(G @ s.x_opt <= b + 1e-8)
    assert np.all(s.lagrange >= -1e-8)
    if s.active_set:
        np.testing.assert_allclose(G[s.active_set] @ s.x_opt, b[s.active_set], atol=1e-8)
    assert _kkt_residual(p, s) <= 1e-7
    assert s.objective == pytest.approx(p.objective(s.x_opt), rel=1e-9, abs=1e-12)
    s2 = solve_qp(p, x0=np.zeros(n))
    np.testing.assert_allclose(s.x_opt, s2.x_opt, atol=1e-7)


def test_inactive_constraints_give_unconstrained_minimizer():
    H = np.array([[2.0, 0.5], [0.5, 1.0]])
    f = np.array([0.3, -0.2])
    s = solve_qp(QPProblem(H, f, np.vstack([np.eye(2), -np.eye(2)]), 10 * np.ones(4)))
    np.testing.assert_allclose(s.x_opt, -np.linalg.solve(H, f), atol=1e-9)
    assert s.active_set == []


def test_semidefinite_hessian_is_regularized():
    s = ActiveSetQP(np.diag([1.0, 0.0])).solve([1.0, 0.0], [[0.0, 1.0], [0.0, -1.0]], [1.0, 1.0])
    assert s.x_opt[0] == pytest.approx(-1.0)


def test_lp_feasibility_examples():
    assert solve_lp_feasibility([[1.0]], [1.0]) is not None
    assert solve_lp_feasibility([[1.0], [-1.0]], [-1.0, -1.0]) is None


def test_lp_witness_satisfies_constraints():
    rng = np.random.default_rng(3)
    G = rng.normal(size=(12, 3))
    b = rng.normal(size=12) + 1.0
    w = solve_lp_feasibility(G, b)
    if w is not None:
        assert np.all(G @ w.z <= b + 1e-8)


def test_lp_agrees_with_polyhedra_on_fixture_slices():
    sol = fixture_case().sols[0]
    rng = np.random.default_rng(5)
    n_x = 4
    for r in sol.regions:
        x = rng.uniform(-30, 15, n_x)
        A1, A2 = r.region.Phi[:, :n_x], r.region.Phi[:, n_x:]
        rhs = r.region.phi - A1 @ x
        keep = np.any(A2 != 0, axis=1)
        if np.any(rhs[~keep] < 0):
            continue
        lp = solve_lp_feasibility(A2[keep], rhs[keep]) is not None
        assert lp == is_feasible(Polyhedron(A2[keep], rhs[keep]))


def test_chebyshev_ball_of_box():
    c, r = chebyshev_ball(np.vstack([np.eye(2), -np.eye(2)]), np.array([1.0, 3.0, 1.0, 1.0]))
    assert r == pytest.approx(1.0)
    assert c[0] == pytest.approx(0.0)
