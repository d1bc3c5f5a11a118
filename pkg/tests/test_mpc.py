import numpy as np
import pytest

from mpdimpc.mpc import (
    MPCWeights,
    build_prediction,
    condense_centralized,
    condense_local,
    condense_network,
    decision_blocks,
    other_blocks,
    plantwide_cost,
    time_to_subsystem,
)
from mpdimpc.opt import QPProblem, solve_qp
from mpdimpc.plant import Bounds, StateSpaceModel, SubsystemNetwork
from scipy.optimize import minimize

from cases import decoupled_plant, fixture_case


def test_prediction_integrator():
    p = build_prediction(StateSpaceModel(np.eye(1), np.eye(1)), 2)
    np.testing.assert_array_equal(p.Sx, [[1.0], [1.0]])
    np.testing.assert_array_equal(p.Su, [[1.0, 0.0], [1.0, 1.0]])


def test_prediction_nilpotent():
    p = build_prediction(StateSpaceModel(np.zeros((1, 1)), np.eye(1)), 3)
    np.testing.assert_array_equal(p.Sx, np.zeros((3, 1)))
    np.testing.assert_array_equal(p.Su, np.eye(3))


def test_prediction_matches_recursion():
    net = fixture_case().net
    model = net.model()
    p = build_prediction(model, 3)
    rng = np.random.default_rng(0)
    for _ in range(20):
        x0, U = rng.normal(size=4), rng.normal(size=6)
        x, xs = x0, []
        for l in range(3):
            x = model.step(x, U[2 * l : 2 * l + 2])
            xs.append(x)
        np.testing.assert_allclose(p.Sx @ x0 + p.Su @ U, np.concatenate(xs), atol=1e-12)


def test_input_only_cost():
    model = StateSpaceModel(np.array([[0.9]]), np.array([[1.0]]))
    w = MPCWeights(np.zeros((1, 1)), np.eye(1), np.zeros((1, 1)), 2)
    qp = condense_centralized(model, w, Bounds([-5.0], [5.0], [-1.0], [1.0]))
    np.testing.assert_allclose(qp.H, np.eye(2), atol=1e-15)
    np.testing.assert_allclose(qp.H_t, 0.0, atol=1e-15)


def test_scalar_one_step():
    model = StateSpaceModel(np.array([[0.5]]), np.array([[1.0]]))
    w = MPCWeights(np.eye(1), np.eye(1), np.eye(1), 1)
    qp = condense_centralized(model, w, Bounds([-5.0], [5.0], [-1.0], [1.0]))
    # J = 1/2 x^2 + 1/2 u^2 + 1/2 (0.5 x + u)^2
    np.testing.assert_allclose(qp.H, [[2.0]])
    np.testing.assert_allclose(qp.H_t, [[0.5]])


def _check_parity(net, w, qp, theta_fn, U_fn, n=100):
    rng = np.random.default_rng(1)
    for _ in range(n):
        x, U = theta_fn(rng), U_fn(rng)
        J = plantwide_cost(net, w, x, U)
        assert qp.objective(U, x, full=True) == pytest.approx(J, rel=1e-8, abs=1e-9)


def test_centralized_objective_parity():
    c = fixture_case()
    qp = condense_network(c.net, c.w)
    _check_parity(c.net, c.w, qp, lambda r: r.uniform(-30, 15, 4), lambda r: r.uniform(-1, 3, 6))


def test_local_objective_parity():
    c = fixture_case()
    Np = c.w.Np
    for i in range(2):
        qp = condense_local(c.net, c.w, i)
        E, W = decision_blocks(c.net, Np)[i], other_blocks(c.net, Np, i)
        rng = np.random.default_rng(i)
        for _ in range(100):
            x, U = rng.uniform(-30, 15, 4), rng.uniform(-1, 3, 6)
            theta = np.concatenate([x, U[W]])
            J = plantwide_cost(c.net, c.w, x, U)
            assert qp.objective(U[E], theta, full=True) == pytest.approx(J, rel=1e-8, abs=1e-9)


def test_local_row_count():
    c = fixture_case()
    for i in range(2):
        qp = condense_local(c.net, c.w, i)
        assert qp.n_c == 2 * 3 * 4 + 2 * 3 * 1
        assert qp.n_dec == 3 and qp.n_par == 4 + 3


def test_local_equals_direct_formulation():
    c = fixture_case()
    net, w = c.net, c.w
    qp = condense_local(net, w, 0)
    E, W = decision_blocks(net, 3)[0], other_blocks(net, 3, 0)
    x = np.array([5.0, -3.0, 2.0, 1.0])
    U2 = np.array([0.5, -0.2, 0.1])
    theta = np.concatenate([x, U2])
    s = solve_qp(QPProblem(qp.H, qp.linear_term(theta), qp.G, qp.rhs(theta)))
    # direct: minimize the plantwide cost over U_1 with U_2 fixed, by simulation
    b = net.bounds

    def full(u1):
        U = np.zeros(6)
        U[E], U[W] = u1, U2
        return U

    def states(u1):
        from mpdimpc.mpc import first_input

        U = full(u1)
        Pi = time_to_subsystem(net.n_u_i, 3)
        Ut = (Pi @ U).reshape(3, 2)
        xs, xx = [], x
        for l in range(3):
            xx = net.model().step(xx, Ut[l])
            xs.append(xx)
        return np.concatenate(xs)

    cons = [
        {"type": "ineq", "fun": lambda u: np.tile(b.x_max, 3) - states(u)},
        {"type": "ineq", "fun": lambda u: states(u) - np.tile(b.x_min, 3)},
    ]
    ref = minimize(
        lambda u: plantwide_cost(net, w, x, full(u)),
        np.zeros(3),
        bounds=[(b.u_min[0], b.u_max[0])] * 3,
        constraints=cons,
        method="SLSQP",
        options={"ftol": 1e-14, "maxiter": 500},
    )
    np.testing.assert_allclose(s.x_opt, ref.x, atol=1e-6)


def test_single_subsystem_local_is_centralized():
    base = decoupled_plant(1, 3)
    w = MPCWeights.for_network(base)
    a, b = condense_local(base, w, 0), condense_network(base, w)
    for name in ("H", "H_t", "G", "b", "F"):
        np.testing.assert_allclose(getattr(a, name), getattr(b, name), atol=1e-12)


def test_decoupled_local_solution_ignores_foreign_inputs():
    net = decoupled_plant(2, 5)
    w = MPCWeights.for_network(net)
    qp = condense_local(net, w, 0)
    x = 0.2 * net.bounds.x_max
    rng = np.random.default_rng(2)
    sols = []
    for _ in range(5):
        V = rng.uniform(net.bounds.u_min[1], net.bounds.u_max[1], 3)
        theta = np.concatenate([x, V])
        sols.append(solve_qp(QPProblem(qp.H, qp.linear_term(theta), qp.G, qp.rhs(theta))).x_opt)
    for s in sols[1:]:
        np.testing.assert_allclose(s, sols[0], atol=1e-9)


def test_rho_scaling_leaves_argmin():
    c = fixture_case()
    net = c.net
    x = np.array([10.0, -5.0, 3.0, 2.0])
    w1 = MPCWeights.for_network(net, rho=[1.0, 2.0])
    w2 = MPCWeights.for_network(net, rho=[3.0, 6.0])
    out = []
    for w in (w1, w2):
        qp = condense_network(net, w)
        out.append(solve_qp(QPProblem(qp.H, qp.linear_term(x), qp.G, qp.rhs(x))).x_opt)
    np.testing.assert_allclose(out[0], out[1], atol=1e-9)
    np.testing.assert_allclose(condense_network(net, w2).H, 3 * condense_network(net, w1).H, atol=1e-12)


def test_time_to_subsystem_is_permutation():
    Pi = time_to_subsystem([1, 2], 3)
    np.testing.assert_array_equal(Pi @ Pi.T, np.eye(9))


def test_weights_validation():
    with pytest.raises(ValueError):
        MPCWeights(np.eye(2), np.zeros((1, 1)), np.eye(2), 3)
    with pytest.raises(ValueError):
        MPCWeights(np.eye(2), np.eye(1), np.eye(2), 0)
    with pytest.raises(ValueError):
        MPCWeights(np.eye(2), np.eye(1), np.eye(2), 3, np.array([-1.0]))


def test_local_index_error():
    c = fixture_case()
    with pytest.raises(IndexError):
        condense_local(c.net, c.w, 2)
