import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpdimpc.dimpc import (
    DistributedProblem,
    WegsteinState,
    iterate_step,
    run_iterations,
    warm_start,
    wegstein_weights,
)
from mpdimpc.mpc import MPCWeights, condense_network
from mpdimpc.numerics import DimensionError
from mpdimpc.opt import QPProblem, solve_qp
from mpdimpc.plant import SubsystemNetwork

from cases import decoupled_plant, fixture_case


def one_subsystem():
    return decoupled_plant(1, 3)


def test_warm_start_single():
    assert np.array_equal(warm_start(np.array([1.0, 2.0, 3.0]), one_subsystem(), 3), [2.0, 3.0, 0.0])


def test_warm_start_two_subsystems():
    net = fixture_case().net
    out = warm_start(np.arange(1.0, 7.0), net, 3)
    assert np.array_equal(out, [2.0, 3.0, 0.0, 5.0, 6.0, 0.0])


def test_warm_start_zero_and_shape():
    net = fixture_case().net
    assert np.array_equal(warm_start(np.zeros(6), net, 3), np.zeros(6))
    with pytest.raises(DimensionError):
        warm_start(np.zeros(5), net, 3)


def test_zero_denominator_guard():
    a, w = wegstein_weights(
        np.array([1.0, 2.0]), np.array([0.5, 1.0]), np.array([1.0, 3.0]), np.array([1.0, 1.0]), -5.0, 0.9
    )
    assert w[0] == 0.0 and a[0] == 0.0
    assert a[1] == pytest.approx(0.5) and w[1] == pytest.approx(-1.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=4, max_size=4))
def test_weights_clamped(vals):
    v = np.array(vals)
    _, w = wegstein_weights(v, v[::-1], v * 0.5, v * 0.1, -5.0, 0.9)
    assert np.all(w >= -5.0) and np.all(w <= 0.9)


def test_state_validation():
    z = np.zeros(2)
    with pytest.raises(ValueError):
        WegsteinState(z, z, z, eps=0.0)
    with pytest.raises(ValueError):
        WegsteinState(z, z, z, w_min=1.0, w_max=0.0)


def test_decoupled_converges_in_two():
    net = decoupled_plant(3, 11)
    w = MPCWeights.for_network(net)
    prob = DistributedProblem.build(net, w)
    out = run_iterations(prob, 0.3 * net.bounds.x_max, np.zeros(9))
    assert out.converged and out.iterations_used <= 2


def test_p_max_zero_returns_warm_start():
    c = fixture_case()
    prob = DistributedProblem.build(c.net, c.w)
    U_prev = np.arange(6.0) * 0.1
    out = run_iterations(prob, c.x0, U_prev, p_max=0)
    assert not out.converged and out.iterations_used == 0
    assert np.array_equal(out.U_star, warm_start(U_prev, c.net, 3))


def _centralized(c, x):
    qp = condense_network(c.net, c.w)
    return solve_qp(QPProblem(qp.H, qp.linear_term(x), qp.G, qp.rhs(x))).x_opt


def test_fixture_converges_to_centralized():
    c = fixture_case()
    prob = DistributedProblem.build(c.net, c.w)
    out = run_iterations(prob, c.x0, np.zeros(6))
    assert out.converged and out.transfers == out.iterations_used
    assert 2 <= out.iterations_used < 50
    np.testing.assert_allclose(out.U_star, _centralized(c, c.x0), atol=1e-5)


def test_online_and_explicit_iterates_agree():
    c = fixture_case()
    on = DistributedProblem.build(c.net, c.w, "online")
    ex = DistributedProblem.build(c.net, c.w, "explicit", c.sols)
    U0 = np.zeros(6)
    s_on = WegsteinState(U0.copy(), U0.copy(), U0.copy())
    s_ex = WegsteinState(U0.copy(), U0.copy(), U0.copy())
    for _ in range(15):
        s_on, s_ex = iterate_step(on, c.x0, s_on), iterate_step(ex, c.x0, s_ex)
        np.testing.assert_allclose(s_on.U_bar, s_ex.U_bar, atol=1e-6)


def test_saturation_and_fixed_point():
    c = fixture_case()
    prob = DistributedProblem.build(c.net, c.w)
    rng = np.random.default_rng(2)
    for _ in range(5):
        x = rng.uniform(0.3 * c.net.bounds.x_min, 0.3 * c.net.bounds.x_max)
        out = run_iterations(prob, x, np.zeros(6))
        assert np.all(out.U_star >= prob.U_min) and np.all(out.U_star <= prob.U_max)
        if out.converged:
            again = prob.best_response(x, out.U_star)
            assert np.max(np.abs(again - out.U_star)) < 10 * 1e-8
            assert out.residual < 1e-8


def test_explicit_mode_needs_solutions():
    c = fixture_case()
    with pytest.raises(ValueError):
        DistributedProblem.build(c.net, c.w, "explicit")
