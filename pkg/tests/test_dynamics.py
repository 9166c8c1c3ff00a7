import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from swarmpro.dynamics import (
    MU_EARTH,
    R0_LEO,
    CwParams,
    Pro,
    continuous_matrices,
    cw_derivative,
    default_params,
    discretize,
    dynamics_residual,
    energy_matching_residual,
    implied_controls,
    mean_motion,
    pro_state,
    propagate,
    stm,
    zoh_input_matrix,
)

E = mean_motion(MU_EARTH, R0_LEO)


def augmented_expm(e, dt):
    """A and B from the exponential of the block matrix [[Ac, Bc], [0, 0]]."""
    Ac, Bc = continuous_matrices(e)
    M = np.zeros((9, 9))
    M[:6, :6] = Ac
    M[:6, 6:] = Bc
    F = expm(M * dt)
    return F[:6, :6], F[:6, 6:]


def test_mean_motion_leo():
    assert mean_motion(MU_EARTH, R0_LEO) == pytest.approx(1.1314e-3, rel=1e-3)


@pytest.mark.parametrize("mu,r0", [(0.0, 7e6), (3.9e14, 0.0), (-1.0, 7e6)])
def test_mean_motion_rejects_nonpositive(mu, r0):
    with pytest.raises(ValueError):
        mean_motion(mu, r0)


def test_default_params_half_orbit():
    p = default_params(11)
    assert p.dt * 10 == pytest.approx(p.period / 2, rel=1e-12)
    assert p.dt == pytest.approx(277.68, abs=0.05)


@pytest.mark.parametrize("dt", [1.0, 10.0, 60.0, 300.0, 2000.0])
def test_discrete_matrices_match_matrix_exponential(dt):
    A_ref, B_ref = augmented_expm(E, dt)
    dyn = discretize(CwParams(dt=dt))
    assert np.allclose(dyn.A, A_ref, rtol=0, atol=1e-12 * max(1.0, dt))
    assert np.max(np.abs(dyn.B - B_ref)) <= 1e-10 * max(1.0, dt * dt)


def test_zero_step_is_identity():
    assert np.array_equal(stm(E, 0.0), np.eye(6))
    assert np.allclose(zoh_input_matrix(E, 0.0), 0.0)


@pytest.mark.parametrize("dt", [10.0, 277.0])
def test_semigroup(dt):
    assert np.allclose(stm(E, dt) @ stm(E, dt), stm(E, 2 * dt), atol=1e-9)


def test_propagation_matches_numerical_integration(rng):
    params = CwParams(dt=120.0)
    dyn = discretize(params)
    s0 = rng.normal(scale=[100, 100, 100, 0.1, 0.1, 0.1])
    U = rng.normal(scale=1e-4, size=(4, 3))
    traj = propagate(s0, U, dyn)
    s = s0
    for t, u in enumerate(U):
        sol = solve_ivp(lambda _, y: cw_derivative(y, u, params), (0, params.dt), s,
                        method="DOP853", rtol=1e-12, atol=1e-12)
        s = sol.y[:, -1]
        assert np.allclose(traj[t + 1], s, atol=1e-6)


def test_free_motion_on_pro_matches_closed_form():
    params = default_params(11)
    pro = Pro(200.0, phase=0.3, slant=0.4, y_offset=-20.0)
    dyn = discretize(params)
    traj = propagate(pro_state(pro, params, 0.0), np.zeros((10, 3)), dyn)
    for t in range(11):
        assert np.allclose(traj[t], pro_state(pro, params, t * params.dt), atol=1e-9)


def test_pro_energy_matched_and_x_amplitude():
    params = default_params(11)
    pro = Pro(300.0, phase=1.0, slant=-0.7)
    ts = np.linspace(0, params.period, 50)
    states = np.array([pro_state(pro, params, t) for t in ts])
    assert max(abs(energy_matching_residual(s, params.e_mean)) for s in states) == 0.0
    assert np.max(np.abs(states[:, 0])) == pytest.approx(150.0, rel=1e-3)
    assert np.max(np.abs(states[:, 1])) == pytest.approx(300.0, rel=1e-3)


def test_energy_matching_violation_drifts():
    params = CwParams(dt=600.0)
    dyn = discretize(params)
    s0 = pro_state(Pro(200.0), params, 0.0)
    s0[4] += 0.01
    traj = propagate(s0, np.zeros((int(params.period / params.dt) + 1, 3)), dyn)
    assert abs(traj[-1, 1] - traj[0, 1]) > 100.0


@pytest.mark.parametrize("kwargs", [{"a_semi": -1.0}, {"a_semi": 1.0, "slant": math.pi / 2}])
def test_pro_validation(kwargs):
    with pytest.raises(ValueError):
        Pro(**kwargs)


def test_propagate_shape_errors():
    dyn = discretize(CwParams(dt=10.0))
    with pytest.raises(ValueError):
        propagate(np.zeros(5), np.zeros((3, 3)), dyn)
    with pytest.raises(ValueError):
        propagate(np.zeros(6), np.zeros((3, 2)), dyn)


def test_implied_controls_recover_exact_controls(rng):
    dyn = discretize(default_params(11))
    U = rng.normal(scale=1e-4, size=(10, 3))
    traj = propagate(rng.normal(size=6), U, dyn)
    assert np.allclose(implied_controls(traj, dyn), U, atol=1e-12)
    assert dynamics_residual(traj, U, dyn) < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.integers(0, 2**31 - 1))
def test_propagation_is_linear(a, b, seed):
    r = np.random.default_rng(seed)
    dyn = discretize(CwParams(dt=100.0))
    s1, s2 = r.normal(size=6), r.normal(size=6)
    u1, u2 = r.normal(size=(5, 3)), r.normal(size=(5, 3))
    lhs = propagate(a * s1 + b * s2, a * u1 + b * u2, dyn)
    rhs = a * propagate(s1, u1, dyn) + b * propagate(s2, u2, dyn)
    assert np.allclose(lhs, rhs, atol=1e-6 * (1 + np.abs(rhs)))
