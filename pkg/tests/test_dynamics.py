import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asindy.dynamics import (
    ControlCommand,
    VehicleParams,
    VehicleState,
    euler_rate_matrix,
    known_dynamics,
    rotation_matrix,
    step,
    wrap_angle,
)
from asindy.errors import ConfigError, DomainError, SimulationDivergence

P = VehicleParams()


def hover_cmd():
    return ControlCommand(P.m * P.g, np.zeros(3))


def test_hover_is_equilibrium():
    d = known_dynamics(VehicleState(), hover_cmd(), P)
    np.testing.assert_allclose(d[3:6], 0.0, atol=1e-15)
    np.testing.assert_array_equal(d[0:3], 0.0)


def test_zero_thrust_is_free_fall():
    d = known_dynamics(VehicleState(v=np.array([0.3, 0.0, -1.0])), ControlCommand(0.0), P)
    np.testing.assert_allclose(d[3:6], P.g_vec)
    np.testing.assert_allclose(d[0:3], [0.3, 0.0, -1.0])


@pytest.mark.parametrize("theta", [0.01, 0.1, 0.3])
def test_pitch_tilt_closed_form(theta):
    # R_y(theta) e3 = (sin theta, 0, cos theta): with T = mg / cos theta the
    # vertical force cancels gravity and the horizontal accel is g tan theta
    eta = np.array([0.0, theta, 0.0])
    state = VehicleState(eta=eta)
    cmd = ControlCommand(P.m * P.g / math.cos(theta), eta)
    d = known_dynamics(state, cmd, P)
    assert d[5] == pytest.approx(0.0, abs=1e-12)
    assert d[3] == pytest.approx(P.g * math.tan(theta), rel=1e-12)
    np.testing.assert_allclose(rotation_matrix(eta) @ [0, 0, 1], [math.sin(theta), 0, math.cos(theta)], atol=1e-15)


def test_attitude_lag_and_body_rates():
    state = VehicleState(eta=np.array([0.1, -0.05, 0.0]))
    cmd = ControlCommand(P.m * P.g, np.zeros(3))
    d = known_dynamics(state, cmd, P)
    np.testing.assert_allclose(d[6:9], -state.eta / P.tau_att)
    # omega consistency after a step: omega = W(eta) eta_dot
    s1 = step(state, cmd, np.zeros(3), P, 0.004)
    np.testing.assert_allclose(s1.omega, euler_rate_matrix(s1.eta) @ (-s1.eta / P.tau_att), rtol=1e-12)


def test_omega_dot_matches_finite_difference():
    state = VehicleState(eta=np.array([0.2, -0.1, 0.05]))
    cmd = ControlCommand(0.3, np.array([-0.1, 0.15, 0.0]))
    d = known_dynamics(state, cmd, P)
    h = 1e-6

    def omega_at(eta):
        return euler_rate_matrix(eta) @ ((cmd.att_des - eta) / P.tau_att)

    eta_dot = d[6:9]
    fd = (omega_at(state.eta + h * eta_dot) - omega_at(state.eta - h * eta_dot)) / (2 * h)
    np.testing.assert_allclose(d[9:12], fd, rtol=1e-6, atol=1e-8)


def test_non_finite_rejected():
    with pytest.raises(DomainError):
        known_dynamics(VehicleState(p=np.array([np.nan, 0, 0])), hover_cmd(), P)


@pytest.mark.parametrize("dt", [0.0, -0.01, 0.06])
def test_step_rejects_bad_dt(dt):
    with pytest.raises(ConfigError):
        step(VehicleState(), hover_cmd(), np.zeros(3), P, dt)


def test_step_divergence_carries_index():
    with pytest.raises(SimulationDivergence) as exc:
        step(VehicleState(), ControlCommand(np.inf), np.zeros(3), P, 0.01, step_index=17)
    assert exc.value.step_index == 17


def test_hover_step_keeps_position():
    s = VehicleState(p=np.array([0.1, -0.2, 1.0]))
    for _ in range(100):
        s1 = step(s, hover_cmd(), np.zeros(3), P, 0.01)
        assert np.max(np.abs(s1.p - s.p)) < 1e-9
        s = s1
    assert s.t == pytest.approx(1.0)


def test_constant_external_force_gives_linear_velocity():
    s = VehicleState()
    f = np.array([0.1 * P.m, 0.0, 0.0])
    for _ in range(100):
        s = step(s, hover_cmd(), f, P, 0.01)
    assert s.v[0] == pytest.approx(0.1, abs=1e-4)
    assert s.p[0] == pytest.approx(0.05, abs=1e-4)


def test_ballistic_drop():
    s = VehicleState(p=np.array([0.0, 0.0, 10.0]))
    for _ in range(100):
        s = step(s, ControlCommand(0.0), np.zeros(3), P, 0.01)
    assert s.p[2] - 10.0 == pytest.approx(-P.g / 2, abs=1e-4)


def test_energy_conserved_in_free_flight():
    s = VehicleState(p=np.array([0.0, 0.0, 5.0]), v=np.array([1.0, -0.5, 3.0]))

    def energy(st):
        return 0.5 * P.m * float(st.v @ st.v) + P.m * P.g * st.p[2]

    e0 = energy(s)
    for _ in range(1000):
        s = step(s, ControlCommand(0.0), np.zeros(3), P, 0.01)
    assert abs(energy(s) - e0) <= 1e-6 * abs(e0)


def _hover_perturbation(dt, T=1.0):
    s = VehicleState(v=np.array([0.2, 0.0, 0.1]), eta=np.array([0.15, -0.2, 0.0]))
    cmd = ControlCommand(P.m * P.g * 1.02, np.array([0.0, 0.05, 0.0]))
    for _ in range(int(round(T / dt))):
        s = step(s, cmd, np.zeros(3), P, dt)
    return s.p


def test_rk4_error_ratio():
    ref = _hover_perturbation(1e-5)
    e1 = np.linalg.norm(_hover_perturbation(0.02) - ref)
    e2 = np.linalg.norm(_hover_perturbation(0.01) - ref)
    assert e1 / e2 >= 8.0


@given(st.floats(-20, 20, allow_nan=False))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-0.6, 0.6), min_size=3, max_size=3), st.floats(0.0, 0.6))
def test_known_dynamics_has_no_wind_term(eta, thrust):
    # translational acceleration depends only on thrust, attitude and gravity
    eta = np.array(eta)
    d = known_dynamics(VehicleState(eta=eta), ControlCommand(thrust, eta), P)
    expected = rotation_matrix(eta) @ [0, 0, thrust] / P.m + P.g_vec
    np.testing.assert_allclose(d[3:6], expected, atol=1e-12)


def test_params_validation():
    with pytest.raises(ConfigError):
        VehicleParams(m=0.0)
    with pytest.raises(ConfigError):
        VehicleParams(thrust_min=0.7, thrust_max=0.6)
