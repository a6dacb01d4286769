import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asindy.errors import ConfigError
from asindy.wind import (
    NormalStream,
    OUParams,
    WindCompositionParams,
    WindProcess,
    WindState,
    burst_envelope,
    burst_indicator,
    compose_force,
    limit_force,
    ou_path,
    ou_step,
    wind_accel,
)

COMP = WindCompositionParams()


@pytest.mark.parametrize("t, expected", [(0.5, 1), (2.5, 0), (3.0, 1), (0.0, 1), (2.0, 0)])
def test_burst_indicator(t, expected):
    assert burst_indicator(t, WindCompositionParams(t_on=2.0, t_off=1.0)) == expected


def test_burst_envelope_decays_while_off():
    c = WindCompositionParams(t_on=2.0, t_off=1.0, tau_decay=0.3)
    assert burst_envelope(1.9, c) == 1.0
    assert burst_envelope(2.3, c) == pytest.approx(math.exp(-1.0))
    assert burst_envelope(3.1, c) == 1.0


def test_normal_stream_is_chunking_invariant():
    a = NormalStream(7, block=64).normals(1000)
    s = NormalStream(7, block=4096)
    b = np.concatenate([s.normals(3) for _ in range(333)] + [s.normals(1)])
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, NormalStream(8).normals(1000))


def test_box_muller_against_direct_formula():
    u = np.array([0.25, 0.125, 0.5, 0.75])
    z = NormalStream.box_muller(u)
    r0 = math.sqrt(-2 * math.log(1 - 0.25))
    r1 = math.sqrt(-2 * math.log(1 - 0.5))
    expected = [r0 * math.cos(2 * math.pi * 0.125), r0 * math.sin(2 * math.pi * 0.125),
                r1 * math.cos(2 * math.pi * 0.75), r1 * math.sin(2 * math.pi * 0.75)]
    np.testing.assert_allclose(z, expected, rtol=1e-15)


def test_normal_stream_moments():
    z = NormalStream(3).normals(200_000)
    assert abs(z.mean()) < 0.01
    assert z.var() == pytest.approx(1.0, abs=0.01)


def test_ou_step_formula():
    ou = OUParams(mu=(0.1, 0.0, -0.1), theta=2.0, sigma=0.5)
    ws = WindState(g=np.array([1.0, 2.0, 3.0]))
    xi = np.array([0.3, -1.0, 0.0])
    out = ou_step(ws, ou, 0.01, xi=xi)
    expected = ws.g + 2.0 * (np.array(ou.mu) - ws.g) * 0.01 + 0.5 * 0.1 * xi
    np.testing.assert_allclose(out.g, expected, rtol=1e-15)
    assert out.t == pytest.approx(0.01)


def test_ou_path_matches_ou_step_bitwise():
    ou = OUParams(mu=(0.01, 0.0, 0.0), theta=1.5, sigma=0.01)
    xi = NormalStream(5).normals(300).reshape(100, 3)
    path = ou_path(np.zeros(3), ou, 0.004, xi)
    ws = WindState()
    for k in range(100):
        ws = ou_step(ws, ou, 0.004, xi=xi[k])
        assert np.array_equal(ws.g, path[k])


def test_ou_zero_sigma_decay():
    ou = OUParams(mu=(0.5, 0.0, 0.0), theta=1.5, sigma=0.0)
    dt, n = 0.004, 1000
    path = ou_path(np.array([2.0, 1.0, -1.0]), ou, dt, np.zeros((n, 3)))
    t = dt * n
    exact = np.array(ou.mu) + (np.array([2.0, 1.0, -1.0]) - np.array(ou.mu)) * math.exp(-1.5 * t)
    # Euler error is first order in dt
    assert np.max(np.abs(path[-1] - exact)) < 1.5 * 1.5 * dt * np.max(np.abs([1.5, 1.0, 1.0]))


def _compose_reference(t, g, c):
    period = c.t_on + c.t_off
    ph = t - period * math.floor(t / period)
    env = 1.0 if ph < c.t_on else math.exp(-(ph - c.t_on) / c.tau_decay)
    w = 2 * math.pi * c.freq
    return (
        c.f_mean[0] + env * (c.f_amp[0] * math.sin(w * t) + g[0]),
        c.f_mean[1] + env * (c.f_amp[1] * math.sin(w * t + c.phi0) + g[1]),
        c.f_mean[2] + env * g[2],
    )


def test_compose_force_against_reference():
    rng = np.random.default_rng(0)
    for t in rng.uniform(0, 40, 10):
        g = rng.normal(0, 0.02, 3)
        got = compose_force(float(t), WindState(g=g), COMP)
        np.testing.assert_allclose(got, _compose_reference(float(t), g, COMP), atol=1e-12)


def test_compose_force_constants_and_peak():
    c = WindCompositionParams(f_amp=(0.0, 0.0))
    np.testing.assert_allclose(compose_force(1.3, WindState(), c), c.f_mean)
    t_peak = 1.0 / (4 * COMP.freq)  # sin(2 pi f t) = 1, still inside the first burst
    got = compose_force(t_peak, WindState(), COMP)
    assert got[0] == pytest.approx(COMP.f_mean[0] + COMP.f_amp[0], abs=1e-15)
    assert got[2] == COMP.f_mean[2]


def test_limit_force_examples():
    dt = 0.005
    inside = np.array([0.01, 0.0, 0.0])
    np.testing.assert_array_equal(limit_force(inside, inside * 0.99, COMP, dt), inside)
    big = np.array([2 * COMP.f_cap, 0.0, 0.0])
    prev = np.array([COMP.f_cap, 0.0, 0.0])
    np.testing.assert_allclose(limit_force(big, prev, COMP, dt), [COMP.f_cap, 0, 0])
    raw = np.array([COMP.rate_cap * dt * 5, 0.0, 0.0])
    np.testing.assert_allclose(limit_force(raw, np.zeros(3), COMP, dt), [COMP.rate_cap * dt, 0, 0])


@settings(max_examples=200)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3),
       st.lists(st.floats(-0.04, 0.04), min_size=3, max_size=3))
def test_limit_force_bounds(raw, prev):
    prev = np.array(prev)
    if np.linalg.norm(prev) > COMP.f_cap:
        prev *= COMP.f_cap / np.linalg.norm(prev)
    out = limit_force(raw, prev, COMP, 0.005)
    assert np.linalg.norm(out) <= COMP.f_cap + 1e-12
    assert np.linalg.norm(out - prev) <= COMP.rate_cap * 0.005 + 1e-12


@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3), st.floats(1e-3, 10))
def test_wind_accel_inverse(f, m):
    np.testing.assert_allclose(wind_accel(f, m) * m, f, rtol=1e-15, atol=1e-300)


def test_wind_accel_unit_ratio():
    np.testing.assert_allclose(wind_accel([0.034, 0, 0], 0.034), [1, 0, 0])
    with pytest.raises(ConfigError):
        wind_accel([1, 0, 0], 0.0)


def test_process_limits_and_determinism():
    c = WindCompositionParams(f_cap=0.03, rate_cap=0.2)
    dt = 0.005

    def series(seed):
        w = WindProcess(OUParams(sigma=0.05, seed=seed), c)
        return np.array([w.advance(dt) for _ in range(4000)])

    f = series(11)
    assert np.all(np.linalg.norm(f, axis=1) <= c.f_cap + 1e-12)
    steps = np.linalg.norm(np.diff(f, axis=0), axis=1)
    assert np.all(steps <= c.rate_cap * dt + 1e-12)
    np.testing.assert_array_equal(f, series(11))
    assert not np.array_equal(f, series(12))


def test_disabled_process_is_zero():
    w = WindProcess(OUParams(seed=1), COMP, enabled=False)
    assert all(np.all(w.advance(0.005) == 0) for _ in range(100))


def test_param_validation():
    with pytest.raises(ConfigError):
        OUParams(theta=0.0)
    with pytest.raises(ConfigError):
        OUParams(sigma=-1.0)
    with pytest.raises(ConfigError):
        WindCompositionParams(t_on=0.0, t_off=0.0)
    with pytest.raises(ConfigError):
        WindCompositionParams(f_cap=0.0)
