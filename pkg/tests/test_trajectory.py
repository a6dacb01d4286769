import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asindy.errors import ConfigError, DomainError
from asindy.trajectory import KINDS, TrajectorySpec, period, phase, sample


def test_circle_without_ramp():
    spec = TrajectorySpec(kind="circle", ramp_time=0.0)
    ref = sample(spec, 0.0)
    np.testing.assert_allclose(ref.p_d, [spec.radius, 0.0, spec.altitude])
    np.testing.assert_allclose(ref.v_d, [0.0, spec.radius * spec.omega, 0.0], atol=1e-15)


def test_lemniscate_center_crossing():
    spec = TrajectorySpec(kind="lemniscate", ramp_time=0.0)
    ref = sample(spec, math.pi / spec.omega)
    np.testing.assert_allclose(ref.p_d, [0.0, 0.0, spec.altitude], atol=1e-15)


def test_spiral_radius_grows():
    spec = TrajectorySpec(kind="spiral", ramp_time=0.0)
    for t in (0.0, 5.0, 20.0):
        ref = sample(spec, t)
        rho = spec.radius + spec.spiral_growth * spec.omega * t
        assert math.hypot(*ref.p_d[:2]) == pytest.approx(rho, rel=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_starts_at_rest(kind):
    ref = sample(TrajectorySpec(kind=kind), 0.0)
    assert np.all(ref.v_d == 0.0)
    assert np.all(ref.a_d == 0.0)


@pytest.mark.parametrize("kind", KINDS)
def test_finite_difference_oracle(kind):
    spec = TrajectorySpec(kind=kind)
    h = 1e-5
    for t in np.random.default_rng(1).uniform(h, spec.duration - h, 100):
        lo, mid, hi = sample(spec, t - h), sample(spec, t), sample(spec, t + h)
        np.testing.assert_allclose((hi.p_d - lo.p_d) / (2 * h), mid.v_d, atol=1e-6)
        np.testing.assert_allclose((hi.v_d - lo.v_d) / (2 * h), mid.a_d, atol=1e-5)


def test_phase_is_c2_at_ramp_end():
    spec = TrajectorySpec()
    T = spec.ramp_time
    a, b = phase(spec, T - 1e-9), phase(spec, T)
    assert a[0] == pytest.approx(b[0], abs=1e-8)
    assert a[1] == pytest.approx(b[1], abs=1e-8)
    assert a[2] == pytest.approx(b[2], abs=1e-6)


def test_phase_ramp_integral():
    # psi(T) equals the integral of omega * smoothstep over the ramp, i.e. omega T / 2
    spec = TrajectorySpec(omega=1.3, ramp_time=3.0)
    assert phase(spec, 3.0)[0] == pytest.approx(1.3 * 1.5, rel=1e-14)


@settings(max_examples=50)
@given(st.sampled_from(["circle", "lemniscate"]), st.floats(2.0, 30.0))
def test_periodic_after_ramp(kind, t):
    spec = TrajectorySpec(kind=kind)
    a, b = sample(spec, t), sample(spec, t + period(spec))
    np.testing.assert_allclose(a.p_d, b.p_d, atol=1e-12)
    np.testing.assert_allclose(a.v_d, b.v_d, atol=1e-12)


@pytest.mark.parametrize("t", [-0.1, 40.01])
def test_out_of_range(t):
    with pytest.raises(DomainError):
        sample(TrajectorySpec(), t)


def test_spec_validation():
    with pytest.raises(ConfigError):
        TrajectorySpec(kind="square")
    with pytest.raises(ConfigError):
        TrajectorySpec(radius=0.0)
    with pytest.raises(ConfigError):
        TrajectorySpec(ramp_time=-1.0)
