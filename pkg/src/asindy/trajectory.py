"""Reference trajectories: circle, Gerono lemniscate and planar spiral.

Each curve is parametrised by a phase ``psi(t)`` whose rate ramps from 0 to
``omega`` over ``ramp_time`` with the quintic smoothstep
``sigma(x) = 10x^3 - 15x^4 + 6x^5``, so ``psi`` is C^2 and the reference
starts at rest.  Derivatives are analytic:

    v = P'(psi) psi_dot
    a = P''(psi) psi_dot^2 + P'(psi) psi_ddot
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError

KINDS = ("circle", "lemniscate", "spiral")


@dataclass(frozen=True)
class TrajectorySpec:
    kind: str = "circle"
    radius: float = 0.6
    omega: float = 0.8
    altitude: float = 0.8
    spiral_growth: float = 0.05
    duration: float = 40.0
    ramp_time: float = 2.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown trajectory kind {self.kind!r}; expected one of {KINDS}")
        if not (self.radius > 0 and self.omega > 0 and self.duration > 0 and self.ramp_time >= 0):
            raise ConfigError("trajectory needs radius, omega, duration > 0 and ramp_time >= 0")


@dataclass(frozen=True)
class ReferenceSample:
    t: float
    p_d: np.ndarray
    v_d: np.ndarray
    a_d: np.ndarray


def phase(spec: TrajectorySpec, t: float) -> tuple[float, float, float]:
    """Return ``(psi, psi_dot, psi_ddot)`` of the ramped phase."""
    w, T = spec.omega, spec.ramp_time
    if T > 0 and t < T:
        x = t / T
        x2, x3 = x * x, x * x * x
        sig = x3 * (10.0 - 15.0 * x + 6.0 * x2)
        dsig = 30.0 * x2 * (1.0 - x) * (1.0 - x)
        # integral of sigma over [0, x], times T
        psi = w * T * x2 * x2 * (2.5 - 3.0 * x + x2)
        return psi, w * sig, w * dsig / T
    return w * (t - 0.5 * T), w, 0.0


def _shape(kind: str, r: float, c: float, psi: float):
    """Planar curve ``P(psi)`` and its first two psi-derivatives."""
    s, co = math.sin(psi), math.cos(psi)
    if kind == "circle":
        return (r * co, r * s), (-r * s, r * co), (-r * co, -r * s)
    if kind == "lemniscate":
        # Gerono: (r sin psi, r sin psi cos psi) = (r sin psi, r/2 sin 2psi)
        s2, c2 = math.sin(2 * psi), math.cos(2 * psi)
        return (r * s, 0.5 * r * s2), (r * co, r * c2), (-r * s, -2.0 * r * s2)
    rho, drho = r + c * psi, c
    return (
        (rho * co, rho * s),
        (drho * co - rho * s, drho * s + rho * co),
        (-2.0 * drho * s - rho * co, 2.0 * drho * co - rho * s),
    )


def sample(spec: TrajectorySpec, t: float) -> ReferenceSample:
    if not (0.0 <= t <= spec.duration):
        raise DomainError(f"t={t} outside [0, {spec.duration}]")
    psi, dpsi, ddpsi = phase(spec, t)
    P, dP, ddP = _shape(spec.kind, spec.radius, spec.spiral_growth, psi)
    p_d = np.array([P[0], P[1], spec.altitude])
    v_d = np.array([dP[0] * dpsi, dP[1] * dpsi, 0.0])
    a_d = np.array([
        ddP[0] * dpsi * dpsi + dP[0] * ddpsi,
        ddP[1] * dpsi * dpsi + dP[1] * ddpsi,
        0.0,
    ])
    return ReferenceSample(t, p_d, v_d, a_d)


def period(spec: TrajectorySpec) -> float:
    """Post-ramp repeat period of circle and lemniscate."""
    return 2.0 * math.pi / spec.omega
