"""Quadrotor translational dynamics with a first-order attitude loop.

The plant boundary is the attitude controller: the vehicle receives a
collective thrust and a desired roll/pitch/yaw, the attitude follows the
command with time constant ``tau_att`` and the thrust is rotated into the
world (ENU) frame.  External forces (wind, synthetic residuals) enter only
through :func:`step`.

State vector layout (12): ``p(3), v(3), eta(3) = (roll, pitch, yaw), omega(3)``.
Euler angles use the ZYX convention, ``R = Rz(yaw) Ry(pitch) Rx(roll)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DomainError, SimulationDivergence

GRAVITY = 9.81
MAX_DT = 0.05


def _wrap(a: float) -> float:
    if -math.pi < a <= math.pi:
        return a
    w = math.fmod(a + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


def wrap_angle(a):
    """Wrap angle(s) into (-pi, pi]."""
    if np.ndim(a) == 0:
        return _wrap(float(a))
    return np.array([_wrap(float(v)) for v in np.ravel(a)]).reshape(np.shape(a))


@dataclass(frozen=True)
class VehicleParams:
    m: float = 0.034
    g: float = GRAVITY
    tau_att: float = 0.08
    thrust_max: float = 0.6
    thrust_min: float = 0.0
    max_tilt: float = math.radians(35.0)

    def __post_init__(self):
        if not (self.m > 0 and self.tau_att > 0 and self.g > 0):
            raise ConfigError("VehicleParams: m, g and tau_att must be positive")
        if not (0 <= self.thrust_min < self.thrust_max):
            raise ConfigError("VehicleParams: need 0 <= thrust_min < thrust_max")
        if not (0 < self.max_tilt < math.pi / 2):
            raise ConfigError("VehicleParams: max_tilt must lie in (0, pi/2)")

    @property
    def g_vec(self) -> np.ndarray:
        return np.array([0.0, 0.0, -self.g])

    @property
    def hover_thrust(self) -> float:
        return self.m * self.g


@dataclass(frozen=True)
class ControlCommand:
    thrust: float
    att_des: np.ndarray = field(default_factory=lambda: np.zeros(3))
    fallback: bool = False  # set when the force mapping fell back to hover

    @classmethod
    def hover(cls, params: VehicleParams) -> "ControlCommand":
        return cls(params.hover_thrust, np.zeros(3))


@dataclass(frozen=True)
class VehicleState:
    t: float = 0.0
    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    eta: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.v, self.eta, self.omega])

    @classmethod
    def from_vector(cls, t: float, x) -> "VehicleState":
        x = np.asarray(x, dtype=float)
        return cls(t, x[0:3].copy(), x[3:6].copy(), x[6:9].copy(), x[9:12].copy())

    def is_finite(self) -> bool:
        return bool(math.isfinite(self.t) and np.all(np.isfinite(self.as_vector())))


def rotation_matrix(eta) -> np.ndarray:
    """Body-to-world rotation for ZYX Euler angles (roll, pitch, yaw)."""
    phi, theta, psi = eta
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(psi), math.sin(psi)
    return np.array([
        [cp * ct, cp * st * sf - sp * cf, cp * st * cf + sp * sf],
        [sp * ct, sp * st * sf + cp * cf, sp * st * cf - cp * sf],
        [-st, ct * sf, ct * cf],
    ])


def thrust_axis(eta) -> tuple[float, float, float]:
    """World-frame body z axis, i.e. ``R(eta) @ e3``."""
    phi, theta, psi = eta[0], eta[1], eta[2]
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(psi), math.sin(psi)
    return (cp * st * cf + sp * sf, sp * st * cf - cp * sf, ct * cf)


def euler_rate_matrix(eta) -> np.ndarray:
    """Map from ZYX Euler-angle rates to body angular rates."""
    phi, theta = eta[0], eta[1]
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    return np.array([
        [1.0, 0.0, -st],
        [0.0, cf, sf * ct],
        [0.0, -sf, cf * ct],
    ])


def _euler_rate_matrix_dot(eta, eta_dot) -> np.ndarray:
    phi, theta = eta[0], eta[1]
    dphi, dtheta = eta_dot[0], eta_dot[1]
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    return np.array([
        [0.0, 0.0, -ct * dtheta],
        [0.0, -sf * dphi, cf * ct * dphi - sf * st * dtheta],
        [0.0, -cf * dphi, -sf * ct * dphi - cf * st * dtheta],
    ])


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise DomainError("non-finite input to vehicle dynamics")


def _rates9(x, thrust, att_des, params, ax, ay, az):
    """Derivative of (p, v, eta); ``a*`` is an extra world acceleration."""
    ux, uy, uz = thrust_axis(x[6:9])
    k = thrust / params.m
    tau = params.tau_att
    return np.array([
        x[3], x[4], x[5],
        k * ux + ax, k * uy + ay, k * uz - params.g + az,
        _wrap(att_des[0] - x[6]) / tau,
        _wrap(att_des[1] - x[7]) / tau,
        _wrap(att_des[2] - x[8]) / tau,
    ])


def known_dynamics(state: VehicleState, cmd: ControlCommand, params: VehicleParams) -> np.ndarray:
    """Wind-free state derivative (12 components).

    Body rates are algebraic in the attitude-loop model (``omega = W(eta) eta_dot``),
    so their derivative is ``W_dot eta_dot + W eta_ddot`` with ``eta_ddot = -eta_dot / tau``
    for a held command.
    """
    x = state.as_vector()
    att = np.asarray(cmd.att_des, dtype=float)
    _check_finite(x, att, [cmd.thrust])
    d = _rates9(x, float(cmd.thrust), att, params, 0.0, 0.0, 0.0)
    eta, eta_dot = x[6:9], d[6:9]
    omega_dot = _euler_rate_matrix_dot(eta, eta_dot) @ eta_dot - euler_rate_matrix(eta) @ eta_dot / params.tau_att
    return np.concatenate([d, omega_dot])


def step(state: VehicleState, cmd: ControlCommand, f_ext, params: VehicleParams, dt: float,
         step_index: int | None = None) -> VehicleState:
    """Advance one RK4 step with the command and external force held constant."""
    if not (0 < dt <= MAX_DT):
        raise ConfigError(f"dt must lie in (0, {MAX_DT}], got {dt}")
    x = np.concatenate([state.p, state.v, state.eta])
    att = np.asarray(cmd.att_des, dtype=float)
    thrust = float(cmd.thrust)
    ax, ay, az = (float(f) / params.m for f in f_ext)

    k1 = _rates9(x, thrust, att, params, ax, ay, az)
    k2 = _rates9(x + 0.5 * dt * k1, thrust, att, params, ax, ay, az)
    k3 = _rates9(x + 0.5 * dt * k2, thrust, att, params, ax, ay, az)
    k4 = _rates9(x + dt * k3, thrust, att, params, ax, ay, az)
    xn = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    eta = wrap_angle(xn[6:9])
    eta_dot = np.array([_wrap(att[i] - eta[i]) for i in range(3)]) / params.tau_att
    omega = euler_rate_matrix(eta) @ eta_dot
    if not (np.all(np.isfinite(xn)) and np.all(np.isfinite(omega))):
        raise SimulationDivergence("vehicle state became non-finite", step_index)
    return VehicleState(state.t + dt, xn[0:3], xn[3:6], eta, omega)


def hover_state(p, t: float = 0.0) -> VehicleState:
    return VehicleState(t, np.asarray(p, dtype=float).copy())


def with_time(state: VehicleState, t: float) -> VehicleState:
    return replace(state, t=t)
