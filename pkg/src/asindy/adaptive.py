"""Residual-force adaptive position controller.

Per control step:

1. PD commanded acceleration ``a_cmd = a_d - Kp e_p - Kv e_v``.
2. Measured acceleration from differenced velocity (optionally low-passed)
   and the residual-force proxy ``f_dist = m a_meas - m g - u_prev``.
3. Feature-based estimate ``f_hat = phi A`` over the active library terms.
4. Leaky RLS (continuous-time law, explicit Euler) for ``A`` and ``P``
   driven by the estimate error and the sliding error ``s = e_v + Lambda e_p``.
5. Desired rotor force ``F_d = m a_cmd - m g - f_hat``, mapped to thrust and
   roll/pitch with yaw held at zero.

Frame and sign convention: world ENU with gravity vector ``g = (0, 0, -9.81)``.
The gravity term appears as ``- m g`` so that at hover ``F_d = (0, 0, m|g|)``
and ``f_dist = 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import ControlCommand, VehicleParams, VehicleState, thrust_axis
from .errors import AdaptationDivergence, ConfigError
from .sindy import TERM_SCALAR, LibrarySpec, SindyModel
from .trajectory import ReferenceSample


def _diag(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return x * np.eye(3)
    if x.shape == (3,):
        return np.diag(x)
    return x


def _check_positive_diagonal(name, M, strict=True):
    if M.shape != (3, 3) or np.any(M - np.diag(np.diag(M)) != 0):
        raise ConfigError(f"{name} must be a 3x3 diagonal matrix")
    d = np.diag(M)
    if np.any(d <= 0) if strict else np.any(d < 0):
        raise ConfigError(f"{name} diagonal entries must be {'> 0' if strict else '>= 0'}")


@dataclass(frozen=True)
class ControllerGains:
    Kp: np.ndarray = field(default_factory=lambda: 6.0 * np.eye(3))
    Kv: np.ndarray = field(default_factory=lambda: 4.0 * np.eye(3))
    Lambda: np.ndarray = field(default_factory=lambda: 1.0 * np.eye(3))

    def __post_init__(self):
        for name in ("Kp", "Kv", "Lambda"):
            M = _diag(getattr(self, name))
            _check_positive_diagonal(name, M)
            object.__setattr__(self, name, M)


@dataclass(frozen=True)
class AdaptationState:
    A: np.ndarray
    P: np.ndarray
    lambda_leak: float = 0.3
    Q: np.ndarray | None = None
    R: float = 0.05
    R_bar: float = 0.5
    p_floor: float = 1e-6

    def __post_init__(self):
        n = self.A.shape[0]
        if self.A.shape != (n, 3) or self.P.shape != (n, n):
            raise ConfigError(f"A must be (n, 3) and P (n, n); got {self.A.shape}, {self.P.shape}")
        if self.Q is None:
            object.__setattr__(self, "Q", np.zeros((n, n)))
        if self.lambda_leak < 0 or not (self.R > 0 and self.R_bar > 0 and self.p_floor > 0):
            raise ConfigError("need lambda_leak >= 0 and R, R_bar, p_floor > 0")

    @property
    def n_terms(self) -> int:
        return self.A.shape[0]

    @classmethod
    def initial(cls, n: int, p0: float = 1.0, q: float = 1.0, lambda_leak: float = 0.3,
                R: float = 0.05, R_bar: float = 0.5, p_floor: float = 1e-6, A0=None) -> "AdaptationState":
        A = np.zeros((n, 3)) if A0 is None else np.array(A0, dtype=float)
        return cls(A, p0 * np.eye(n), lambda_leak, q * np.eye(n), R, R_bar, p_floor)


@dataclass(frozen=True)
class ControlDebug:
    e_p: np.ndarray
    e_v: np.ndarray
    a_cmd: np.ndarray
    f_dist: np.ndarray
    f_hat: np.ndarray
    s: np.ndarray
    F_d: np.ndarray
    a_meas: np.ndarray
    u_prev: np.ndarray


@dataclass(frozen=True)
class LoopMemory:
    """Signals carried between control steps."""

    v_prev: np.ndarray
    thrust_prev: float
    a_filt: np.ndarray = field(default_factory=lambda: np.zeros(3))
    primed: bool = False

    @classmethod
    def start(cls, state: VehicleState, params: VehicleParams) -> "LoopMemory":
        return cls(np.array(state.v, dtype=float), params.hover_thrust)


@dataclass(frozen=True)
class AdaptiveSettings:
    gains: ControllerGains = field(default_factory=ControllerGains)
    lambda_leak: float = 0.3
    q: float = 1.0
    R: float = 0.05
    R_bar: float = 0.5
    p0: float = 1.0
    p_floor: float = 1e-6
    lowpass_hz: float | None = 15.0
    adapt: bool = True
    init_from_model: bool = False
    a_ceiling: float = 1e3  # ||A||_F bound that counts as adaptation divergence


# ---------------------------------------------------------------- components

def pd_command(state: VehicleState, ref: ReferenceSample, gains: ControllerGains) -> np.ndarray:
    return ref.a_d - gains.Kp @ (state.p - ref.p_d) - gains.Kv @ (state.v - ref.v_d)


def residual_proxy(a_meas, u_prev_world, params: VehicleParams) -> np.ndarray:
    return params.m * np.asarray(a_meas) - params.m * params.g_vec - np.asarray(u_prev_world)


def estimate_disturbance(phi, adapt: AdaptationState) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (adapt.n_terms,):
        raise ValueError(f"feature row has length {phi.shape}, adaptation expects {adapt.n_terms}")
    return phi @ adapt.A


def rls_update(adapt: AdaptationState, phi, f_dist, f_hat, s, dt: float,
               step_index: int | None = None) -> AdaptationState:
    """One explicit-Euler step of the leaky RLS laws.

    ``A_dot = -lam A - P phi' (f_hat - f_dist) / R + P phi' s``
    ``P_dot = -2 lam P + Q - P phi' phi P / R_bar``

    P is then symmetrised and its eigenvalues floored at ``p_floor``.
    """
    if not dt > 0:
        raise ConfigError("dt must be > 0")
    phi = np.asarray(phi, dtype=float)
    lam = adapt.lambda_leak
    Pphi = adapt.P @ phi
    err = np.asarray(f_hat, dtype=float) - np.asarray(f_dist, dtype=float)
    with np.errstate(invalid="ignore", over="ignore"):  # non-finite results are reported below
        A_dot = -lam * adapt.A - np.outer(Pphi, err) / adapt.R + np.outer(Pphi, s)
        P_dot = -2.0 * lam * adapt.P + adapt.Q - np.outer(Pphi, Pphi) / adapt.R_bar
        A = adapt.A + dt * A_dot
        P = adapt.P + dt * P_dot
    P = 0.5 * (P + P.T)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(P))):
        raise AdaptationDivergence("adaptation produced non-finite values", step_index)
    evals = np.linalg.eigvalsh(P)
    if evals[0] < adapt.p_floor:
        evals, vecs = np.linalg.eigh(P)
        # margin absorbs the rounding of the reconstruction below
        floor = adapt.p_floor + 64.0 * np.finfo(float).eps * float(np.max(np.abs(evals)))
        P = (vecs * np.maximum(evals, floor)) @ vecs.T
        P = 0.5 * (P + P.T)
    return replace(adapt, A=A, P=P)


def desired_force(a_cmd, f_hat, params: VehicleParams) -> np.ndarray:
    return params.m * np.asarray(a_cmd) - params.m * params.g_vec - np.asarray(f_hat)


def force_to_attitude_thrust(F_d, params: VehicleParams) -> ControlCommand:
    """Thrust magnitude and roll/pitch (yaw = 0) that align body z with ``F_d``.

    Tilt beyond ``params.max_tilt`` is clamped; the thrust is then chosen to
    keep the vertical component of ``F_d``.  A force below 5% of hover weight
    yields a level hover command with ``fallback`` set.
    """
    fx, fy, fz = (float(v) for v in F_d)
    mag = math.sqrt(fx * fx + fy * fy + fz * fz)
    if not math.isfinite(mag) or mag < 0.05 * params.hover_thrust:
        return ControlCommand(params.hover_thrust, np.zeros(3), fallback=True)
    zx, zy, zz = fx / mag, fy / mag, fz / mag
    thrust = mag
    if zz < math.cos(params.max_tilt):
        h = math.hypot(fx, fy)
        st, ct = math.sin(params.max_tilt), math.cos(params.max_tilt)
        zx, zy, zz = st * fx / h, st * fy / h, ct
        thrust = fz / ct
    thrust = min(max(thrust, params.thrust_min), params.thrust_max)
    roll = math.asin(max(-1.0, min(1.0, -zy)))
    pitch = math.atan2(zx, zz)
    return ControlCommand(thrust, np.array([roll, pitch, 0.0]))


def feature_row(state: VehicleState, thrust: float, terms) -> np.ndarray:
    roll, pitch = float(state.eta[0]), float(state.eta[1])
    return np.array([TERM_SCALAR[t](roll, pitch, thrust) for t in terms])


def control_step(state: VehicleState, ref: ReferenceSample, gains: ControllerGains,
                 adapt: AdaptationState, model: SindyModel, params: VehicleParams, dt: float,
                 memory: LoopMemory, lowpass_hz: float | None = 15.0, adapt_on: bool = True,
                 step_index: int | None = None):
    """One pass of the adaptive loop.

    Returns ``(command, adaptation, debug, memory)``; pure in its inputs.
    Features are the model's active terms evaluated at the current attitude
    and the thrust currently applied.
    """
    terms = model.active_terms
    u_prev = memory.thrust_prev * np.array(thrust_axis(state.eta))

    e_p = state.p - ref.p_d
    e_v = state.v - ref.v_d
    a_cmd = ref.a_d - gains.Kp @ e_p - gains.Kv @ e_v

    if memory.primed:
        a_raw = (state.v - memory.v_prev) / dt
        if lowpass_hz:
            alpha = dt / (dt + 1.0 / (2.0 * math.pi * lowpass_hz))
            a_meas = memory.a_filt + alpha * (a_raw - memory.a_filt)
        else:
            a_meas = a_raw
    else:
        # no velocity history yet: assume the commanded force balance held
        a_meas = (u_prev + params.m * params.g_vec) / params.m
    f_dist = residual_proxy(a_meas, u_prev, params)

    phi = feature_row(state, memory.thrust_prev, terms)
    f_hat = estimate_disturbance(phi, adapt)
    s = e_v + gains.Lambda @ e_p
    if adapt_on:
        adapt = rls_update(adapt, phi, f_dist, f_hat, s, dt, step_index)

    F_d = desired_force(a_cmd, f_hat, params)
    cmd = force_to_attitude_thrust(F_d, params)

    debug = ControlDebug(e_p, e_v, a_cmd, f_dist, f_hat, s, F_d, a_meas, u_prev)
    memory = LoopMemory(np.array(state.v, dtype=float), float(cmd.thrust), a_meas, True)
    return cmd, adapt, debug, memory


class AdaptiveController:
    """Stateful wrapper that owns one run's adaptation state."""

    def __init__(self, model: SindyModel, params: VehicleParams, settings: AdaptiveSettings = AdaptiveSettings()):
        terms = model.active_terms
        if not terms:
            raise ConfigError("SINDy model has no active terms to adapt")
        self.model = model
        self.params = params
        self.settings = settings
        A0 = None
        if settings.init_from_model:
            A0 = model.xi[model.active_mask]
        self.adapt = AdaptationState.initial(len(terms), settings.p0, settings.q, settings.lambda_leak,
                                             settings.R, settings.R_bar, settings.p_floor, A0)
        self.memory = None

    def __call__(self, state: VehicleState, ref: ReferenceSample, dt: float, step_index: int | None = None):
        if self.memory is None:
            self.memory = LoopMemory.start(state, self.params)
        st = self.settings
        cmd, self.adapt, debug, self.memory = control_step(
            state, ref, st.gains, self.adapt, self.model, self.params, dt, self.memory,
            st.lowpass_hz, st.adapt, step_index)
        if np.linalg.norm(self.adapt.A) > st.a_ceiling:
            raise AdaptationDivergence("||A||_F exceeded the configured ceiling", step_index)
        return cmd, debug


def full_library_model(library: LibrarySpec = LibrarySpec()) -> SindyModel:
    """Model with every library term marked active and unit placeholder coefficients."""
    return SindyModel(library, np.ones((len(library), 3)), {"solver": "none"})
