"""Non-adaptive PID position baseline.

Uses the same force-to-attitude mapping as the adaptive controller, so the
two arms differ only by the residual-force estimate.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adaptive import _check_positive_diagonal, _diag, desired_force, force_to_attitude_thrust
from .dynamics import ControlCommand, VehicleParams, VehicleState
from .errors import ConfigError
from .trajectory import ReferenceSample


@dataclass(frozen=True)
class PidGains:
    Kp: np.ndarray = field(default_factory=lambda: 6.0 * np.eye(3))
    Ki: np.ndarray = field(default_factory=lambda: 0.5 * np.eye(3))
    Kd: np.ndarray = field(default_factory=lambda: 4.0 * np.eye(3))
    i_limit: float = 0.5

    def __post_init__(self):
        for name in ("Kp", "Ki", "Kd"):
            M = _diag(getattr(self, name))
            _check_positive_diagonal(name, M, strict=False)
            object.__setattr__(self, name, M)
        if not self.i_limit > 0:
            raise ConfigError("i_limit must be > 0")


def pid_step(state: VehicleState, ref: ReferenceSample, gains: PidGains, integ, params: VehicleParams,
             dt: float) -> tuple[ControlCommand, np.ndarray]:
    """Returns the command and the updated (clamped) position-error integral."""
    if not dt > 0:
        raise ConfigError("dt must be > 0")
    e_p = state.p - ref.p_d
    integ = np.clip(np.asarray(integ, dtype=float) + e_p * dt, -gains.i_limit, gains.i_limit)
    a_cmd = ref.a_d - gains.Kp @ e_p - gains.Kd @ (state.v - ref.v_d) - gains.Ki @ integ
    F_d = desired_force(a_cmd, np.zeros(3), params)
    return force_to_attitude_thrust(F_d, params), integ


class PidController:
    def __init__(self, params: VehicleParams, gains: PidGains = PidGains()):
        self.params = params
        self.gains = gains
        self.integ = np.zeros(3)

    def __call__(self, state, ref, dt, step_index=None):
        cmd, self.integ = pid_step(state, ref, self.gains, self.integ, self.params, dt)
        return cmd, None
