"""Burst-gated Ornstein-Uhlenbeck gust model.

The applied force is built per step as

1. ``ou_step``: Euler update of the OU gust ``g``,
2. ``compose_force``: mean + slow sinusoid + gust, with the non-mean part
   decaying exponentially while the burst gate is off,
3. ``limit_force``: magnitude clamp, then rate clamp against the previously
   applied force.

Randomness comes from :class:`NormalStream`: Philox4x64-10 (counter-based,
Random123 family) uniform doubles turned into standard normals with the
Box-Muller transform, pairing uniforms ``(u[2k], u[2k+1])``.  The stream is
chunking-invariant, so block size never changes the realised sequence.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError

TWO_PI = 2.0 * math.pi


class NormalStream:
    """Sequential standard-normal variates from a seeded Philox generator."""

    def __init__(self, seed: int, block: int = 4096):
        if block % 2:
            raise ValueError("block size must be even")
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.Philox(key=self.seed))
        self._block = block
        self._buf = np.empty(0)
        self._pos = 0

    @staticmethod
    def box_muller(u: np.ndarray) -> np.ndarray:
        u1, u2 = u[0::2], u[1::2]
        r = np.sqrt(-2.0 * np.log1p(-u1))  # 1 - u1 lies in (0, 1]
        out = np.empty(u.shape[0])
        out[0::2] = r * np.cos(TWO_PI * u2)
        out[1::2] = r * np.sin(TWO_PI * u2)
        return out

    def _refill(self):
        self._buf = self.box_muller(self._gen.random(self._block))
        self._pos = 0

    def normals(self, n: int) -> np.ndarray:
        out = np.empty(n)
        filled = 0
        while filled < n:
            if self._pos >= self._buf.shape[0]:
                self._refill()
            take = min(n - filled, self._buf.shape[0] - self._pos)
            out[filled:filled + take] = self._buf[self._pos:self._pos + take]
            self._pos += take
            filled += take
        return out


@dataclass(frozen=True)
class OUParams:
    mu: tuple = (0.0, 0.0, 0.0)
    theta: float = 1.5
    sigma: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not self.theta > 0:
            raise ConfigError("OU theta must be > 0")
        if self.sigma < 0:
            raise ConfigError("OU sigma must be >= 0")


@dataclass(frozen=True)
class WindCompositionParams:
    f_mean: tuple = (0.02, 0.01, 0.0)
    f_amp: tuple = (0.015, 0.015)
    freq: float = 0.1
    phi0: float = math.pi / 2
    t_on: float = 4.0
    t_off: float = 2.0
    f_cap: float = 0.08
    rate_cap: float = 0.5
    tau_decay: float = 0.3

    def __post_init__(self):
        if self.t_on < 0 or self.t_off < 0 or self.t_on + self.t_off <= 0:
            raise ConfigError("burst schedule needs t_on, t_off >= 0 and t_on + t_off > 0")
        if not (self.f_cap > 0 and self.rate_cap > 0 and self.tau_decay > 0):
            raise ConfigError("f_cap, rate_cap and tau_decay must be > 0")


@dataclass(frozen=True)
class WindState:
    g: np.ndarray = field(default_factory=lambda: np.zeros(3))
    f_applied: np.ndarray = field(default_factory=lambda: np.zeros(3))
    t: float = 0.0


def burst_indicator(t: float, comp: WindCompositionParams) -> int:
    return 1 if math.fmod(t, comp.t_on + comp.t_off) < comp.t_on else 0


def burst_envelope(t: float, comp: WindCompositionParams) -> float:
    """1 during a burst; ``exp(-(t - t_off_start) / tau_decay)`` while off."""
    phase = math.fmod(t, comp.t_on + comp.t_off)
    if phase < comp.t_on:
        return 1.0
    return math.exp(-(phase - comp.t_on) / comp.tau_decay)


def ou_step(ws: WindState, ou: OUParams, dt: float, xi=None, rng: NormalStream | None = None) -> WindState:
    """One Euler-Maruyama step; ``xi`` (3 normals) is drawn from ``rng`` when omitted."""
    if not dt > 0:
        raise ConfigError("dt must be > 0")
    if xi is None:
        xi = rng.normals(3)
    mu = np.asarray(ou.mu, dtype=float)
    g = ws.g + ou.theta * (mu - ws.g) * dt + ou.sigma * math.sqrt(dt) * np.asarray(xi)
    return replace(ws, g=g, t=ws.t + dt)


def ou_path(g0, ou: OUParams, dt: float, xi: np.ndarray) -> np.ndarray:
    """Run ``len(xi)`` OU steps with pre-drawn normals, shape (n, 3).

    Same floating-point expression as :func:`ou_step`, evaluated on Python
    floats, so the two agree bit-for-bit.  Returns the states after each step.
    """
    xi = np.asarray(xi, dtype=float)
    n = xi.shape[0]
    out = np.empty((n, 3))
    theta, sig = ou.theta, ou.sigma * math.sqrt(dt)
    for ax in range(3):
        g = float(g0[ax])
        mu = float(ou.mu[ax])
        col = xi[:, ax].tolist()
        res = [0.0] * n
        for k in range(n):
            g = g + theta * (mu - g) * dt + sig * col[k]
            res[k] = g
        out[:, ax] = res
    return out


def compose_force(t: float, ws: WindState, comp: WindCompositionParams) -> np.ndarray:
    env = burst_envelope(t, comp)
    s = math.sin(TWO_PI * comp.freq * t)
    s_y = math.sin(TWO_PI * comp.freq * t + comp.phi0)
    fm, fa, g = comp.f_mean, comp.f_amp, ws.g
    return np.array([
        fm[0] + env * (fa[0] * s + g[0]),
        fm[1] + env * (fa[1] * s_y + g[1]),
        fm[2] + env * g[2],
    ])


def limit_force(f_raw, f_prev, comp: WindCompositionParams, dt: float) -> np.ndarray:
    if not dt > 0:
        raise ConfigError("dt must be > 0")
    f = np.asarray(f_raw, dtype=float)
    mag = math.sqrt(float(f @ f))
    if mag > comp.f_cap:
        f = f * (comp.f_cap / mag)
    f_prev = np.asarray(f_prev, dtype=float)
    df = f - f_prev
    dmag = math.sqrt(float(df @ df))
    max_step = comp.rate_cap * dt
    if dmag > max_step:
        f = f_prev + df * (max_step / dmag)
    return f


def wind_accel(f_wind, m: float) -> np.ndarray:
    if not m > 0:
        raise ConfigError("mass must be > 0")
    return np.asarray(f_wind, dtype=float) / m


class WindProcess:
    """Per-run wind generator: owns the RNG stream and the wind state.

    ``advance(dt)`` returns the force to apply over ``[t, t + dt)``; the OU
    state is advanced first, then composed at the current time and limited.
    Time is ``k * dt`` for step count ``k`` so the burst schedule does not
    drift with accumulated rounding.
    """

    def __init__(self, ou: OUParams, comp: WindCompositionParams, enabled: bool = True):
        self.ou = ou
        self.comp = comp
        self.enabled = enabled
        self.rng = NormalStream(ou.seed)
        self.state = WindState(g=np.asarray(ou.mu, dtype=float).copy())
        self.k = 0

    def advance(self, dt: float) -> np.ndarray:
        ws = self.state
        t = self.k * dt
        self.k += 1
        if not self.enabled:
            self.state = replace(ws, t=self.k * dt)
            return ws.f_applied
        ws = ou_step(ws, self.ou, dt, rng=self.rng)
        f = limit_force(compose_force(t, ws, self.comp), ws.f_applied, self.comp, dt)
        self.state = replace(ws, f_applied=f, t=self.k * dt)
        return f
