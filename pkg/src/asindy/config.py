"""Experiment configuration: INI-style sections, key = value.

Example::

    [experiment]
    controller = asindy
    runs = 10
    base_seed = 1
    dt = 0.005
    log_rate = 40

    [wind]
    preset = default
    f_cap = 0.1

    [trajectory]
    kind = lemniscate

Unspecified keys take the defaults below.  ``[wind] preset`` (``default``,
``strong`` or ``none``) is applied first and individual keys override it.
Vectors are comma separated.  :func:`config_to_text` writes every resolved
value, and that text is what the config digest is computed from.
"""
from __future__ import annotations

import configparser
import hashlib
import io
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .adaptive import AdaptiveSettings, ControllerGains
from .dynamics import VehicleParams
from .errors import ConfigError
from .pid import PidGains
from .sindy import DEFAULT_TERMS, SR3Settings
from .trajectory import TrajectorySpec
from .wind import OUParams, WindCompositionParams

HOVER_DEFAULT = VehicleParams().hover_thrust

WIND_PRESETS = {
    "default": dict(mu=(0.0, 0.0, 0.0), theta=1.5, sigma=0.01,
                    f_mean=(0.02, 0.01, 0.0), f_amp=(0.015, 0.015), freq=0.1, phi0=math.pi / 2,
                    t_on=4.0, t_off=2.0, f_cap=0.08, rate_cap=0.5, tau_decay=0.3),
    # force cap at 60% of hover thrust, everything else scaled up accordingly
    "strong": dict(mu=(0.0, 0.0, 0.0), theta=1.5, sigma=0.04,
                   f_mean=(0.12, 0.06, 0.0), f_amp=(0.06, 0.06), freq=0.1, phi0=math.pi / 2,
                   t_on=4.0, t_off=2.0, f_cap=round(0.6 * HOVER_DEFAULT, 6), rate_cap=2.0, tau_decay=0.3),
}
WIND_PRESETS["none"] = dict(WIND_PRESETS["default"])

CONTROLLERS = ("asindy", "pid")


@dataclass(frozen=True)
class ExperimentConfig:
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    wind_preset: str = "default"
    wind_enabled: bool = True
    ou: OUParams = field(default_factory=OUParams)
    wind: WindCompositionParams = field(default_factory=WindCompositionParams)
    trajectory: TrajectorySpec = field(default_factory=TrajectorySpec)
    controller: str = "asindy"
    adaptive: AdaptiveSettings = field(default_factory=AdaptiveSettings)
    pid: PidGains = field(default_factory=PidGains)
    sr3: SR3Settings = field(default_factory=SR3Settings)
    residual: np.ndarray | None = None  # synthetic plant residual over the default library, (7, 3)
    model_path: str | None = None
    runs: int = 10
    seeds: tuple | None = None
    base_seed: int = 1
    dt: float = 0.005
    log_rate: float = 40.0
    crash_pos: float = 50.0
    crash_vel: float = 20.0
    base_dir: str = "."

    def __post_init__(self):
        if self.controller not in CONTROLLERS:
            raise ConfigError(f"controller must be one of {CONTROLLERS}")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.seeds is not None and len(self.seeds) != self.runs:
            raise ConfigError(f"{len(self.seeds)} seeds given for runs = {self.runs}")
        if not (0 < self.dt <= 0.05):
            raise ConfigError("dt must lie in (0, 0.05]")
        ratio = 1.0 / (self.dt * self.log_rate)
        if not (self.log_rate > 0 and abs(ratio - round(ratio)) < 1e-9 and round(ratio) >= 1):
            raise ConfigError(f"log_rate {self.log_rate} Hz must divide the control rate {1 / self.dt:g} Hz")
        if self.residual is not None and np.shape(self.residual) != (len(DEFAULT_TERMS), 3):
            raise ConfigError("residual must be a (7, 3) coefficient matrix")

    @property
    def seed_list(self) -> list[int]:
        if self.seeds is not None:
            return [int(s) for s in self.seeds]
        return [self.base_seed + i for i in range(self.runs)]

    @property
    def log_every(self) -> int:
        return int(round(1.0 / (self.dt * self.log_rate)))

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def digest(self) -> str:
        return hashlib.sha256(config_to_text(self).encode()).hexdigest()


# ---------------------------------------------------------------- parsing helpers

def _vec(text: str, n: int | None = None) -> tuple:
    vals = tuple(float(v) for v in text.replace(" ", "").split(",") if v != "")
    if n is not None and len(vals) != n:
        raise ConfigError(f"expected {n} comma-separated values, got {text!r}")
    return vals


def _gain(text: str) -> np.ndarray:
    v = _vec(text)
    if len(v) == 1:
        return v[0] * np.eye(3)
    if len(v) == 3:
        return np.diag(v)
    raise ConfigError(f"gain must be a scalar or 3 values, got {text!r}")


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, np.ndarray) and v.shape == (3, 3):
        return ", ".join(repr(float(x)) for x in np.diag(v))
    if isinstance(v, (tuple, list, np.ndarray)):
        return ", ".join(repr(float(x)) for x in v)
    if v is None:
        return ""
    return str(v)


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    cp.optionxform = str
    return cp


KNOWN = {
    "experiment": {"controller", "runs", "seeds", "base_seed", "dt", "log_rate", "model_path",
                   "crash_pos", "crash_vel"},
    "vehicle": {"mass", "gravity", "tau_att", "thrust_max", "thrust_min", "max_tilt_deg"},
    "wind": {"preset", "mu", "theta", "sigma", "f_mean", "f_amp", "freq", "phi0", "t_on", "t_off",
             "f_cap", "rate_cap", "tau_decay"},
    "trajectory": {"kind", "radius", "omega", "altitude", "spiral_growth", "duration", "ramp_time"},
    "asindy": {"kp", "kv", "lambda", "lambda_leak", "q", "r", "r_bar", "p0", "p_floor", "lowpass_hz",
               "adapt", "init_from_model", "a_ceiling"},
    "pid": {"kp", "ki", "kd", "i_limit"},
    "sr3": {"lambda", "nu", "threshold", "max_iter", "tol", "regularizer", "refine"},
    "residual": {f"{ax}.{term}" for ax in "xyz" for term in DEFAULT_TERMS},
}


def from_parser(cp: configparser.ConfigParser, base_dir: str = ".") -> ExperimentConfig:
    for section in cp.sections():
        if section not in KNOWN:
            raise ConfigError(f"unknown config section [{section}]")
        extra = set(cp[section]) - KNOWN[section]
        if extra:
            raise ConfigError(f"unknown key(s) in [{section}]: {sorted(extra)}")

    def sec(name):
        return cp[name] if cp.has_section(name) else {}

    try:
        ex, ve, wi, tr = sec("experiment"), sec("vehicle"), sec("wind"), sec("trajectory")
        asi, pi, sr, res = sec("asindy"), sec("pid"), sec("sr3"), sec("residual")

        base = VehicleParams()
        vehicle = VehicleParams(
            m=float(ve.get("mass", base.m)), g=float(ve.get("gravity", base.g)),
            tau_att=float(ve.get("tau_att", base.tau_att)),
            thrust_max=float(ve.get("thrust_max", base.thrust_max)),
            thrust_min=float(ve.get("thrust_min", base.thrust_min)),
            max_tilt=math.radians(float(ve.get("max_tilt_deg", math.degrees(base.max_tilt)))),
        )

        preset = wi.get("preset", "default").strip()
        if preset not in WIND_PRESETS:
            raise ConfigError(f"unknown wind preset {preset!r}")
        w = dict(WIND_PRESETS[preset])
        for key in ("theta", "sigma", "freq", "phi0", "t_on", "t_off", "f_cap", "rate_cap", "tau_decay"):
            if key in wi:
                w[key] = float(wi[key])
        for key, n in (("mu", 3), ("f_mean", 3), ("f_amp", 2)):
            if key in wi:
                w[key] = _vec(wi[key], n)
        ou = OUParams(mu=tuple(w["mu"]), theta=w["theta"], sigma=w["sigma"])
        comp = WindCompositionParams(**{k: w[k] for k in ("f_mean", "f_amp", "freq", "phi0", "t_on",
                                                           "t_off", "f_cap", "rate_cap", "tau_decay")})

        td = TrajectorySpec()
        traj = TrajectorySpec(
            kind=tr.get("kind", td.kind).strip(), radius=float(tr.get("radius", td.radius)),
            omega=float(tr.get("omega", td.omega)), altitude=float(tr.get("altitude", td.altitude)),
            spiral_growth=float(tr.get("spiral_growth", td.spiral_growth)),
            duration=float(tr.get("duration", td.duration)), ramp_time=float(tr.get("ramp_time", td.ramp_time)),
        )

        ad, gd = AdaptiveSettings(), ControllerGains()
        gains = ControllerGains(
            Kp=_gain(asi["kp"]) if "kp" in asi else gd.Kp,
            Kv=_gain(asi["kv"]) if "kv" in asi else gd.Kv,
            Lambda=_gain(asi["lambda"]) if "lambda" in asi else gd.Lambda,
        )
        lp = asi.get("lowpass_hz", _fmt(ad.lowpass_hz)).strip()
        adaptive = AdaptiveSettings(
            gains=gains,
            lambda_leak=float(asi.get("lambda_leak", ad.lambda_leak)), q=float(asi.get("q", ad.q)),
            R=float(asi.get("r", ad.R)), R_bar=float(asi.get("r_bar", ad.R_bar)),
            p0=float(asi.get("p0", ad.p0)), p_floor=float(asi.get("p_floor", ad.p_floor)),
            lowpass_hz=float(lp) if lp and lp.lower() != "none" and float(lp) > 0 else None,
            adapt=_bool(asi.get("adapt", "true")),
            init_from_model=_bool(asi.get("init_from_model", "false")),
            a_ceiling=float(asi.get("a_ceiling", ad.a_ceiling)),
        )

        pdft = PidGains()
        pid = PidGains(
            Kp=_gain(pi["kp"]) if "kp" in pi else pdft.Kp,
            Ki=_gain(pi["ki"]) if "ki" in pi else pdft.Ki,
            Kd=_gain(pi["kd"]) if "kd" in pi else pdft.Kd,
            i_limit=float(pi.get("i_limit", pdft.i_limit)),
        )

        sd = SR3Settings()
        sr3 = SR3Settings(
            lam=float(sr.get("lambda", sd.lam)), nu=float(sr.get("nu", sd.nu)),
            threshold=float(sr.get("threshold", sd.threshold)), max_iter=int(sr.get("max_iter", sd.max_iter)),
            tol=float(sr.get("tol", sd.tol)), regularizer=sr.get("regularizer", sd.regularizer).strip(),
            refine=_bool(sr.get("refine", _fmt(sd.refine))),
        )

        residual = None
        if len(res):
            residual = np.zeros((len(DEFAULT_TERMS), 3))
            for key, val in res.items():
                ax, term = key.split(".", 1)
                residual[DEFAULT_TERMS.index(term), "xyz".index(ax)] = float(val)

        seeds = ex.get("seeds", "").strip()
        seeds = tuple(int(s) for s in seeds.split(",")) if seeds else None
        runs = int(ex.get("runs", len(seeds) if seeds else 10))
        model_path = ex.get("model_path", "").strip() or None

        cfg = ExperimentConfig(
            vehicle=vehicle, wind_preset=preset, wind_enabled=(preset != "none"), ou=ou, wind=comp,
            trajectory=traj, controller=ex.get("controller", "asindy").strip(), adaptive=adaptive, pid=pid,
            sr3=sr3, residual=residual, model_path=model_path, runs=runs, seeds=seeds,
            base_seed=int(ex.get("base_seed", 1)), dt=float(ex.get("dt", 0.005)),
            log_rate=float(ex.get("log_rate", 40.0)), crash_pos=float(ex.get("crash_pos", 50.0)),
            crash_vel=float(ex.get("crash_vel", 20.0)), base_dir=base_dir,
        )
    except (ValueError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid configuration value: {exc}") from exc
    if cfg.model_path is not None and not cfg.resolve(cfg.model_path).exists():
        raise ConfigError(f"model file {cfg.model_path} does not exist")
    return cfg


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Read a config file (or start from defaults) and apply ``section.key`` overrides."""
    cp = _parser()
    base_dir = "."
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            cp.read_string(path.read_text(), source=str(path))
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        base_dir = str(path.parent)
    apply_overrides(cp, overrides or {})
    return from_parser(cp, base_dir)


def apply_overrides(cp: configparser.ConfigParser, overrides: dict) -> None:
    for dotted, value in overrides.items():
        section, _, key = dotted.partition(".")
        if not key:
            raise ConfigError(f"override {dotted!r} must look like section.key")
        if not cp.has_section(section):
            cp.add_section(section)
        cp[section][key] = _fmt(value) if not isinstance(value, str) else value


def to_parser(cfg: ExperimentConfig) -> configparser.ConfigParser:
    cp = _parser()
    v, ou, w, tr, ad, pg, sr = cfg.vehicle, cfg.ou, cfg.wind, cfg.trajectory, cfg.adaptive, cfg.pid, cfg.sr3
    cp["experiment"] = {
        "controller": cfg.controller, "runs": _fmt(cfg.runs),
        "seeds": ", ".join(str(s) for s in cfg.seeds) if cfg.seeds else "",
        "base_seed": _fmt(cfg.base_seed), "dt": _fmt(cfg.dt), "log_rate": _fmt(cfg.log_rate),
        "model_path": cfg.model_path or "", "crash_pos": _fmt(cfg.crash_pos), "crash_vel": _fmt(cfg.crash_vel),
    }
    cp["vehicle"] = {"mass": _fmt(v.m), "gravity": _fmt(v.g), "tau_att": _fmt(v.tau_att),
                     "thrust_max": _fmt(v.thrust_max), "thrust_min": _fmt(v.thrust_min),
                     "max_tilt_deg": _fmt(math.degrees(v.max_tilt))}
    cp["wind"] = {"preset": cfg.wind_preset, "mu": _fmt(ou.mu), "theta": _fmt(ou.theta), "sigma": _fmt(ou.sigma),
                  "f_mean": _fmt(w.f_mean), "f_amp": _fmt(w.f_amp), "freq": _fmt(w.freq), "phi0": _fmt(w.phi0),
                  "t_on": _fmt(w.t_on), "t_off": _fmt(w.t_off), "f_cap": _fmt(w.f_cap),
                  "rate_cap": _fmt(w.rate_cap), "tau_decay": _fmt(w.tau_decay)}
    cp["trajectory"] = {f.name: _fmt(getattr(tr, f.name)) for f in fields(tr)}
    cp["asindy"] = {"kp": _fmt(ad.gains.Kp), "kv": _fmt(ad.gains.Kv), "lambda": _fmt(ad.gains.Lambda),
                    "lambda_leak": _fmt(ad.lambda_leak), "q": _fmt(ad.q), "r": _fmt(ad.R), "r_bar": _fmt(ad.R_bar),
                    "p0": _fmt(ad.p0), "p_floor": _fmt(ad.p_floor),
                    "lowpass_hz": _fmt(ad.lowpass_hz) if ad.lowpass_hz else "none",
                    "adapt": _fmt(ad.adapt), "init_from_model": _fmt(ad.init_from_model),
                    "a_ceiling": _fmt(ad.a_ceiling)}
    cp["pid"] = {"kp": _fmt(pg.Kp), "ki": _fmt(pg.Ki), "kd": _fmt(pg.Kd), "i_limit": _fmt(pg.i_limit)}
    cp["sr3"] = {"lambda": _fmt(sr.lam), "nu": _fmt(sr.nu), "threshold": _fmt(sr.threshold),
                 "max_iter": _fmt(sr.max_iter), "tol": _fmt(sr.tol), "regularizer": sr.regularizer,
                 "refine": _fmt(sr.refine)}
    if cfg.residual is not None:
        cp["residual"] = {f"{ax}.{term}": _fmt(float(cfg.residual[i, j]))
                          for j, ax in enumerate("xyz") for i, term in enumerate(DEFAULT_TERMS)
                          if cfg.residual[i, j] != 0.0}
    return cp


def config_to_text(cfg: ExperimentConfig) -> str:
    buf = io.StringIO()
    to_parser(cfg).write(buf)
    return buf.getvalue()


def with_overrides(cfg: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    cp = to_parser(cfg)
    if "wind.preset" in overrides:
        # a new preset replaces every wind value written out from the old one
        cp["wind"] = {}
    apply_overrides(cp, overrides)
    return from_parser(cp, cfg.base_dir)


def with_seed(ou: OUParams, seed: int) -> OUParams:
    return replace(ou, seed=int(seed))
