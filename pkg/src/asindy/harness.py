"""Closed-loop runs and multi-seed campaigns.

Physics and control share one clock (``cfg.dt``); rows are logged every
``cfg.log_every`` steps.  Wind depends only on the seed and time, never on
the vehicle, so two controllers run with the same seed see the same gust
sequence.
"""
from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import runlog as rl
from .adaptive import AdaptiveController, feature_row, full_library_model
from .config import ExperimentConfig, config_to_text, with_overrides, with_seed
from .dynamics import VehicleState, step
from .errors import AsindyError, ConfigError, SimulationDivergence
from .metrics import METRICS, aggregate, compute_stats, planar_error_series, stats_row
from .pid import PidController
from .sindy import DEFAULT_TERMS, SindyModel, TrainingSet, build_target, load_model, save_model, solve_sr3
from .trajectory import sample
from .wind import WindProcess, wind_accel

log = logging.getLogger(__name__)

ARMS = ("asindy", "pid")


@dataclass
class RunResult:
    seed: int
    controller: str
    log: rl.RunLog
    crashed: bool = False
    crash_reason: str = ""
    crash_step: int | None = None
    fallbacks: int = 0


def make_controller(cfg: ExperimentConfig, kind: str, model: SindyModel | None):
    if kind == "pid":
        return PidController(cfg.vehicle, cfg.pid)
    if model is None:
        if cfg.adaptive.adapt:
            raise ConfigError("the asindy controller needs a SINDy model (model_path / --model)")
        model = full_library_model()
    return AdaptiveController(model, cfg.vehicle, cfg.adaptive)


def _row(t, ref, state, cmd, f_wind, f_res, debug, event, m):
    if debug is None:
        e_p = state.p - ref.p_d
        e_v = state.v - ref.v_d
        zeros = np.zeros(3)
        dbg = (zeros, zeros, zeros, e_p, e_v)
    else:
        dbg = (debug.f_dist, debug.f_hat, debug.s, debug.e_p, debug.e_v)
    return np.concatenate([
        [t], ref.p_d, ref.v_d, ref.a_d, state.p, state.v, state.eta, state.omega,
        [cmd.thrust], cmd.att_des, f_wind, wind_accel(f_wind, m), f_res, *dbg, [event],
    ])


def simulate_run(cfg: ExperimentConfig, seed: int, controller: str | None = None,
                 model: SindyModel | None = None) -> RunResult:
    kind = controller or cfg.controller
    params, traj, dt = cfg.vehicle, cfg.trajectory, cfg.dt
    ctrl = make_controller(cfg, kind, model)
    wind = WindProcess(with_seed(cfg.ou, seed), cfg.wind, cfg.wind_enabled)
    residual = cfg.residual

    ref0 = sample(traj, 0.0)
    state = VehicleState(0.0, ref0.p_d.copy(), ref0.v_d.copy())
    n_steps = int(round(traj.duration / dt))
    every = cfg.log_every
    rows = []
    event = rl.EVENT_NONE
    result = RunResult(seed, kind, None)
    last = None

    for k in range(n_steps + 1):
        t = k * dt
        ref = sample(traj, min(t, traj.duration))
        try:
            cmd, debug = ctrl(state, ref, dt, k)
        except SimulationDivergence as exc:
            result.crashed, result.crash_reason, result.crash_step = True, f"adaptation: {exc}", k
            break
        if cmd.fallback:
            result.fallbacks += 1
            event = max(event, rl.EVENT_FALLBACK)
        f_wind = wind.advance(dt)
        f_res = np.zeros(3)
        if residual is not None:
            f_res = feature_row(state, cmd.thrust, DEFAULT_TERMS) @ residual
        last = (t, ref, state, cmd, f_wind, f_res, debug)
        if k % every == 0:
            rows.append(_row(t, ref, state, cmd, f_wind, f_res, debug, event, params.m))
            event = rl.EVENT_NONE
        if k == n_steps:
            break
        try:
            state = step(state, cmd, f_wind + f_res, params, dt, k)
        except SimulationDivergence as exc:
            result.crashed, result.crash_reason, result.crash_step = True, f"divergence: {exc}", k
            break
        if float(np.linalg.norm(state.p)) > cfg.crash_pos or float(np.linalg.norm(state.v)) > cfg.crash_vel:
            result.crashed, result.crash_reason, result.crash_step = True, "envelope exceeded", k + 1
            last = (t + dt, sample(traj, min(t + dt, traj.duration)), state, cmd, f_wind, f_res, debug)
            break

    if result.crashed and last is not None:
        rows.append(_row(*last, rl.EVENT_CRASH, params.m))
    result.log = rl.RunLog(np.array(rows) if rows else np.empty((0, len(rl.COLUMNS))))
    return result


def run_stats(result: RunResult, cfg: ExperimentConfig):
    return compute_stats(planar_error_series(result.log, cfg.trajectory.ramp_time))


# ---------------------------------------------------------------- file helpers

def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out: Path, cfg: ExperimentConfig, runs: list[dict], files: list[Path], extra=None) -> Path:
    manifest = {
        "config_digest": cfg.digest(),
        "seeds": cfg.seed_list,
        "runs": runs,
        "files": {str(p.relative_to(out)): sha256_file(p) for p in sorted(files)},
    }
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _run_entry(res: RunResult, path: Path, out: Path) -> dict:
    return {"seed": res.seed, "controller": res.controller, "file": str(path.relative_to(out)),
            "rows": len(res.log), "crashed": res.crashed, "crash_reason": res.crash_reason,
            "fallbacks": res.fallbacks}


# ---------------------------------------------------------------- campaigns

def collect(cfg: ExperimentConfig, out_dir) -> list[Path]:
    """Data-collection runs with the stock (non-adapting) loop; one CSV per seed."""
    if cfg.controller == "asindy" and cfg.adaptive.adapt:
        raise ConfigError("collect needs controller = pid or asindy with adapt = false")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(config_to_text(cfg))
    model = load_model(cfg.resolve(cfg.model_path)) if cfg.model_path else None
    paths, entries = [], []
    for seed in cfg.seed_list:
        res = simulate_run(cfg, seed, model=model)
        path = out / f"run_{cfg.controller}_{cfg.trajectory.kind}_seed{seed}.csv"
        res.log.save(path)
        if res.crashed:
            log.warning("seed %d crashed: %s", seed, res.crash_reason)
        paths.append(path)
        entries.append(_run_entry(res, path, out))
    write_manifest(out, cfg, entries, paths + [out / "config.ini"], {"stage": "collect"})
    return paths


def identify(log_paths, cfg: ExperimentConfig, model_path, echo=print) -> SindyModel:
    """Fit the residual-force model on the concatenation of the given logs."""
    sets = []
    for p in log_paths:
        try:
            sets.append(build_target(rl.RunLog.load(p), cfg.vehicle))
        except AsindyError as exc:
            raise type(exc)(f"{p}: {exc}") from exc
    data = TrainingSet.concatenate(sets)
    model = solve_sr3(data, cfg.sr3)
    model.meta["source_logs"] = ", ".join(sorted(Path(p).name for p in log_paths))
    save_model(model, model_path)
    if echo:
        echo(f"identified terms ({data.n_samples} samples, {len(log_paths)} log(s)):")
        echo(model.describe())
    return model


@dataclass
class EvaluationResult:
    per_run: dict = field(default_factory=dict)   # arm -> list[(seed, ErrorStats)]
    aggregates: dict = field(default_factory=dict)  # arm -> AggregateStats | None
    crashes: dict = field(default_factory=dict)   # arm -> list[seed]
    wind: dict = field(default_factory=dict)      # arm -> {seed: (n, 3) applied wind}


def results_table(ev: EvaluationResult, kind: str) -> str:
    head = f"{'Trajectory':<12}{'Control':<9}{'RMSE_xy [m]':>18}{'MAE_xy [m]':>18}{'P95_xy [m]':>18}{'Max_xy [m]':>18}{'Runs':>6}{'Crashes':>9}"
    lines = [head, "-" * len(head)]
    for arm in ARMS:
        agg = ev.aggregates.get(arm)
        cells = [agg.fmt(m) if agg else "n/a" for m in METRICS]
        n = agg.n_runs if agg else 0
        lines.append(f"{kind:<12}{arm:<9}" + "".join(f"{c:>18}" for c in cells)
                     + f"{n:>6}{len(ev.crashes.get(arm, [])):>9}")
    return "\n".join(lines) + "\n"


def evaluate(cfg: ExperimentConfig, out_dir=None, model: SindyModel | None = None) -> EvaluationResult:
    """Run both arms on the same seeds and compare planar tracking statistics."""
    if model is None:
        if not cfg.model_path:
            raise ConfigError("evaluate needs a SINDy model for the asindy arm")
        model = load_model(cfg.resolve(cfg.model_path))
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(config_to_text(cfg))
    ev = EvaluationResult()
    files, entries, per_run_rows = [], [], []
    for arm in ARMS:
        ev.per_run[arm], ev.crashes[arm], ev.wind[arm] = [], [], {}
        for seed in cfg.seed_list:
            res = simulate_run(cfg, seed, controller=arm, model=model)
            ev.wind[arm][seed] = res.log.vec("fwind").copy()
            if out is not None:
                path = out / arm / f"run_{cfg.trajectory.kind}_seed{seed}.csv"
                path.parent.mkdir(exist_ok=True)
                res.log.save(path)
                files.append(path)
                entries.append(_run_entry(res, path, out))
            if res.crashed:
                ev.crashes[arm].append(seed)
                per_run_rows.append({"controller": arm, "seed": seed, "crashed": True})
                continue
            st = run_stats(res, cfg)
            ev.per_run[arm].append((seed, st))
            per_run_rows.append({"controller": arm, "seed": seed, "crashed": False, **stats_row(st)})
        stats = [s for _, s in ev.per_run[arm]]
        ev.aggregates[arm] = aggregate(stats) if stats else None

    if out is not None:
        per_run_path = out / "per_run.csv"
        per_run_path.write_text(_csv(per_run_rows, ["controller", "seed", "crashed", *METRICS, "n_samples"]))
        summary_path = out / "results.csv"
        summary_path.write_text(_csv(summary_rows(ev, cfg), SUMMARY_FIELDS))
        table_path = out / "results.txt"
        table_path.write_text(results_table(ev, cfg.trajectory.kind))
        files += [per_run_path, summary_path, table_path, out / "config.ini"]
        write_manifest(out, cfg, entries, files, {"stage": "evaluate", "model": model.meta.get("training_digest", "")})
    return ev


SUMMARY_FIELDS = ["trajectory", "controller", "runs", "crashes",
                  *[f"{m}_{k}" for m in METRICS for k in ("mean", "std")]]


def summary_rows(ev: EvaluationResult, cfg: ExperimentConfig) -> list[dict]:
    rows = []
    for arm in ARMS:
        agg = ev.aggregates.get(arm)
        row = {"trajectory": cfg.trajectory.kind, "controller": arm,
               "runs": agg.n_runs if agg else 0, "crashes": len(ev.crashes.get(arm, []))}
        for m in METRICS:
            row[f"{m}_mean"] = agg.mean[m] if agg else float("nan")
            row[f"{m}_std"] = agg.std[m] if agg else float("nan")
        rows.append(row)
    return rows


def _csv(rows: list[dict], fieldnames: list[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fieldnames, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (format(v, ".17g") if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def sweep(cfg: ExperimentConfig, grid: dict, out_dir, model: SindyModel | None = None) -> list[dict]:
    """Evaluate every cell of a parameter grid (``section.key -> values``)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    keys = sorted(grid)
    rows = []
    for idx, values in enumerate(itertools.product(*(grid[k] for k in keys))):
        cell = dict(zip(keys, values))
        label = ";".join(f"{k}={v}" for k, v in cell.items())
        base = {"cell": idx, "overrides": label}
        try:
            cell_cfg = with_overrides(cfg, cell)
            ev = evaluate(cell_cfg, out / f"cell_{idx:03d}", model)
        except AsindyError as exc:
            log.error("sweep cell %s failed: %s", label, exc)
            rows.append({**base, "status": f"error: {exc}"})
            continue
        for r in summary_rows(ev, cell_cfg):
            rows.append({**base, "config_digest": cell_cfg.digest(), "status": "ok", **r})
    (out / "sweep.csv").write_text(_csv(rows, ["cell", "overrides", "config_digest", "status", *SUMMARY_FIELDS]))
    return rows
