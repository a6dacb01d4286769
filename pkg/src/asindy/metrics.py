"""Planar tracking-error statistics and their aggregation over runs."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import DataError
from .runlog import RunLog

METRICS = ("rmse_xy", "mae_xy", "p95_xy", "max_xy")


@dataclass(frozen=True)
class ErrorStats:
    rmse_xy: float
    mae_xy: float
    p95_xy: float
    max_xy: float
    n_samples: int

    def __post_init__(self):
        # small slack for rounding in the mean of squares
        assert self.mae_xy <= self.rmse_xy * (1 + 1e-12) + 1e-15, "MAE exceeds RMSE"
        assert self.p95_xy <= self.max_xy, "P95 exceeds Max"


@dataclass(frozen=True)
class AggregateStats:
    mean: dict
    std: dict  # sample std (n - 1); NaN when fewer than two runs
    n_runs: int

    def fmt(self, metric: str, digits: int = 3) -> str:
        m, s = self.mean[metric], self.std[metric]
        if math.isnan(s):
            return f"{m:.{digits}f}"
        return f"{m:.{digits}f} ± {s:.{digits}f}"


def planar_error_series(log: RunLog, t_start: float = 0.0) -> np.ndarray:
    """``||p_xy - p_ref_xy||`` per logged sample with ``t >= t_start``."""
    p, pd = log.vec("p"), log.vec("pd")
    if p.shape != pd.shape:
        raise DataError("state and reference series are misaligned")
    keep = log.t >= t_start - 1e-12
    e = p[keep, :2] - pd[keep, :2]
    return np.hypot(e[:, 0], e[:, 1])


def compute_stats(series) -> ErrorStats:
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise DataError("empty error series")
    return ErrorStats(
        rmse_xy=float(np.sqrt(np.mean(x * x))),
        mae_xy=float(np.mean(x)),
        p95_xy=float(np.percentile(x, 95.0, method="linear")),
        max_xy=float(np.max(x)),
        n_samples=int(x.size),
    )


def aggregate(stats) -> AggregateStats:
    stats = list(stats)
    if not stats:
        raise DataError("no runs to aggregate")
    mean, std = {}, {}
    for name in METRICS:
        # fsum is correctly rounded, which makes the result independent of run order
        vals = [float(getattr(s, name)) for s in stats]
        n = len(vals)
        m = math.fsum(vals) / n
        mean[name] = m
        std[name] = math.sqrt(math.fsum((v - m) ** 2 for v in vals) / (n - 1)) if n >= 2 else float("nan")
    return AggregateStats(mean, std, len(stats))


def stats_row(stats: ErrorStats) -> dict:
    return {f.name: getattr(stats, f.name) for f in fields(stats)}
