"""Time-indexed run record and its CSV form.

A RunLog is a float matrix with a fixed, versioned column schema.  CSV files
start with a ``# asindy-runlog schema=N`` line, then a header row; values are
written with 17 significant digits so a write/read round trip is lossless.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

SCHEMA_VERSION = 1


def _xyz(prefix):
    return [f"{prefix}_x", f"{prefix}_y", f"{prefix}_z"]


COLUMNS = (
    ["t"]
    + _xyz("pd") + _xyz("vd") + _xyz("ad")
    + _xyz("p") + _xyz("v")
    + ["roll", "pitch", "yaw", "wx", "wy", "wz"]
    + ["thrust", "roll_des", "pitch_des", "yaw_des"]
    + _xyz("fwind") + _xyz("awind") + _xyz("fres")
    + _xyz("fdist") + _xyz("fhat") + _xyz("s") + _xyz("ep") + _xyz("ev")
    + ["event"]
)
COL = {name: i for i, name in enumerate(COLUMNS)}

# event codes, max-reduced over the steps between two logged rows
EVENT_NONE = 0
EVENT_FALLBACK = 1
EVENT_CRASH = 2

_HEADER = f"# asindy-runlog schema={SCHEMA_VERSION}"


@dataclass
class RunLog:
    data: np.ndarray  # (n_rows, len(COLUMNS))

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2 or self.data.shape[1] != len(COLUMNS):
            raise DataError(f"RunLog needs {len(COLUMNS)} columns, got shape {self.data.shape}")

    def __len__(self):
        return self.data.shape[0]

    def col(self, name: str) -> np.ndarray:
        return self.data[:, COL[name]]

    def vec(self, prefix: str) -> np.ndarray:
        """(n, 3) block for an ``<prefix>_x/y/z`` group."""
        i = COL[f"{prefix}_x"]
        return self.data[:, i:i + 3]

    @property
    def t(self):
        return self.col("t")

    @property
    def eta(self):
        i = COL["roll"]
        return self.data[:, i:i + 3]

    @property
    def omega(self):
        i = COL["wx"]
        return self.data[:, i:i + 3]

    @property
    def att_des(self):
        i = COL["roll_des"]
        return self.data[:, i:i + 3]

    @property
    def crashed(self) -> bool:
        return bool(len(self) and self.col("event")[-1] == EVENT_CRASH)

    def slice_time(self, t0: float) -> "RunLog":
        return RunLog(self.data[self.t >= t0 - 1e-12])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(_HEADER + "\n")
        buf.write(",".join(COLUMNS) + "\n")
        for row in self.data:
            buf.write(",".join(format(v, ".17g") for v in row) + "\n")
        return buf.getvalue()

    def save(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def load(cls, path) -> "RunLog":
        text = Path(path).read_text()
        lines = text.splitlines()
        if not lines or not lines[0].startswith("# asindy-runlog"):
            raise DataError(f"{path}: missing runlog header")
        if lines[0].strip() != _HEADER:
            raise DataError(f"{path}: unsupported runlog schema {lines[0]!r}")
        header = lines[1].split(",")
        if header != COLUMNS:
            raise DataError(f"{path}: column header does not match schema {SCHEMA_VERSION}")
        if len(lines) == 2:
            return cls(np.empty((0, len(COLUMNS))))
        data = np.loadtxt(io.StringIO("\n".join(lines[2:])), delimiter=",", ndmin=2)
        return cls(data)


def check_uniform(t: np.ndarray, jitter: float) -> float:
    """Return the median step; raise if any step deviates more than ``jitter``."""
    if t.shape[0] < 2:
        raise DataError("need at least two samples")
    d = np.diff(t)
    if np.any(d <= 0):
        raise DataError("timestamps must be strictly increasing")
    h = float(np.median(d))
    if np.max(np.abs(d - h)) > jitter * h:
        raise DataError(f"timestamps not uniform within {jitter:.0%}")
    return h
