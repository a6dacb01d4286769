"""Sparse identification of the residual force.

The residual force (what the known dynamics do not explain, in newtons) is
regressed onto a small physics-informed library of attitude and
thrust-weighted attitude terms::

    Ydot = m * (Xdot_trans - f_known_trans)  ~=  Theta(x, u) @ Xi

Two solvers are provided: relaxed sparse regression (SR3, the primary solver,
with optional linear equality constraints) and sequentially thresholded
least squares (STLSQ, used as an independent cross-check).
"""
from __future__ import annotations

import configparser
import hashlib
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .dynamics import ControlCommand, VehicleParams, VehicleState, known_dynamics
from .errors import ConstraintError, DataError, ModelLoadError, SolverError
from .runlog import RunLog, check_uniform

AXES = ("x", "y", "z")

# term name -> f(roll, pitch, thrust), vectorised
TERM_FUNCTIONS = {
    "1": lambda roll, pitch, T: np.ones_like(np.asarray(T, dtype=float)),
    "theta": lambda roll, pitch, T: np.asarray(pitch, dtype=float) + 0.0,
    "phi": lambda roll, pitch, T: np.asarray(roll, dtype=float) + 0.0,
    "T*sin(theta)": lambda roll, pitch, T: T * np.sin(pitch),
    "T*cos(theta)": lambda roll, pitch, T: T * np.cos(pitch),
    "T*sin(phi)": lambda roll, pitch, T: T * np.sin(roll),
    "T*cos(phi)": lambda roll, pitch, T: T * np.cos(roll),
}
# scalar twins of TERM_FUNCTIONS for the per-step control path
TERM_SCALAR = {
    "1": lambda roll, pitch, T: 1.0,
    "theta": lambda roll, pitch, T: pitch,
    "phi": lambda roll, pitch, T: roll,
    "T*sin(theta)": lambda roll, pitch, T: T * math.sin(pitch),
    "T*cos(theta)": lambda roll, pitch, T: T * math.cos(pitch),
    "T*sin(phi)": lambda roll, pitch, T: T * math.sin(roll),
    "T*cos(phi)": lambda roll, pitch, T: T * math.cos(roll),
}
DEFAULT_TERMS = ("1", "theta", "phi", "T*sin(theta)", "T*cos(theta)", "T*sin(phi)", "T*cos(phi)")


@dataclass(frozen=True)
class LibrarySpec:
    terms: tuple = DEFAULT_TERMS

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if len(set(self.terms)) != len(self.terms):
            raise ValueError("library term names must be unique")
        unknown = [t for t in self.terms if t not in TERM_FUNCTIONS]
        if unknown:
            raise ValueError(f"unknown library terms: {unknown}")

    def __len__(self):
        return len(self.terms)

    def evaluate(self, roll, pitch, thrust) -> np.ndarray:
        """Feature matrix, one row per sample (scalars give a 1-row matrix)."""
        roll, pitch, thrust = np.broadcast_arrays(
            np.atleast_1d(np.asarray(roll, dtype=float)),
            np.atleast_1d(np.asarray(pitch, dtype=float)),
            np.atleast_1d(np.asarray(thrust, dtype=float)))
        return np.column_stack([TERM_FUNCTIONS[t](roll, pitch, thrust) for t in self.terms])


def eval_library(state: VehicleState, thrust: float, library: LibrarySpec = LibrarySpec()) -> np.ndarray:
    return library.evaluate(state.eta[0], state.eta[1], thrust)[0]


@dataclass
class TrainingSet:
    rows: np.ndarray
    targets: np.ndarray
    sample_dt: float
    library: LibrarySpec = field(default_factory=LibrarySpec)

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        if self.rows.ndim != 2 or self.rows.shape[1] != len(self.library):
            raise DataError(f"rows must be (n, {len(self.library)}), got {self.rows.shape}")
        if self.targets.shape != (self.rows.shape[0], 3):
            raise DataError(f"targets must be ({self.rows.shape[0]}, 3), got {self.targets.shape}")
        if not (np.all(np.isfinite(self.rows)) and np.all(np.isfinite(self.targets))):
            raise DataError("training set contains non-finite entries")
        if self.rows.shape[0] < 10 * len(self.library):
            raise DataError(f"need at least {10 * len(self.library)} samples, have {self.rows.shape[0]}")

    @property
    def n_samples(self):
        return self.rows.shape[0]

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.rows).tobytes())
        h.update(np.ascontiguousarray(self.targets).tobytes())
        return h.hexdigest()

    @classmethod
    def concatenate(cls, sets) -> "TrainingSet":
        sets = list(sets)
        if not sets:
            raise DataError("no training sets to concatenate")
        return cls(np.vstack([s.rows for s in sets]), np.vstack([s.targets for s in sets]),
                   sets[0].sample_dt, sets[0].library)


def running_mean(x: np.ndarray, window: int) -> np.ndarray:
    """Centred running mean along axis 0; the outer ``window // 2`` rows are biased."""
    if window <= 1:
        return np.array(x, dtype=float)
    kernel = np.ones(window) / window
    return np.column_stack([np.convolve(c, kernel, mode="same") for c in np.atleast_2d(x.T)])


def build_target(log: RunLog, params: VehicleParams, library: LibrarySpec = LibrarySpec(),
                 window: int = 5, trim: int = 10, min_samples: int = 200,
                 jitter: float = 0.2) -> TrainingSet:
    """Residual-force regression data from one run log.

    Velocity is differenced (central inside, one-sided at the ends), the
    known-model acceleration is subtracted and scaled by mass; target and
    features are smoothed with a centred running mean and ``trim`` samples
    are dropped at each end.
    """
    n = len(log)
    if n < min_samples:
        raise DataError(f"log too short: {n} samples < {min_samples}")
    if trim < window // 2:
        raise DataError("trim must cover the smoother's half window")
    t = log.t
    check_uniform(t, jitter)

    vel = log.vec("v")
    xdot = np.gradient(vel, t, axis=0, edge_order=1)
    p, eta, omega = log.vec("p"), log.eta, log.omega
    thrust, att = log.col("thrust"), log.att_des
    f_known = np.empty((n, 3))
    for k in range(n):
        st = VehicleState(float(t[k]), p[k], vel[k], eta[k], omega[k])
        f_known[k] = known_dynamics(st, ControlCommand(float(thrust[k]), att[k]), params)[3:6]

    ydot = params.m * (running_mean(xdot, window) - running_mean(f_known, window))
    feats = running_mean(library.evaluate(eta[:, 0], eta[:, 1], thrust), window)
    keep = slice(trim, n - trim)
    return TrainingSet(feats[keep], ydot[keep], float(np.median(np.diff(t))), library)


# ---------------------------------------------------------------- solvers

@dataclass(frozen=True)
class SR3Settings:
    lam: float = 5e-7
    nu: float = 1.0
    threshold: float = 1e-3
    max_iter: int = 100
    tol: float = 1e-8
    regularizer: str = "l0"
    refine: bool = True  # l0 only: backward elimination plus least-squares refit on the support
    constraints: tuple | None = None  # (C, d) on vec(Xi), column-major (axis-major)

    def __post_init__(self):
        if self.lam < 0 or not self.nu > 0 or self.max_iter < 1 or not self.tol > 0:
            raise ValueError("SR3Settings: need lam >= 0, nu > 0, max_iter >= 1, tol > 0")
        if self.regularizer not in ("l0", "l1"):
            raise ValueError("regularizer must be 'l0' or 'l1'")
        if self.threshold < 0:
            raise ValueError("threshold must be >= 0")


@dataclass
class SindyModel:
    library: LibrarySpec
    xi: np.ndarray
    meta: dict = field(default_factory=dict)
    objective_history: list = field(default_factory=list, compare=False)

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=float)
        if self.xi.shape != (len(self.library), 3):
            raise ValueError(f"xi must be ({len(self.library)}, 3), got {self.xi.shape}")
        self.meta = {str(k): str(v) for k, v in self.meta.items()}

    def __eq__(self, other):
        return (isinstance(other, SindyModel) and self.library == other.library
                and np.array_equal(self.xi, other.xi) and self.meta == other.meta)

    @property
    def active_mask(self) -> np.ndarray:
        return np.any(self.xi != 0.0, axis=1)

    @property
    def active_terms(self) -> tuple:
        return tuple(t for t, a in zip(self.library.terms, self.active_mask) if a)

    def predict(self, rows) -> np.ndarray:
        return np.asarray(rows) @ self.xi

    def describe(self) -> str:
        lines = []
        for j, ax in enumerate(AXES):
            parts = [f"{self.xi[i, j]:+.6g}*{term}" if term != "1" else f"{self.xi[i, j]:+.6g}"
                     for i, term in enumerate(self.library.terms) if self.xi[i, j] != 0.0]
            lines.append(f"F_{ax} = " + (" ".join(parts) if parts else "0"))
        return "\n".join(lines)


def _column_scales(rows: np.ndarray, library: LibrarySpec) -> np.ndarray:
    scale = np.sqrt(np.mean(rows * rows, axis=0))
    dead = [library.terms[i] for i in np.flatnonzero(scale == 0.0)]
    if dead:
        raise SolverError(f"library columns identically zero: {dead}")
    return scale


def _check_rank(theta_s: np.ndarray, library: LibrarySpec):
    _, r, piv = scipy.linalg.qr(theta_s, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = diag[0] * max(theta_s.shape) * np.finfo(float).eps
    rank = int(np.sum(diag > tol))
    if rank < theta_s.shape[1]:
        bad = [library.terms[i] for i in sorted(piv[rank:])]
        raise SolverError(f"library matrix is rank deficient (rank {rank}); dependent columns: {bad}")


def _prox(w, lam, nu, regularizer):
    if regularizer == "l0":
        return np.where(np.abs(w) >= math.sqrt(2.0 * lam * nu), w, 0.0)
    return np.sign(w) * np.maximum(np.abs(w) - lam * nu, 0.0)


def _penalty(u, lam, regularizer):
    if regularizer == "l0":
        return lam * float(np.count_nonzero(u))
    return lam * float(np.sum(np.abs(u)))


class _KKT:
    """Solver for ``min 1/2 w'Hw - b'w  s.t.  Cw = d`` with fixed H, C."""

    def __init__(self, H, C=None, d=None):
        self.n = H.shape[0]
        if C is None:
            self.C = None
            self.factor = scipy.linalg.cho_factor(H)
            return
        if not np.all(np.isfinite(C)) or not np.all(np.isfinite(d)):
            raise ConstraintError("constraint system contains non-finite entries")
        x, *_ = np.linalg.lstsq(C, d, rcond=None)
        if np.linalg.norm(C @ x - d) > 1e-9 * max(1.0, np.linalg.norm(d)):
            raise ConstraintError("equality constraints are inconsistent")
        # drop linearly dependent rows so the KKT matrix is nonsingular
        _, r, piv = scipy.linalg.qr(C.T, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        rank = int(np.sum(diag > diag[0] * max(C.shape) * np.finfo(float).eps)) if diag.size else 0
        keep = np.sort(piv[:rank])
        self.C, self.d = C[keep], d[keep]
        k = self.C.shape[0]
        K = np.block([[H, self.C.T], [self.C, np.zeros((k, k))]])
        self.factor = scipy.linalg.lu_factor(K)

    def solve(self, b):
        if self.C is None:
            return scipy.linalg.cho_solve(self.factor, b)
        sol = scipy.linalg.lu_solve(self.factor, np.concatenate([b, self.d]))
        return sol[:self.n]


def _refine(G, b, yy, support, protected, lam, threshold, scale3, C, d):
    """Greedy backward elimination on ``1/2 mse + lam ||w||_0``.

    Alternating SR3 steps started from least squares cannot leave a support
    whose coefficients are all inflated by near-collinear columns.  Here a
    term is dropped whenever refitting without it raises the mean-square
    fit error by less than ``lam`` (or its physical size is below the
    threshold); the survivors are refit by (constrained) least squares.
    """
    n3 = support.size
    H = np.kron(np.eye(3), G)

    def fit(S):
        off = np.flatnonzero(~S)
        E = np.zeros((off.size, n3))
        E[np.arange(off.size), off] = 1.0
        CC = E if C is None else np.vstack([C, E])
        dd = np.zeros(off.size) if C is None else np.concatenate([d, np.zeros(off.size)])
        if CC.shape[0] == 0:
            w = _KKT(H).solve(b)
        else:
            w = _KKT(H, CC, dd).solve(b)
        return w, 0.5 * float(w @ H @ w) - float(b @ w) + 0.5 * yy

    S = support.copy()
    removed = 0
    w, f = fit(S)
    while True:
        small = S & ~protected & (np.abs(w / scale3) < threshold)
        if small.any():
            S &= ~small
            removed += int(small.sum())
            w, f = fit(S)
            continue
        best = None
        for j in np.flatnonzero(S & ~protected):
            T = S.copy()
            T[j] = False
            wj, fj = fit(T)
            if fj - f < lam and (best is None or fj < best[2]):
                best = (T, wj, fj)
        if best is None:
            return w, S, removed
        S, w, f = best
        removed += 1


def _prepare(data: TrainingSet):
    lib = data.library
    scale = _column_scales(data.rows, lib)
    theta_s = data.rows / scale
    _check_rank(theta_s, lib)
    return lib, scale, theta_s


def solve_sr3(data: TrainingSet, settings: SR3Settings = SR3Settings()) -> SindyModel:
    """Relaxed sparse regression by alternating exact minimisation.

    Minimises, on unit-RMS feature columns,
    ``1/(2N) ||Y - Theta w||^2 + lam R(u) + 1/(2 nu) ||w - u||^2`` subject to
    ``C w = d`` (w stacked axis by axis).  The w-step is a (KKT) linear
    solve, the u-step the proximal map of ``lam R``; the objective is checked
    to be non-increasing at every iteration.  The data term is averaged over
    the N samples so that lam and nu do not depend on the log length.
    """
    lib, scale, theta_s = _prepare(data)
    n = len(lib)
    Y = data.targets
    N = data.n_samples
    G = theta_s.T @ theta_s / N
    b = (theta_s.T @ Y).reshape(-1, order="F") / N
    scale3 = np.tile(scale, 3)

    C = d = None
    if settings.constraints is not None:
        C = np.atleast_2d(np.asarray(settings.constraints[0], dtype=float))
        d = np.atleast_1d(np.asarray(settings.constraints[1], dtype=float))
        if C.shape[1] != 3 * n or C.shape[0] != d.shape[0]:
            raise ConstraintError(f"constraint matrix must be (k, {3 * n}) with len(d) == k")
        C_phys = C
        C = C / scale3  # physical w = scaled w / scale

    I3 = np.eye(3)
    ls = _KKT(np.kron(I3, G), C, d)
    relaxed = _KKT(np.kron(I3, G + np.eye(n) / settings.nu), C, d)

    lam, nu, reg = settings.lam, settings.nu, settings.regularizer

    def objective(w, u):
        r = Y - theta_s @ w.reshape(n, 3, order="F")
        return 0.5 / N * float(np.sum(r * r)) + _penalty(u, lam, reg) + 0.5 / nu * float(np.sum((w - u) ** 2))

    w = ls.solve(b)
    u = _prox(w, lam, nu, reg)
    history = [objective(w, u)]
    converged = False
    for _ in range(settings.max_iter):
        w = relaxed.solve(b + u / nu)
        u = _prox(w, lam, nu, reg)
        obj = objective(w, u)
        prev = history[-1]
        if obj > prev + 1e-10 * max(1.0, abs(prev)):
            raise SolverError(f"SR3 objective increased at iteration {len(history)}: {prev!r} -> {obj!r}")
        history.append(obj)
        if abs(prev - obj) <= settings.tol * max(abs(prev), 1e-300):
            converged = True
            break

    protected = np.any(C != 0.0, axis=0) if C is not None else np.zeros(3 * n, dtype=bool)
    support = (u != 0.0) & (np.abs(w / scale3) >= settings.threshold)
    removed = 0
    if reg == "l0" and settings.refine:
        w, support, removed = _refine(G, b, float(np.sum(Y * Y)) / N, support | protected, protected,
                                      lam, settings.threshold, scale3, C, d)
    w_phys = w / scale3
    # constrained entries are reported as solved so that C xi = d holds exactly
    keep = support | protected
    if C is not None:
        # rows that pin a single coefficient are applied exactly, not to solver precision
        for row, rhs in zip(C_phys, d):
            nz = np.flatnonzero(row)
            if nz.size == 1:
                w_phys[nz[0]] = rhs / row[nz[0]]
    xi = np.where(keep, w_phys, 0.0).reshape(n, 3, order="F")

    meta = {
        "solver": "sr3",
        "lambda": repr(lam), "nu": repr(nu), "threshold": repr(settings.threshold),
        "regularizer": reg, "refine": settings.refine, "max_iter": settings.max_iter, "tol": repr(settings.tol),
        "constrained": C is not None, "iterations": len(history) - 1, "converged": converged,
        "refined_removed": removed,
        "n_samples": data.n_samples, "training_digest": data.digest(),
    }
    return SindyModel(lib, xi, meta, history)


def solve_stlsq(data: TrainingSet, threshold: float = 1e-3, max_iter: int = 20) -> SindyModel:
    """Sequentially thresholded least squares, refitting each axis on its support."""
    lib, scale, theta_s = _prepare(data)
    n = len(lib)
    Y = data.targets
    xi_s = np.linalg.lstsq(theta_s, Y, rcond=None)[0]
    support = np.ones((n, 3), dtype=bool)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        new_support = np.abs(xi_s / scale[:, None]) >= threshold
        xi_s = np.zeros((n, 3))
        for j in range(3):
            cols = np.flatnonzero(new_support[:, j])
            if cols.size:
                xi_s[cols, j] = np.linalg.lstsq(theta_s[:, cols], Y[:, j], rcond=None)[0]
        if np.array_equal(new_support, support):
            support = new_support
            break
        support = new_support

    xi = xi_s / scale[:, None]
    xi = np.where(np.abs(xi) >= threshold, xi, 0.0)
    meta = {
        "solver": "stlsq", "threshold": repr(threshold), "max_iter": max_iter,
        "iterations": iterations, "n_samples": data.n_samples, "training_digest": data.digest(),
    }
    return SindyModel(lib, xi, meta)


# ---------------------------------------------------------------- model files

FORMAT_VERSION = "1"
UNITS = ("coefficients in N per unit feature; columns are world-frame force axes x y z; "
         "theta and phi in rad, T in N")


def _parser():
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    cp.optionxform = str
    return cp


def model_to_text(model: SindyModel) -> str:
    cp = _parser()
    cp["model"] = {
        "format_version": FORMAT_VERSION,
        "n_terms": str(len(model.library)),
        "terms": ", ".join(model.library.terms),
        "columns": " ".join(AXES),
        "units": UNITS,
    }
    cp["meta"] = dict(sorted(model.meta.items()))
    cp["coefficients"] = {term: " ".join(format(v, ".17g") for v in model.xi[i])
                          for i, term in enumerate(model.library.terms)}
    buf = io.StringIO()
    buf.write("# SINDy residual-force model\n")
    cp.write(buf)
    return buf.getvalue()


def save_model(model: SindyModel, path) -> None:
    Path(path).write_text(model_to_text(model))


def model_from_text(text: str, source: str = "<text>") -> SindyModel:
    cp = _parser()
    try:
        cp.read_string(text, source=source)
        head = cp["model"]
        version = head["format_version"]
        n_terms = int(head["n_terms"])
        terms = tuple(t.strip() for t in head["terms"].split(","))
        coeffs = cp["coefficients"]
        meta = dict(cp["meta"]) if cp.has_section("meta") else {}
    except (configparser.Error, KeyError, ValueError) as exc:
        raise ModelLoadError(f"{source}: malformed model file ({exc})") from exc
    if version != FORMAT_VERSION:
        raise ModelLoadError(f"{source}: unsupported format_version {version!r}")
    unknown = [t for t in terms if t not in TERM_FUNCTIONS]
    if unknown:
        raise ModelLoadError(f"{source}: unknown library term(s) {unknown}")
    if len(terms) != n_terms:
        raise ModelLoadError(f"{source}: header n_terms={n_terms} but {len(terms)} terms listed")
    if list(coeffs.keys()) != list(terms):
        raise ModelLoadError(f"{source}: coefficient rows {list(coeffs.keys())} do not match terms {list(terms)}")
    try:
        xi = np.array([[float(v) for v in coeffs[t].split()] for t in terms])
    except ValueError as exc:
        raise ModelLoadError(f"{source}: bad coefficient value ({exc})") from exc
    if xi.shape != (n_terms, 3):
        raise ModelLoadError(f"{source}: coefficient matrix has shape {xi.shape}, expected ({n_terms}, 3)")
    try:
        library = LibrarySpec(terms)
    except ValueError as exc:
        raise ModelLoadError(f"{source}: {exc}") from exc
    return SindyModel(library, xi, meta)


def load_model(path) -> SindyModel:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ModelLoadError(f"cannot read model file {path}: {exc}") from exc
    return model_from_text(text, str(path))
