"""Nonlinear vector autoregression (NVAR, "next-generation reservoir
computing"): delay-embedded quadratic features, ridge-regression training of
the one-step flow increment, autonomous closed-loop forecasting, and the
bootstrap warm-up ladder that frees forecasts from needing ground-truth
history.

The model learns x_{n+1} = x_n + W_out O_n where O_n stacks a constant, the
last k sampled states (current first), and every unique quadratic monomial of
that delay vector in row-major upper-triangular order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import _kernels
from .dynamics import Trajectory
from .errors import (
    DegenerateTruth,
    InsufficientData,
    LadderGap,
    NonFiniteState,
    SingularSystem,
    WindowNotFull,
)

MODEL_FORMAT_VERSION = 1


def feature_dim(d: int, k: int) -> int:
    """Total feature count: constant + d*k linear + all quadratic monomials."""
    if not (isinstance(d, (int, np.integer)) and d >= 1):
        raise ValueError(f"d must be a positive integer, got {d}")
    if not (isinstance(k, (int, np.integer)) and k >= 1):
        raise ValueError(f"k must be a positive integer, got {k}")
    m = d * k
    return 1 + m + m * (m + 1) // 2


@dataclass(frozen=True)
class NvarConfig:
    """Model hyperparameters; ``dt`` must equal the training trajectory's."""

    d: int
    k: int
    dt: float
    alpha: float
    constant_term: float = 1.0

    def __post_init__(self):
        if not (isinstance(self.d, int) and self.d >= 1):
            raise ValueError(f"d must be a positive integer, got {self.d}")
        if not (isinstance(self.k, int) and self.k >= 1):
            raise ValueError(f"k must be a positive integer, got {self.k}")
        if not (np.isfinite(self.dt) and self.dt > 0.0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not (np.isfinite(self.alpha) and self.alpha >= 0.0):
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")
        if not np.isfinite(self.constant_term):
            raise ValueError("constant_term must be finite")

    @property
    def feature_dim(self) -> int:
        return feature_dim(self.d, self.k)


@dataclass(frozen=True)
class NvarModel:
    """Immutable trained artifact: configuration plus output weights."""

    config: NvarConfig
    w_out: np.ndarray

    def __post_init__(self):
        w = np.ascontiguousarray(self.w_out, dtype=np.float64)
        expected = (self.config.d, self.config.feature_dim)
        if w.shape != expected:
            raise ValueError(f"w_out must have shape {expected}, got {w.shape}")
        if not np.isfinite(w).all():
            raise ValueError("w_out must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "w_out", w)

    @property
    def n_weights(self) -> int:
        return self.w_out.size


def _window_array(window, cfg: NvarConfig) -> np.ndarray:
    """Validate a delay window (k states, newest last) as a (k, d) array."""
    arr = np.asarray(window, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != cfg.d:
        raise ValueError(f"window states must have dimension {cfg.d}, got shape {arr.shape}")
    if arr.shape[0] != cfg.k:
        raise WindowNotFull(
            f"delay window needs exactly k={cfg.k} states, got {arr.shape[0]}"
        )
    if not np.isfinite(arr).all():
        raise ValueError("window states must be finite")
    return arr


def linear_features(window, k: int | None = None) -> np.ndarray:
    """Flatten a delay window into [x_n; x_{n-1}; ...], current state first.

    ``window`` is ordered oldest to newest (newest last); the feature layout
    reverses it.  If ``k`` is given the window length is checked against it.
    """
    arr = np.asarray(window, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"window must be a (k, d) array, got shape {arr.shape}")
    if k is not None and arr.shape[0] != k:
        raise WindowNotFull(f"delay window needs exactly k={k} states, got {arr.shape[0]}")
    return arr[::-1].ravel()


def quadratic_features(lin: np.ndarray) -> np.ndarray:
    """All unique quadratic monomials lin[i]*lin[j], i <= j, row-major."""
    lin = np.asarray(lin, dtype=np.float64)
    if lin.ndim != 1 or lin.size < 1:
        raise ValueError("lin must be a nonempty 1-D vector")
    rows, cols = np.triu_indices(lin.size)
    return lin[rows] * lin[cols]


def quadratic_index(m: int, i: int, j: int) -> int:
    """Canonical position of monomial (i, j), i <= j, in the quadratic block."""
    if not (0 <= i <= j < m):
        raise ValueError(f"need 0 <= i <= j < m, got i={i}, j={j}, m={m}")
    return ((2 * m - i + 1) * i) // 2 + (j - i)


def total_features(window, cfg: NvarConfig) -> np.ndarray:
    """[constant; linear block; quadratic block], length ``cfg.feature_dim``."""
    arr = _window_array(window, cfg)
    lin = arr[::-1].ravel()
    return np.concatenate(([cfg.constant_term], lin, quadratic_features(lin)))


def _design_matrices(X: np.ndarray, cfg: NvarConfig):
    """Feature rows O (one per usable window) and increment targets Y.

    Row j uses the window ending at sample n = k-1+j and predicts the
    increment x_{n+1} - x_n; there are N - k rows.
    """
    N, d = X.shape
    k = cfg.k
    m = d * k
    ncols = N - k
    lin = np.empty((ncols, m))
    for j in range(k):
        lin[:, j * d:(j + 1) * d] = X[k - 1 - j:k - 1 - j + ncols]
    rows, cols = np.triu_indices(m)
    O = np.empty((ncols, cfg.feature_dim))
    O[:, 0] = cfg.constant_term
    O[:, 1:1 + m] = lin
    O[:, 1 + m:] = lin[:, rows] * lin[:, cols]
    Y = X[k:] - X[k - 1:N - 1]
    return O, Y


def train(traj: Trajectory, cfg: NvarConfig) -> NvarModel:
    """Ridge-regress the one-step increment on the delay-feature matrix.

    Solves (O^T O + alpha I) W^T = O^T Y, the regularized normal equations,
    with a symmetric positive-definite (Cholesky) factorization; no explicit
    inverse is ever formed.

    Raises
    ------
    InsufficientData
        If the trajectory has fewer than k+1 samples.
    SingularSystem
        If the solve fails; only reachable at alpha=0 with rank-deficient
        features.
    """
    if traj.dim != cfg.d:
        raise ValueError(f"trajectory dimension {traj.dim} != config d {cfg.d}")
    if traj.dt != cfg.dt:
        raise ValueError(f"trajectory dt {traj.dt!r} != config dt {cfg.dt!r}")
    N = len(traj)
    if N < cfg.k + 1:
        raise InsufficientData(
            f"need at least k+1={cfg.k + 1} samples to form one training pair, got {N}"
        )
    O, Y = _design_matrices(traj.samples, cfg)
    gram = O.T @ O
    gram[np.diag_indices_from(gram)] += cfg.alpha
    try:
        factor = cho_factor(gram, lower=False, check_finite=False)
        wt = cho_solve(factor, O.T @ Y, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(
            f"regularized normal equations not positive definite (alpha={cfg.alpha})"
        ) from exc
    if not np.isfinite(wt).all():
        raise SingularSystem("ridge solve produced non-finite weights")
    return NvarModel(config=cfg, w_out=np.ascontiguousarray(wt.T))


def one_step_predictions(model: NvarModel, traj: Trajectory):
    """Teacher-forced next-state predictions over the training layout.

    Returns ``(pred, truth)`` arrays of shape (N-k, d): row j predicts sample
    k+j from the ground-truth window ending at sample k-1+j.
    """
    cfg = model.config
    if traj.dim != cfg.d:
        raise ValueError(f"trajectory dimension {traj.dim} != model d {cfg.d}")
    if len(traj) < cfg.k + 1:
        raise InsufficientData(f"need at least {cfg.k + 1} samples, got {len(traj)}")
    O, Y = _design_matrices(traj.samples, cfg)
    X = traj.samples
    pred = X[cfg.k - 1:len(traj) - 1] + O @ model.w_out.T
    truth = X[cfg.k:]
    return pred, truth


def _nrmse_arrays(pred: np.ndarray, truth: np.ndarray) -> float:
    sigma = truth.std(axis=0, ddof=0)
    if np.any(sigma == 0.0):
        flat = [i for i, s in enumerate(sigma) if s == 0.0]
        raise DegenerateTruth(f"truth components {flat} have zero standard deviation")
    ratios = np.sqrt(np.mean((pred - truth) ** 2, axis=0)) / sigma
    return float(np.sqrt(np.mean(ratios ** 2)))


def one_step_nrmse(model: NvarModel, traj: Trajectory) -> float:
    """Training-phase NRMSE: teacher-forced predictions vs. the next samples."""
    pred, truth = one_step_predictions(model, traj)
    return _nrmse_arrays(pred, truth)


def nrmse(pred: Trajectory, truth: Trajectory) -> float:
    """Per-component RMS error over the truth standard deviation, RMS-combined.

    Raises DegenerateTruth if any truth component has zero variance.
    """
    if len(pred) != len(truth):
        raise ValueError(f"length mismatch: {len(pred)} vs {len(truth)}")
    if pred.dt != truth.dt:
        raise ValueError(f"dt mismatch: {pred.dt!r} vs {truth.dt!r}")
    if pred.dim != truth.dim:
        raise ValueError(f"dimension mismatch: {pred.dim} vs {truth.dim}")
    return _nrmse_arrays(pred.samples, truth.samples)


def step(model: NvarModel, window) -> np.ndarray:
    """One application of the learned flow: x_n + W_out O_total(window).

    Uses the same compiled scalar path as the closed-loop forecast, so a
    sequence of ``step`` calls reproduces ``forecast`` bitwise.
    """
    arr = _window_array(window, model.config)
    out = _kernels.nvar_step(arr[::-1].ravel(), model.w_out,
                             model.config.constant_term)
    if not np.isfinite(out).all():
        raise NonFiniteState("model step overflowed", step_index=0,
                             last_state=arr[-1].copy())
    return out


def forecast(model: NvarModel, warmup, n_steps: int, *,
             t0: float = 0.0) -> Trajectory:
    """Run the model closed-loop for ``n_steps`` autonomous steps.

    ``warmup`` supplies exactly k states at dt spacing, newest last.  The
    returned trajectory contains only the new states; ``t0`` is the time of
    the first forecast sample, one dt after the newest warm-up state.

    Raises NonFiniteState on divergence, reporting the step index reached.
    """
    if not (isinstance(n_steps, int) and n_steps >= 1):
        raise ValueError(f"n_steps must be a positive integer, got {n_steps}")
    arr = _window_array(warmup, model.config)
    win0 = arr[::-1].ravel()
    out = np.empty((n_steps, model.config.d))
    done = _kernels.nvar_forecast(model.w_out, model.config.constant_term,
                                  model.config.k, win0, n_steps, out)
    if done < n_steps:
        raise NonFiniteState(
            f"forecast diverged after {done} of {n_steps} steps",
            step_index=int(done), last_state=out[max(done - 1, 0)].copy(),
        )
    return Trajectory(dt=model.config.dt, samples=out, t0=t0)


def bootstrap_warmup(models, ic) -> np.ndarray:
    """Build a k=K warm-up window from the bare IC using a ladder of models.

    ``models`` holds one trained model per tap count 1..K (any order).  The
    k=1 model produces the second sample, the k=2 model the third, and so on;
    no ground-truth integration is used.  Returns a (K, d) array, newest last,
    directly usable as the k=K model's warm-up.

    Raises LadderGap if any tap count in 1..K is missing.
    """
    ladder = list(models)
    if not ladder:
        raise LadderGap("empty model ladder")
    by_k: dict[int, NvarModel] = {}
    for mod in ladder:
        kk = mod.config.k
        if kk in by_k:
            raise ValueError(f"duplicate ladder model for k={kk}")
        by_k[kk] = mod
    K = max(by_k)
    missing = [j for j in range(1, K + 1) if j not in by_k]
    if missing:
        raise LadderGap(f"ladder missing tap counts {missing} (need 1..{K})")
    base = by_k[K].config
    for mod in by_k.values():
        c = mod.config
        if (c.d, c.dt, c.constant_term) != (base.d, base.dt, base.constant_term):
            raise ValueError("ladder models disagree on d, dt, or constant_term")

    ic_arr = np.asarray(ic, dtype=np.float64)
    if ic_arr.shape != (base.d,):
        raise ValueError(f"ic must have shape ({base.d},), got {ic_arr.shape}")
    if not np.isfinite(ic_arr).all():
        raise ValueError("ic must be finite")
    states = [ic_arr]
    for j in range(1, K):
        window = np.stack(states[-j:])
        states.append(step(by_k[j], window))
    return np.stack(states)


def save_model(model: NvarModel, path) -> None:
    """Write the model as JSON with full-precision row-major weights."""
    cfg = model.config
    doc = {
        "version": MODEL_FORMAT_VERSION,
        "d": cfg.d,
        "k": cfg.k,
        "dt": cfg.dt,
        "alpha": cfg.alpha,
        "constant_term": cfg.constant_term,
        "w_out": [float(v) for v in model.w_out.ravel()],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_model(path) -> NvarModel:
    """Read a model written by :func:`save_model`; dimension mismatch is fatal."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model file version {doc.get('version')!r}")
    try:
        cfg = NvarConfig(d=int(doc["d"]), k=int(doc["k"]), dt=float(doc["dt"]),
                         alpha=float(doc["alpha"]),
                         constant_term=float(doc["constant_term"]))
        flat = np.asarray(doc["w_out"], dtype=np.float64)
    except KeyError as exc:
        raise ValueError(f"model file missing field {exc}") from exc
    expected = cfg.d * cfg.feature_dim
    if flat.ndim != 1 or flat.size != expected:
        raise ValueError(
            f"w_out has {flat.size} entries, expected d*feature_dim = {expected}"
        )
    return NvarModel(config=cfg, w_out=flat.reshape(cfg.d, cfg.feature_dim))
