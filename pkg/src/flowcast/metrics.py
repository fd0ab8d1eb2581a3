"""Attractor-geometry error metrics and valid-prediction-time measurement.

Chaotic forecasts cannot track the truth pointwise beyond a few Lyapunov
times, so long-horizon quality is judged by climate: per-variable time
averages of v and |v| (attractor center of mass and extent), compared through
normalized differences and combined into per-attractor and total norms.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass

import numpy as np

from .dynamics import STATE_LABELS, Trajectory
from .errors import DegenerateTruth

DEFAULT_VALID_TIME_THRESHOLD = 0.4


class AttractorLabel(enum.IntEnum):
    """The three coexisting attractors; integer codes match the basin kernels."""

    TORUS = 0
    CHAOS_NEG = 1
    CHAOS_POS = 2

    @property
    def tag(self) -> str:
        return self.name.lower()

    @classmethod
    def from_tag(cls, tag: str) -> "AttractorLabel":
        try:
            return cls[tag.upper()]
        except KeyError:
            raise ValueError(f"unknown attractor label {tag!r}") from None


@dataclass(frozen=True)
class AttractorStats:
    """Per-variable time averages <v> and <|v|> over one trajectory."""

    mean: np.ndarray
    mean_abs: np.ndarray
    duration: float

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        mean_abs = np.asarray(self.mean_abs, dtype=np.float64)
        if mean.shape != mean_abs.shape or mean.ndim != 1:
            raise ValueError("mean and mean_abs must be 1-D vectors of equal length")
        if not (self.duration > 0.0):
            raise ValueError(f"duration must be positive, got {self.duration}")
        mean.setflags(write=False)
        mean_abs.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "mean_abs", mean_abs)


def attractor_stats(traj: Trajectory) -> AttractorStats:
    """Plain sample means of v and |v| over all samples of ``traj``.

    ``duration`` is n_samples * dt, the time content of the averaging window.
    """
    if len(traj) < 1:
        raise ValueError("trajectory must contain at least one sample")
    X = traj.samples
    return AttractorStats(
        mean=X.mean(axis=0),
        mean_abs=np.abs(X).mean(axis=0),
        duration=len(traj) * traj.dt,
    )


def delta_pair(forecast: AttractorStats, truth: AttractorStats) -> np.ndarray:
    """Normalized average differences, 8 values: [Delta_v; Delta_|v|].

    Delta_v = (<v> - <v~>) / <|v~|> and Delta_|v| = (<|v|> - <|v~|>) / <|v~|>,
    where the tilde marks ground truth.  Layout: the four Delta_v in state
    order, then the four Delta_|v|.
    """
    if forecast.mean.shape != truth.mean.shape:
        raise ValueError("stats dimension mismatch")
    scale = truth.mean_abs
    if np.any(scale == 0.0):
        flat = [i for i, s in enumerate(scale) if s == 0.0]
        raise DegenerateTruth(f"truth components {flat} have zero mean magnitude")
    d_mean = (forecast.mean - truth.mean) / scale
    d_abs = (forecast.mean_abs - truth.mean_abs) / scale
    return np.concatenate([d_mean, d_abs])


def delta_att(deltas) -> float:
    """Per-attractor error: Euclidean norm of the eight delta values."""
    arr = np.asarray(deltas, dtype=np.float64).ravel()
    return float(np.sqrt(np.sum(arr ** 2)))


def delta_tot(att_deltas) -> float:
    """Total error: Euclidean norm of the three per-attractor metrics."""
    arr = np.asarray(att_deltas, dtype=np.float64).ravel()
    if arr.size != 3:
        raise ValueError(f"expected exactly three attractor metrics, got {arr.size}")
    return float(np.sqrt(np.sum(arr ** 2)))


def valid_time(pred: Trajectory, truth: Trajectory,
               threshold: float = DEFAULT_VALID_TIME_THRESHOLD) -> float:
    """Time until the normalized forecast error first exceeds ``threshold``.

    The per-sample error is max over components of |pred - truth| / sigma,
    with sigma the per-component standard deviation of the truth.  If sample
    n is the first exceedance the result is n*dt; if none, the full duration
    n_samples*dt is returned.
    """
    if len(pred) != len(truth):
        raise ValueError(f"length mismatch: {len(pred)} vs {len(truth)}")
    if pred.dt != truth.dt:
        raise ValueError(f"dt mismatch: {pred.dt!r} vs {truth.dt!r}")
    if not (threshold > 0.0):
        raise ValueError(f"threshold must be positive, got {threshold}")
    sigma = truth.samples.std(axis=0, ddof=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        err = np.abs(pred.samples - truth.samples) / sigma
        err = np.where(np.isnan(err), 0.0, err)  # 0/0: identical constant components
        norm = err.max(axis=1)
    exceeded = np.nonzero(norm > threshold)[0]
    if exceeded.size == 0:
        return len(truth) * truth.dt
    return float(exceeded[0] * truth.dt)


# Attractor display order used by reports: torus, chaos_neg, chaos_pos.
REPORT_ORDER = (AttractorLabel.TORUS, AttractorLabel.CHAOS_NEG, AttractorLabel.CHAOS_POS)


def write_metrics_csv(path, pairs: dict) -> None:
    """Write the metrics report consumed by the ``metrics`` CLI subcommand.

    ``pairs`` maps an AttractorLabel to its 8-vector from :func:`delta_pair`;
    attractors may be missing (partial input).  Per-variable rows come first,
    then one delta_att summary row per supplied attractor, then the delta_tot
    row, whose value is left empty and flagged when any attractor is missing.
    """
    fmt = "%.17g"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["attractor", "variable", "delta_v", "delta_abs_v"])
        atts = []
        complete = True
        for label in REPORT_ORDER:
            if label not in pairs:
                complete = False
                continue
            deltas = np.asarray(pairs[label], dtype=np.float64)
            nvar = deltas.size // 2
            for i in range(nvar):
                writer.writerow([
                    label.tag, STATE_LABELS[i] if i < len(STATE_LABELS) else f"v{i}",
                    fmt % deltas[i], fmt % deltas[nvar + i],
                ])
            atts.append((label, delta_att(deltas)))
        for label, value in atts:
            writer.writerow([label.tag, "delta_att", fmt % value, ""])
        if complete and len(atts) == len(REPORT_ORDER):
            total = delta_tot([v for _, v in atts])
            writer.writerow(["all", "delta_tot", fmt % total, ""])
        else:
            writer.writerow(["all", "delta_tot", "", "incomplete"])
