"""Trajectory CSV serialization and file hashing.

Trajectories travel as plain CSV (header ``t,x,y,z,u``) with 17 significant
digits per value, enough for exact float64 round-trips, so a written file read
back and rewritten is byte-identical.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .dynamics import STATE_LABELS, Trajectory

TRAJECTORY_HEADER = "t," + ",".join(STATE_LABELS)


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Write one row per sample; times are t0 + i*dt, same floats as
    ``Trajectory.times``."""
    X = traj.samples
    n, d = X.shape
    if d != len(STATE_LABELS):
        raise ValueError(f"trajectory CSV format is for {len(STATE_LABELS)}-component states, got d={d}")
    t = traj.times
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(TRAJECTORY_HEADER + "\n")
        for i in range(n):
            fh.write("%.17g,%.17g,%.17g,%.17g,%.17g\n"
                     % (t[i], X[i, 0], X[i, 1], X[i, 2], X[i, 3]))


def read_trajectory_csv(path, dt: float | None = None) -> Trajectory:
    """Read a trajectory CSV.

    When ``dt`` is supplied (the usual case: it comes from the experiment
    config) the time column is validated against the uniform grid t0 + i*dt
    and the exact ``dt`` is used, keeping float-exact dt comparisons
    downstream meaningful.  Without it, dt is inferred from the first two
    rows.
    """
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != TRAJECTORY_HEADER:
            raise ValueError(
                f"unexpected trajectory header {header!r}, want {TRAJECTORY_HEADER!r}"
            )
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape[1] != 1 + len(STATE_LABELS):
        raise ValueError(f"trajectory CSV must have {1 + len(STATE_LABELS)} columns, got {data.shape[1]}")
    if data.shape[0] < 1:
        raise ValueError("trajectory CSV has no samples")
    t = data[:, 0]
    t0 = float(t[0])
    if dt is None:
        if data.shape[0] < 2:
            raise ValueError("cannot infer dt from a single-sample file; pass dt")
        dt = float(t[1] - t[0])
    grid = t0 + float(dt) * np.arange(data.shape[0])
    tol = 1e-9 * max(1.0, float(np.max(np.abs(t))))
    if np.max(np.abs(t - grid)) > tol:
        raise ValueError(f"time column of {path} is not a uniform grid with dt={dt}")
    return Trajectory(dt=float(dt), samples=data[:, 1:], t0=t0)


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            h.update(block)
    return h.hexdigest()
