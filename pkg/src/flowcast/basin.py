"""Basin-of-attraction grids under the ground-truth integrator or a trained
NVAR model, plus pixel-agreement scoring between grids.

Each initial condition is evolved for a fixed horizon (200 time units by
default) and classified by its final u: u < -2 is the chaos_neg attractor,
u > 2 chaos_pos, anything else torus.  Strict inequalities, so |u| = 2 lands
on torus.  Pixels are independent pure computations; the grid loop fans them
out over a thread pool (the kernels release the GIL) and every pixel writes
only its own slot, so results are bitwise independent of worker count and
evaluation order.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dynamics import MIN_STEP, DEFAULT_ABS_TOL, SystemParams, as_state
from .errors import GridMismatch, LadderGap
from .metrics import AttractorLabel
from .nvar import NvarModel, feature_dim

AXIS_NAMES = ("x0", "y0", "z0", "u0")
DEFAULT_HORIZON = 200.0

# Downstream plotting convention.
LABEL_COLORS = {"torus": "#cfe8ff", "chaos_neg": "#2ca02c", "chaos_pos": "#d62728"}


def classify(u_final: float) -> AttractorLabel:
    """Attractor label from the final u value (strict thresholds at -2/+2)."""
    if u_final < -2.0:
        return AttractorLabel.CHAOS_NEG
    if u_final > 2.0:
        return AttractorLabel.CHAOS_POS
    return AttractorLabel.TORUS


@dataclass(frozen=True)
class BasinRegion:
    """A 2-D plane of initial conditions: two swept axes, two held fixed.

    Axis names follow the initial-condition components x0, y0, z0, u0.  Grids
    are endpoint-inclusive with uniform spacing (hi - lo)/(n - 1).
    """

    axes: tuple[str, str]
    lo: tuple[float, float]
    hi: tuple[float, float]
    resolution: tuple[int, int]
    fixed: tuple[tuple[str, float], tuple[str, float]]

    def __post_init__(self):
        axes = tuple(self.axes)
        fixed = tuple((str(n), float(v)) for n, v in self.fixed)
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        res = tuple(int(n) for n in self.resolution)
        names = [n for n in axes] + [n for n, _ in fixed]
        if sorted(names) != sorted(AXIS_NAMES):
            raise ValueError(
                f"axes + fixed must cover {AXIS_NAMES} exactly, got {names}"
            )
        for i in (0, 1):
            if not (lo[i] < hi[i]):
                raise ValueError(f"axis {axes[i]}: need lo < hi, got [{lo[i]}, {hi[i]}]")
            if res[i] < 2:
                raise ValueError(f"axis {axes[i]}: resolution must be >= 2, got {res[i]}")
        for _, v in fixed:
            if not np.isfinite(v):
                raise ValueError("fixed values must be finite")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "fixed", fixed)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "resolution", res)

    def axis_values(self, i: int) -> np.ndarray:
        return np.linspace(self.lo[i], self.hi[i], self.resolution[i])

    def grid_ics(self) -> np.ndarray:
        """All grid-node initial conditions, shape (n1*n2, 4), row-major:
        pixel (i, j) is row i*n2 + j."""
        n1, n2 = self.resolution
        base = np.zeros(4)
        for name, value in self.fixed:
            base[AXIS_NAMES.index(name)] = value
        ics = np.tile(base, (n1 * n2, 1))
        ics[:, AXIS_NAMES.index(self.axes[0])] = np.repeat(self.axis_values(0), n2)
        ics[:, AXIS_NAMES.index(self.axes[1])] = np.tile(self.axis_values(1), n1)
        return ics

    def to_dict(self) -> dict:
        return {
            "axes": list(self.axes),
            "lo": list(self.lo),
            "hi": list(self.hi),
            "resolution": list(self.resolution),
            "fixed": {name: value for name, value in self.fixed},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "BasinRegion":
        return cls(
            axes=tuple(doc["axes"]),
            lo=tuple(doc["lo"]),
            hi=tuple(doc["hi"]),
            resolution=tuple(doc["resolution"]),
            fixed=tuple(sorted(doc["fixed"].items())),
        )


@dataclass(frozen=True)
class BasinGrid:
    """Labels over a region plus the engine that produced them."""

    region: BasinRegion
    labels: np.ndarray
    engine: str
    divergence_count: int = 0
    horizon: float = DEFAULT_HORIZON

    def __post_init__(self):
        arr = np.ascontiguousarray(self.labels, dtype=np.int64)
        if arr.shape != self.region.resolution:
            raise ValueError(
                f"label array shape {arr.shape} != resolution {self.region.resolution}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)

    def label_counts(self) -> dict:
        return {
            lab.tag: int(np.count_nonzero(self.labels == int(lab)))
            for lab in AttractorLabel
        }


# ---------------------------------------------------------------------------
# Engines
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OracleEngine:
    """Ground-truth integration of every pixel."""

    params: SystemParams = SystemParams()
    abs_tol: float = DEFAULT_ABS_TOL
    min_step: float = MIN_STEP

    name = "oracle"

    def run(self, ics: np.ndarray, horizon: float, labels: np.ndarray,
            diverged: np.ndarray) -> None:
        _kernels.basin_oracle(ics, self.params.a, self.params.b, horizon,
                              self.abs_tol, self.min_step, labels, diverged)


@dataclass(frozen=True)
class NvarOracleWarmupEngine:
    """NVAR forecast whose k warm-up samples come from the integrator.

    The model gets the IC plus (k-1) ground-truth points spaced dt apart,
    then runs closed loop to the horizon.
    """

    model: NvarModel
    params: SystemParams = SystemParams()
    abs_tol: float = DEFAULT_ABS_TOL
    min_step: float = MIN_STEP

    name = "ngrc_oracle_warmup"

    def run(self, ics, horizon, labels, diverged):
        cfg = self.model.config
        n_steps = _horizon_steps(horizon, cfg.dt, cfg.k)
        _kernels.basin_nvar_oracle(
            ics, self.params.a, self.params.b, cfg.dt, self.abs_tol,
            self.min_step, self.model.w_out, cfg.constant_term, cfg.k,
            n_steps, labels, diverged,
        )


@dataclass(frozen=True)
class NvarBootstrapEngine:
    """NVAR forecast that bootstraps its own warm-up with a model ladder."""

    ladder: tuple

    name = "ngrc_bootstrap"

    def __post_init__(self):
        by_k = {}
        for mod in self.ladder:
            if mod.config.k in by_k:
                raise ValueError(f"duplicate ladder model for k={mod.config.k}")
            by_k[mod.config.k] = mod
        if not by_k:
            raise LadderGap("empty model ladder")
        K = max(by_k)
        missing = [j for j in range(1, K + 1) if j not in by_k]
        if missing:
            raise LadderGap(f"ladder missing tap counts {missing} (need 1..{K})")
        base = by_k[K].config
        for mod in by_k.values():
            c = mod.config
            if (c.d, c.dt, c.constant_term) != (base.d, base.dt, base.constant_term):
                raise ValueError("ladder models disagree on d, dt, or constant_term")
        object.__setattr__(self, "ladder", tuple(by_k[j] for j in range(1, K + 1)))

    @property
    def model(self) -> NvarModel:
        return self.ladder[-1]

    def run(self, ics, horizon, labels, diverged):
        cfg = self.model.config
        K = cfg.k
        d = cfg.d
        dtots = np.array([feature_dim(d, j) for j in range(1, K + 1)], dtype=np.int64)
        w_ladder = np.zeros((K, d, int(dtots[-1])))
        for j, mod in enumerate(self.ladder):
            w_ladder[j, :, : dtots[j]] = mod.w_out
        n_steps = _horizon_steps(horizon, cfg.dt, K)
        _kernels.basin_nvar_bootstrap(
            ics, cfg.dt, w_ladder, dtots, cfg.constant_term, K, n_steps,
            labels, diverged,
        )


def _horizon_steps(horizon: float, dt: float, k: int) -> int:
    """Closed-loop steps after k warm-up samples so the final state is at
    t = horizon exactly."""
    if not (horizon > 0.0):
        raise ValueError(f"horizon must be positive, got {horizon}")
    total = int(round(horizon / dt))
    if abs(total * dt - horizon) > 1e-9 * max(1.0, abs(horizon)):
        raise ValueError(f"dt={dt} does not divide horizon={horizon}")
    n_steps = total - (k - 1)
    if n_steps < 1:
        raise ValueError(f"horizon {horizon} too short for k={k} warm-up samples")
    return n_steps


# ---------------------------------------------------------------------------
# Grid evaluation
# ---------------------------------------------------------------------------


def basin_point(ic, engine, horizon: float = DEFAULT_HORIZON) -> AttractorLabel:
    """Label for a single initial condition under the chosen engine.

    Divergent forecasts are absorbed: the last finite state is classified by
    the same strict |u| > 2 rule.
    """
    ics = as_state(ic).reshape(1, 4)
    labels = np.empty(1, dtype=np.int64)
    diverged = np.zeros(1, dtype=np.int64)
    engine.run(ics, float(horizon), labels, diverged)
    return AttractorLabel(int(labels[0]))


def compute_basin(region: BasinRegion, engine, horizon: float = DEFAULT_HORIZON,
                  workers: int | None = None) -> BasinGrid:
    """Evaluate the engine at every grid node of ``region``.

    ``workers`` defaults to the available core count.  Each worker handles
    whole grid rows and writes disjoint slices of the output, so the result
    is identical for any worker count.
    """
    n1, n2 = region.resolution
    ics = region.grid_ics()
    labels = np.empty(n1 * n2, dtype=np.int64)
    diverged = np.zeros(n1 * n2, dtype=np.int64)
    horizon = float(horizon)
    if workers is None:
        workers = os.cpu_count() or 1
    workers = max(1, int(workers))

    chunks = [(i * n2, (i + 1) * n2) for i in range(n1)]
    if workers == 1:
        for start, stop in chunks:
            engine.run(ics[start:stop], horizon, labels[start:stop],
                       diverged[start:stop])
    else:
        def run_chunk(bounds):
            start, stop = bounds
            engine.run(ics[start:stop], horizon, labels[start:stop],
                       diverged[start:stop])

        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_chunk, chunks))

    return BasinGrid(
        region=region,
        labels=labels.reshape(n1, n2),
        engine=engine.name,
        divergence_count=int(diverged.sum()),
        horizon=horizon,
    )


@dataclass(frozen=True)
class AgreementReport:
    """Pixel-agreement fractions of a model grid against a truth grid.

    ``per_label`` holds, for each chaotic label, the fraction of truth pixels
    of that label that the model reproduces (None when the truth grid has no
    such pixels); ``overall`` is the plain fraction of matching pixels.
    """

    per_label: dict
    overall: float

    def chaotic_minimum(self) -> float:
        values = [v for v in self.per_label.values() if v is not None]
        return min(values) if values else float("nan")


def agreement(truth: BasinGrid, model: BasinGrid) -> AgreementReport:
    """Score ``model`` against ``truth`` pixel by pixel."""
    if truth.region != model.region:
        raise GridMismatch("grids cover different regions")
    if truth.labels.shape != model.labels.shape:
        raise GridMismatch(
            f"resolution mismatch: {truth.labels.shape} vs {model.labels.shape}"
        )
    match = truth.labels == model.labels
    per = {}
    for lab in (AttractorLabel.CHAOS_NEG, AttractorLabel.CHAOS_POS):
        mask = truth.labels == int(lab)
        per[lab.tag] = float(match[mask].mean()) if mask.any() else None
    return AgreementReport(per_label=per, overall=float(match.mean()))


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def metadata_path(csv_path) -> str:
    return str(csv_path) + ".meta.json"


def write_basin_csv(grid: BasinGrid, path, model_sha256: str | None = None) -> None:
    """Write the label grid as CSV plus a metadata sidecar.

    CSV header is ``axis1,axis2,label``; rows are row-major over the grid so
    repeated runs produce byte-identical bodies.  The sidecar (same name plus
    ``.meta.json``) records region, resolution, engine, model hash, divergence
    count, and the plotting color convention.
    """
    region = grid.region
    v1 = region.axis_values(0)
    v2 = region.axis_values(1)
    n1, n2 = region.resolution
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("axis1,axis2,label\n")
        for i in range(n1):
            for j in range(n2):
                tag = AttractorLabel(int(grid.labels[i, j])).tag
                fh.write("%.17g,%.17g,%s\n" % (v1[i], v2[j], tag))
    meta = {
        "region": region.to_dict(),
        "resolution": list(region.resolution),
        "engine": grid.engine,
        "horizon": grid.horizon,
        "model_sha256": model_sha256,
        "divergence_count": grid.divergence_count,
        "label_counts": grid.label_counts(),
        "color_convention": LABEL_COLORS,
        "created_unix": time.time(),
    }
    with open(metadata_path(path), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")


def read_basin_csv(path) -> BasinGrid:
    """Reconstruct a BasinGrid from a CSV written by :func:`write_basin_csv`.

    Requires the metadata sidecar (region and engine are not recoverable from
    the CSV alone).
    """
    meta_file = metadata_path(path)
    if not os.path.exists(meta_file):
        raise FileNotFoundError(
            f"basin metadata sidecar {meta_file} is required to load {path}"
        )
    with open(meta_file, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    region = BasinRegion.from_dict(meta["region"])
    n1, n2 = region.resolution
    labels = np.empty((n1, n2), dtype=np.int64)
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "axis1,axis2,label":
            raise ValueError(f"unexpected basin CSV header {header!r}")
        count = 0
        for line in fh:
            line = line.strip()
            if not line:
                continue
            _a1, _a2, tag = line.split(",")
            labels[count // n2, count % n2] = int(AttractorLabel.from_tag(tag))
            count += 1
    if count != n1 * n2:
        raise ValueError(f"basin CSV has {count} rows, expected {n1 * n2}")
    return BasinGrid(
        region=region,
        labels=labels,
        engine=meta.get("engine", "unknown"),
        divergence_count=int(meta.get("divergence_count", 0)),
        horizon=float(meta.get("horizon", DEFAULT_HORIZON)),
    )
