"""Experiment configuration: every pipeline parameter with reference defaults.

The defaults reproduce the reference experiment exactly: a=6, b=0.1, dt=0.05,
t_train=300, t_test=150, t_avg=5000, k=2, alpha=4e-5, abs_tol=1e-7, and the
three named initial conditions.  They are hash-guarded by the parameter table
in docs/parameters.md so silent drift fails a test.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .basin import BasinRegion
from .dynamics import SystemParams
from .nvar import NvarConfig

ENGINE_NAMES = ("oracle", "ngrc_oracle_warmup", "ngrc_bootstrap")
IC_NAMES = ("torus", "chaos_neg", "chaos_pos")

# The default windows straddle the fractal boundary band u0 in [-3, 3] where
# all three basins interleave; outside it (|u0| > ~3) the plane is single-label
# and agreement scores are vacuous.  The companion window is the image of the
# primary under the system symmetry (y0, u0) -> (-y0, -u0).
_PRIMARY_REGION = {
    "axes": ["y0", "u0"],
    "lo": [2.0, -3.0],
    "hi": [6.0, 3.0],
    "fixed": {"x0": 0.0, "z0": 0.0},
}
_COMPANION_REGION = {
    "axes": ["y0", "u0"],
    "lo": [-6.0, -3.0],
    "hi": [-2.0, 3.0],
    "fixed": {"x0": 0.0, "z0": 0.0},
}


def _normalize_region(doc: dict, name: str) -> dict:
    missing = {"axes", "lo", "hi", "fixed"} - set(doc)
    if missing:
        raise ValueError(f"{name} is missing keys: {sorted(missing)}")
    fixed = doc["fixed"]
    if not isinstance(fixed, dict):
        fixed = {key: value for key, value in fixed}
    return {
        "axes": [str(v) for v in doc["axes"]],
        "lo": [float(v) for v in doc["lo"]],
        "hi": [float(v) for v in doc["hi"]],
        "fixed": {str(key): float(value) for key, value in fixed.items()},
    }


@dataclass(frozen=True)
class ExperimentConfig:
    a: float = 6.0
    b: float = 0.1
    dt: float = 0.05
    abs_tol: float = 1e-7
    t_train: float = 300.0
    t_test: float = 150.0
    t_avg: float = 5000.0
    k: int = 2
    alpha: float = 4e-5
    constant_term: float = 1.0
    ic_torus: tuple = (1.0, -1.0, 1.0, -1.0)
    ic_chaos_neg: tuple = (0.0, 4.0, 0.0, -5.0)
    ic_chaos_pos: tuple = (0.0, -4.0, 0.0, 5.0)
    basin_engine: str = "ngrc_oracle_warmup"
    basin_horizon: float = 200.0
    basin_region: str = "primary"
    basin_resolution: tuple = (100, 100)
    basin_primary: dict = field(default_factory=lambda: dict(_PRIMARY_REGION))
    basin_companion: dict = field(default_factory=lambda: dict(_COMPANION_REGION))
    alpha_grid_lo_exp: int = -9
    alpha_grid_hi_exp: int = -1
    alpha_grid_per_decade: int = 5
    valid_time_threshold: float = 0.4
    output_dir: str = "out"

    def __post_init__(self):
        object.__setattr__(self, "ic_torus", tuple(float(v) for v in self.ic_torus))
        object.__setattr__(self, "ic_chaos_neg", tuple(float(v) for v in self.ic_chaos_neg))
        object.__setattr__(self, "ic_chaos_pos", tuple(float(v) for v in self.ic_chaos_pos))
        object.__setattr__(self, "basin_resolution",
                           tuple(int(v) for v in self.basin_resolution))
        object.__setattr__(self, "basin_primary",
                           _normalize_region(self.basin_primary, "basin_primary"))
        object.__setattr__(self, "basin_companion",
                           _normalize_region(self.basin_companion, "basin_companion"))
        if not (self.a > 0 and self.b > 0):
            raise ValueError("a and b must be positive")
        for name in ("dt", "abs_tol", "t_train", "t_test", "t_avg",
                     "basin_horizon", "valid_time_threshold"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive real, got {value}")
        if not (isinstance(self.k, int) and self.k >= 1):
            raise ValueError(f"k must be a positive integer, got {self.k}")
        if not (np.isfinite(self.alpha) and self.alpha >= 0):
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")
        if self.basin_engine not in ENGINE_NAMES:
            raise ValueError(f"basin_engine must be one of {ENGINE_NAMES}")
        if self.basin_region not in ("primary", "companion"):
            raise ValueError("basin_region must be 'primary' or 'companion'")
        for ic_name in IC_NAMES:
            ic = getattr(self, f"ic_{ic_name}")
            if len(ic) != 4 or not all(np.isfinite(v) for v in ic):
                raise ValueError(f"ic_{ic_name} must be 4 finite reals")
        if len(self.basin_resolution) != 2 or min(self.basin_resolution) < 2:
            raise ValueError("basin_resolution must be two integers >= 2")
        if not (self.alpha_grid_lo_exp < self.alpha_grid_hi_exp
                and self.alpha_grid_per_decade >= 1):
            raise ValueError("invalid alpha search grid")

    # -- derived views -----------------------------------------------------

    def system_params(self) -> SystemParams:
        return SystemParams(a=self.a, b=self.b)

    def nvar_config(self, k: int | None = None, alpha: float | None = None) -> NvarConfig:
        return NvarConfig(d=4, k=self.k if k is None else k,
                          dt=self.dt, alpha=self.alpha if alpha is None else alpha,
                          constant_term=self.constant_term)

    def ic(self, name: str) -> np.ndarray:
        if name not in IC_NAMES:
            raise ValueError(f"unknown ic name {name!r}, want one of {IC_NAMES}")
        return np.array(getattr(self, f"ic_{name}"), dtype=np.float64)

    def region(self, which: str | None = None,
               resolution: tuple | None = None) -> BasinRegion:
        which = which or self.basin_region
        if which == "primary":
            doc = self.basin_primary
        elif which == "companion":
            doc = self.basin_companion
        else:
            raise ValueError(f"unknown region {which!r}")
        return BasinRegion(
            axes=tuple(doc["axes"]),
            lo=tuple(doc["lo"]),
            hi=tuple(doc["hi"]),
            resolution=tuple(resolution or self.basin_resolution),
            fixed=tuple(sorted(doc["fixed"].items())),
        )

    def alpha_candidates(self) -> np.ndarray:
        per = self.alpha_grid_per_decade
        n = (self.alpha_grid_hi_exp - self.alpha_grid_lo_exp) * per + 1
        exps = self.alpha_grid_lo_exp + np.arange(n) / per
        return 10.0 ** exps

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        for key, value in doc.items():
            if isinstance(value, tuple):
                doc[key] = list(value)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(doc)
        for key in ("ic_torus", "ic_chaos_neg", "ic_chaos_pos", "basin_resolution"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise ValueError(f"config file {path} must hold a JSON object")
        return cls.from_dict(doc)

    def replace(self, **overrides) -> "ExperimentConfig":
        """New config with the given fields changed; None values are ignored."""
        kwargs = {k: v for k, v in overrides.items() if v is not None}
        return dataclasses.replace(self, **kwargs)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()
