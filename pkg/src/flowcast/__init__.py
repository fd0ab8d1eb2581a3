"""Flowcast: next-generation reservoir computing for the Li-Sprott system.

Learns the sampled flow of a four-dimensional chaotic system from one
trajectory, forecasts seen and unseen coexisting attractors closed-loop, and
maps their basins of attraction.
"""

from .basin import (
    AgreementReport,
    BasinGrid,
    BasinRegion,
    NvarBootstrapEngine,
    NvarOracleWarmupEngine,
    OracleEngine,
    agreement,
    basin_point,
    classify,
    compute_basin,
    read_basin_csv,
    write_basin_csv,
)
from .config import ExperimentConfig
from .dynamics import (
    DEFAULT_ABS_TOL,
    DEFAULT_DT,
    STATE_DIM,
    STATE_LABELS,
    SystemParams,
    Trajectory,
    integrate,
    integrate_field,
    resample_check,
    symmetry_map,
    vector_field,
)
from .errors import (
    DegenerateTruth,
    FlowcastError,
    GridMismatch,
    InsufficientData,
    LadderGap,
    NonFiniteState,
    SingularSystem,
    StepSizeUnderflow,
    WindowNotFull,
)
from .metrics import (
    AttractorLabel,
    AttractorStats,
    attractor_stats,
    delta_att,
    delta_pair,
    delta_tot,
    valid_time,
    write_metrics_csv,
)
from .nvar import (
    NvarConfig,
    NvarModel,
    bootstrap_warmup,
    feature_dim,
    forecast,
    linear_features,
    load_model,
    nrmse,
    one_step_nrmse,
    one_step_predictions,
    quadratic_features,
    quadratic_index,
    save_model,
    step,
    total_features,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AgreementReport",
    "AttractorLabel",
    "AttractorStats",
    "BasinGrid",
    "BasinRegion",
    "DEFAULT_ABS_TOL",
    "DEFAULT_DT",
    "DegenerateTruth",
    "ExperimentConfig",
    "FlowcastError",
    "GridMismatch",
    "InsufficientData",
    "LadderGap",
    "NonFiniteState",
    "NvarBootstrapEngine",
    "NvarConfig",
    "NvarModel",
    "NvarOracleWarmupEngine",
    "OracleEngine",
    "STATE_DIM",
    "STATE_LABELS",
    "SingularSystem",
    "StepSizeUnderflow",
    "SystemParams",
    "Trajectory",
    "WindowNotFull",
    "agreement",
    "attractor_stats",
    "basin_point",
    "bootstrap_warmup",
    "classify",
    "compute_basin",
    "delta_att",
    "delta_pair",
    "delta_tot",
    "feature_dim",
    "forecast",
    "integrate",
    "integrate_field",
    "linear_features",
    "load_model",
    "nrmse",
    "one_step_nrmse",
    "one_step_predictions",
    "quadratic_features",
    "quadratic_index",
    "read_basin_csv",
    "resample_check",
    "save_model",
    "step",
    "symmetry_map",
    "total_features",
    "train",
    "valid_time",
    "vector_field",
    "write_basin_csv",
    "write_metrics_csv",
    "__version__",
]
