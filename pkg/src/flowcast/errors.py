"""Exception taxonomy shared across the package.

Numerical failure modes get their own types so callers (and the CLI exit-code
mapping) can tell a diverging trajectory from a misconfigured run.
"""

from __future__ import annotations


class FlowcastError(Exception):
    """Base class for every domain error raised by this package."""


class StepSizeUnderflow(FlowcastError):
    """The adaptive step controller needed a step below the configured floor.

    Signals a singular or pathologically stiff trajectory; the integration
    cannot proceed at the requested tolerance.
    """

    def __init__(self, t: float, floor: float):
        super().__init__(
            f"adaptive step size fell below the floor {floor:g} at t={t:.6g}"
        )
        self.t = t
        self.floor = floor


class NonFiniteState(FlowcastError):
    """A state component overflowed or became NaN during integration/forecast."""

    def __init__(self, message: str, *, t: float | None = None,
                 step_index: int | None = None, last_state=None):
        super().__init__(message)
        self.t = t
        self.step_index = step_index
        self.last_state = last_state


class WindowNotFull(FlowcastError):
    """A delay window holds fewer states than the model's tap count k."""


class InsufficientData(FlowcastError):
    """The training trajectory is too short to form a single feature/target pair."""


class SingularSystem(FlowcastError):
    """The regularized normal equations could not be solved.

    Only reachable at alpha=0 with rank-deficient features; any alpha > 0
    makes the Gram matrix positive definite.
    """


class LadderGap(FlowcastError):
    """The bootstrap model ladder is missing one of the tap counts 1..K."""


class GridMismatch(FlowcastError):
    """Two basin grids do not share the same region and resolution."""


class DegenerateTruth(FlowcastError):
    """A reference trajectory has a zero-variance component; NRMSE is undefined."""
