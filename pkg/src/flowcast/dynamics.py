"""Ground-truth dynamics: the Li-Sprott four-variable flow, its rotation
symmetry, and an adaptive Dormand-Prince 5(4) integrator with per-component
absolute error control and quartic dense output on a uniform sampling grid.

The system (Li and Sprott, Int. J. Bifurcation Chaos 24, 1450034)::

    dx/dt = -x + y
    dy/dt = -x z + u
    dz/dt =  x y - a
    du/dt = -b y

has, at a=6 and b=0.1, a quasi-periodic torus coexisting with a symmetric pair
of chaotic attractors.  The map S: (x, y, z, u) -> (-x, -y, z, -u) (a pi
rotation about the z axis) commutes with the flow, and the integrator below
commutes with it bitwise: every arithmetic operation used is odd under a
per-component sign flip, and the error norm is sign-invariant, so trajectories
from mirrored initial conditions are exact mirrors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import NonFiniteState, StepSizeUnderflow

STATE_DIM = 4
STATE_LABELS = ("x", "y", "z", "u")

DEFAULT_DT = 0.05
DEFAULT_ABS_TOL = 1e-7
MIN_STEP = 1e-12

# Lyapunov spectrum of the chaotic attractors at a=6, b=0.1.  The inverse of
# the leading exponent is the e-folding time of forecast-error growth.
CHAOS_LYAPUNOV_EXPONENTS = (0.2520, 0.0, -0.0052, -1.2467)
LYAPUNOV_TIME = 3.97


@dataclass(frozen=True)
class SystemParams:
    """Parameters of the vector field; defaults give coexisting attractors."""

    a: float = 6.0
    b: float = 0.1

    def __post_init__(self):
        if not (self.a > 0.0 and self.b > 0.0):
            raise ValueError(f"system parameters must be positive, got a={self.a}, b={self.b}")


def as_state(s) -> np.ndarray:
    """Coerce to a (4,) float64 state vector."""
    arr = np.asarray(s, dtype=np.float64)
    if arr.shape != (STATE_DIM,):
        raise ValueError(f"state must have shape ({STATE_DIM},), got {arr.shape}")
    return arr


def vector_field(s, p: SystemParams = SystemParams()) -> np.ndarray:
    """Right-hand side of the flow at state ``s``."""
    s = as_state(s)
    x, y, z, u = s
    return np.array([-x + y, -x * z + u, x * y - p.a, -p.b * y])


def symmetry_map(s) -> np.ndarray:
    """The pi rotation about the z axis: (x, y, z, u) -> (-x, -y, z, -u)."""
    s = as_state(s)
    return np.array([-s[0], -s[1], s[2], -s[3]])


@dataclass(frozen=True)
class Trajectory:
    """A uniformly sampled trajectory: sample ``i`` is at time ``t0 + i*dt``.

    ``samples`` has shape (n, d).  The array is frozen after construction so
    trajectories can be shared across threads.
    """

    dt: float
    samples: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        arr = np.ascontiguousarray(self.samples, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] < 1:
            raise ValueError(f"samples must be a 2-D (n, d) array, got shape {arr.shape}")
        if not (np.isfinite(self.dt) and self.dt > 0.0):
            raise ValueError(f"dt must be a positive finite real, got {self.dt}")
        if not np.isfinite(self.t0):
            raise ValueError(f"t0 must be finite, got {self.t0}")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    @property
    def t_final(self) -> float:
        return self.t0 + self.dt * (len(self) - 1)


def resample_check(traj: Trajectory) -> bool:
    """True iff ``traj`` satisfies the Trajectory invariants.

    Checks what construction alone cannot guarantee: at least one sample and
    all components finite.  The uniform grid holds by construction (samples
    are indexed, times derived as t0 + i*dt).
    """
    if len(traj) < 1:
        return False
    return bool(np.isfinite(traj.samples).all())


def _grid_points(t_span: float, dt: float) -> int:
    if not (np.isfinite(t_span) and t_span > 0.0):
        raise ValueError(f"t_span must be positive, got {t_span}")
    if not (np.isfinite(dt) and dt > 0.0):
        raise ValueError(f"dt must be positive, got {dt}")
    n = int(round(t_span / dt))
    if n < 1 or abs(n * dt - t_span) > 1e-9 * max(1.0, abs(t_span)):
        raise ValueError(f"dt={dt} does not divide t_span={t_span}")
    return n + 1


def _raise_integration_failure(status, filled, t_last, out, min_step):
    if status == 1:
        raise StepSizeUnderflow(t_last, min_step)
    if status == 2:
        raise NonFiniteState(
            f"state or derivative overflowed at t={t_last:.6g}",
            t=t_last, last_state=np.array(out[filled]),
        )
    raise RuntimeError("adaptive integration exceeded the internal step budget")


def integrate(s0, p: SystemParams, t_span: float, dt: float,
              abs_tol: float = DEFAULT_ABS_TOL, *, t0: float = 0.0,
              min_step: float = MIN_STEP) -> Trajectory:
    """Integrate the Li-Sprott field from ``s0`` over ``t_span`` time units.

    Parameters
    ----------
    s0 : array_like
        Initial state (x, y, z, u), taken to sit at time ``t0``.
    p : SystemParams
        Vector-field parameters.
    t_span : float
        Total integration time; ``dt`` must divide it (to ulp-scale slack).
    dt : float
        Output sampling interval.  The adaptive controller steps freely;
        samples come from the quartic dense-output polynomial.
    abs_tol : float
        Per-component absolute error bound enforced on every accepted step.
        There is no relative-error term.

    Returns
    -------
    Trajectory
        ``floor(t_span/dt) + 1`` samples including ``s0``.

    Raises
    ------
    StepSizeUnderflow
        If the controller drives the step below ``min_step``.
    NonFiniteState
        If a state component or its derivative overflows.
    """
    y0 = as_state(s0)
    if not np.isfinite(y0).all():
        raise ValueError("initial state must be finite")
    if not (abs_tol > 0.0):
        raise ValueError(f"abs_tol must be positive, got {abs_tol}")
    n_out = _grid_points(t_span, dt)
    out = np.empty((n_out, STATE_DIM))
    status, filled, t_last = _kernels.rk45_grid(
        y0, p.a, p.b, float(t0), float(dt), n_out, float(abs_tol),
        float(min_step), out,
    )
    if status != 0:
        _raise_integration_failure(status, filled, t_last, out, min_step)
    return Trajectory(dt=float(dt), samples=out, t0=float(t0))


def integrate_field(field, s0, t_span: float, dt: float,
                    abs_tol: float = DEFAULT_ABS_TOL, *, t0: float = 0.0,
                    min_step: float = MIN_STEP) -> Trajectory:
    """Integrate an arbitrary autonomous vector field ``field(y) -> dy/dt``.

    Same stepping, error control, and dense output as :func:`integrate`, in a
    plain-numpy loop so any callable (any state dimension) can be supplied.
    For the built-in field both paths produce identical trajectories; this one
    is the extension point, the compiled one is the fast path.
    """
    y0 = np.atleast_1d(np.asarray(s0, dtype=np.float64))
    if y0.ndim != 1 or y0.size < 1:
        raise ValueError("initial state must be a 1-D vector")
    if not np.isfinite(y0).all():
        raise ValueError("initial state must be finite")
    if not (abs_tol > 0.0):
        raise ValueError(f"abs_tol must be positive, got {abs_tol}")
    n_out = _grid_points(t_span, dt)
    status, filled, t_last, out = _rk45_python(
        field, y0, float(t0), float(dt), n_out, float(abs_tol), float(min_step)
    )
    if status != 0:
        _raise_integration_failure(status, filled, t_last, out, min_step)
    return Trajectory(dt=float(dt), samples=out, t0=float(t0))


def _rk45_python(field, y0, t0, dt, n_out, abs_tol, min_step):
    """Generic-dimension mirror of ``_kernels.rk45_grid``.

    The arithmetic is written in the same association order as the compiled
    kernel so the two paths agree on the built-in field.
    """
    K = _kernels
    d = y0.size
    out = np.empty((n_out, d))
    y = y0.copy()
    out[0] = y
    if n_out == 1:
        return 0, 1, t0, out

    t = t0
    t_end = t0 + dt * (n_out - 1)
    k1 = np.asarray(field(y), dtype=np.float64)
    if not np.isfinite(k1).all():
        out[1] = y
        return 2, 1, t, out

    # Hairer-style starting step on the absolute scale.
    d0 = np.max(np.abs(y)) / abs_tol
    d1 = np.max(np.abs(k1)) / abs_tol
    span = t_end - t0
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, span)
    f1 = np.asarray(field(y + h0 * k1), dtype=np.float64)
    d2 = np.max(np.abs(f1 - k1)) / (abs_tol * h0)
    if not np.isfinite(d2):
        h = min(1e-6, span)
    else:
        if d1 <= 1e-15 and d2 <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** 0.2
        h = min(100.0 * h0, h1, span)

    i_next = 1
    rejected = False
    nsteps = 0
    while i_next < n_out:
        nsteps += 1
        if nsteps > K._MAX_STEPS_PER_SAMPLE:
            out[i_next] = y
            return 3, i_next, t, out
        if h < min_step:
            out[i_next] = y
            return 1, i_next, t, out
        hs = h
        clamped = False
        if t + hs >= t_end:
            hs = t_end - t
            clamped = True

        k2 = np.asarray(field(y + hs * (K._A21 * k1)), dtype=np.float64)
        k3 = np.asarray(field(y + hs * (K._A31 * k1 + K._A32 * k2)), dtype=np.float64)
        k4 = np.asarray(field(y + hs * (K._A41 * k1 + K._A42 * k2 + K._A43 * k3)),
                        dtype=np.float64)
        k5 = np.asarray(field(y + hs * (K._A51 * k1 + K._A52 * k2 + K._A53 * k3
                                        + K._A54 * k4)), dtype=np.float64)
        k6 = np.asarray(field(y + hs * (K._A61 * k1 + K._A62 * k2 + K._A63 * k3
                                        + K._A64 * k4 + K._A65 * k5)), dtype=np.float64)
        ynew = y + hs * (K._B1 * k1 + K._B3 * k3 + K._B4 * k4 + K._B5 * k5 + K._B6 * k6)
        k7 = np.asarray(field(ynew), dtype=np.float64)

        e = hs * (K._E1 * k1 + K._E3 * k3 + K._E4 * k4 + K._E5 * k5
                  + K._E6 * k6 + K._E7 * k7)
        err_norm = np.max(np.abs(e)) / abs_tol

        if not np.isfinite(ynew).all() or not np.isfinite(err_norm):
            rejected = True
            h = hs * K._MIN_FACTOR
            continue

        if err_norm <= 1.0:
            t_new = t_end if clamped else t + hs
            q = None
            while i_next < n_out:
                tg = t0 + dt * i_next
                if tg > t_new:
                    break
                if tg == t_new:
                    out[i_next] = ynew
                else:
                    if q is None:
                        q = (
                            k1 * K._P11,
                            k1 * K._P12 + k3 * K._P32 + k4 * K._P42
                            + k5 * K._P52 + k6 * K._P62 + k7 * K._P72,
                            k1 * K._P13 + k3 * K._P33 + k4 * K._P43
                            + k5 * K._P53 + k6 * K._P63 + k7 * K._P73,
                            k1 * K._P14 + k3 * K._P34 + k4 * K._P44
                            + k5 * K._P54 + k6 * K._P64 + k7 * K._P74,
                        )
                    theta = (tg - t) / hs
                    out[i_next] = y + hs * theta * (
                        q[0] + theta * (q[1] + theta * (q[2] + theta * q[3]))
                    )
                i_next += 1

            t = t_new
            y = ynew
            k1 = k7
            if i_next >= n_out:
                break
            if not np.isfinite(k1).all():
                out[i_next] = y
                return 2, i_next, t, out
            if err_norm == 0.0:
                factor = K._MAX_FACTOR
            else:
                factor = min(K._MAX_FACTOR, K._SAFETY * err_norm ** -0.2)
            if rejected and factor > 1.0:
                factor = 1.0
            rejected = False
            h = hs * factor
        else:
            h = hs * max(K._MIN_FACTOR, K._SAFETY * err_norm ** -0.2)
            rejected = True

    return 0, n_out, t_end, out
