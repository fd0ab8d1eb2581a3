"""Numba-compiled inner loops.

Everything here is deliberately scalar and allocation-light: basin-of-attraction
grids evaluate tens of thousands of independent trajectories, so per-trajectory
cost must stay in compiled code.  All kernels are deterministic and run with the
GIL released (``nogil=True``), which lets the basin module fan pixels out over a
thread pool while keeping results bitwise independent of the worker count: each
pixel is an isolated scalar computation writing to its own output slot.

Status codes shared by the integrator kernels::

    0  success
    1  step size underflow (controller needed h below the floor)
    2  non-finite state or derivative (overflow / NaN)
    3  internal step-count safety limit hit (should be unreachable)

On failure the grid kernels leave rows ``[0, n_filled)`` valid and write the
last accepted state into row ``n_filled`` so callers can report or classify it.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# ---------------------------------------------------------------------------
# Dormand-Prince 5(4) tableau (FSAL: the 7th stage is the next step's first).
# ---------------------------------------------------------------------------

_A21 = 1.0 / 5.0
_A31 = 3.0 / 40.0
_A32 = 9.0 / 40.0
_A41 = 44.0 / 45.0
_A42 = -56.0 / 15.0
_A43 = 32.0 / 9.0
_A51 = 19372.0 / 6561.0
_A52 = -25360.0 / 2187.0
_A53 = 64448.0 / 6561.0
_A54 = -212.0 / 729.0
_A61 = 9017.0 / 3168.0
_A62 = -355.0 / 33.0
_A63 = 46732.0 / 5247.0
_A64 = 49.0 / 176.0
_A65 = -5103.0 / 18656.0

# 5th-order propagation weights (b2 = b7 = 0).
_B1 = 35.0 / 384.0
_B3 = 500.0 / 1113.0
_B4 = 125.0 / 192.0
_B5 = -2187.0 / 6784.0
_B6 = 11.0 / 84.0

# Embedded error weights, b - b_hat (e2 = 0).
_E1 = 71.0 / 57600.0
_E3 = -71.0 / 16695.0
_E4 = 71.0 / 1920.0
_E5 = -17253.0 / 339200.0
_E6 = 22.0 / 525.0
_E7 = -1.0 / 40.0

# Quartic dense-output coefficients (Shampine).  Column m of row s is the
# weight of stage s on theta^(m+1); stage 2 contributes nothing.
_P11 = 1.0
_P12 = -8048581381.0 / 2820520608.0
_P13 = 8663915743.0 / 2820520608.0
_P14 = -12715105075.0 / 11282082432.0
_P32 = 131558114200.0 / 32700410799.0
_P33 = -68118460800.0 / 10900136933.0
_P34 = 87487479700.0 / 32700410799.0
_P42 = -1754552775.0 / 470086768.0
_P43 = 14199869525.0 / 1410260304.0
_P44 = -10690763975.0 / 1880347072.0
_P52 = 127303824393.0 / 49829197408.0
_P53 = -318862633887.0 / 49829197408.0
_P54 = 701980252875.0 / 199316789632.0
_P62 = -282668133.0 / 205662961.0
_P63 = 2019193451.0 / 616988883.0
_P64 = -1453857185.0 / 822651844.0
_P72 = 40617522.0 / 29380423.0
_P73 = -110615467.0 / 29380423.0
_P74 = 69997945.0 / 29380423.0

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
_MAX_STEPS_PER_SAMPLE = 100_000_000

# Basin label codes (mirrored by basin.AttractorLabel).
TORUS = 0
CHAOS_NEG = 1
CHAOS_POS = 2


@njit(cache=True, inline="always")
def _rhs(y, a, b, out):
    # xdot = -x + y ; ydot = -x z + u ; zdot = x y - a ; udot = -b y
    out[0] = -y[0] + y[1]
    out[1] = -y[0] * y[2] + y[3]
    out[2] = y[0] * y[1] - a
    out[3] = -b * y[1]


@njit(cache=True, inline="always")
def _maxabs(v):
    m = 0.0
    for i in range(v.shape[0]):
        ai = abs(v[i])
        if ai > m:
            m = ai
    return m


@njit(cache=True)
def _initial_step(y, f0, a, b, abs_tol, span):
    # Hairer-style starting step with a pure absolute scale.
    d0 = _maxabs(y) / abs_tol
    d1 = _maxabs(f0) / abs_tol
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    if h0 > span:
        h0 = span
    y1 = np.empty(4)
    f1 = np.empty(4)
    for i in range(4):
        y1[i] = y[i] + h0 * f0[i]
    _rhs(y1, a, b, f1)
    d2 = 0.0
    for i in range(4):
        di = abs(f1[i] - f0[i])
        if di > d2:
            d2 = di
    d2 /= abs_tol * h0
    if not np.isfinite(d2):
        return min(1e-6, span)
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    h = min(100.0 * h0, h1)
    if h > span:
        h = span
    return h


@njit(cache=True, nogil=True)
def rk45_grid(y0, a, b, t0, dt, n_out, abs_tol, min_step, out):
    """Integrate the four-variable field from ``y0``, sampling the uniform grid
    ``t0 + i*dt`` for ``i in [0, n_out)`` into ``out`` (shape ``(n_out, 4)``).

    Error control is per-component absolute: every accepted step satisfies
    ``max_i |err_i| <= abs_tol``.  Grid samples strictly inside an accepted
    step come from the quartic dense-output polynomial; samples landing
    exactly on a step endpoint reuse the endpoint state.

    Returns ``(status, n_filled, t_last)`` with the codes documented at module
    level.  On failure ``out[n_filled]`` holds the last accepted state.
    """
    k1 = np.empty(4)
    k2 = np.empty(4)
    k3 = np.empty(4)
    k4 = np.empty(4)
    k5 = np.empty(4)
    k6 = np.empty(4)
    k7 = np.empty(4)
    ytmp = np.empty(4)
    ynew = np.empty(4)
    q = np.empty((4, 4))
    y = y0.copy()

    for i in range(4):
        out[0, i] = y[i]
    if n_out == 1:
        return (0, 1, t0)

    t = t0
    t_end = t0 + dt * (n_out - 1)
    _rhs(y, a, b, k1)
    for i in range(4):
        if not np.isfinite(k1[i]):
            out[1] = y
            return (2, 1, t)
    h = _initial_step(y, k1, a, b, abs_tol, t_end - t0)

    i_next = 1
    rejected = False
    max_steps = _MAX_STEPS_PER_SAMPLE
    nsteps = 0
    while i_next < n_out:
        nsteps += 1
        if nsteps > max_steps:
            out[i_next] = y
            return (3, i_next, t)
        if h < min_step:
            out[i_next] = y
            return (1, i_next, t)
        hs = h
        clamped = False
        if t + hs >= t_end:
            hs = t_end - t
            clamped = True

        for i in range(4):
            ytmp[i] = y[i] + hs * (_A21 * k1[i])
        _rhs(ytmp, a, b, k2)
        for i in range(4):
            ytmp[i] = y[i] + hs * (_A31 * k1[i] + _A32 * k2[i])
        _rhs(ytmp, a, b, k3)
        for i in range(4):
            ytmp[i] = y[i] + hs * (_A41 * k1[i] + _A42 * k2[i] + _A43 * k3[i])
        _rhs(ytmp, a, b, k4)
        for i in range(4):
            ytmp[i] = y[i] + hs * (
                _A51 * k1[i] + _A52 * k2[i] + _A53 * k3[i] + _A54 * k4[i]
            )
        _rhs(ytmp, a, b, k5)
        for i in range(4):
            ytmp[i] = y[i] + hs * (
                _A61 * k1[i] + _A62 * k2[i] + _A63 * k3[i]
                + _A64 * k4[i] + _A65 * k5[i]
            )
        _rhs(ytmp, a, b, k6)
        for i in range(4):
            ynew[i] = y[i] + hs * (
                _B1 * k1[i] + _B3 * k3[i] + _B4 * k4[i]
                + _B5 * k5[i] + _B6 * k6[i]
            )
        _rhs(ynew, a, b, k7)

        err = 0.0
        finite = True
        for i in range(4):
            if not np.isfinite(ynew[i]):
                finite = False
            e = hs * (
                _E1 * k1[i] + _E3 * k3[i] + _E4 * k4[i]
                + _E5 * k5[i] + _E6 * k6[i] + _E7 * k7[i]
            )
            ae = abs(e)
            if ae > err:
                err = ae
        err_norm = err / abs_tol

        if not finite or not np.isfinite(err_norm):
            # The derivative at y is finite (invariant), so the trial step was
            # simply too large; shrink hard and retry.
            rejected = True
            h = hs * _MIN_FACTOR
            continue

        if err_norm <= 1.0:
            t_new = t_end if clamped else t + hs
            dense_ready = False
            while i_next < n_out:
                tg = t0 + dt * i_next
                if tg > t_new:
                    break
                if tg == t_new:
                    for i in range(4):
                        out[i_next, i] = ynew[i]
                else:
                    if not dense_ready:
                        for i in range(4):
                            q[i, 0] = k1[i] * _P11
                            q[i, 1] = (
                                k1[i] * _P12 + k3[i] * _P32 + k4[i] * _P42
                                + k5[i] * _P52 + k6[i] * _P62 + k7[i] * _P72
                            )
                            q[i, 2] = (
                                k1[i] * _P13 + k3[i] * _P33 + k4[i] * _P43
                                + k5[i] * _P53 + k6[i] * _P63 + k7[i] * _P73
                            )
                            q[i, 3] = (
                                k1[i] * _P14 + k3[i] * _P34 + k4[i] * _P44
                                + k5[i] * _P54 + k6[i] * _P64 + k7[i] * _P74
                            )
                        dense_ready = True
                    theta = (tg - t) / hs
                    for i in range(4):
                        out[i_next, i] = y[i] + hs * theta * (
                            q[i, 0] + theta * (
                                q[i, 1] + theta * (q[i, 2] + theta * q[i, 3])
                            )
                        )
                i_next += 1

            t = t_new
            for i in range(4):
                y[i] = ynew[i]
                k1[i] = k7[i]
            if i_next >= n_out:
                break
            for i in range(4):
                if not np.isfinite(k1[i]):
                    out[i_next] = y
                    return (2, i_next, t)
            if err_norm == 0.0:
                factor = _MAX_FACTOR
            else:
                factor = _SAFETY * err_norm ** -0.2
                if factor > _MAX_FACTOR:
                    factor = _MAX_FACTOR
            if rejected and factor > 1.0:
                factor = 1.0
            rejected = False
            h = hs * factor
        else:
            factor = _SAFETY * err_norm ** -0.2
            if factor < _MIN_FACTOR:
                factor = _MIN_FACTOR
            h = hs * factor
            rejected = True

    return (0, n_out, t_end)


# ---------------------------------------------------------------------------
# NVAR feature evaluation and closed-loop forecasting.
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _nvar_delta(win, w_out, c, delta):
    """``delta = W_out @ [c; win; quad(win)]`` without materializing features.

    ``win`` is the flattened delay window, current state first.  Quadratic
    monomials run over the upper triangle in row-major order, matching
    ``nvar.quadratic_features``.
    """
    m = win.shape[0]
    d = w_out.shape[0]
    for r in range(d):
        acc = w_out[r, 0] * c
        for j in range(m):
            acc += w_out[r, 1 + j] * win[j]
        idx = 1 + m
        for p in range(m):
            wp = win[p]
            for qq in range(p, m):
                acc += w_out[r, idx] * (wp * win[qq])
                idx += 1
        delta[r] = acc


@njit(cache=True, nogil=True)
def nvar_forecast(w_out, c, k, win0, n_steps, out):
    """Run the trained map closed-loop for ``n_steps``, storing each new state.

    ``win0`` is the flattened warm-up window (length ``k*d``, current first).
    Returns the number of completed steps; if fewer than ``n_steps``, row
    ``out[completed]`` holds the first non-finite state.
    """
    d = w_out.shape[0]
    m = win0.shape[0]
    win = win0.copy()
    delta = np.empty(d)
    for s in range(n_steps):
        _nvar_delta(win, w_out, c, delta)
        ok = True
        for r in range(d):
            v = win[r] + delta[r]
            out[s, r] = v
            if not np.isfinite(v):
                ok = False
        if not ok:
            return s
        for j in range(m - 1, d - 1, -1):
            win[j] = win[j - d]
        for r in range(d):
            win[r] = out[s, r]
    return n_steps


@njit(cache=True, inline="always")
def classify_u(u):
    if u < -2.0:
        return CHAOS_NEG
    if u > 2.0:
        return CHAOS_POS
    return TORUS


@njit(cache=True, nogil=True)
def basin_oracle(ics, a, b, horizon, abs_tol, min_step, labels, diverged):
    """Classify each initial condition by direct integration to t=horizon."""
    n = ics.shape[0]
    buf = np.empty((2, 4))
    for i in range(n):
        status, nf, _t = rk45_grid(
            ics[i], a, b, 0.0, horizon, 2, abs_tol, min_step, buf
        )
        if status == 0:
            labels[i] = classify_u(buf[1, 3])
            diverged[i] = 0
        else:
            labels[i] = classify_u(buf[nf, 3])
            diverged[i] = 1


@njit(cache=True, nogil=True)
def basin_nvar_oracle(ics, a, b, dt, abs_tol, min_step, w_out, c, k, n_steps,
                      labels, diverged):
    """Classify each IC with the NVAR model after a ground-truth warm-up.

    The first ``k`` samples (t = 0 .. (k-1)*dt) come from the integrator; the
    model then runs closed-loop for ``n_steps`` so the final state lands at
    t = horizon.  A diverging forecast is absorbed: the last finite state is
    classified (strict |u| > 2, torus otherwise) and the pixel flagged.
    """
    n = ics.shape[0]
    d = w_out.shape[0]
    m = k * d
    warm = np.empty((k + 1, 4))
    win = np.empty(m)
    delta = np.empty(d)
    cur = np.empty(d)
    for i in range(n):
        status, nf, _t = rk45_grid(
            ics[i], a, b, 0.0, dt, k, abs_tol, min_step, warm
        )
        if status != 0:
            labels[i] = classify_u(warm[nf, 3])
            diverged[i] = 1
            continue
        for j in range(k):
            for r in range(d):
                win[j * d + r] = warm[k - 1 - j, r]
        ok = True
        for s in range(n_steps):
            _nvar_delta(win, w_out, c, delta)
            finite = True
            for r in range(d):
                cur[r] = win[r] + delta[r]
                if not np.isfinite(cur[r]):
                    finite = False
            if not finite:
                labels[i] = classify_u(win[3])
                diverged[i] = 1
                ok = False
                break
            for j in range(m - 1, d - 1, -1):
                win[j] = win[j - d]
            for r in range(d):
                win[r] = cur[r]
        if ok:
            labels[i] = classify_u(win[3])
            diverged[i] = 0


@njit(cache=True, nogil=True)
def basin_nvar_bootstrap(ics, dt, w_ladder, dtots, c, kk, n_steps,
                         labels, diverged):
    """Classify each IC using a model ladder to bootstrap its own warm-up.

    ``w_ladder[j]`` holds the weights of the k=j+1 model in a padded array of
    shape ``(K, d, dtot_max)``; ``dtots[j]`` is its true feature count.  From
    the bare IC, the k=1 model produces the second sample, the k=2 model the
    third, and so on; the k=K model then runs closed-loop for ``n_steps``.
    """
    n = ics.shape[0]
    d = w_ladder.shape[1]
    m = kk * d
    win = np.empty(m)
    delta = np.empty(d)
    cur = np.empty(d)
    for i in range(n):
        for r in range(d):
            win[r] = ics[i, r]
        ok = True
        for j in range(1, kk):
            mj = j * d
            _nvar_delta(win[:mj], w_ladder[j - 1, :, : dtots[j - 1]], c, delta)
            finite = True
            for r in range(d):
                cur[r] = win[r] + delta[r]
                if not np.isfinite(cur[r]):
                    finite = False
            if not finite:
                labels[i] = classify_u(win[3])
                diverged[i] = 1
                ok = False
                break
            for q in range(mj + d - 1, d - 1, -1):
                win[q] = win[q - d]
            for r in range(d):
                win[r] = cur[r]
        if not ok:
            continue
        for s in range(n_steps):
            _nvar_delta(win, w_ladder[kk - 1, :, : dtots[kk - 1]], c, delta)
            finite = True
            for r in range(d):
                cur[r] = win[r] + delta[r]
                if not np.isfinite(cur[r]):
                    finite = False
            if not finite:
                labels[i] = classify_u(win[3])
                diverged[i] = 1
                ok = False
                break
            for j in range(m - 1, d - 1, -1):
                win[j] = win[j - d]
            for r in range(d):
                win[r] = cur[r]
        if ok:
            labels[i] = classify_u(win[3])
            diverged[i] = 0


@njit(cache=True, nogil=True)
def nvar_step(win, w_out, c):
    """Single next-state evaluation; scalar path shared with the forecast loop."""
    d = w_out.shape[0]
    delta = np.empty(d)
    _nvar_delta(win, w_out, c, delta)
    out = np.empty(d)
    for r in range(d):
        out[r] = win[r] + delta[r]
    return out
