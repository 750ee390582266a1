"""Batched explicit Runge-Kutta integration for many small autonomous systems.

Every row of the state array is an independent initial value problem.  All
rows share one step size and the step is accepted only if the worst row meets
the tolerance, so the error control is a max-norm over the batch rather than
an average that would let individual rows drift.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import DOP853

# Dormand-Prince 8(5,3) tableau as published by scipy.
_A = DOP853.A
_B = DOP853.B
_C = DOP853.C
_E3 = DOP853.E3
_E5 = DOP853.E5
_N_STAGES = DOP853.n_stages

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0


class IntegrationError(RuntimeError):
    """The step size collapsed or the step budget ran out."""


def _row_error(K, h, scale):
    err5 = np.tensordot(_E5, K, axes=(0, 0)) / scale
    err3 = np.tensordot(_E3, K, axes=(0, 0)) / scale
    e5 = np.sum(err5 ** 2, axis=1)
    e3 = np.sum(err3 ** 2, axis=1)
    denom = e5 + 0.01 * e3
    out = np.zeros_like(e5)
    nz = denom > 0
    out[nz] = abs(h) * e5[nz] / np.sqrt(denom[nz] * scale.shape[1])
    return out


def integrate(fun, y0, duration, rtol=1e-11, atol=1e-11, max_steps=100000, first_step=0.05):
    """Integrate ``dy/dt = fun(y)`` for each row of ``y0`` over ``[0, duration]``.

    ``duration`` may be a scalar or one value per row; per-row durations are
    handled by rescaling time to the unit interval.  Returns the state at the
    end time, same shape as ``y0``.
    """
    y = np.array(y0, dtype=float, copy=True)
    n = y.shape[0]
    if n == 0:
        return y
    flat = y.reshape(n, -1)
    dur = np.broadcast_to(np.asarray(duration, dtype=float), (n,)).copy()
    if np.any(dur < 0):
        raise ValueError("durations must be nonnegative")
    shape = y.shape

    def rhs(state):
        return dur[:, None] * fun(state.reshape(shape)).reshape(n, -1)

    s, h = 0.0, min(first_step, 1.0)
    f = rhs(flat)
    K = np.empty((_N_STAGES + 1,) + flat.shape)
    steps = 0
    while s < 1.0:
        if steps >= max_steps:
            raise IntegrationError("step budget exhausted")
        h = min(h, 1.0 - s)
        K[0] = f
        for i in range(1, _N_STAGES):
            dy = np.tensordot(_A[i, :i], K[:i], axes=(0, 0)) * h
            K[i] = rhs(flat + dy)
        y_new = flat + h * np.tensordot(_B, K[:_N_STAGES], axes=(0, 0))
        f_new = rhs(y_new)
        K[-1] = f_new
        scale = atol + np.maximum(np.abs(flat), np.abs(y_new)) * rtol
        err = float(np.max(_row_error(K, h, scale)))
        steps += 1
        if not np.isfinite(err):
            h *= MIN_FACTOR
        elif err <= 1.0:
            s = 1.0 if h >= 1.0 - s else s + h
            flat, f = y_new, f_new
            factor = MAX_FACTOR if err == 0 else min(MAX_FACTOR, SAFETY * err ** (-1.0 / 8.0))
            h *= factor
            continue
        else:
            h *= max(MIN_FACTOR, SAFETY * err ** (-1.0 / 8.0))
        if h < 1e-14:
            raise IntegrationError("step size underflow")
    return flat.reshape(shape)
