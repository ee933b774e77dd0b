"""Dormand-Prince 5(4) embedded Runge-Kutta pair with adaptive step control.

Used for the pieces of the damping profile that have no elementary closed
form (linear ramps, smooth transitions) and for the Riccati equations.
Works on 1-d numpy state vectors and integrates in either time direction.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import IntegrationStalled

# Butcher tableau (Dormand & Prince 1980), FSAL variant.
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
# difference between the 5th order weights and the embedded 4th order ones
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)

RTOL = 1e-12
ATOL = 1e-14
MAX_STEPS = 2_000_000


def _initial_step(f, t, y, f0, direction, rtol, atol):
    scale = atol + rtol * np.abs(y)
    d0 = np.sqrt(np.mean((y / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y + direction * h0 * f0
    f1 = f(t + direction * h0, y1)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1)


def integrate(f, t0, t1, y0, rtol=RTOL, atol=ATOL, h_init=None, max_steps=MAX_STEPS,
              record=False):
    """Integrate ``y' = f(t, y)`` from ``t0`` to ``t1`` and return ``y(t1)``.

    The step is accepted when the embedded error estimate, scaled by
    ``atol + rtol*max(|y_n|, |y_{n+1}|)`` componentwise, has RMS norm <= 1.
    ``t1 < t0`` integrates backwards. With ``record=True`` the accepted
    nodes are returned as ``(ts, ys)`` instead of the final state alone.

    Raises
    ------
    IntegrationStalled
        If the step size underflows or ``max_steps`` is exceeded.
    """
    y = np.array(y0, dtype=float)
    span = t1 - t0
    ts, ys = [float(t0)], [y.copy()]
    if span == 0.0:
        return (np.array(ts), np.array(ys)) if record else y
    direction = 1.0 if span > 0 else -1.0
    t = float(t0)
    k1 = f(t, y)
    h = abs(h_init) if h_init else _initial_step(f, t, y, k1, direction, rtol, atol)
    h = min(h, abs(span))
    steps = 0
    while direction * (t1 - t) > 0:
        min_h = 16 * np.finfo(float).eps * max(abs(t), abs(span), 1.0)
        if h < min_h or steps >= max_steps:
            raise IntegrationStalled(f"integration stalled at t={t!r} (h={h:.3e})")
        remaining = abs(t1 - t)
        last = h >= remaining
        if last:
            h = remaining
        hs = direction * h
        ks = [k1]
        for i in range(1, 7):
            yi = y.copy()
            for aij, kj in zip(_A[i], ks):
                if aij:
                    yi += hs * aij * kj
            ks.append(f(t + _C[i] * hs, yi))
        y_new = yi  # stage 7 is evaluated at the 5th order solution (FSAL)
        err = hs * sum(e * k for e, k in zip(_E, ks) if e)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = math.sqrt(float(np.mean((err / scale) ** 2)))
        steps += 1
        if err_norm <= 1.0:
            t = t1 if last else t + hs
            y = y_new
            k1 = ks[6]
            if record:
                ts.append(t)
                ys.append(y.copy())
            factor = 5.0 if err_norm == 0.0 else min(5.0, 0.9 * err_norm ** -0.2)
            h = h * factor
        else:
            h = h * max(0.2, 0.9 * err_norm ** -0.2)
    if not np.all(np.isfinite(y)):
        raise IntegrationStalled("integration produced a non-finite state")
    if record:
        return np.array(ts), np.array(ys)
    return y
