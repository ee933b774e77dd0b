"""Extended-precision transfer matrices for linear-ramp damping.

A ramp that damps hard kills one direction of phase space by many orders
of magnitude. Float64 integration at any practical tolerance blurs that
direction, so these ramps are stepped with Taylor series of
``u'' + 2(d + b s) u' + lam^2 u = 0`` in ``decimal`` arithmetic and the
result is rounded once at the end.
"""

from __future__ import annotations

import decimal
import math

DIGITS = 40


def ramp_matrix(lam: float, start: float, slope: float, duration: float,
                digits: int = DIGITS) -> tuple:
    """Transfer matrix ``(p11, p12, p21, p22)`` of ``(u, u')`` across a ramp.

    Uses uniform steps with ``h * rho <= 1/2`` where ``rho`` bounds the
    local rates, so the scaled Taylor coefficients decay geometrically.
    """
    D = decimal.Decimal
    with decimal.localcontext(decimal.Context(prec=digits)):
        top = max(start, start + slope * duration)
        rho = max(2.0 * top, lam, math.sqrt(2.0 * abs(slope)), 1e-300)
        steps = max(1, math.ceil(duration * rho / 0.5))
        h = D(duration) / steps
        lam2 = D(lam) * D(lam)
        b = D(slope)
        d0 = D(start)
        tiny = D(10) ** (-digits - 5)
        cols = [(D(1), D(0)), (D(0), D(1))]
        for i in range(steps):
            d2h = 2 * (d0 + b * h * i) * h
            new = []
            for u, v in cols:
                # a_k = c_k h^k for the expansion around the step start
                a0, a1 = u, h * v
                su, sv = a0 + a1, a1
                k = 0
                while True:
                    a2 = (-d2h * (k + 1) * a1 - h * h * (2 * b * k + lam2) * a0) / ((k + 2) * (k + 1))
                    su += a2
                    sv += (k + 2) * a2
                    a0, a1 = a1, a2
                    k += 1
                    if k > 4 and abs(a0) < tiny and abs(a1) < tiny:
                        break
                new.append((su, sv / h))
            cols = new
        return (float(cols[0][0]), float(cols[1][0]), float(cols[0][1]), float(cols[1][1]))
