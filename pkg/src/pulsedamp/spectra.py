"""Model spectra for wave and beam equations, and ultra-exponential schedule tables."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Spectrum

EQUATIONS = ("wave", "beam")
GROWTH_TOLERANCE = 0.15  # our choice; the asymptotic claims carry no constants


@dataclass(frozen=True)
class ModelOperator:
    """Synthetic eigenfrequency model.

    ``wave`` with ``dimension=1`` is the exact Dirichlet spectrum of
    ``(0, scale)``. Otherwise frequencies are ``constant * n^p`` with
    ``p = 1/d`` (wave) or ``p = 2/d`` (beam).
    """

    equation: str
    dimension: int
    count: int
    scale: float = math.pi
    constant: float = 1.0

    def __post_init__(self):
        if self.equation not in EQUATIONS:
            raise ValueError(f"unsupported equation {self.equation!r}; use wave or beam")
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if not (self.scale > 0 and self.constant > 0):
            raise ValueError("scale and constant must be > 0")

    @property
    def power(self) -> float:
        return (1.0 if self.equation == "wave" else 2.0) / self.dimension


def model_spectrum(op: ModelOperator) -> Spectrum:
    n = np.arange(1, op.count + 1, dtype=float)
    if op.equation == "wave" and op.dimension == 1:
        lam = n * math.pi / op.scale
    else:
        lam = op.constant * n**op.power
    return Spectrum(tuple(lam.tolist()))


def claimed_growth(op: ModelOperator) -> dict | None:
    """Asymptotic forms ``n^a (log n)^b`` of the ``T``, ``S``, ``U`` columns.

    ``None`` means the reciprocal series converges, so ``T_R`` stays bounded.
    """
    p = op.power
    if p > 1:
        return None
    if p == 1:
        return {"T": (0.0, 1.0), "S": (1.0, 1.0), "U": (2.0, 1.0)}
    return {"T": (1.0 - p, 0.0), "S": (2.0 - p, 0.0), "U": (2.0, 0.0)}


@dataclass(frozen=True)
class ScheduleRow:
    n: int
    lam: float
    R: float
    T: float
    S: float
    U: float
    phi: float


@dataclass(frozen=True)
class ScheduleTable:
    """Rows ``n = n0-1, ..., n_max`` of the ultra-exponential schedule.

    ``R_n = lam_n/sqrt 2 - lam_1``, ``T_n = (pi/2) sum_{k<=n} 1/lam_k``,
    ``S_n = 2 sum_{k=n0}^n T_k``, ``U_n = 2 sum_{k=n0}^n R_k T_k`` and
    ``phi = exp(-U_n)`` on ``[S_n, S_{n+1})``. ``n0`` is the first index
    with ``lam_n^2 > 2 lam_1^2``.
    """

    n0: int
    rows: tuple

    def row(self, n: int) -> ScheduleRow:
        return self.rows[n - (self.n0 - 1)]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def phi(self, t: float) -> float:
        s = self.column("S")
        i = int(np.searchsorted(s, t, side="right")) - 1
        return 1.0 if i < 0 else self.rows[i].phi

    def check_bookkeeping(self) -> bool:
        """``S_{n+1} <= 2 S_n`` and ``2 T_{n+1} <= S_n`` for ``n >= n0+1``."""
        rs = [r for r in self.rows if r.n >= self.n0 + 1]
        rel = 1e-12
        for a, b in zip(rs, rs[1:]):
            if b.S > 2 * a.S * (1 + rel) or 2 * b.T > a.S * (1 + rel):
                raise ValueError(f"schedule bookkeeping fails at n={a.n}")
        return True


def _first_index(lams) -> int:
    thr = 2.0 * lams[0] ** 2
    for i, l in enumerate(lams):
        if l * l > thr:
            return i + 1
    raise ValueError("no frequency exceeds sqrt(2) * lambda_1; spectrum too short")


def pde_schedule_table(spectrum: Spectrum, n_max: int) -> ScheduleTable:
    """Fill the schedule columns up to ``n_max`` (1-based mode index)."""
    lams = spectrum.frequencies
    if n_max > len(lams):
        raise ValueError(f"n_max={n_max} exceeds the {len(lams)} available modes")
    n0 = _first_index(lams)
    if n_max < n0 - 1:
        raise ValueError(f"n_max must be at least n0-1={n0 - 1}")
    lam1 = lams[0]
    t_partial = 0.5 * math.pi * np.cumsum([1.0 / l for l in lams[:n_max]])
    rows = []
    s = u = 0.0
    for n in range(n0 - 1, n_max + 1):
        lam = lams[n - 1]
        t = float(t_partial[n - 1])
        r = lam / math.sqrt(2.0) - lam1
        if n >= n0:
            s += 2.0 * t
            u += 2.0 * r * t
        rows.append(ScheduleRow(n, lam, r, t, s, u, math.exp(-u)))
    return ScheduleTable(n0, tuple(rows))


@dataclass(frozen=True)
class GrowthFit:
    column: str
    claimed_power: float
    log_power: float
    fitted_power: float
    deviation: float  # relative, or absolute when the claimed power is 0
    passed: bool


@dataclass(frozen=True)
class GrowthReport:
    fits: tuple
    lam_power: float
    bounded: bool
    passed: bool
    tolerance: float = GROWTH_TOLERANCE

    def lines(self) -> list:
        out = [f"lambda_power: {self.lam_power:.6g}",
               f"bounded_T: {int(self.bounded)}",
               f"tolerance: {self.tolerance:g} (chosen threshold)"]
        for f in self.fits:
            out.append(f"fit_{f.column}: claimed n^{f.claimed_power:g} (log n)^{f.log_power:g} "
                       f"fitted {f.fitted_power:.6g} deviation {f.deviation:.4g} "
                       f"{'pass' if f.passed else 'fail'}")
        out.append(f"passed: {int(self.passed)}")
        return out


def _fit_power(n, y, log_power) -> float:
    return float(np.polyfit(np.log(n), np.log(y) - log_power * np.log(np.log(n)), 1)[0])


def growth_order_check(table: ScheduleTable, claimed: dict | None,
                       tolerance: float = GROWTH_TOLERANCE) -> GrowthReport:
    """Fit each claimed column over the upper half of the rows.

    ``claimed`` maps column names (``T``, ``S``, ``U``) to ``(a, b)`` for
    the form ``n^a (log n)^b``. With ``claimed=None`` only the bounded-T
    flag is reported: the reciprocal series converges when the fitted
    growth power of ``lam_n`` exceeds 1 by more than ``tolerance``.
    """
    if len(table.rows) < 16:
        raise ValueError("growth check needs at least 16 rows")
    upper = table.rows[len(table.rows) // 2:]
    n = np.array([r.n for r in upper], dtype=float)
    lam_power = _fit_power(n, np.array([r.lam for r in upper]), 0.0)
    bounded = lam_power > 1.0 + tolerance
    fits = []
    for col, (a, b) in (claimed or {}).items():
        got = _fit_power(n, np.array([getattr(r, col) for r in upper]), b)
        dev = abs(got - a) / a if a != 0 else abs(got)
        fits.append(GrowthFit(col, a, b, got, dev, dev <= tolerance))
    passed = all(f.passed for f in fits) if claimed is not None else bounded
    return GrowthReport(tuple(fits), lam_power, bounded, passed, tolerance)
