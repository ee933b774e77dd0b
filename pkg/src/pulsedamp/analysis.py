"""Decay certificates, energy lower bounds and slow (overdamped) solutions."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _rk
from .core import DampingProfile, Spectrum, propagate_modes
from .errors import HypothesisViolated

DEFAULT_SEED = 0x5EED
MARGIN_TOLERANCE = 1e-6


# ----------------------------------------------------------------------------
# Bounds
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Envelope:
    """Nonincreasing positive step function given by a table of ``(t, phi)``.

    ``phi(t)`` is the value at the largest tabulated time ``<= t``; before
    the first time the first value is used, after the last the last value.
    """

    times: tuple
    values: tuple

    def __post_init__(self):
        t = tuple(float(x) for x in self.times)
        v = tuple(float(x) for x in self.values)
        if not t or len(t) != len(v):
            raise ValueError("invalid envelope: need matching nonempty columns")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("invalid envelope: times must be strictly increasing")
        if not all(math.isfinite(x) and x > 0 for x in v):
            raise ValueError("invalid envelope: values must be positive")
        if any(b > a for a, b in zip(v, v[1:])):
            raise ValueError("invalid envelope: values must be nonincreasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, phi: Callable[[float], float], times: Sequence[float]) -> "Envelope":
        times = list(times)
        return cls(tuple(times), tuple(float(phi(t)) for t in times))

    def __call__(self, t: float) -> float:
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.values[max(i, 0)]


@dataclass(frozen=True)
class ExponentialBound:
    """``exp(-rate * (t - offset)^+)``."""

    rate: float
    offset: float

    def __call__(self, t: float) -> float:
        return math.exp(-self.rate * max(t - self.offset, 0.0))

    def describe(self) -> str:
        return f"exp(-{self.rate:.17g}*(t-{self.offset:.17g})^+)"


@dataclass(frozen=True)
class EnvelopeBound:
    """``phi(t)`` for ``t >= start`` and 1 before (energy never increases)."""

    phi: Callable[[float], float]
    start: float = 0.0

    def __call__(self, t: float) -> float:
        return 1.0 if t < self.start else min(1.0, float(self.phi(t)))

    def describe(self) -> str:
        return f"envelope(t) for t>={self.start:.17g}"


@dataclass(frozen=True)
class NoDecay:
    """The trivial claim ``E(t) <= E(0)``."""

    def __call__(self, t: float) -> float:
        return 1.0

    def describe(self) -> str:
        return "1"


@dataclass
class DecayCertificate:
    """Claimed bound ``E(t) <= E(0) * bound(t)`` and, once checked, its margin.

    ``measured_margin`` is the smallest ``bound(t) * E(0) / E(t)`` seen over
    all checked times and initial states.
    """

    bound: Callable[[float], float]
    measured_margin: float | None = None
    verified: bool | None = None
    times: np.ndarray | None = None
    worst_ratio: np.ndarray | None = None  # max E(t)/E(0) over the batch, per time
    batch: int = 0
    seed: int | None = None

    def describe(self) -> str:
        d = getattr(self.bound, "describe", None)
        return d() if d else repr(self.bound)


# ----------------------------------------------------------------------------
# Certification by simulation
# ----------------------------------------------------------------------------


def random_states(lams, batch: int, seed: int = DEFAULT_SEED) -> np.ndarray:
    """Random initial data of unit total energy, shaped ``(K, 2, batch)``.

    Each mode gets a uniformly random phase on its own energy circle and
    the energy split across modes is uniform on the simplex.
    """
    lams = np.asarray(lams, dtype=float)
    rng = np.random.default_rng(seed)
    k = len(lams)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=(k, batch))
    weights = rng.dirichlet(np.ones(k), size=batch).T if k > 1 else np.ones((1, batch))
    amp = np.sqrt(weights)
    u = amp * np.cos(theta) / lams[:, None]
    v = amp * np.sin(theta)
    return np.stack([u, v], axis=1)


def check_times(profile: DampingProfile, horizon: float) -> np.ndarray:
    """Segment boundaries in ``(0, horizon]`` plus the horizon itself."""
    ts = [t0 + p.duration for t0, p in profile.pieces(horizon)]
    return np.array(ts)


def certify(profile: DampingProfile, spectrum: Spectrum, certificate: DecayCertificate,
            horizon: float, batch: int = 64, seed: int = DEFAULT_SEED,
            states: np.ndarray | None = None) -> DecayCertificate:
    """Simulate random initial data and measure how well ``certificate`` holds.

    Returns a filled copy of ``certificate``. Checks are made at every
    segment boundary up to ``horizon``; total energy is summed over modes.
    """
    if not horizon > 0:
        raise ValueError("horizon must be > 0")
    lams = spectrum.as_array()
    x0 = random_states(lams, batch, seed) if states is None else np.asarray(states, dtype=float)
    traj = propagate_modes(x0, lams, profile, horizon)
    e = traj.total_energy()
    e0 = e[0]
    keep = traj.times > 0
    times = traj.times[keep]
    ratio = e[keep] / e0[None, :]
    bounds = np.array([certificate.bound(t) for t in times])
    with np.errstate(divide="ignore"):
        margins = np.where(ratio > 0, bounds[:, None] / ratio, np.inf)
    margin = float(margins.min()) if margins.size else math.inf
    return dataclasses.replace(
        certificate,
        measured_margin=margin,
        verified=bool(margin >= 1.0 - MARGIN_TOLERANCE),
        times=times,
        worst_ratio=ratio.max(axis=1),
        batch=x0.shape[2] if x0.ndim == 3 else 1,
        seed=seed if states is None else None,
    )


# ----------------------------------------------------------------------------
# Lower bounds
# ----------------------------------------------------------------------------


def energy_lower_bound(profile: DampingProfile, t: float) -> float:
    """``exp(-4 * int_0^t delta)``, a lower bound for ``E(t)/E(0)``."""
    if not t >= 0:
        raise ValueError("t must be >= 0")
    return math.exp(-4.0 * profile.integral(t))


def smoothing_deviation_bound(e0: float, t: float, l2_distance: float) -> float:
    """Bound on the energy of the difference of two solutions at time ``t``.

    The solutions share initial data of energy ``e0`` and their damping
    coefficients differ by ``l2_distance`` in L2 over ``[0, t]``.
    """
    if min(e0, t, l2_distance) < 0:
        raise ValueError("arguments must be >= 0")
    return 2.0 * e0 * math.exp(2.0 * t) * l2_distance**2


def _min_after(profile: DampingProfile, start: float) -> float:
    # exact infimum of delta on [start, inf) from closed-form segment minima
    if profile.periodic:
        return profile.minimum()
    lo = profile.segments[-1].end_value
    for off, seg in zip(profile.offsets, profile.segments):
        end = off + seg.duration
        if end <= start:
            continue
        piece = seg if off >= start else seg.split(start - off)[1]
        lo = min(lo, piece.minimum())
    return lo


@dataclass
class SlowSolution:
    """Solution that decays no faster than ``t * exp(-lam t)``.

    ``u`` and ``du`` are sampled on ``times`` (starting at ``t_plus``)
    before rescaling. ``scale`` is the constant ``c`` such that
    ``|u(t)| / c >= t * exp(-lam t)`` on the grid.
    """

    lam: float
    t_plus: float
    times: np.ndarray
    phi: np.ndarray
    u: np.ndarray
    du: np.ndarray
    scale: float
    sandwich_ok: bool

    def rescaled(self) -> np.ndarray:
        return self.u / self.scale

    def energy(self) -> np.ndarray:
        return self.du**2 + (self.lam * self.u) ** 2


def _riccati_rhs(lam: float, profile: DampingProfile):
    lam2 = lam * lam

    def f(t, y):
        phi = y[0]
        return np.array([lam2 - 2.0 * profile.value(t) * phi + phi * phi, phi])

    return f


def construct_slow_solution(lam: float, profile: DampingProfile, T: float = 0.0,
                            t_end: float = 50.0, spacing: float | None = None,
                            rtol: float = 1e-12, atol: float = 1e-14) -> SlowSolution:
    """Build the solution ``u = exp(-int phi)`` from the forward Riccati flow.

    Requires ``delta(t) >= lam`` for ``t >= T``; then ``phi`` started from 0
    at ``t_plus = max(T, 1/lam)`` stays in ``[0, lam - 1/t]``.

    Raises
    ------
    HypothesisViolated
        If the damping drops below ``lam`` somewhere after ``T``.
    """
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    if _min_after(profile, T) < lam:
        raise HypothesisViolated("overdamping hypothesis violated")
    t_plus = max(T, 1.0 / lam)
    if not t_end > t_plus:
        raise ValueError("t_end must exceed max(T, 1/lambda)")
    h = spacing if spacing is not None else 1e-2 / lam
    n = max(1, math.ceil((t_end - t_plus) / h))
    grid = set(np.linspace(t_plus, t_end, n + 1).tolist())
    grid.update(t for t in check_times(profile, t_end) if t_plus < t < t_end)
    grid = np.array(sorted(grid))
    f = _riccati_rhs(lam, profile)
    ys = [np.array([0.0, 0.0])]
    for a, b in zip(grid[:-1], grid[1:]):
        ys.append(_rk.integrate(f, a, b, ys[-1], rtol=rtol, atol=atol))
    ys = np.array(ys)
    phi, integral = ys[:, 0], ys[:, 1]
    tol = 1e-9 * max(lam, 1.0)
    sandwich_ok = bool(np.all(phi >= -tol) and np.all(phi <= lam - 1.0 / grid + tol))
    u = np.exp(-integral)
    du = -phi * u
    # |u| >= t exp(-lam t) * exp(lam t_plus)/t_plus follows from the sandwich;
    # take the smaller of that and the grid minimum, with a hair of slack
    reference = grid * np.exp(-lam * grid)
    empirical = float(np.min(u / reference))
    theory = math.exp(lam * t_plus) / t_plus
    scale = min(theory, empirical) * (1.0 - 1e-8)
    return SlowSolution(lam, t_plus, grid, phi, u, du, scale, sandwich_ok)


def second_order_residual(sol: SlowSolution, profile: DampingProfile) -> float:
    """Max of ``|u'' + 2 delta u' + lam^2 u|`` by 4th-order central differences.

    Stencils that straddle a segment boundary (where ``u''`` jumps) are
    skipped, as are nodes not on a uniform stretch of the grid.
    """
    t, u = sol.times, sol.u
    kinks = check_times(profile, float(t[-1]))
    worst = 0.0
    for i in range(2, len(t) - 2):
        steps = np.diff(t[i - 2:i + 3])
        h = steps[0]
        if not np.allclose(steps, h, rtol=1e-9, atol=0):
            continue
        j = np.searchsorted(kinks, t[i - 2], side="right")
        if j < len(kinks) and kinks[j] < t[i + 2]:
            continue
        d1 = (-u[i + 2] + 8 * u[i + 1] - 8 * u[i - 1] + u[i - 2]) / (12 * h)
        d2 = (-u[i + 2] + 16 * u[i + 1] - 30 * u[i] + 16 * u[i - 1] - u[i - 2]) / (12 * h * h)
        worst = max(worst, abs(d2 + 2 * profile.value(t[i]) * d1 + sol.lam**2 * u[i]))
    return worst


def log_energy_slope(sol: SlowSolution, t_lo: float, t_hi: float) -> float:
    """Least-squares slope of ``log E(t)`` over ``[t_lo, t_hi]``."""
    m = (sol.times >= t_lo) & (sol.times <= t_hi)
    return float(np.polyfit(sol.times[m], np.log(sol.energy()[m]), 1)[0])


def riccati_profile_ok(profile: DampingProfile, lam: float, T: float) -> bool:
    """True when ``delta >= lam`` on ``[T, inf)`` (exact segment arithmetic)."""
    return _min_after(profile, T) >= lam


__all__ = [
    "Envelope", "ExponentialBound", "EnvelopeBound", "NoDecay", "DecayCertificate",
    "random_states", "check_times", "certify", "energy_lower_bound",
    "smoothing_deviation_bound", "SlowSolution", "construct_slow_solution",
    "second_order_residual", "log_energy_slope", "riccati_profile_ok",
]
