"""Propagation of damped modal oscillators ``u'' + 2 delta(t) u' + lam^2 u = 0``.

Everything here reduces to 2x2 transfer matrices acting on ``(u, u')``.
Constant damping has a closed form; linear ramps and smooth transitions are
integrated with the embedded Dormand-Prince pair in :mod:`pulsedamp._rk`.
Because the equation is linear, a batch of initial states is propagated by
applying the same matrices, which keeps multi-mode runs cheap and
independent of how the batch is split.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence, Union

import numpy as np

from . import _rk, _taylor
from .errors import NonFiniteState

# ----------------------------------------------------------------------------
# Domain types
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class ModeState:
    """Phase-space point ``(u, u')`` of one modal oscillator."""

    u: float
    v: float

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v], dtype=float)

    @classmethod
    def from_array(cls, a) -> "ModeState":
        return cls(float(a[0]), float(a[1]))

    def __add__(self, other: "ModeState") -> "ModeState":
        return ModeState(self.u + other.u, self.v + other.v)

    def __rmul__(self, c: float) -> "ModeState":
        return ModeState(c * self.u, c * self.v)


def _check_finite(*values: float) -> None:
    if not all(math.isfinite(x) for x in values):
        raise NonFiniteState("non-finite state")


def smooth_step(x):
    """C-infinity transition from 0 (x <= 0) to 1 (x >= 1).

    All derivatives vanish at both ends, so glued pieces stay smooth.
    """
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        f0 = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        f1 = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    out = f0 / (f0 + f1)
    return float(out) if out.ndim == 0 else out


_GL_X, _GL_W = np.polynomial.legendre.leggauss(64)


def _smooth_step_integral(lo: float, hi: float) -> float:
    # S is analytic on (0, 1) and flat at the ends; 64-point Gauss is ample
    half = 0.5 * (hi - lo)
    xs = 0.5 * (hi + lo) + half * _GL_X
    return float(half * np.dot(_GL_W, smooth_step(xs)))


@dataclass(frozen=True)
class Constant:
    """Constant damping level held for ``duration``."""

    value: float
    duration: float

    def __post_init__(self):
        if not self.value >= 0:
            raise ValueError(f"damping level must be >= 0, got {self.value!r}")
        if not self.duration > 0:
            raise ValueError(f"segment duration must be > 0, got {self.duration!r}")

    def value_at(self, tau):
        return np.full_like(np.asarray(tau, dtype=float), self.value) if np.ndim(tau) else self.value

    @property
    def end_value(self) -> float:
        return self.value

    def integral(self) -> float:
        return self.value * self.duration

    def minimum(self) -> float:
        return self.value

    def maximum(self) -> float:
        return self.value

    def split(self, tau: float):
        return Constant(self.value, tau), Constant(self.value, self.duration - tau)


@dataclass(frozen=True)
class Ramp:
    """Linear damping ``start + slope*tau`` for ``0 <= tau <= duration``."""

    start: float
    slope: float
    duration: float

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError(f"segment duration must be > 0, got {self.duration!r}")
        if not self.start >= 0:
            raise ValueError(f"damping level must be >= 0, got {self.start!r}")
        # tolerate rounding in start + slope*duration for ramps that end at 0
        if self.start + self.slope * self.duration < -1e-12 * max(1.0, self.start):
            raise ValueError("ramp takes the damping below 0")

    def value_at(self, tau):
        return self.start + self.slope * np.asarray(tau, dtype=float) if np.ndim(tau) else self.start + self.slope * tau

    @property
    def end_value(self) -> float:
        return max(self.start + self.slope * self.duration, 0.0)

    def integral(self) -> float:
        return self.start * self.duration + 0.5 * self.slope * self.duration**2

    def minimum(self) -> float:
        return min(self.start, self.end_value)

    def maximum(self) -> float:
        return max(self.start, self.end_value)

    def split(self, tau: float):
        return (Ramp(self.start, self.slope, tau),
                Ramp(self.start + self.slope * tau, self.slope, self.duration - tau))


@dataclass(frozen=True)
class Smooth:
    """Smooth blend ``start + (end - start) * S(lo + (hi - lo) * tau / duration)``.

    ``S`` is :func:`smooth_step`. A full transition uses ``lo=0, hi=1``;
    a transition cut by a period boundary is stored as two partial pieces.
    """

    start: float
    end: float
    duration: float
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError(f"segment duration must be > 0, got {self.duration!r}")
        if min(self.start, self.end) < 0:
            raise ValueError("damping level must be >= 0")
        if not 0.0 <= self.lo < self.hi <= 1.0:
            raise ValueError("need 0 <= lo < hi <= 1")

    def value_at(self, tau):
        x = self.lo + (self.hi - self.lo) * np.asarray(tau, dtype=float) / self.duration
        out = self.start + (self.end - self.start) * smooth_step(x)
        return out

    @property
    def end_value(self) -> float:
        return self.start + (self.end - self.start) * smooth_step(self.hi)

    def integral(self) -> float:
        mean_s = _smooth_step_integral(self.lo, self.hi) / (self.hi - self.lo)
        return self.duration * (self.start + (self.end - self.start) * mean_s)

    def minimum(self) -> float:
        a = self.start + (self.end - self.start) * smooth_step(self.lo)
        return min(a, self.end_value)

    def maximum(self) -> float:
        a = self.start + (self.end - self.start) * smooth_step(self.lo)
        return max(a, self.end_value)

    def split(self, tau: float):
        mid = self.lo + (self.hi - self.lo) * tau / self.duration
        return (Smooth(self.start, self.end, tau, self.lo, mid),
                Smooth(self.start, self.end, self.duration - tau, mid, self.hi))


Segment = Union[Constant, Ramp, Smooth]


@dataclass(frozen=True)
class DampingProfile:
    """Piecewise damping coefficient built from timed segments.

    Periodic profiles repeat with period equal to the total segment
    duration. A non-periodic profile holds its final value forever after
    its last segment.
    """

    segments: tuple
    periodic: bool = False
    _offsets: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise ValueError("profile needs at least one segment")
        object.__setattr__(self, "segments", segs)
        offsets = [0.0]
        for s in segs:
            offsets.append(offsets[-1] + s.duration)
        object.__setattr__(self, "_offsets", tuple(offsets))

    @property
    def duration(self) -> float:
        """Total length of the segment list (the period when periodic)."""
        return self._offsets[-1]

    @property
    def period(self) -> float | None:
        return self.duration if self.periodic else None

    @property
    def offsets(self) -> tuple:
        return self._offsets

    def _locate(self, t: float):
        if t < 0:
            raise ValueError("time must be >= 0")
        if self.periodic:
            k, r = divmod(t, self.duration)
        else:
            if t >= self.duration:
                return None, 0.0
            r = t
        i = int(np.searchsorted(self._offsets, r, side="right")) - 1
        i = min(max(i, 0), len(self.segments) - 1)
        return i, r - self._offsets[i]

    def value(self, t: float) -> float:
        i, tau = self._locate(float(t))
        if i is None:
            return self.segments[-1].end_value
        return float(self.segments[i].value_at(tau))

    def values(self, ts) -> np.ndarray:
        return np.array([self.value(t) for t in np.asarray(ts, dtype=float)])

    def integral(self, t: float) -> float:
        """Exact ``int_0^t delta(s) ds``."""
        t = float(t)
        if t <= 0:
            return 0.0
        total = 0.0
        if self.periodic:
            k, t = divmod(t, self.duration)
            total += k * sum(s.integral() for s in self.segments)
        elif t > self.duration:
            total += (t - self.duration) * self.segments[-1].end_value
            t = self.duration
        for off, seg in zip(self._offsets, self.segments):
            if off >= t:
                break
            tau = t - off
            if tau >= seg.duration:
                total += seg.integral()
            else:
                total += seg.split(tau)[0].integral()
        return total

    def minimum(self) -> float:
        return min(s.minimum() for s in self.segments)

    def maximum(self) -> float:
        return max(s.maximum() for s in self.segments)

    def pieces(self, t_end: float, sample_times: Sequence[float] = ()) -> Iterator[tuple]:
        """Yield ``(t_start, segment)`` pieces covering ``[0, t_end]``.

        Pieces end exactly at every segment boundary and every requested
        sample time. Boundary times of periodic profiles are computed as
        ``k*period + offset`` so they do not drift over many periods.
        """
        cuts = sorted(float(s) for s in sample_times if 0 < s < t_end)
        ci = 0
        k = 0
        n = len(self.segments)
        i = 0
        while True:
            if self.periodic:
                base = k * self.duration
                seg = self.segments[i]
                t0 = base + self._offsets[i]
                t1 = base + self._offsets[i + 1]
            elif i < n:
                seg = self.segments[i]
                t0, t1 = self._offsets[i], self._offsets[i + 1]
            else:
                t0, t1 = self.duration, math.inf
                seg = Constant(self.segments[-1].end_value, math.inf) if t_end > t0 else None
            if t0 >= t_end or seg is None:
                return
            t1 = min(t1, t_end)
            t = t0
            rest = seg
            while ci < len(cuts) and cuts[ci] < t1:
                c = cuts[ci]
                ci += 1
                if c <= t:
                    continue
                head, rest = _split(rest, c - t)
                yield t, head
                t = c
            if t1 > t:
                if t1 - t < rest.duration:
                    rest = _split(rest, t1 - t)[0]
                yield t, rest
            if t1 >= t_end:
                return
            i += 1
            if self.periodic and i == n:
                i = 0
                k += 1

    @classmethod
    def concatenate(cls, profiles: Sequence["DampingProfile"], periodic=False) -> "DampingProfile":
        segs = []
        for p in profiles:
            segs.extend(p.segments)
        return cls(tuple(segs), periodic=periodic)


def _split(seg, tau):
    if math.isinf(seg.duration):
        return Constant(seg.value, tau), seg
    return seg.split(tau)


@dataclass(frozen=True)
class Spectrum:
    """Finite, strictly increasing list of modal frequencies ``lam_k > 0``."""

    frequencies: tuple

    def __post_init__(self):
        f = tuple(float(x) for x in self.frequencies)
        if not f:
            raise ValueError("spectrum must be nonempty")
        if f[0] <= 0 or not all(math.isfinite(x) for x in f):
            raise ValueError("frequencies must be positive and finite")
        if any(b <= a for a, b in zip(f, f[1:])):
            raise ValueError("frequencies must be strictly increasing")
        object.__setattr__(self, "frequencies", f)

    def __len__(self):
        return len(self.frequencies)

    def __iter__(self):
        return iter(self.frequencies)

    def __getitem__(self, i):
        return self.frequencies[i]

    def as_array(self) -> np.ndarray:
        return np.array(self.frequencies)


# ----------------------------------------------------------------------------
# Energy and transfer matrices
# ----------------------------------------------------------------------------


def energy(state: ModeState, lam: float) -> float:
    """Modal energy ``u'^2 + lam^2 u^2``."""
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    return state.v * state.v + lam * lam * state.u * state.u


def modal_energy(states: np.ndarray, lams) -> np.ndarray:
    """Energies of an array of states shaped ``(K, 2, ...)`` for frequencies ``lams``."""
    lams = np.asarray(lams, dtype=float).reshape((-1,) + (1,) * (states.ndim - 2))
    return states[:, 1] ** 2 + (lams * states[:, 0]) ** 2


_SERIES_TERMS = 12
_COS_COEF = [(-1) ** k / math.factorial(2 * k) for k in range(_SERIES_TERMS)]
_SINC_COEF = [(-1) ** k / math.factorial(2 * k + 1) for k in range(_SERIES_TERMS)]


def _poly(coefs, x):
    acc = 0.0
    for c in reversed(coefs):
        acc = acc * x + c
    return acc


@functools.lru_cache(maxsize=65536)
def _constant_matrix(lam: float, delta: float, dt: float) -> tuple:
    if dt == 0.0:
        return (1.0, 0.0, 0.0, 1.0)
    q = (lam - delta) * (lam + delta)
    x = q * dt * dt
    lam2 = lam * lam
    if abs(x) <= 1.0:
        # near critical damping: even/odd power series in x = q*dt^2,
        # exact at q = 0 and free of root coalescence
        damp = math.exp(-delta * dt)
        a = damp * _poly(_COS_COEF, x)
        b = damp * dt * _poly(_SINC_COEF, x)
    elif x > 0:
        w = math.sqrt(q)
        damp = math.exp(-delta * dt)
        a = damp * math.cos(w * dt)
        b = damp * math.sin(w * dt) / w
    else:
        kappa = math.sqrt(-q)
        slow = math.exp(-dt * lam2 / (delta + kappa))  # exp((kappa - delta) dt)
        fast = math.exp(-(delta + kappa) * dt)
        b = -slow * math.expm1(-2.0 * kappa * dt) / (2.0 * kappa)
        if kappa >= 0.5 * delta:
            # strongly overdamped: write both diagonal entries without
            # subtracting the slow and fast exponentials
            p11 = (slow * (kappa + delta) - fast * lam2 / (delta + kappa)) / (2 * kappa)
            p22 = (fast * (kappa + delta) - slow * lam2 / (delta + kappa)) / (2 * kappa)
            return (p11, b, -lam2 * b, p22)
        a = 0.5 * (slow + fast)
    return (a + delta * b, b, -lam2 * b, a - delta * b)


def constant_matrix(lam: float, delta: float, dt: float) -> np.ndarray:
    """Exact transfer matrix of ``(u, u')`` over ``dt`` under constant damping."""
    return np.array(_constant_matrix(float(lam), float(delta), float(dt))).reshape(2, 2)


def _linear_rhs(lam: float, seg):
    # energy-scaled coordinates z = (lam*u, u'), two fundamental columns
    def f(t, y):
        d2 = 2.0 * seg.value_at(t)
        return np.array([lam * y[2], lam * y[3],
                         -lam * y[0] - d2 * y[2], -lam * y[1] - d2 * y[3]])
    return f


# Ramps whose damping integral exceeds this annihilate one phase-space
# direction beyond what a float64 integrator at RTOL can resolve.
PRECISE_RAMP_MASS = 8.0


@functools.lru_cache(maxsize=8192)
def _segment_matrix(lam: float, seg, rtol: float, atol: float) -> tuple:
    if isinstance(seg, Constant):
        return _constant_matrix(lam, seg.value, seg.duration)
    if isinstance(seg, Ramp) and seg.slope == 0.0:
        return _constant_matrix(lam, seg.start, seg.duration)
    if isinstance(seg, Ramp) and seg.integral() > PRECISE_RAMP_MASS:
        return _taylor.ramp_matrix(lam, seg.start, seg.slope, seg.duration)
    y = _rk.integrate(_linear_rhs(lam, seg), 0.0, seg.duration,
                      np.array([1.0, 0.0, 0.0, 1.0]), rtol=rtol, atol=atol)
    q11, q12, q21, q22 = y
    # back from scaled coordinates: P = diag(1/lam, 1) Q diag(lam, 1)
    return (q11, q12 / lam, q21 * lam, q22)


def segment_matrix(lam: float, seg: Segment, rtol: float = _rk.RTOL,
                   atol: float = _rk.ATOL) -> np.ndarray:
    """Transfer matrix of ``(u, u')`` across one segment."""
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    return np.array(_segment_matrix(float(lam), seg, rtol, atol)).reshape(2, 2)


# ----------------------------------------------------------------------------
# Propagation
# ----------------------------------------------------------------------------


def propagate_constant(state: ModeState, lam: float, delta: float, dt: float) -> ModeState:
    """Exact solution at time ``dt`` under constant damping ``delta``."""
    _check_finite(state.u, state.v)
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    if not delta >= 0:
        raise ValueError("delta must be >= 0")
    if not dt >= 0:
        raise ValueError("dt must be >= 0")
    p11, p12, p21, p22 = _constant_matrix(float(lam), float(delta), float(dt))
    return ModeState(p11 * state.u + p12 * state.v, p21 * state.u + p22 * state.v)


def propagate_segment(state: ModeState, lam: float, segment: Segment,
                      rtol: float = _rk.RTOL, atol: float = _rk.ATOL) -> ModeState:
    """State at the end of ``segment``.

    Ramps and smooth pieces are integrated with the 5(4) pair; the transfer
    matrix is built from the identity so tolerances are relative to the
    state at the start of the segment.
    """
    _check_finite(state.u, state.v)
    m = segment_matrix(lam, segment, rtol, atol)
    out = m @ state.as_array()
    _check_finite(*out)
    return ModeState.from_array(out)


@dataclass
class Trajectory:
    """Sampled states of a batch of modes.

    ``states`` has shape ``(T, K, 2, B)``: time samples, modes, ``(u, u')``,
    batch members.
    """

    times: np.ndarray
    states: np.ndarray
    lams: np.ndarray

    def energies(self) -> np.ndarray:
        """Modal energies, shape ``(T, K, B)``."""
        lam = self.lams.reshape(1, -1, 1)
        return self.states[:, :, 1] ** 2 + (lam * self.states[:, :, 0]) ** 2

    def total_energy(self) -> np.ndarray:
        """Total energy summed over modes, shape ``(T, B)``."""
        return self.energies().sum(axis=1)


def propagate_modes(states, lams, profile: DampingProfile, t_end: float,
                    sample_times: Sequence[float] = (), rtol: float = _rk.RTOL,
                    atol: float = _rk.ATOL) -> Trajectory:
    """Propagate a batch of states for several modes through ``profile``.

    ``states`` is shaped ``(K, 2, B)`` (or ``(K, 2)`` for a single batch
    member). Samples are taken at ``t=0``, every segment boundary up to
    ``t_end``, every requested sample time, and ``t_end``.
    """
    if not t_end >= 0:
        raise ValueError("t_end must be >= 0")
    lams = np.atleast_1d(np.asarray(lams, dtype=float))
    x = np.array(states, dtype=float)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.shape[:2] != (len(lams), 2):
        raise ValueError(f"states must be shaped (K, 2, B) with K={len(lams)}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteState("non-finite state")
    times = [0.0]
    out = [x.copy()]
    for t0, piece in profile.pieces(t_end, sample_times):
        for k, lam in enumerate(lams):
            x[k] = segment_matrix(lam, piece, rtol, atol) @ x[k]
        times.append(t0 + piece.duration)
        out.append(x.copy())
    if not np.all(np.isfinite(x)):
        raise NonFiniteState("non-finite state")
    return Trajectory(np.array(times), np.array(out), lams)


def propagate_profile(state: ModeState, lam: float, profile: DampingProfile, t_end: float,
                      sample_times: Sequence[float] = ()) -> list:
    """Single-mode trajectory as a list of ``(time, ModeState)``.

    Sample points are ``t=0``, every segment boundary reached before
    ``t_end``, the requested ``sample_times`` and ``t_end`` itself.
    """
    _check_finite(state.u, state.v)
    traj = propagate_modes(state.as_array()[None, :], [lam], profile, t_end, sample_times)
    return [(float(t), ModeState(float(s[0, 0, 0]), float(s[0, 1, 0])))
            for t, s in zip(traj.times, traj.states)]
