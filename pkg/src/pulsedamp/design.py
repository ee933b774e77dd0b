"""Damping profiles with guaranteed energy decay.

The basic building block is the *bipulse*: on ``[0, pi/(2 lam)]`` two
narrow constant pulses of mass ``M`` sandwich an undamped quarter
rotation. The first pulse freezes the velocity, the rotation turns
displacement into velocity, the second pulse freezes that too, so every
solution loses at least a factor ``2 exp(-M)`` of its energy.

Everything else is assembled from bipulses: periodic repetition (fixed
exponential rate), variable masses (arbitrary envelopes), concatenation
over modes (finite systems), a constant-damping half for high modes
(truncated PDEs), and a piecewise-linear variant with small Lipschitz
constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _rk
from .analysis import (DecayCertificate, EnvelopeBound, ExponentialBound, certify,
                       random_states, smoothing_deviation_bound)
from .core import (Constant, DampingProfile, Ramp, Smooth, Spectrum, constant_matrix,
                   ModeState, energy, segment_matrix, smooth_step)
from .errors import CalibrationError, DesignError, HypothesisViolated
from .spectra import pde_schedule_table

N_CAP = 2**24
DEFAULT_MARGIN = 0.99
LOG2 = math.log(2.0)


# ----------------------------------------------------------------------------
# Bipulse blocks
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class BipulseBlock:
    """Two pulses of height ``mass*n`` and width ``1/n`` around a quarter turn."""

    lam: float
    mass: float
    n: int
    energy_v: float  # energy at the block end of the solution from (0, 1)
    energy_w: float  # same, from (1/lam, 0)
    target: float

    @property
    def pulse_height(self) -> float:
        return self.mass * self.n

    @property
    def pulse_width(self) -> float:
        return 1.0 / self.n

    @property
    def block_length(self) -> float:
        return math.pi / (2.0 * self.lam)

    @property
    def reduction_factor(self) -> float:
        """Guaranteed bound on ``E(end)/E(start)`` for every solution."""
        return self.energy_v + self.energy_w

    def segments(self) -> tuple:
        if self.mass == 0:
            return (Constant(0.0, self.block_length),)
        w = self.pulse_width
        return (Constant(self.pulse_height, w),
                Constant(0.0, self.block_length - 2.0 * w),
                Constant(self.pulse_height, w))

    def profile(self, periodic: bool = True) -> DampingProfile:
        return DampingProfile(self.segments(), periodic=periodic)


def bipulse_energies(lam: float, mass: float, n: int) -> tuple[float, float]:
    """Energies at ``pi/(2 lam)`` of the solutions from ``(0, 1)`` and ``(1/lam, 0)``."""
    t0 = math.pi / (2.0 * lam)
    pulse = constant_matrix(lam, mass * n, 1.0 / n)
    gap = constant_matrix(lam, 0.0, t0 - 2.0 / n)
    p = pulse @ gap @ pulse
    v = p @ np.array([0.0, 1.0])
    w = p @ np.array([1.0 / lam, 0.0])
    return (float(energy(ModeState(*v), lam)), float(energy(ModeState(*w), lam)))


def search_floor(lam: float) -> int:
    """Smallest ``n`` whose pulses leave at least half the block undamped."""
    return max(1, math.ceil(4.0 / (math.pi / (2.0 * lam))))


def calibrate_bipulse(lam: float, mass: float, margin: float = DEFAULT_MARGIN,
                      target: float | None = None, n_cap: int = N_CAP) -> BipulseBlock:
    """Smallest ``n`` (doubling, then bisection) meeting the two-solution criterion.

    The criterion asks both fundamental energies at the block end to be at
    most ``margin * target``; ``target`` defaults to ``exp(-mass)``. It
    implies ``E(end) <= 2 * target * E(start)`` for every solution.

    Raises
    ------
    CalibrationError
        If no ``n <= n_cap`` works.
    """
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    if not mass >= 0:
        raise ValueError("pulse mass must be >= 0")
    if not 0 < margin < 1:
        raise ValueError("margin must lie in (0, 1)")
    goal = math.exp(-mass) if target is None else target
    if mass == 0:
        # no pulse: energy is merely nonincreasing, which is all e^0 asks
        return BipulseBlock(lam, 0.0, 1, 1.0, 1.0, goal)
    thresh = margin * goal

    def ok(n):
        ev, ew = bipulse_energies(lam, mass, n)
        return ev <= thresh and ew <= thresh, ev, ew

    lo = search_floor(lam)
    good, ev, ew = ok(lo)
    if good:
        return BipulseBlock(lam, mass, lo, ev, ew, goal)
    hi = lo
    while True:
        hi *= 2
        if hi > n_cap:
            raise CalibrationError(
                f"calibration failed: lambda={lam:.6g}, mass={mass:.6g} needs n > {n_cap}")
        good, ev, ew = ok(hi)
        if good:
            break
        lo = hi
    best = (hi, ev, ew)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        good, ev, ew = ok(mid)
        if good:
            hi, best = mid, (mid, ev, ew)
        else:
            lo = mid
    return BipulseBlock(lam, mass, *best, goal)


def _common_blocks(lams, mass, margin, target, n_cap) -> list:
    blocks = [calibrate_bipulse(l, mass, margin, target, n_cap) for l in lams]
    if mass == 0:
        return blocks
    n = max(b.n for b in blocks)
    goal = blocks[0].target
    while True:
        out = []
        for l in lams:
            ev, ew = bipulse_energies(l, mass, n)
            if max(ev, ew) > margin * goal:
                break
            out.append(BipulseBlock(l, mass, n, ev, ew, goal))
        else:
            return out
        n *= 2
        if n > n_cap:
            raise CalibrationError(f"calibration failed: common n > {n_cap}")


def _blocks_for(lams, mass, margin, target, n_cap, common_n) -> list:
    if common_n:
        return _common_blocks(lams, mass, margin, target, n_cap)
    return [calibrate_bipulse(l, mass, margin, target, n_cap) for l in lams]


# ----------------------------------------------------------------------------
# Results
# ----------------------------------------------------------------------------


@dataclass
class Design:
    """A constructed profile with the decay it is guaranteed to produce.

    ``period`` is the period of periodic designs and the length of one
    block otherwise; ``horizon`` is a sensible default for simulation.
    """

    profile: DampingProfile
    certificate: DecayCertificate
    spectrum: Spectrum
    period: float
    horizon: float
    blocks: tuple = ()
    info: dict = field(default_factory=dict)
    details: object = None

    def certify(self, horizon: float | None = None, batch: int = 64, seed: int | None = None,
                certificate: DecayCertificate | None = None) -> DecayCertificate:
        kw = {} if seed is None else {"seed": seed}
        return certify(self.profile, self.spectrum, certificate or self.certificate,
                       horizon or self.horizon, batch=batch, **kw)


def _t0(lam: float) -> float:
    return math.pi / (2.0 * lam)


def _check_rate(R):
    if not (R > 0 and math.isfinite(R)):
        raise ValueError("rate must be > 0")


# ----------------------------------------------------------------------------
# Single mode
# ----------------------------------------------------------------------------


def design_ode_exponential(lam: float, R: float, margin: float = DEFAULT_MARGIN,
                           n_cap: int = N_CAP, smooth: bool = False, periods: int = 10) -> Design:
    """Periodic bipulse giving ``E(t) <= E(0) exp(-R (t - t0)^+)``.

    With ``smooth=True`` the block is calibrated for twice the mass
    (target ``exp(-2M)``) and then mollified with an L2 budget small
    enough that the perturbation cannot use up the spare decay.
    """
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    _check_rate(R)
    t0 = _t0(lam)
    mass = R * t0 + LOG2
    target = math.exp(-2.0 * mass) if smooth else None
    block = calibrate_bipulse(lam, mass, margin, target, n_cap)
    profile = block.profile(periodic=True)
    info = {"t0": t0, "mass": mass, "n": block.n}
    if smooth:
        profile, info = _smooth(profile, t0, R, block.reduction_factor, info)
    return Design(profile, DecayCertificate(ExponentialBound(R, t0)), Spectrum((lam,)),
                  t0, periods * t0, (block,), info)


def _grid_values(phi: Callable[[float], float], t0: float, count: int) -> list:
    vals = [float(phi(k * t0)) for k in range(count)]
    if not all(math.isfinite(v) and v > 0 for v in vals):
        raise DesignError("invalid envelope: values must be positive")
    if any(b > a for a, b in zip(vals, vals[1:])):
        raise DesignError("invalid envelope: values must be nonincreasing")
    return vals


def envelope_masses(phi: Callable[[float], float], t0: float, blocks: int) -> list:
    """Minimal block masses that keep ``E(k t0) <= E(0) phi((k+1) t0)``.

    Block 0 needs ``2 exp(-M0) <= phi(2 t0)``; block ``k >= 1`` needs
    ``phi((k+1) t0) * 2 exp(-Mk) <= phi((k+2) t0)``. No mass goes below
    ``log 2`` since a weaker block would claim growth.
    """
    vals = _grid_values(phi, t0, blocks + 2)
    masses = [max(math.log(2.0 / vals[2]), LOG2)]
    for k in range(1, blocks):
        masses.append(max(math.log(2.0 * vals[k + 1] / vals[k + 2]), LOG2))
    return masses


def design_ode_any_rate(lam: float, phi: Callable[[float], float], blocks: int = 8,
                        margin: float = DEFAULT_MARGIN, n_cap: int = N_CAP) -> Design:
    """Non-periodic chain of bipulses following a prescribed envelope ``phi``.

    Certificate: ``E(t) <= E(0) phi(t)`` for ``t0 <= t <= blocks * t0``.
    """
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    if blocks < 1:
        raise ValueError("need at least one block")
    t0 = _t0(lam)
    masses = envelope_masses(phi, t0, blocks)
    chain = [calibrate_bipulse(lam, m, margin, None, n_cap) for m in masses]
    segs = [s for b in chain for s in b.segments()]
    profile = DampingProfile(tuple(segs), periodic=False)
    cert = DecayCertificate(EnvelopeBound(phi, start=t0))
    return Design(profile, cert, Spectrum((lam,)), t0, blocks * t0, tuple(chain),
                  {"t0": t0, "masses": masses, "n": [b.n for b in chain]})


# ----------------------------------------------------------------------------
# Finite systems
# ----------------------------------------------------------------------------


def system_period(spectrum: Spectrum) -> float:
    return 0.5 * math.pi * sum(1.0 / l for l in spectrum)


def design_system(spectrum: Spectrum, R: float, margin: float = DEFAULT_MARGIN,
                  n_cap: int = N_CAP, common_n: bool = False, smooth: bool = False,
                  periods: int = 6) -> Design:
    """One bipulse per mode, back to back, repeated with period ``(pi/2) sum 1/lam_k``.

    Each block cuts its own mode by ``2 exp(-M)`` while the others are
    left nonincreasing, so total energy obeys ``exp(-R (t - t0)^+)``.
    """
    _check_rate(R)
    t0 = system_period(spectrum)
    mass = R * t0 + LOG2
    target = math.exp(-2.0 * mass) if smooth else None
    blocks = _blocks_for(list(spectrum), mass, margin, target, n_cap, common_n)
    segs = [s for b in blocks for s in b.segments()]
    profile = DampingProfile(tuple(segs), periodic=True)
    info = {"t0": t0, "mass": mass, "n": [b.n for b in blocks]}
    if smooth:
        worst = max(b.reduction_factor for b in blocks)
        profile, info = _smooth(profile, t0, R, worst, info)
    return Design(profile, DecayCertificate(ExponentialBound(R, t0)), spectrum, t0,
                  periods * t0, tuple(blocks), info)


def design_system_any(spectrum: Spectrum, phi: Callable[[float], float], periods: int = 6,
                      margin: float = DEFAULT_MARGIN, n_cap: int = N_CAP,
                      common_n: bool = False) -> Design:
    """System analogue of :func:`design_ode_any_rate` with per-period masses."""
    t0 = system_period(spectrum)
    masses = envelope_masses(phi, t0, periods)
    blocks, segs = [], []
    for m in masses:
        bs = _blocks_for(list(spectrum), m, margin, None, n_cap, common_n)
        blocks.extend(bs)
        segs.extend(s for b in bs for s in b.segments())
    profile = DampingProfile(tuple(segs), periodic=False)
    return Design(profile, DecayCertificate(EnvelopeBound(phi, start=t0)), spectrum, t0,
                  periods * t0, tuple(blocks), {"t0": t0, "masses": masses})


# ----------------------------------------------------------------------------
# Truncated PDEs
# ----------------------------------------------------------------------------


def split_low_modes(spectrum: Spectrum, R: float) -> tuple[list, list]:
    """Modes with ``lam^2 <= 2 (R + lam_1)^2`` and the rest."""
    thr = 2.0 * (R + spectrum[0]) ** 2
    low = [l for l in spectrum if l * l <= thr]
    return low, [l for l in spectrum if l * l > thr]


def _pde_block(spectrum, R, level, margin, target_scale, n_cap, common_n):
    low, high = split_low_modes(spectrum, R)
    if not high:
        raise DesignError("spectrum truncation insufficient: every mode is low for this rate")
    lam1 = spectrum[0]
    t_r = 0.5 * math.pi * sum(1.0 / l for l in low)
    if level is None:
        level = R + lam1
    if level < R + lam1 * (1 - 1e-12):
        raise DesignError("constant level must be at least R + lambda_1")
    if high[0] ** 2 < 2.0 * level**2 * (1 - 1e-12):
        raise DesignError("constant level too high for the first high mode")
    mass = 2.0 * (R + lam1) * t_r - math.log(4.0)
    target = math.exp(-target_scale * mass)
    blocks = _blocks_for(low, mass, margin, target, n_cap, common_n)
    segs = [s for b in blocks for s in b.segments()] + [Constant(level, t_r)]
    return segs, blocks, {"T_R": t_r, "mass": mass, "low_modes": len(low), "level": level}


def design_pde_exponential(spectrum: Spectrum, R: float, high_level: float | None = None,
                           margin: float = DEFAULT_MARGIN, n_cap: int = N_CAP,
                           common_n: bool = False, smooth: bool = False,
                           periods: int = 5) -> Design:
    """Split design for a truncated spectrum: bipulses for low modes, then a plateau.

    The period is ``2 T_R`` with ``T_R = (pi/2) sum_{low} 1/lam_k``. The
    second half holds ``high_level`` (default ``R + lam_1``), which is
    coercive for every high mode.

    With ``smooth=True`` the plateau is raised to the largest level the
    first high mode allows, low blocks get doubled mass, and the profile
    is mollified within a budget derived from the spare decay.
    """
    _check_rate(R)
    if smooth:
        low, high = split_low_modes(spectrum, R)
        if not high:
            raise DesignError("spectrum truncation insufficient: every mode is low for this rate")
        high_level = high[0] / math.sqrt(2.0)
    segs, blocks, info = _pde_block(spectrum, R, high_level, margin, 2.0 if smooth else 1.0,
                                    n_cap, common_n)
    t0 = 2.0 * info["T_R"]
    info["t0"] = t0
    info["n"] = [b.n for b in blocks]
    profile = DampingProfile(tuple(segs), periodic=True)
    if smooth:
        high_factor = 8.0 * math.exp(-2.0 * info["level"] * info["T_R"])
        worst = max([b.reduction_factor for b in blocks] + [high_factor])
        profile, info = _smooth(profile, t0, R, worst, info)
    return Design(profile, DecayCertificate(ExponentialBound(R, t0)), spectrum, t0,
                  periods * t0, tuple(blocks), info)


@dataclass
class CoerciveReport:
    """Outcome of :func:`verify_coercive_decay`.

    ``factor`` is the largest ``E(t) / (8 E(0) exp(-2 M t))`` observed;
    ``identity_error`` the largest ``|Ehat' + 2 M Ehat| / Ehat``.
    """

    ok: bool
    factor: float
    identity_error: float
    equivalence_ok: bool


def verify_coercive_decay(spectrum_high: Spectrum, M: float,
                          times: Sequence[float] = (0.5, 1.0, 2.0, 4.0),
                          batch: int = 64, seed: int = 0x5EED) -> CoerciveReport:
    """Check the constant-damping estimate ``E(t) <= 8 E(0) exp(-2 M t)``.

    Also checks that the modified energy ``Ehat = E + 2 M u u'`` obeys
    ``Ehat' = -2 M Ehat`` (fourth-order differences) and
    ``E/4 <= Ehat <= 2E``. Needs ``lam^2 >= 2 M^2`` for every mode.
    """
    if not M >= 0:
        raise ValueError("damping must be >= 0")
    for lam in spectrum_high:
        if lam * lam < 2.0 * M * M * (1.0 - 1e-12):
            raise HypothesisViolated("coercivity violated")
    factor, ident, equiv = 0.0, 0.0, True
    for lam in spectrum_high:
        x0 = random_states([lam], batch, seed)[0]
        h = 1e-3 / max(lam, M, 1.0)
        for t in times:
            offs = (-2, -1, 0, 1, 2) if t > 2 * h else (0, 1, 2, 3, 4)
            ehat, e = [], []
            for k in offs:
                s = constant_matrix(lam, M, t + k * h) @ x0
                en = s[1] ** 2 + (lam * s[0]) ** 2
                e.append(en)
                ehat.append(en + 2.0 * M * s[0] * s[1])
            e, ehat = np.array(e), np.array(ehat)
            i = offs.index(0)
            factor = max(factor, float(np.max(e[i] / (8.0 * math.exp(-2.0 * M * t)))))
            if offs[0] == -2:
                d = (-ehat[4] + 8 * ehat[3] - 8 * ehat[1] + ehat[0]) / (12 * h)
            else:
                d = (-25 * ehat[0] + 48 * ehat[1] - 36 * ehat[2] + 16 * ehat[3] - 3 * ehat[4]) / (12 * h)
            ident = max(ident, float(np.max(np.abs(d + 2 * M * ehat[i]) / ehat[i])))
            tol = 1e-12 * e[i]
            equiv &= bool(np.all(e[i] / 4 - tol <= ehat[i]) and np.all(ehat[i] <= 2 * e[i] + tol))
    return CoerciveReport(factor <= 1.0 and ident <= 1e-6 and equiv, factor, ident, equiv)


def _reachable_blocks(spectrum, table, max_blocks, margin, n_cap, common_n):
    segs, blocks, reached = [], [], []
    for row in table.rows:
        n = row.n
        if n < table.n0 or n >= len(spectrum):
            continue
        if max_blocks is not None and len(reached) >= max_blocks:
            break
        sub = Spectrum(spectrum.frequencies[: n + 1])
        try:
            s, b, _ = _pde_block(sub, row.R, None, margin, 1.0, n_cap, common_n)
        except CalibrationError:
            break
        segs.extend(s)
        blocks.extend(b)
        reached.append(n)
    return segs, blocks, reached


def design_pde_ultra(spectrum: Spectrum, max_blocks: int | None = None,
                     margin: float = DEFAULT_MARGIN, n_cap: int = N_CAP,
                     common_n: bool = False) -> Design:
    """Chain of split designs with rates ``R_n = lam_n/sqrt 2 - lam_1`` on ``[S_{n-1}, S_n)``.

    The certificate is the step envelope ``exp(-U_n)`` on ``[S_n, S_{n+1})``,
    which beats every exponential. Blocks are appended until one can no
    longer be calibrated within ``n_cap`` (or ``max_blocks`` is reached);
    the reachable part is reported in ``info``.
    """
    table = pde_schedule_table(spectrum, len(spectrum))
    n0 = table.n0
    if len(spectrum) < n0 + 2:
        last = table.rows[-1].S if table.rows else 0.0
        raise DesignError(
            f"spectrum truncation insufficient: need at least {n0 + 2} modes; "
            f"maximum certifiable horizon S={last:.6g}")
    table.check_bookkeeping()
    segs, blocks, reached = _reachable_blocks(spectrum, table, max_blocks, margin, n_cap, common_n)
    if not reached:
        raise CalibrationError("calibration failed: no ultra-exponential block is reachable")
    profile = DampingProfile(tuple(segs), periodic=False)
    last = reached[-1]
    s_last = table.row(last).S
    steps = [r for r in table.rows if r.n <= last]
    phi = table_envelope(steps)
    cert = DecayCertificate(EnvelopeBound(phi, start=0.0))
    info = {"n0": n0, "reachable": reached, "S": {r.n: r.S for r in steps},
            "U": {r.n: r.U for r in steps}}
    return Design(profile, cert, spectrum, s_last, s_last, tuple(blocks), info, table)


def table_envelope(rows) -> Callable[[float], float]:
    """Step function ``exp(-U_n)`` on ``[S_n, S_{n+1})`` (1 before the first ``S``)."""
    s = np.array([r.S for r in rows])
    u = np.array([r.U for r in rows])

    def phi(t: float) -> float:
        i = int(np.searchsorted(s, t, side="right")) - 1
        return 1.0 if i < 0 else math.exp(-u[i])

    return phi


# ----------------------------------------------------------------------------
# Lipschitz trapezoid
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class LipschitzDesign:
    """Parameters of the trapezoidal profile and the checks made while building it.

    ``log_energy_ratio_v`` is ``log(E_v(t1)/E_v(0))`` for the special
    solution killed by the first ascending ramp; it should not exceed
    ``-mass * t1``.
    """

    lam: float
    epsilon: float
    rate: float
    mass: float
    t1: float
    t2: float
    t0: float
    log_energy_ratio_v: float
    alignment_residual: float
    sandwich_ok: bool

    @property
    def t0_bound(self) -> float:
        e, R, lam = self.epsilon, self.rate, self.lam
        return 16 * (math.pi / e + 1) * R + 2 * (math.pi + 1) / e + 8 / lam + 2 + 8 * LOG2

    @property
    def t2_bound(self) -> float:
        return 2 * math.pi / math.sqrt(self.epsilon * (2 * self.lam - self.epsilon))


def _special_solution(lam, eps, t1):
    """Backward Riccati flow on the first ramp with ``phi(t1) = lam + 2 eps t1``.

    Returns ``phi(0)``, ``int_0^t1 phi`` and whether every node respects
    ``lam + 2 eps t <= phi <= 2 (lam + 2 eps t1)``.
    """
    lam2 = lam * lam

    def f(t, y):
        p = y[0]
        return np.array([lam2 - 2.0 * (lam + eps * t) * p + p * p, p])

    ts, ys = _rk.integrate(f, t1, 0.0, np.array([lam + 2 * eps * t1, 0.0]),
                           rtol=1e-12, atol=1e-14, record=True)
    phi = ys[:, 0]
    slack = 1e-9 * (lam + 2 * eps * t1)
    ok = bool(np.all(phi >= lam + 2 * eps * ts - slack)
              and np.all(phi <= 2 * (lam + 2 * eps * t1) + slack))
    # ys[:,1] accumulates int_{t1}^{t} phi, which is negative going backward
    return phi[-1], -ys[-1, 1], ok


def _scaled(lam, x):
    return np.array([lam * x[0], x[1]])


def design_lipschitz(lam: float, R: float, epsilon: float, periods: int = 5) -> Design:
    """Periodic piecewise-linear profile with slopes ``+-epsilon`` and minimum ``lam - epsilon``.

    The first ascending ramp kills a special solution ``v``; a plateau at
    ``lam - epsilon`` rotates the complementary solution ``w`` until it
    sits on ``v``'s data at ``t = -1``, so that the second ascending ramp
    kills it too.

    Raises
    ------
    DesignError
        ``epsilon out of range`` or ``phase matching failed``.
    """
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    if not 0 < epsilon < lam:
        raise DesignError("epsilon out of range: need 0 < epsilon < lambda")
    _check_rate(R)
    eps = epsilon
    mass = 8 * (math.pi + eps) * R + 4 * eps * LOG2 + 1
    t1 = mass / (2 * eps) + 2 / lam
    top = lam + eps * t1

    phi0, int_phi, sandwich_ok = _special_solution(lam, eps, t1)
    phi1 = lam + 2 * eps * t1
    log_ratio = -2 * int_phi + math.log((phi1**2 + lam**2) / (phi0**2 + lam**2))

    up1 = Ramp(lam, eps, t1)
    down1 = Ramp(top, -eps, t1 + 1)
    up2 = Ramp(lam - eps, eps, t1 + 1)
    down2 = Ramp(top, -eps, t1)

    # v with unit energy at 0 and the orthogonal partner w
    v0 = np.array([1.0, -phi0]) / math.hypot(phi0, lam)
    w0 = np.array([v0[1] / lam, -lam * v0[0]])
    w_start = segment_matrix(lam, down1) @ (segment_matrix(lam, up1) @ w0)

    # the direction the second ascending ramp annihilates, i.e. the data of
    # v at t = -1; taken from the float matrix so the simulation agrees
    p_up2 = np.diag([lam, 1.0]) @ segment_matrix(lam, up2) @ np.diag([1.0 / lam, 1.0])
    target = np.linalg.svd(p_up2)[2][-1]  # scaled coordinates (lam u, u')
    v_back = np.linalg.solve(segment_matrix(lam, Ramp(lam - eps, eps, 1.0)), v0)
    vb = _scaled(lam, v_back)
    if np.dot(target, vb) < 0:
        target = -target
    target_u = np.array([target[0] / lam, target[1]])

    d = lam - eps
    omega = math.sqrt(eps * (2 * lam - eps))
    theta0 = math.atan2(w_start[1] + d * w_start[0], omega * w_start[0])
    theta1 = math.atan2(target_u[1] + d * target_u[0], omega * target_u[0])
    turn = (theta0 - theta1) % (2 * math.pi)
    t2 = turn / omega if turn > 0 else 2 * math.pi / omega
    plateau = Constant(d, t2)

    end = _scaled(lam, constant_matrix(lam, d, t2) @ w_start)
    residual = abs(end[0] * target[1] - end[1] * target[0]) / np.linalg.norm(end)
    if residual > 1e-8 or np.dot(end, target) <= 0:
        raise DesignError(f"phase matching failed: residual {residual:.3e}")
    drift = abs(vb[0] * target[1] - vb[1] * target[0]) / np.linalg.norm(vb)
    if drift > 1e-6:
        raise DesignError(f"phase matching failed: annihilated direction off by {drift:.3e}")

    t0 = 4 * t1 + t2 + 2
    if not 2 * math.exp(-mass * t1) <= math.exp(-R * t0):
        raise DesignError("mass too small for the requested rate")
    det = LipschitzDesign(lam, eps, R, mass, t1, t2, t0, log_ratio, residual, sandwich_ok)
    profile = DampingProfile((up1, down1, plateau, up2, down2), periodic=True)
    return Design(profile, DecayCertificate(ExponentialBound(R, t0)), Spectrum((lam,)), t0,
                  periods * t0, (), {"t0": t0, "t1": t1, "t2": t2, "mass": mass}, det)


# ----------------------------------------------------------------------------
# Mollification
# ----------------------------------------------------------------------------

# 2 * int_0^{1/2} S(x)^2 dx: squared L2 cost per unit width and unit jump
_GL_X, _GL_W = np.polynomial.legendre.leggauss(64)
TRANSITION_COST = float(0.5 * np.dot(_GL_W, smooth_step(0.25 + 0.25 * _GL_X) ** 2))


def _value_at_start(seg) -> float:
    return float(seg.value_at(0.0))


@dataclass
class MollifiedProfile:
    """Smooth replacement of a piecewise-constant profile.

    Every jump becomes a C-infinity transition of ``width`` centred on
    the jump. ``l2_distance`` is the L2 distance to the original over one
    period (or over the whole segment list when not periodic).
    """

    profile: DampingProfile
    original: DampingProfile
    width: float
    l2_distance: float
    budget: float

    def l2_distance_until(self, t: float) -> float:
        if not self.original.periodic:
            return self.l2_distance
        periods = max(1, math.ceil(t / self.original.duration - 1e-12))
        return math.sqrt(periods) * self.l2_distance

    def deviation_bound(self, e0: float, t: float) -> float:
        """Energy of the difference of the two solutions from the same data."""
        return smoothing_deviation_bound(e0, t, self.l2_distance_until(t))


def mollify(profile: DampingProfile, l2_budget: float) -> MollifiedProfile:
    """Replace each jump of a piecewise-constant profile by a smooth transition.

    The common width is ``budget^2 / (c * sum h^2)`` where ``h`` are the
    jump heights and ``c`` the L2 cost of one unit transition, capped at
    half the shortest segment. A jump across the period boundary is split
    into two half transitions.

    Raises
    ------
    DesignError
        ``budget too small`` when the width is below float resolution, or
        when a jump touches a non-constant segment.
    """
    if not l2_budget > 0:
        raise ValueError("l2_budget must be > 0")
    segs = list(profile.segments)
    n = len(segs)
    pairs = list(range(n - 1)) + ([n - 1] if profile.periodic else [])
    jumps = {}
    for i in pairs:
        a, b = segs[i], segs[(i + 1) % n]
        h = _value_at_start(b) - a.end_value
        if h != 0.0:
            if not (isinstance(a, Constant) and isinstance(b, Constant)):
                raise DesignError("mollify supports jumps between constant segments only")
            jumps[i] = h
    if not jumps:
        return MollifiedProfile(profile, profile, 0.0, 0.0, l2_budget)
    total = sum(h * h for h in jumps.values())
    width = min(l2_budget**2 / (TRANSITION_COST * total),
                0.5 * min(s.duration for s in segs))
    if width < 64 * np.finfo(float).eps * max(profile.duration, 1.0):
        raise DesignError("budget too small: transition narrower than float resolution")
    half = 0.5 * width
    out = []
    for i, seg in enumerate(segs):
        left = jumps.get(i - 1) if i > 0 else jumps.get(n - 1)
        right = jumps.get(i)
        start_cut = half if left is not None else 0.0
        end_cut = half if right is not None else 0.0
        if left is not None:
            prev = segs[i - 1] if i > 0 else segs[-1]
            lo = 0.5
            out.append(Smooth(prev.end_value, seg.value, half, lo, 1.0))
        out.append(Constant(seg.value, seg.duration - start_cut - end_cut))
        if right is not None:
            nxt = segs[(i + 1) % n]
            out.append(Smooth(seg.value, nxt.value, half, 0.0, 0.5))
    smooth = DampingProfile(tuple(out), periodic=profile.periodic)
    dist = math.sqrt(TRANSITION_COST * width * total)
    return MollifiedProfile(smooth, profile, width, dist, l2_budget)


def safe_budget(t0: float, R: float, nominal_factor: float) -> float:
    """Largest L2 budget that keeps one period within ``exp(-R t0)``.

    If the unsmoothed period map has squared norm at most
    ``nominal_factor``, a perturbation of energy ``2 exp(2 t0) b^2`` keeps
    the norm below ``exp(-R t0 / 2)`` as long as ``b`` is below this value.
    """
    room = math.exp(-0.5 * R * t0) - math.sqrt(nominal_factor)
    if room <= 0:
        raise DesignError("no room left for smoothing: raise the mass margin")
    return room / math.sqrt(2.0 * math.exp(2.0 * t0))


def _smooth(profile, t0, R, nominal_factor, info):
    budget = 0.9 * safe_budget(t0, R, nominal_factor)
    moll = mollify(profile, budget)
    info = dict(info, budget=budget, width=moll.width, l2_distance=moll.l2_distance)
    return moll.profile, info
