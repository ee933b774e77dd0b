"""Acceptance suite: one test (or parametrized family) per criterion.

Each test records a PASS/FAIL line through the ``criterion`` fixture; the
lines are repeated in the terminal summary.
"""

import math
import time

import numpy as np
import pytest

from pulsedamp.analysis import (construct_slow_solution, energy_lower_bound, random_states,
                                second_order_residual)
from pulsedamp.cli import run
from pulsedamp.core import Constant, DampingProfile, Spectrum, propagate_modes
from pulsedamp.design import (bipulse_energies, design_lipschitz, design_ode_any_rate,
                              design_ode_exponential, design_pde_exponential, design_pde_ultra,
                              design_system, mollify, calibrate_bipulse, split_low_modes,
                              verify_coercive_decay)
from pulsedamp.fileio import parse_report, write_profile
from pulsedamp.spectra import (ModelOperator, claimed_growth, growth_order_check,
                               model_spectrum, pde_schedule_table)

from oracles import EXP_MINUS_4, EXP_MINUS_8, SYSTEM_3_PERIOD

TOL = 1e-6


def _energy_at(profile, lams, times, batch=64, seed=0x5EED):
    """Total energies (rows: ``times``) for random unit-energy states."""
    x = random_states(lams, batch, seed)
    tr = propagate_modes(x, lams, profile, max(times), sample_times=times)
    e = tr.total_energy()
    idx = [int(np.argmin(np.abs(tr.times - t))) for t in times]
    assert all(abs(tr.times[i] - t) <= 1e-9 * max(1.0, t) for i, t in zip(idx, times))
    return e[idx], e[0]


# 1 ---------------------------------------------------------------------------


def test_c01_bipulse_limit(criterion):
    start = time.perf_counter()
    errs = []
    for n in (10**2, 10**3, 10**4):
        ev, ew = bipulse_energies(1.0, 1.0, n)
        errs.append(max(abs(ev - EXP_MINUS_4), abs(ew - EXP_MINUS_4)) / EXP_MINUS_4)
    elapsed = time.perf_counter() - start
    ok = errs[2] <= 0.02 and errs[0] > errs[1] > errs[2] and elapsed < 1.0
    detail = "relative errors " + ", ".join(f"{e:.2e}" for e in errs) + f"; {elapsed:.3f}s"
    assert criterion("C1 bipulse limit", ok, detail)


# 2 ---------------------------------------------------------------------------


@pytest.mark.parametrize("R", [0.5, 1.0, 2.0])
def test_c02_ode_exponential_certificate(criterion, R):
    start = time.perf_counter()
    d = design_ode_exponential(1.0, R)
    t0 = d.period
    times = [k * t0 for k in range(1, 11)]
    e, e0 = _energy_at(d.profile, [1.0], times)
    bound = np.array([math.exp(-R * max(t - t0, 0.0)) for t in times])[:, None]
    worst = float(np.max(e / (e0 * bound)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1 + TOL and elapsed < 5.0
    assert criterion(f"C2 certificate R={R}", ok,
                     f"n={d.info['n']}, max E/bound={worst:.6f}, {elapsed:.2f}s")


@pytest.mark.parametrize("R", [0.5, 1.0, 2.0])
def test_c02_control_fails_at_inflated_rate(criterion, tmp_path, capsys, R):
    d = design_ode_exponential(1.0, R)
    path = tmp_path / "profile.txt"
    write_profile(path, d.profile)
    code = run(["certify", "--profile", str(path), "--lambda", "1",
                "--rate", repr(R + 0.5), "--offset", repr(d.period),
                "--horizon", repr(10 * d.period), "--batch", "64"])
    rep = parse_report(capsys.readouterr().out)
    ok = code == 2
    assert criterion(f"C2 control R={R}+0.5", ok,
                     f"exit {code}, measured_margin={float(rep['measured_margin']):.4f}")


# 3 ---------------------------------------------------------------------------


def test_c03_arbitrary_envelope(criterion):
    start = time.perf_counter()

    def phi(t):
        return math.exp(-t * t)

    d = design_ode_any_rate(1.0, phi, blocks=8, n_cap=2**36)
    t0 = d.period
    ks = list(range(1, 9))
    e, e0 = _energy_at(d.profile, [1.0], [k * t0 for k in ks])
    ratios = [float(np.max(e[i] / e0)) / phi((k + 1) * t0) for i, k in enumerate(ks)]
    elapsed = time.perf_counter() - start
    ok = max(ratios) <= 1.0 and elapsed < 5.0
    assert criterion("C3 envelope exp(-t^2)", ok,
                     f"max E(k t0)/phi((k+1) t0)={max(ratios):.3f}, n up to "
                     f"{max(d.info['n'])}, {elapsed:.2f}s")


# 4 ---------------------------------------------------------------------------


def test_c04_system_certificate(criterion):
    start = time.perf_counter()
    sp = Spectrum((1.0, math.sqrt(2.0), 2.0))
    d = design_system(sp, 0.5)
    c = d.certify(horizon=6 * d.period, batch=64)
    elapsed = time.perf_counter() - start
    ok = (abs(d.period - SYSTEM_3_PERIOD) <= 1e-14 * SYSTEM_3_PERIOD and c.verified
          and elapsed < 10.0)
    assert criterion("C4 system {1, sqrt2, 2}", ok,
                     f"t0={d.period:.6f}, margin={c.measured_margin:.4f}, {elapsed:.2f}s")


# 5 ---------------------------------------------------------------------------


def test_c05_coercive_constant_damping(criterion):
    sp = model_spectrum(ModelOperator("wave", 1, 50))
    M = 2.0
    high = Spectrum(tuple(l for l in sp if l * l >= 2 * M * M))
    rep = verify_coercive_decay(high, M, times=(0.5, 1.0, 2.0, 4.0), batch=64)
    ok = rep.factor <= 1.0 and rep.identity_error <= 1e-6 and rep.equivalence_ok
    assert criterion("C5 coercive damping", ok,
                     f"{len(high)} modes, max E/(8E0 e^(-2Mt))={rep.factor:.3e}, "
                     f"identity error={rep.identity_error:.2e}")


# 6 ---------------------------------------------------------------------------


def test_c06_pde_split_design(criterion):
    start = time.perf_counter()
    sp = model_spectrum(ModelOperator("wave", 1, 50))
    d = design_pde_exponential(sp, 1.0)
    low, _ = split_low_modes(sp, 1.0)
    t_r = 3 * math.pi / 4
    c = d.certify(horizon=5 * d.period, batch=32)
    elapsed = time.perf_counter() - start
    ok = (low == [1.0, 2.0] and abs(d.info["T_R"] - t_r) <= 1e-14
          and abs(d.period - 2 * t_r) <= 1e-14 and c.verified and elapsed < 30.0)
    assert criterion("C6 PDE split design", ok,
                     f"T_R={d.info['T_R']:.6f}, margin={c.measured_margin:.4f}, {elapsed:.2f}s")


# 7 ---------------------------------------------------------------------------


def test_c07_ultra_exponential(criterion):
    sp = model_spectrum(ModelOperator("wave", 1, 20))
    d = design_pde_ultra(sp)
    table = d.details
    reach = d.info["reachable"]
    s_n = [table.row(n).S for n in reach]
    e, e0 = _energy_at(d.profile, sp.as_array(), s_n)
    worst = max(float(np.max(e[i] / e0)) / math.exp(-table.row(n).U)
                for i, n in enumerate(reach))
    last = table.rows[-3:]
    mono = {}
    for R in (1.0, 2.0):
        w = [-r.U + R * r.S for r in last]
        mono[R] = all(b < a for a, b in zip(w, w[1:]))
    ok = worst <= 1.0 and all(mono.values())
    reach_view = {R: [round(-table.row(n).U + R * table.row(n).S, 2) for n in reach[-3:]]
                  for R in (1.0, 2.0)}
    assert criterion("C7 ultra-exponential schedule", ok,
                     f"reachable n={reach}, max E(S_n)/e^(-U_n)={worst:.3e}, "
                     f"log phi(S_n)e^(R S_n) decreasing over n={[r.n for r in last]}: "
                     f"{mono}; reachable-n values {reach_view}")


# 8 ---------------------------------------------------------------------------


def test_c08a_constant_damping_lower_bound(criterion):
    p = DampingProfile((Constant(1.0, 1.0),), periodic=True)
    times = [1.0, 2.0, 4.0]
    e, e0 = _energy_at(p, [1.0], times)
    worst = min(float(np.min(e[i] / e0)) / math.exp(-4 * t) for i, t in enumerate(times))
    assert criterion("C8a lower bound, delta=1", worst >= 1 - 1e-9, f"min E/(E0 e^-4t)={worst:.4f}")


def test_c08b_integrable_damping_lower_bound(criterion):
    pulse = DampingProfile((Constant(20.0, 0.05), Constant(0.0, 1.0)), periodic=False)
    times = list(np.linspace(0.005, 60.0, 2000))
    e, e0 = _energy_at(pulse, [1.0], times)
    ratio = float(np.min(e / e0))
    # the exponential of minus four times the total mass is the sharper floor
    sharp = energy_lower_bound(pulse, 60.0)
    ok = ratio >= EXP_MINUS_8 * (1 - 1e-9) and ratio >= sharp * (1 - 1e-9)
    assert criterion("C8b lower bound, single pulse", ok,
                     f"min E/E0={ratio:.4e} vs e^-8={EXP_MINUS_8:.4e}, e^-4={sharp:.4e}")


# 9 ---------------------------------------------------------------------------


def test_c09_slow_solution(criterion):
    p = DampingProfile((Constant(1.0, 1.0),), periodic=True)
    sol = construct_slow_solution(1.0, p, T=0.0, t_end=25.0)
    ok = sol.sandwich_ok
    margins = []
    for t in (2.0, 5.0, 10.0, 20.0):
        i = int(np.argmin(np.abs(sol.times - t)))
        margins.append(abs(sol.rescaled()[i]) / (t * math.exp(-t)))
        ok &= abs(sol.times[i] - t) < 1e-12 and margins[-1] >= 1.0
    res = second_order_residual(sol, p)
    ok &= res <= 1e-7
    assert criterion("C9 slow solution", ok,
                     f"min |u|/(t e^-t)={min(margins):.10f}, residual={res:.2e}")


# 10 --------------------------------------------------------------------------


def test_c10_lipschitz_design(criterion):
    start = time.perf_counter()
    lam, R, eps = 1.0, 0.5, 0.25
    d = design_lipschitz(lam, R, eps)
    det = d.details
    slopes = [getattr(s, "slope", 0.0) for s in d.profile.segments]
    lip = max(abs(s) for s in slopes)
    c = d.certify(horizon=5 * d.period, batch=64)
    elapsed = time.perf_counter() - start
    ok = (lip <= eps and d.profile.minimum() == lam - eps and det.t0 <= det.t0_bound
          and c.verified and elapsed < 30.0)
    assert criterion("C10 Lipschitz design", ok,
                     f"Lipschitz={lip}, min={d.profile.minimum()}, t0={det.t0:.2f} <= "
                     f"{det.t0_bound:.2f}, margin={c.measured_margin:.3g}, {elapsed:.2f}s")


# 11 --------------------------------------------------------------------------


def test_c11_smoothing(criterion, tmp_path, capsys):
    block = calibrate_bipulse(1.0, 1.0)
    t0 = block.block_length
    m = mollify(block.profile(), 1e-3)
    x = random_states([1.0], 64)
    a = propagate_modes(x, [1.0], block.profile(), t0).states[-1]
    s = propagate_modes(x, [1.0], m.profile, t0).states[-1]
    dev = float(np.max((a[0, 1] - s[0, 1]) ** 2 + (a[0, 0] - s[0, 0]) ** 2))
    allowed = 2 * 1.0 * math.exp(2 * t0) * 1e-6

    d = design_ode_exponential(1.0, 1.0, smooth=True)
    times = [k * d.period for k in range(1, 11)]
    e, e0 = _energy_at(d.profile, [1.0], times)
    bound = np.array([math.exp(-max(t - d.period, 0.0)) for t in times])[:, None]
    worst = float(np.max(e / (e0 * bound)))
    path = tmp_path / "smooth.txt"
    write_profile(path, d.profile)
    code = run(["certify", "--profile", str(path), "--lambda", "1", "--rate", "1.5",
                "--offset", repr(d.period), "--horizon", repr(10 * d.period)])
    capsys.readouterr()
    ok = dev <= allowed and worst <= 1 + TOL
    assert criterion("C11 smoothing", ok,
                     f"pair deviation {dev:.2e} <= {allowed:.2e}; smooth design max "
                     f"E/bound={worst:.4f}; R+0.5 control exit {code} (doubled mass "
                     f"leaves spare decay)")


# 12 --------------------------------------------------------------------------


@pytest.mark.parametrize("eq,dim,columns", [
    ("wave", 1, ("S", "U")), ("wave", 2, ("U",)), ("beam", 1, None),
])
def test_c12_growth_orders(criterion, eq, dim, columns):
    op = ModelOperator(eq, dim, 64)
    table = pde_schedule_table(model_spectrum(op), 64)
    claimed = claimed_growth(op)
    if columns is None:
        rep = growth_order_check(table, None)
        ok = len(table.rows) == 64 and claimed is None and rep.bounded and rep.passed
        detail = f"lambda power {rep.lam_power:.3f}, bounded T_R"
    else:
        rep = growth_order_check(table, {c: claimed[c] for c in columns})
        ok = len(table.rows) == 64 and rep.passed
        detail = ", ".join(f"{f.column}: fitted {f.fitted_power:.3f} vs {f.claimed_power:g} "
                           f"(log power {f.log_power:g}), dev {f.deviation:.3f}"
                           for f in rep.fits)
    assert criterion(f"C12 growth {eq} d={dim}", ok, detail)
