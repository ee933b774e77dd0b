import math

import numpy as np
import pytest

from pulsedamp.analysis import (DecayCertificate, Envelope, EnvelopeBound, ExponentialBound,
                                NoDecay, certify, check_times, construct_slow_solution,
                                energy_lower_bound, log_energy_slope, random_states,
                                riccati_profile_ok, second_order_residual,
                                smoothing_deviation_bound)
from pulsedamp.core import Constant, DampingProfile, Ramp, Spectrum, modal_energy
from pulsedamp.design import calibrate_bipulse
from pulsedamp.errors import HypothesisViolated

from oracles import EXP_MINUS_4, EXP_MINUS_8


def test_envelope_lookup_and_validation():
    env = Envelope((0.0, 1.0, 2.0), (1.0, 0.5, 0.25))
    assert [env(t) for t in (-1.0, 0.0, 0.99, 1.0, 5.0)] == [1.0, 1.0, 1.0, 0.5, 0.25]
    with pytest.raises(ValueError, match="invalid envelope"):
        Envelope((0.0, 0.0), (1.0, 1.0))
    with pytest.raises(ValueError, match="invalid envelope"):
        Envelope((0.0, 1.0), (1.0, 2.0))
    with pytest.raises(ValueError, match="invalid envelope"):
        Envelope((0.0, 1.0), (1.0, 0.0))
    f = Envelope.from_function(lambda t: math.exp(-t), [0, 1, 2])
    assert f(1.5) == pytest.approx(math.exp(-1))


def test_bounds():
    b = ExponentialBound(2.0, 1.0)
    assert b(0.5) == 1.0 and b(2.0) == pytest.approx(math.exp(-2))
    e = EnvelopeBound(lambda t: 3.0 * math.exp(-t), start=1.0)
    assert e(0.5) == 1.0 and e(1.0) == 1.0 and e(5.0) == pytest.approx(3 * math.exp(-5))
    assert NoDecay()(10.0) == 1.0
    for x in (b, e, NoDecay()):
        assert isinstance(x.describe(), str)


def test_random_states_have_unit_energy_and_are_reproducible():
    lams = [1.0, 2.0, 5.0]
    x = random_states(lams, 16, seed=3)
    assert x.shape == (3, 2, 16)
    np.testing.assert_allclose(modal_energy(x, lams).sum(axis=0), 1.0, rtol=1e-14)
    np.testing.assert_array_equal(x, random_states(lams, 16, seed=3))
    assert not np.array_equal(x, random_states(lams, 16, seed=4))


def test_check_times_are_segment_boundaries():
    p = DampingProfile((Constant(1.0, 0.5), Constant(0.0, 1.0)), periodic=True)
    np.testing.assert_allclose(check_times(p, 3.0), [0.5, 1.5, 2.0, 3.0])


def test_no_decay_claim_always_verifies():
    p = DampingProfile((Constant(0.0, 1.0), Constant(3.0, 0.2)), periodic=True)
    c = certify(p, Spectrum((1.0, 2.0)), DecayCertificate(NoDecay()), 6.0, batch=8)
    assert c.verified and c.measured_margin >= 1.0 - 1e-12
    assert c.batch == 8 and len(c.times) == len(c.worst_ratio)


def test_undamped_oscillator_falsifies_any_decay():
    p = DampingProfile((Constant(0.0, 1.0),), periodic=True)
    c = certify(p, Spectrum((1.0,)), DecayCertificate(ExponentialBound(0.1, 0.0)), 5.0, batch=4)
    assert not c.verified
    assert c.measured_margin == pytest.approx(math.exp(-0.5), rel=1e-12)


def test_certify_with_explicit_states():
    p = DampingProfile((Constant(1.0, 1.0),), periodic=True)
    x = np.array([[[0.0], [1.0]]])
    c = certify(p, Spectrum((1.0,)), DecayCertificate(NoDecay()), 2.0, states=x)
    assert c.seed is None and c.batch == 1
    with pytest.raises(ValueError):
        certify(p, Spectrum((1.0,)), DecayCertificate(NoDecay()), 0.0)


def test_energy_lower_bound_values():
    zero = DampingProfile((Constant(0.0, 1.0),), periodic=True)
    assert energy_lower_bound(zero, 7.0) == 1.0
    one = DampingProfile((Constant(1.0, 1.0),), periodic=True)
    assert energy_lower_bound(one, 1.0) == pytest.approx(EXP_MINUS_4, rel=1e-14)
    block = calibrate_bipulse(1.0, 1.0)
    bp = block.profile()
    assert energy_lower_bound(bp, block.block_length) == pytest.approx(EXP_MINUS_8, rel=1e-12)
    with pytest.raises(ValueError):
        energy_lower_bound(one, -1.0)


def test_smoothing_deviation_bound_values():
    assert smoothing_deviation_bound(1.0, 0.0, 1.0) == 2.0
    assert smoothing_deviation_bound(3.0, 2.0, 0.0) == 0.0
    assert smoothing_deviation_bound(1.0, 1.0, 0.1) == pytest.approx(0.02 * math.e**2)
    with pytest.raises(ValueError):
        smoothing_deviation_bound(-1.0, 1.0, 1.0)


@pytest.fixture(scope="module")
def slow_critical():
    p = DampingProfile((Constant(1.0, 1.0),), periodic=True)
    return p, construct_slow_solution(1.0, p, T=0.0, t_end=25.0)


def test_slow_solution_lower_envelope(slow_critical):
    p, sol = slow_critical
    assert sol.t_plus == 1.0
    assert sol.sandwich_ok
    for t in (2.0, 5.0, 10.0, 20.0):
        i = int(np.argmin(np.abs(sol.times - t)))
        assert sol.times[i] == pytest.approx(t, abs=1e-12)
        assert abs(sol.rescaled()[i]) >= t * math.exp(-t)


def test_slow_solution_solves_the_equation(slow_critical):
    p, sol = slow_critical
    assert second_order_residual(sol, p) <= 1e-7
    # energy of t e^{-t} decays like e^{-2t}: slope near -2, never faster
    slope = log_energy_slope(sol, 10.0, 25.0)
    assert -2.05 < slope < -1.8


def test_slow_solution_sandwich_for_stronger_damping():
    p = DampingProfile((Constant(2.0, 1.0),), periodic=True)
    sol = construct_slow_solution(1.0, p, t_end=20.0)
    assert sol.sandwich_ok
    assert np.all(sol.phi >= -1e-12) and np.all(sol.phi <= 1.0 - 1.0 / sol.times + 1e-9)


def test_slow_solution_rejects_underdamping():
    p = DampingProfile((Constant(2.0, 1.0), Constant(0.5, 1.0)), periodic=True)
    with pytest.raises(HypothesisViolated, match="overdamping hypothesis violated"):
        construct_slow_solution(1.0, p)
    # a profile that is underdamped only before T is fine
    q = DampingProfile((Constant(0.0, 2.0), Ramp(1.0, 0.5, 2.0)), periodic=False)
    assert riccati_profile_ok(q, 1.0, 2.0)
    assert not riccati_profile_ok(q, 1.0, 1.0)
    sol = construct_slow_solution(1.0, q, T=2.0, t_end=12.0)
    assert sol.t_plus == 2.0 and sol.sandwich_ok
    assert second_order_residual(sol, q) <= 1e-7
