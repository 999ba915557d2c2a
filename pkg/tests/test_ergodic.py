import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from circlelab import fixtures
from circlelab.circle_maps import Alphabet, PrimitiveMap, hyperbolic_matrix
from circlelab.errors import PreconditionError, StallError
from circlelab.ergodic import (
    EmpiricalMeasure,
    QuadratureMeasure,
    Spike,
    StepMeasure,
    UniformMeasure,
    circle_distance,
    contraction_along_walk,
    entropy,
    greedy_unity,
    kernel_integral,
    martingale_probe,
    random_orbit,
    spike_validate,
    stationarity_residual,
    uncovered_arcs,
)
from circlelab.metrics import contraction_coefficient
from oracles import kernel_quadrature

XS = np.arange(4096) / 4096


# step measures ----------------------------------------------------------

def test_entropy_examples():
    alph = fixtures.two_hyperbolic()
    four = StepMeasure.symmetric_letters(alph)
    assert entropy(four) == pytest.approx(math.log(4))
    assert entropy(StepMeasure([(alph.letter(0), 1.0)], alph)) == 0.0
    mu = StepMeasure([(alph.letter(0), 0.5), (alph.letter(1), 0.25), (alph.letter(1, -1), 0.25)], alph)
    assert entropy(mu) == pytest.approx(1.5 * math.log(2))


@pytest.mark.parametrize("probs", [[0.5, 0.4], [1.2, -0.2], []])
def test_step_measure_validation(probs):
    alph = fixtures.two_hyperbolic()
    with pytest.raises(PreconditionError):
        StepMeasure([(alph.letter(i), p) for i, p in enumerate(probs)], alph)


def test_symmetry_flag():
    alph = fixtures.two_hyperbolic()
    assert StepMeasure.symmetric_letters(alph).symmetric
    assert not StepMeasure.uniform([alph.letter(0), alph.letter(1)], alph).symmetric


# orbits -----------------------------------------------------------------

def test_identity_walk_is_constant():
    alph = fixtures.two_hyperbolic()
    mu = StepMeasure([(alph.identity(), 1.0)], alph)
    assert np.all(random_orbit(mu, 0.37, 1000, 0) == 0.37)


def test_orbit_is_deterministic():
    mu = StepMeasure.symmetric_letters(fixtures.moebius_trig())
    a = random_orbit(mu, 0.1, 20_000, 7)
    b = random_orbit(mu, 0.1, 20_000, 7)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, random_orbit(mu, 0.1, 20_000, 8))


def test_orbit_chunking_is_invisible():
    mu = StepMeasure.symmetric_letters(fixtures.moebius_trig())
    # chunks draw from one generator in sequence
    assert np.array_equal(random_orbit(mu, 0.1, 5000, 3), random_orbit(mu, 0.1, 5000, 3, chunk=777))


def test_orbit_matches_word_evaluation():
    alph = fixtures.moebius_trig()
    mu = StepMeasure.symmetric_letters(alph)
    orbit = random_orbit(mu, 0.2, 50, 11)
    # replay the same draws through the generic evaluator
    rng = np.random.default_rng(11)
    draws = rng.choice(len(mu.atoms), size=50, p=mu.probabilities)
    from circlelab.circle_maps import eval_value
    x = 0.2
    for d, got in zip(draws, orbit):
        x = float(eval_value(mu.words[d], alph, np.array([x]))[0]) % 1.0
        assert got == pytest.approx(x, abs=1e-12)


# stationarity -----------------------------------------------------------

def test_uniform_is_stationary_for_rotations():
    alph = Alphabet((PrimitiveMap.rotation(0.1234), PrimitiveMap.rotation(0.377)))
    mu = StepMeasure.symmetric_letters(alph)
    nu = QuadratureMeasure()
    res = stationarity_residual(mu, nu)
    assert res.residual <= res.half_width
    assert stationarity_residual(mu, UniformMeasure()).residual < 1e-14


def test_point_mass_is_not_stationary(two_hyp):
    mu = StepMeasure.symmetric_letters(two_hyp)
    res = stationarity_residual(mu, EmpiricalMeasure([0.3]))
    assert res.residual > 0.1


def test_residual_needs_enough_cells(two_hyp):
    with pytest.raises(PreconditionError):
        stationarity_residual(StepMeasure.symmetric_letters(two_hyp), UniformMeasure(), cells=16)


def test_ks_uniform_of_grid_points():
    n = 1000
    nu = EmpiricalMeasure((np.arange(n) + 0.5) / n)
    assert nu.ks_uniform() == pytest.approx(0.5 / n)


# martingale probe -------------------------------------------------------

def test_martingale_constant_test_function(two_hyp):
    mu = StepMeasure.symmetric_letters(two_hyp)
    rep = martingale_probe(mu, QuadratureMeasure(nodes=512), lambda y: np.ones_like(y), 4, 10, 0)
    assert np.allclose(rep.xi, 1.0, atol=1e-12)


def test_martingale_rotation_walk_is_flat():
    alph = fixtures.rotation_pair()
    mu = StepMeasure.symmetric_letters(alph)
    rep = martingale_probe(mu, QuadratureMeasure(nodes=512), lambda y: np.sin(2 * np.pi * y), 4, 20, 0)
    assert np.allclose(rep.xi, rep.xi[:, :1], atol=1e-9)


def test_martingale_proximal_walk_settles_to_diracs(two_hyp):
    mu = StepMeasure.symmetric_letters(two_hyp)
    psi = lambda y: np.sin(2 * np.pi * y)
    rep = martingale_probe(mu, QuadratureMeasure(nodes=512), psi, 40, 60, 1)
    assert rep.settled
    # Dirac limits spread like psi of a random point: std of sin(2 pi U) is 1/sqrt(2)
    assert rep.spread > 0.4


# contraction along walks ------------------------------------------------

def test_rotation_walk_contraction_is_half():
    mu = StepMeasure.symmetric_letters(fixtures.rotation_pair())
    st_ = contraction_along_walk(mu, 5, 10, 0)
    assert np.allclose(st_.values, 0.5, atol=2 / 256)


def test_horizon_one_is_single_generator(two_hyp):
    mu = StepMeasure.symmetric_letters(two_hyp)
    st_ = contraction_along_walk(mu, 8, 1, 3, grid_size=256)
    singles = {round(contraction_coefficient(w, two_hyp, 256).value, 12) for w in mu.words}
    assert {round(v, 12) for v in st_.values[:, 0]} <= singles


# kernel integrals and spikes --------------------------------------------

@pytest.mark.parametrize("y,a,r,power", [
    (0.5, 0.0, 0.1, 2.0), (0.3, 0.1, 0.05, 1.0), (0.95, 0.1, 0.1, 1.5), (0.12, 0.9, 0.2, 2.5),
])
def test_kernel_integral_against_quadrature(y, a, r, power):
    got = float(kernel_integral(np.array([y]), a, r, power)[0])
    assert got == pytest.approx(kernel_quadrature(y, a, r, power), rel=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1), st.floats(0.01, 0.3), st.floats(0.5, 3.0))
def test_kernel_integral_positive_outside_ball(a, r, power):
    y = np.array([a + 0.5])
    assert kernel_integral(y, a, r, power)[0] > 0


def test_constant_spike():
    sp = Spike(np.ones(4096), 0.1, 0.3, Q=1.0, theta=1.0, C=2.0)
    rep = spike_validate(sp)
    assert rep.margins["1"] <= 1 and rep.margins["3"] < 1
    # condition 2 is decided by the smallest kernel integral, at the antipode of a
    K = kernel_quadrature(0.8, 0.3, 0.1, 2.0)
    assert rep.margins["2"] == pytest.approx(1.0 / (0.1 * 2.0 * K), rel=1e-4)
    assert rep.passed == (rep.margins["2"] <= 1)


def test_strong_contraction_spike_passes():
    a = 0.3
    alph = Alphabet((PrimitiveMap.moebius(hyperbolic_matrix(3.0, a + 0.5)),))
    sp = Spike.from_word(alph.letter(0), alph, 0.05, a, 4096, Q=1.0, theta=1.0, C=10.0)
    assert spike_validate(sp).passed


def test_wide_ball_spike_fails_plateau_condition():
    a = 0.3
    alph = Alphabet((PrimitiveMap.moebius(hyperbolic_matrix(5.0, a + 0.5)),))
    sp = Spike.from_word(alph.letter(0), alph, 0.2, a, 4096, Q=1.0, theta=1.0, C=10.0)
    rep = spike_validate(sp)
    assert not rep.passed and rep.margins["1"] > 1


def test_second_bump_violates_tail_bound():
    d0 = circle_distance(XS, 0.3)
    d1 = circle_distance(XS, 0.7)
    zeta = 0.01 + np.exp(-(d0 / 0.02) ** 2) + 0.5 * np.exp(-(d1 / 0.01) ** 2)
    rep = spike_validate(Spike(zeta, 0.05, 0.3, Q=1.0, theta=1.0, C=4.0))
    assert not rep.passed
    assert rep.margins["2"] > 1


def test_spike_validation_rejects_coarse_grid():
    with pytest.raises(PreconditionError):
        spike_validate(Spike(np.ones(512), 0.1, 0.0))


# greedy unity -----------------------------------------------------------

def test_single_constant_spike_unity():
    res = greedy_unity([Spike(np.ones(4096), 0.5, 0.0, C=2.0)])
    assert res.coefficients == pytest.approx([1.0])
    assert res.final == pytest.approx(0.0, abs=1e-12)
    assert res.rounds == 1


def test_two_bumps_unity():
    amp = 0.2
    spikes = [Spike(0.5 + s * amp * np.cos(2 * np.pi * XS), 0.3, a, C=4.0) for s, a in ((1, 0.0), (-1, 0.5))]
    assert sum(sp.sup for sp in spikes) == pytest.approx(1.4)
    res = greedy_unity(spikes, 1e-3)
    assert res.final < 1e-3
    assert min(res.min_history[:-1]) > 0 and min(res.min_history) >= 0
    total = sum(c * sp.zeta / sp.sup for c, sp in zip(res.coefficients, spikes)) + res.residual
    assert np.allclose(total, 1.0, atol=1e-12)


def test_non_covering_family_stalls_with_gap():
    spikes = [Spike(np.ones(4096), 0.1, a) for a in (0.0, 0.2)]
    with pytest.raises(StallError, match="uncovered arcs"):
        greedy_unity(spikes)
    gaps = uncovered_arcs(spikes, 4096)
    assert len(gaps) == 1
    assert gaps[0][0] == pytest.approx(0.3, abs=2 / 4096) and gaps[0][1] == pytest.approx(0.9, abs=2 / 4096)


def test_unity_induces_probability_measure():
    # Poisson kernels: the K rotated copies sum to a constant up to rho^K, rho = (s^2 - 1) / (s^2 + 1)
    K, s, r = 8, 1.2, 0.2
    alph = Alphabet(tuple(PrimitiveMap.moebius(hyperbolic_matrix(s, k / K + 0.5)) for k in range(K)))
    spikes = [Spike.from_word(alph.letter(k), alph, r, k / K, 4096, Q=0.0, C=4.0) for k in range(K)]
    res = greedy_unity(spikes, 1e-3, alphabet=alph)
    assert res.measure is not None
    assert res.measure.probabilities.sum() == pytest.approx(1.0, abs=1e-15)
    # a rotation-symmetric family gives equal weights
    assert np.allclose(res.measure.probabilities, 1 / K, atol=1e-6)
