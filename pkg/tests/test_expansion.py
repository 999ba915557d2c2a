import functools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from circlelab import fixtures
from circlelab.circle_maps import Alphabet, Arc, PrimitiveMap, eval_jet
from circlelab.errors import DegenerateError, PreconditionError
from circlelab.expansion import (
    ScanResult,
    alphabet_log_lipschitz,
    build_cover,
    d2_growth_check,
    expandability_scan,
    holder_exponent,
    m_bar,
    magnify,
    min_distortion_partition,
    reduced_words,
)
from oracles import power_law_pairs


@pytest.fixture(scope="module")
def two_hyp_cover():
    alph = fixtures.two_hyperbolic()
    scan = expandability_scan(alph, 6, 512)
    return scan, build_cover(scan, alph, 0.01)


def dilation_cover(factor=2.0):
    """Synthetic cover: one chart letter with derivative ``factor`` everywhere."""
    alph = Alphabet((PrimitiveMap.dilation(factor),))
    n = 256
    xs = np.arange(n) / n
    log_d1 = np.full((1, n), math.log(factor))
    scan = ScanResult(xs, np.exp(log_d1[0]), np.zeros(n, dtype=int), [alph.letter(0)], log_d1, 1)
    return build_cover(scan, alph, 0.01)


# scan -------------------------------------------------------------------

@pytest.mark.parametrize("cap,count", [(1, 4), (2, 16), (3, 52)])
def test_reduced_word_count(cap, count):
    # 4 * 3^(l-1) reduced words of length l over two generators
    alph = fixtures.two_hyperbolic()
    assert sum(1 for _ in reduced_words(alph, cap)) == count


def test_rotation_is_nowhere_expandable():
    alph = fixtures.rotation_pair()
    scan = expandability_scan(alph, 4, 128)
    assert scan.non_expandable.size == 128
    with pytest.raises(DegenerateError, match="non-expandable"):
        build_cover(scan, alph)


def test_single_hyperbolic_expands_only_near_repeller():
    alph = Alphabet((PrimitiveMap.moebius(np.diag([2.0, 0.5])),))
    scan = expandability_scan(alph, 6, 256)
    assert scan.max_d1[0] > 1.0           # repelling point 0
    # attracting point 1/2: every positive power has derivative 4^-k there
    powers = [i for i, w in enumerate(scan.words) if len(w.letters) == 1 and w.letters[0][1] > 0]
    assert len(powers) == 6
    assert np.all(np.exp(scan.log_d1[powers, 128]) < 1.0)


def test_two_hyperbolic_all_expandable(two_hyp_cover):
    scan, _ = two_hyp_cover
    assert scan.all_expandable


def test_scan_matches_direct_jets():
    alph = fixtures.two_hyperbolic()
    scan = expandability_scan(alph, 3, 64)
    for w, row in zip(scan.words[::7], scan.log_d1[::7]):
        assert np.allclose(row, np.log(eval_jet(w, alph, scan.xs).d1), atol=1e-12)


def test_scan_cap_limit():
    with pytest.raises(PreconditionError):
        expandability_scan(fixtures.two_hyperbolic(), 9)


# cover ------------------------------------------------------------------

def test_two_hyperbolic_cover(two_hyp_cover):
    _, cover = two_hyp_cover
    assert 3 <= cover.s <= 12
    assert cover.m1 > 1.05
    assert cover.M1 >= cover.m1 and cover.L > 0
    for U, f in zip(cover.intervals, cover.expanders):
        assert np.min(eval_jet(f, cover.alphabet, U.grid(512)).d1) >= cover.m1 - 1e-9


def test_full_expander_is_split_into_three():
    cover = dilation_cover()
    assert cover.s == 3
    assert cover.m1 == pytest.approx(2.0) and cover.M1 == pytest.approx(2.0)


def test_cover_serializes(two_hyp_cover):
    _, cover = two_hyp_cover
    d = cover.to_dict()
    assert len(d["intervals"]) == cover.s and d["m1"] == cover.m1


# magnification ----------------------------------------------------------

def test_magnify_near_L_takes_one_step():
    cover = dilation_cover()
    mag = magnify(cover, Arc(0.2, 0.2 + 0.9 * cover.L))
    assert mag.r == 1 and mag.sandwich_ok and mag.r_bound_ok


def test_magnify_step_count_from_sandwich():
    cover = dilation_cover()
    mag = magnify(cover, Arc(0.3, 0.3 + cover.L / cover.m1 ** 3 * 0.9))
    assert 3 <= mag.r <= 4
    assert mag.r <= mag.r_bound


def test_magnify_rejects_long_source(two_hyp_cover):
    _, cover = two_hyp_cover
    with pytest.raises(PreconditionError):
        magnify(cover, Arc(0.1, 0.1 + cover.L))


@pytest.mark.parametrize("e", range(1, 11))
def test_magnify_dyadic_sources(two_hyp_cover, e):
    _, cover = two_hyp_cover
    length = cover.L * 2.0 ** -e
    mb = m_bar(cover)
    for lo in (0.03, 0.41, 0.77):
        mag = magnify(cover, Arc(lo, lo + length))
        assert mag.sandwich_ok and mag.r_bound_ok
        assert d2_growth_check(mag, cover, mbar=mb).passed


def test_single_step_d2_bound(two_hyp_cover):
    _, cover = two_hyp_cover
    # 0.95 L times m1 > 1.05 already reaches L
    mag = magnify(cover, Arc(0.5, 0.5 + 0.95 * cover.L))
    assert mag.r == 1
    d2 = d2_growth_check(mag, cover)
    assert d2.sup_d2 <= m_bar(cover) * cover.M1 ** 2


@functools.lru_cache(maxsize=1)
def cached_cover():
    alph = fixtures.two_hyperbolic()
    return build_cover(expandability_scan(alph, 6, 512), alph, 0.01)


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 1), st.floats(-9, -0.01))
def test_magnify_sandwich_property(lo, log_frac):
    cover = cached_cover()
    mag = magnify(cover, Arc(lo, lo + cover.L * math.exp(log_frac)))
    assert mag.sandwich_ok and mag.r_bound_ok


# distortion partition ---------------------------------------------------

@pytest.mark.parametrize("k", [1, 2, 3])
def test_rotation_partition_has_zero_distortion(k):
    alph = fixtures.commuting_rotations()
    g = alph.word([(0, 1), (1, -2)])
    r = min_distortion_partition(g, alph, Arc(-0.2, 0.2), k, 4 ** k, 1.0)
    assert r.distortion == pytest.approx(0.0, abs=1e-14) and r.passed


def test_partition_bound_decreasing():
    alph = fixtures.two_hyperbolic()
    g = alph.word([(0, 1), (1, -1)])
    n = 3
    bounds = [min_distortion_partition(g, alph, Arc(-0.2, 0.2), k, 4 ** k + 2 * n * k, 1.0).bound
              for k in range(2, 7)]
    assert all(b2 < b1 for b1, b2 in zip(bounds, bounds[1:]))


def test_partition_sum_rule():
    alph = fixtures.two_hyperbolic()
    C = alphabet_log_lipschitz(alph)
    g = alph.word([(0, 2), (1, -1), (0, -1)])
    r = min_distortion_partition(g, alph, Arc(-0.2, 0.2), 3, 4, C)
    assert r.sum_rule_ok


def test_log_lipschitz_of_rotations_is_zero():
    assert alphabet_log_lipschitz(fixtures.commuting_rotations()) == 0.0


# Hoelder exponent -------------------------------------------------------

def test_identity_holder_exponent():
    est = holder_exponent(power_law_pairs(1.0))
    assert est.alpha == pytest.approx(1.0, abs=0.01)


@pytest.mark.parametrize("beta", [0.3, 0.5, 0.8, 1.0])
def test_power_law_recovery(beta):
    est = holder_exponent(power_law_pairs(beta))
    assert abs(est.alpha - beta) <= 0.02
    assert est.band[0] <= est.alpha <= est.band[1]


def test_holder_lower_bound_from_constants():
    est = holder_exponent(power_law_pairs(0.5), {"m1": 1.3, "M2": 2.0})
    cbar = math.log(2.0 / 1.3) / math.log(1.3)
    assert est.lower_bound == pytest.approx(1 / (1 + cbar))


@pytest.mark.parametrize("pairs", [
    power_law_pairs(0.5, count=10),
    power_law_pairs(0.5, lo=1e-3, hi=1e-1),
])
def test_holder_rejects_thin_data(pairs):
    with pytest.raises(PreconditionError):
        holder_exponent(pairs)
