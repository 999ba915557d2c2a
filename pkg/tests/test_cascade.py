import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from circlelab import cascade as cz
from circlelab import fixtures
from circlelab.circle_maps import Alphabet, Arc, PrimitiveMap, eval_value
from circlelab.errors import InvariantError, PreconditionError

C_CAL = 1.97


# parameters -------------------------------------------------------------

@pytest.mark.parametrize("lam,n", [(0.04, 1), (0.5, 5), (0.2, 2), (0.9, 29)])
def test_select_params_minimal_n(lam, n):
    p = cz.select_params(lam, 0.2, 0.01)
    assert p.n == n
    assert p.condition_a() and p.condition_c()


def test_select_params_eps_is_shrunk_supremum():
    p = cz.select_params(0.5, 0.2, 0.01, C=C_CAL, delta=0.1)
    k = 0.5 ** -5 + 1
    assert p.eps * max(k * C_CAL, k) == pytest.approx(0.9 * 0.1)


@pytest.mark.parametrize("lam,a,eps0", [(1.0, 0.2, 0.01), (0.0, 0.2, 0.01), (0.5, 0.2, 0.02), (0.5, 0.2, 0.0)])
def test_select_params_rejects(lam, a, eps0):
    with pytest.raises(PreconditionError):
        cz.select_params(lam, a, eps0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 0.95), st.floats(0.05, 1.0))
def test_minimal_n_is_minimal(lam, a):
    eps0 = a / 20
    n = cz.minimal_n(lam, a, eps0)
    cfg = cz.CascadeConfig(a, eps0, 1e-6, lam, n, 1.0)
    assert cfg.condition_a()
    assert lam ** n < 1 / 20


def test_appendix_condition():
    assert cz.select_params(0.5, 0.2).appendix_condition()
    assert not cz.CascadeConfig(0.2, 0.01, 1e-4, 0.8, 5, 1.0).appendix_condition()


# word-mode levels -------------------------------------------------------

def test_abelian_input_degenerates_at_level_one():
    alph = fixtures.commuting_rotations()
    levels = cz.build_levels([alph.letter(0), alph.letter(1)], alph, 4)
    assert len(levels) == 2
    assert levels[1].degenerate and not levels[0].degenerate


def test_moebius_trig_levels_nonempty():
    alph = fixtures.moebius_trig()
    levels = cz.build_levels([alph.letter(0), alph.letter(1)], alph, 4, prune_cap=16)
    assert [lv.k for lv in levels] == [0, 1, 2, 3, 4]
    assert all(0 < len(lv.members) <= 16 for lv in levels[1:])
    # provenance points at earlier levels only
    for lv in levels[1:]:
        for (l1, _, s1), (l2, _, s2) in lv.provenance:
            assert l1 == lv.k - 1 and l2 in (lv.k - 1, lv.k - 2)
            assert s1 in (1, -1) and s2 in (1, -1)


def test_s0_below_threshold_rejected():
    alph = Alphabet((PrimitiveMap.rotation(1e-12), PrimitiveMap.rotation(0.1)))
    with pytest.raises(PreconditionError):
        cz.build_levels([alph.letter(0), alph.letter(1)], alph, 2)


def chart_alphabet(eps=1e-3):
    alph, S0, F = cz.linear_chart_fixture(eps)
    return alph, S0, F


def test_renormalize_level_zero_unchanged_and_inline_agrees():
    alph, S0, F = chart_alphabet()
    levels = cz.build_levels(S0, alph, 2, prune_cap=4)
    ren = cz.renormalize_levels(levels, F, 5, alph)
    inl = cz.inline_levels(levels, F, 5)
    assert [m.word for m in ren[0].members] == [m.word for m in levels[0].members]
    for a, b in zip(ren, inl):
        assert [m.word for m in a.members] == [m.word for m in b.members]


def test_renormalized_level_one_is_rescaled_commutator():
    alph, S0, F = chart_alphabet()
    n, lam = 5, 0.5
    levels = cz.build_levels(S0, alph, 1, prune_cap=4)
    ren = cz.renormalize_levels(levels, F, n, alph)
    xs = np.linspace(-0.2, 0.2, 21)
    for raw, r in zip(levels[1].members, ren[1].members):
        direct = eval_value(raw.word, alph, lam ** n * xs) / lam ** n
        assert np.allclose(eval_value(r.word, alph, xs), direct, rtol=0, atol=1e-12)


def test_renormalize_rejects_non_contracting_F():
    alph, S0, _ = chart_alphabet()
    levels = cz.build_levels(S0, alph, 1, prune_cap=4)
    with pytest.raises(PreconditionError):
        cz.renormalize_levels(levels, alph.letter(3, -1), 5, alph)


# chart cascade ----------------------------------------------------------

def test_chart_cascade_germs_match_spelled_words():
    alph, S0, F = chart_alphabet()
    levels = cz.chart_cascade(S0, alph, F, 5, 2, prune_cap=4)
    xs = np.linspace(-0.2, 0.2, 33)
    from circlelab import germs as G
    for m in levels[1].members:
        germ = G.evaluate(m.germ, 0.2, xs, 0)[0]
        spelled = eval_value(m.word, alph, xs) - xs
        assert np.allclose(germ, spelled, rtol=0, atol=1e-14)


def test_chart_cascade_requires_chart_dilation():
    alph = fixtures.moebius_trig()
    with pytest.raises(PreconditionError):
        cz.chart_cascade([alph.letter(1)], alph, alph.letter(1), 5, 2)


@pytest.fixture(scope="module")
def fixture_run():
    params = cz.select_params(0.5, 0.2, None, C_CAL, 0.1, 8)
    return cz.run_linear_chart(params, 16, 512)


def test_linear_chart_decay_rows_pass(fixture_run):
    report, levels, _ = fixture_run
    assert len(report.rows) == 8
    assert not report.failed
    assert all(r.ratio <= 1 for r in report.rows)
    assert "k,word_len,c0" in report.to_csv()


def test_oversized_eps_fails():
    params = cz.select_params(0.5, 0.2, None, C_CAL, 0.1, 4)
    report, _, _ = cz.run_linear_chart(params, 8, 256, eps_scale=10.0)
    assert report.failed
    assert any("condition C violated" in r.notes for r in report.rows)


def test_verify_decay_flags_degenerate_level():
    alph = fixtures.commuting_rotations()
    levels = cz.build_levels([alph.letter(0), alph.letter(1)], alph, 3)
    report = cz.verify_decay(levels, cz.select_params(0.5, 0.2), alph)
    assert report.degenerate_level == 1 and report.failed
    assert report.rows[0].status == "DEGENERATE"


# commutator lemmas ------------------------------------------------------

def test_lemmas_two_rotations():
    alph = Alphabet((PrimitiveMap.rotation(0.004), PrimitiveMap.rotation(-0.003)))
    rep = cz.check_commutator_lemmas(alph.letter(0), alph.letter(1), alph, Arc(-0.2, 0.2), 0.01, C_CAL, 0.01)
    assert rep.lhs_c1 == pytest.approx(0.0, abs=1e-15) and rep.lhs_d2 == 0.0
    assert rep.passed


def test_lemmas_equal_maps():
    alph = Alphabet((PrimitiveMap.trig(0.001, 0.0002),))
    f = alph.letter(0)
    rep = cz.check_commutator_lemmas(f, f, alph, Arc(-0.2, 0.2), 0.01, C_CAL, 0.01)
    assert rep.lhs_c1 == 0.0 and rep.lhs_d2 == 0.0


def test_lemmas_reject_pairs_outside_ball():
    alph = Alphabet((PrimitiveMap.trig(0.1, 0.2), PrimitiveMap.rotation(0.001)))
    with pytest.raises(PreconditionError):
        cz.check_commutator_lemmas(alph.letter(0), alph.letter(1), alph, Arc(-0.2, 0.2), 0.01, C_CAL, 0.01)


def test_random_pairs_satisfy_lemmas(rng):
    arc = Arc(-0.2, 0.2)
    for _ in range(20):
        alph, f1, f2 = cz.random_near_identity_pair(rng, 0.01, arc)
        rep = cz.check_commutator_lemmas(f1, f2, alph, arc, 0.01, C_CAL, 0.01)
        assert rep.passed


@pytest.mark.parametrize("kind", ["trig", "moebius", "rotation"])
def test_scaled_primitive_hits_target(kind):
    arc = Arc(-0.2, 0.2)
    p = cz.scaled_primitive(kind, (0.5, 1.0, -0.3), 0.004, arc)
    from circlelab.metrics import cm_distance
    alph = Alphabet((p,))
    assert cm_distance(alph.letter(0), alph, arc, 2, 256).value == pytest.approx(0.004, rel=1e-6)


def test_sl2_exp_determinant():
    for X in ([[0.3, 1.0], [0.5, -0.3]], [[0.0, 1.0], [-1.0, 0.0]], [[0.0, 1.0], [0.0, 0.0]]):
        assert np.linalg.det(cz.sl2_exp(X)) == pytest.approx(1.0)


def test_invariant_check_on_conditions():
    # conditions are revalidated; a broken configuration cannot be produced
    with pytest.raises((InvariantError, PreconditionError)):
        cz.select_params(0.5, 0.2, 0.01, C=-1.0)
