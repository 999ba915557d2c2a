"""Acceptance criteria 1-11.

Each test is named ``test_criterion_NN_<title>``; the conftest hook prints one
PASS/FAIL line per criterion at the end of the session.  Run standalone with
``python3 tests/test_acceptance.py``.
"""
import re
import time
from pathlib import Path

import numpy as np
import pytest

from circlelab import cascade as cz
from circlelab import cli
from circlelab import config as cfgmod
from circlelab.circle_maps import Alphabet, Arc, PrimitiveMap, eval_jet, hyperbolic_matrix
from circlelab.expansion import holder_exponent
from oracles import mp_word, power_law_pairs, richardson_derivatives

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
C_CAL = 1.97


def outcome(name: str, **params):
    cfg = cfgmod.load(CONFIGS / f"{name}.yaml")
    cfg["params"].update(params)
    return cli.RUNNERS[cfg["scenario"]](cfg)


def checks(out) -> dict:
    return {name: (ok, detail) for name, ok, detail in out.checks}


def test_criterion_01_cascade_decay():
    params = cz.select_params(0.5, 0.2, None, C_CAL, 0.1, 8)
    t0 = time.perf_counter()
    report, _, _ = cz.run_linear_chart(params, 16, 512)
    elapsed = time.perf_counter() - t0
    assert [r.k for r in report.rows] == list(range(1, 9))
    for r in report.rows:
        if r.k % 2 == 0:
            assert r.bound == pytest.approx(params.eps / 2 ** (r.k // 2))
            assert r.c2 <= r.bound + r.slack
    assert not report.failed
    assert elapsed < 60


def test_criterion_02_theta_decay():
    params = cz.select_params(0.5, 0.2, None, C_CAL, 0.01, 8)
    report, _, _ = cz.run_linear_chart(params, 16, 512)
    ks, c2 = report.column("k"), report.column("c2")
    scaled = (c2 / 0.4 ** ks)[(ks >= 4) & (ks <= 8)]
    assert len(scaled) == 5
    assert np.all(np.diff(scaled) <= 0)


def test_criterion_03_commutator_lemmas():
    C, ratios = cz.calibrate_commutator_constant(500, seed=0)
    assert len(ratios) == 500 and C > 0
    arc = Arc(-0.2, 0.2)
    rng = np.random.default_rng(1)
    d2_bad = c1_bad = 0
    for _ in range(500):
        alph, f1, f2 = cz.random_near_identity_pair(rng, 0.01, arc)
        rep = cz.check_commutator_lemmas(f1, f2, alph, arc, 0.01, C, 0.01, 256)
        assert rep.evaluable
        d2_bad += not rep.d2_ok
        c1_bad += not rep.loss_ok
    assert d2_bad == 0 and c1_bad == 0


def test_criterion_04_appendix_bootstrap():
    params = cz.select_params(0.5, 0.2, None, C_CAL, 0.1, 6)
    assert params.lam ** (2 * params.n) < 0.1
    report, _, _ = cz.run_linear_chart(params, 16, 512, orders=(0, 1, 2, 3))
    rows = [r for r in report.rows if 2 <= r.k <= 6]
    assert len(rows) == 5
    assert all(r.d3_ratio <= 0.9 for r in rows)
    assert not report.failed


def test_criterion_05_jet_correctness():
    alph = Alphabet((PrimitiveMap.moebius(hyperbolic_matrix(1.5, 0.1)),
                     PrimitiveMap.trig(0.05, 0.3), PrimitiveMap.rotation(0.2)))
    rng = np.random.default_rng(0)
    worst = [0.0, 0.0, 0.0]
    for _ in range(50):
        length = int(rng.integers(1, 13))
        letters = [(int(rng.integers(3)), int(rng.choice([-1, 1]))) for _ in range(length)]
        w = alph.word(letters)
        x = float(rng.uniform())
        jet = eval_jet(w, alph, np.array([x]))
        ref = richardson_derivatives(lambda t: mp_word(alph, w.letters, t), x)
        for i, (got, want) in enumerate(zip((jet.d1[0], jet.d2[0], jet.d3[0]), ref)):
            worst[i] = max(worst[i], abs(float(got) - want) / max(abs(want), 1e-12))
    assert worst[0] < 1e-6 and worst[1] < 1e-6 and worst[2] < 1e-4


def test_criterion_06_distortion_partition():
    out = outcome("distortion_two_hyperbolic")
    got = checks(out)
    for k in range(2, 7):
        assert got[f"partition_k{k}"][0], got[f"partition_k{k}"][1]
    assert got["bound_decreasing"][0]


def test_criterion_07_magnification():
    out = outcome("expansion_two_hyperbolic", sources=100)
    got = checks(out)
    for name in ("cover", "magnify_sandwich", "magnify_r_bound", "d2_growth"):
        assert got[name][0], (name, got[name][1])
    assert len(out.tables["magnify.csv"].splitlines()) == 101


@pytest.mark.parametrize("beta", [0.3, 0.5, 0.8, 1.0])
def test_criterion_08_holder_recovery(beta):
    est = holder_exponent(power_law_pairs(beta))
    assert abs(est.alpha - beta) <= 0.02


def test_criterion_09_walk_stationarity():
    t0 = time.perf_counter()
    rot = checks(outcome("walk_rotation", length=1_000_000))
    assert rot["ks_uniform"][0], rot["ks_uniform"][1]
    hyp = checks(outcome("walk_two_hyperbolic", length=1_000_000, residual_max=3.0,
                         contraction_horizon=50, contraction_max=0.1))
    assert hyp["stationarity"][0], hyp["stationarity"][1]
    assert hyp["contraction"][0], hyp["contraction"][1]
    assert time.perf_counter() - t0 < 300


def test_criterion_10_greedy_unity():
    out = outcome("spikes_poisson", tol=1e-3, samples=1_000_000, residual_max=3.0)
    got = checks(out)
    assert got["greedy_unity"][0], got["greedy_unity"][1]
    assert got["induced_measure_stationarity"][0], got["induced_measure_stationarity"][1]
    mins = [float(line.split(",")[2]) for line in out.tables["unity.csv"].splitlines()[1:]]
    assert min(mins) >= 0


def test_criterion_11_negative_controls(tmp_path):
    neg = CONFIGS / "negative"
    codes = {name: cli.main(["cascade" if name.startswith("cascade") else "spikes",
                             "--config", str(neg / f"{name}.yaml"), "--out", str(tmp_path / name)])
             for name in ("cascade_abelian", "cascade_eps_x10", "spikes_noncovering")}
    assert all(code != 0 for code in codes.values()), codes
    abelian = (tmp_path / "cascade_abelian" / "cascade.csv").read_text().splitlines()
    assert abelian[2].startswith("1,") and "DEGENERATE" in abelian[2]
    eps = (tmp_path / "cascade_eps_x10" / "cascade.csv").read_text()
    assert "FAILED" in eps
    summary = (tmp_path / "spikes_noncovering" / "summary.txt").read_text()
    assert "StallError" in summary and "uncovered arcs" in summary
    gap = re.search(r"uncovered arcs \[\(([0-9.]+), ([0-9.]+)\)", summary)
    assert gap and float(gap.group(2)) - float(gap.group(1)) > 0.1


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
