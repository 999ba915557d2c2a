import numba
import numpy as np
import pytest

from circlelab import ergodic, fixtures  # noqa: F401  (ergodic picks the numba threading layer)
from circlelab.circle_maps import Alphabet, PrimitiveMap, hyperbolic_matrix

# criterion number -> (title, passed); filled by test_acceptance
ACCEPTANCE: dict = {}


def pytest_configure(config):
    numba.set_num_threads(1)


def pytest_runtest_logreport(report):
    # a failing setup counts too; parametrized cases of one criterion are combined
    if "test_acceptance.py" not in report.nodeid or not (report.when == "call" or report.failed):
        return
    name = report.nodeid.split("::")[-1].split("[")[0]
    if name.startswith("test_criterion_"):
        num = int(name.split("_")[2])
        title = name.split("_", 3)[3].replace("_", " ")
        ok = ACCEPTANCE.get(num, (title, True))[1]
        ACCEPTANCE[num] = (title, ok and report.passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        title, ok = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {title}")


@pytest.fixture
def mixed_alphabet():
    """Hyperbolic Moebius map, trigonometric perturbation and a rotation."""
    return Alphabet((PrimitiveMap.moebius(hyperbolic_matrix(1.5, 0.1)),
                     PrimitiveMap.trig(0.05, 0.3), PrimitiveMap.rotation(0.2)))


@pytest.fixture
def two_hyp():
    return fixtures.two_hyperbolic()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
