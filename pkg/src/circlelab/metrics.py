"""C^m distances to the identity, distortion, rotation numbers and contraction.

Sup norms are grid maxima with a heuristic slack: the true sup of a quantity
q on the arc lies in [grid max, grid max + sup|q'| h / 2], where sup|q'| is
itself estimated on the grid.  No directed rounding is attempted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .circle_maps import (
    Arc,
    GroupWord,
    _resolve,
    eval_jet,
    eval_log_d1,
    eval_value,
    find_fixed_points,
)
from .errors import DegenerateError, PreconditionError


@dataclass(frozen=True)
class Tolerances:
    """Engineering tolerances; every value is echoed into run manifests."""

    cm_min_grid: int = 128
    contraction_min_grid: int = 256
    nonidentity_c0: float = 1e-9
    germ_nonidentity_rel: float = 1e-9
    periodic_tol: float = 1e-10
    slack_tolerance: float = 1e-12

    def as_dict(self) -> dict:
        return dict(self.__dict__)


DEFAULT_TOLERANCES = Tolerances()


@dataclass(frozen=True)
class CmDistance:
    """Grid estimate of ||f - id||_m on an arc (sum of per-order sups)."""

    m: int
    value: float
    slack: float
    arc: Arc
    grid_size: int
    per_order: tuple = field(default=())

    @property
    def upper(self) -> float:
        return self.value + self.slack


@dataclass(frozen=True)
class DistortionValue:
    value: float
    arc: Arc
    grid_size: int
    slack: float = 0.0


def cm_from_deviations(devs, arc: Arc, m: int, grid_size: int, next_order=None) -> CmDistance:
    """Assemble a CmDistance from sampled deviations [f - id, f' - 1, f'', ...].

    ``devs`` must contain orders 0..m; order m + 1 is taken from ``devs`` when
    present, else from ``next_order`` (an explicit bound on |D^(m+1) f|).
    """
    h = arc.length / grid_size
    sups = [float(np.max(np.abs(devs[i]))) for i in range(m + 1)]
    lips = []
    for i in range(m + 1):
        if i + 1 < len(devs):
            lips.append(float(np.max(np.abs(devs[i + 1]))))
        elif next_order is not None:
            lips.append(float(next_order))
        else:
            lips.append(float(np.max(np.abs(np.diff(devs[i])))) / h)
    value = float(sum(sups))
    slack = float(sum(lips)) * h / 2.0
    return CmDistance(m, value, slack, arc, grid_size, tuple(sups))


def _jet_deviations(word, alphabet, xs):
    jet = eval_jet(word, alphabet, xs)
    return [jet.value - xs, jet.d1 - 1.0, jet.d2, jet.d3]


def cm_distance(word: GroupWord, generators, arc: Arc, m: int, grid_size: int = 512) -> CmDistance:
    """||word - id||_m on ``arc`` sampled on ``grid_size`` cells.

    Raises ChartEscapeError (from evaluation) when a chart-local word leaves
    its chart; this is distinct from numeric failures.
    """
    if not 0 <= m <= 3:
        raise PreconditionError("m must be in {0, 1, 2, 3}")
    if grid_size < DEFAULT_TOLERANCES.cm_min_grid:
        raise PreconditionError(f"grid_size must be >= {DEFAULT_TOLERANCES.cm_min_grid}")
    alphabet = _resolve(word, generators)
    xs = arc.grid(grid_size)
    devs = _jet_deviations(word, alphabet, xs)
    return cm_from_deviations(devs[: m + 2], arc, m, grid_size)


def cm_distance_germ(germ, arc: Arc, m: int, grid_size: int = 512) -> CmDistance:
    """Same quantity for a chart germ; D^(m+1) is exact, not a difference quotient."""
    if not 0 <= m <= 3:
        raise PreconditionError("m must be in {0, 1, 2, 3}")
    xs = arc.grid(grid_size)
    devs = germ.deviations(xs, m + 1)
    return cm_from_deviations(devs, arc, m, grid_size)


def distortion(word: GroupWord, generators, arc: Arc, grid_size: int = 512) -> DistortionValue:
    """max log f' - min log f' over the grid (log-derivative accumulated per letter)."""
    alphabet = _resolve(word, generators)
    xs = arc.grid(grid_size)
    _, logd = eval_log_d1(word, alphabet, xs)
    h = arc.length / grid_size
    lip = float(np.max(np.abs(np.diff(logd)))) / h if grid_size > 0 else 0.0
    return DistortionValue(float(np.max(logd) - np.min(logd)), arc, grid_size, lip * h / 2.0)


def log_derivative_lipschitz(word: GroupWord, generators, arc: Arc, grid_size: int = 512) -> float:
    """C_Lip = grid max of |f''| / f' (Lipschitz constant of log f')."""
    alphabet = _resolve(word, generators)
    jet = eval_jet(word, alphabet, arc.grid(grid_size))
    return float(np.max(np.abs(jet.d2) / jet.d1))


# ---------------------------------------------------------------------------
# rotation number
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RotationNumber:
    value: float
    error: float
    exact: Fraction | None = None

    def __float__(self):
        return self.value


def rotation_number(word: GroupWord, generators, iterations: int = 1000,
                    tol: float = DEFAULT_TOLERANCES.periodic_tol, x0: float = 0.0,
                    max_period: int = 64) -> RotationNumber:
    """(F^n(x0) - x0) / n mod 1, with exact rationals for detected periodic orbits."""
    if iterations < 100:
        raise PreconditionError("iterations must be >= 100")
    alphabet = _resolve(word, generators)
    if not alphabet.has_chart_letters(word):
        try:
            if find_fixed_points(word, alphabet, 256):
                return RotationNumber(0.0, 0.0, Fraction(0))
        except DegenerateError:
            return RotationNumber(0.0, 0.0, Fraction(0))
        except Exception:
            pass
    orbit = np.empty(iterations + 1)
    x = float(x0)
    orbit[0] = x
    for i in range(iterations):
        x = float(eval_value(word, alphabet, np.array([x]))[0])
        orbit[i + 1] = x
    n = iterations
    for q in range(1, min(max_period, n // 2) + 1):
        d1 = orbit[n] - orbit[n - q]
        d2 = orbit[n - q] - orbit[n - 2 * q]
        k = round(d1)
        if abs(d1 - k) < tol and abs(d2 - k) < tol:
            frac = Fraction(int(k), q) % 1
            return RotationNumber(float(frac), 0.0, frac)
    return RotationNumber(((orbit[n] - orbit[0]) / n) % 1.0, 1.0 / n, None)


# ---------------------------------------------------------------------------
# contraction coefficient
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContractionCoefficient:
    value: float
    slack: float
    grid_size: int
    arc_length: float

    def __float__(self):
        return self.value


def contraction_from_lift(values: np.ndarray) -> tuple:
    """min over l of max(l, 1 - max_pos |g(U_l)|) from lift values at i/N, i < N.

    Works on a batch: ``values`` has shape (..., N).  Returns (value, best l).
    """
    g = np.asarray(values, dtype=float)
    n = g.shape[-1]
    ext = np.concatenate([g, g + 1.0], axis=-1)
    j = np.arange(1, n)
    batch = int(np.prod(g.shape[:-1])) if g.ndim > 1 else 1
    block = max(1, 4_000_000 // (n * batch))
    best = np.empty(g.shape[:-1] + (n - 1,))
    for s in range(0, n - 1, block):
        jj = j[s:s + block]
        idx = np.arange(n)[None, :] + jj[:, None]
        best[..., s:s + block] = np.max(ext[..., idx] - g[..., None, :], axis=-1)
    ell = j / n
    score = np.maximum(ell, 1.0 - best)
    k = np.argmin(score, axis=-1)
    return np.min(score, axis=-1), ell[k]


def contraction_coefficient(word: GroupWord, generators, grid_size: int = 1024) -> ContractionCoefficient:
    """Grid version of c(g); the slack 2/grid_size bounds the resolution error."""
    if grid_size < DEFAULT_TOLERANCES.contraction_min_grid:
        raise PreconditionError(f"grid_size must be >= {DEFAULT_TOLERANCES.contraction_min_grid}")
    alphabet = _resolve(word, generators)
    if alphabet.has_chart_letters(word):
        raise PreconditionError("contraction coefficient needs a circle map")
    xs = np.arange(grid_size) / grid_size
    val, ell = contraction_from_lift(eval_value(word, alphabet, xs))
    return ContractionCoefficient(float(min(val, 0.5)), 2.0 / grid_size, grid_size, float(ell))
