"""Vector fields extracted from near-identity sequences, Euler flows and translation limits."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .circle_maps import (
    Arc,
    FixedPointRecord,
    GroupWord,
    _resolve,
    eval_jet,
    find_fixed_points,
    koenigs_linearize,
)
from .errors import ChartEscapeError, KoenigsError, PreconditionError, StallError
from .germs import Germ

FIELD_GRID = 1024


@dataclass
class SampledField:
    arc: Arc
    xs: np.ndarray
    values: np.ndarray
    m: int
    norm_lower_bound: float
    defect: float
    normalization: float          # grid C^m size of the emitted field
    flips: list = field(default_factory=list)

    def __call__(self, x):
        return np.interp(x, self.xs, self.values)

    @property
    def lipschitz(self) -> float:
        h = self.xs[1] - self.xs[0]
        return float(np.max(np.abs(np.diff(self.values)))) / h


def _deviations(item, generators, xs, order: int, invert: bool = False):
    """[g - id, g' - 1, g'', g'''] for a GroupWord or a chart Germ."""
    if isinstance(item, Germ):
        g = item.inverse() if invert else item
        return g.deviations(xs, order)
    word = item.inverse() if invert else item
    jet = eval_jet(word, _resolve(word, generators), xs)
    return [jet.value - xs, jet.d1 - 1.0, jet.d2, jet.d3][: order + 1]


def _cm(devs, m: int) -> float:
    return float(sum(np.max(np.abs(d)) for d in devs[: m + 1]))


def extract_field(words, generators, arc: Arc, m: int = 1, C: float | None = None,
                  grid_size: int = FIELD_GRID, defect_tol: float = 0.05,
                  align_signs: bool = True) -> SampledField:
    """Limit of X_i = (g_i - id) / ||g_i - id||_m, averaged over the last three terms.

    ``words`` may hold GroupWords or chart Germs.  With ``align_signs`` a term
    whose field points against its predecessor is replaced by its inverse
    (same closure, opposite field).  ``C`` bounds ||g - id||_m / ||g - id||_(m-1);
    when omitted it is set to twice the worst ratio seen.
    """
    if len(words) < 3:
        raise PreconditionError("need at least three terms")
    if not 1 <= m <= 3:
        raise PreconditionError("m must be 1, 2 or 3")
    xs = arc.grid(grid_size)
    norms, fields, ratios, flips = [], [], [], []
    prev = None
    for i, w in enumerate(words):
        devs = _deviations(w, generators, xs, m)
        if align_signs and prev is not None and np.dot(devs[0], prev) < 0:
            devs = _deviations(w, generators, xs, m, invert=True)
            flips.append(i)
        nm, nm1 = _cm(devs, m), _cm(devs, m - 1)
        if nm == 0:
            raise PreconditionError(f"term {i} is the identity on the arc")
        norms.append(nm)
        ratios.append(nm / nm1)
        x = devs[0] / nm
        fields.append(x)
        prev = x
    norms = np.array(norms)
    if np.any(norms >= 0.1) or np.any(np.diff(norms) >= 0):
        raise PreconditionError("C^m distances must be decreasing and below 0.1")
    C = 2.0 * max(ratios) if C is None else C
    worst = max(ratios)
    if worst > C:
        raise PreconditionError(f"condition 3 violated: ||g - id||_m / ||g - id||_(m-1) = {worst:.3e} > C = {C:.3e}")
    defect = float(np.max(np.abs(fields[-1] - fields[-2])))
    if defect > defect_tol:
        raise StallError(f"non-Cauchy tail: defect {defect:.3e} > {defect_tol}")
    values = np.mean(fields[-3:], axis=0)
    h = arc.length / grid_size
    d1 = np.gradient(values, h)
    normalization = float(np.max(np.abs(values)) + (np.max(np.abs(d1)) if m >= 1 else 0.0))
    return SampledField(arc, xs, values, m, 1.0 / C, defect, normalization, flips)


def field_from_function(fn, arc: Arc, m: int = 1, grid_size: int = FIELD_GRID) -> SampledField:
    """Sample an explicit field (used for flow checks with known solutions)."""
    xs = arc.grid(grid_size)
    vals = np.asarray(fn(xs), dtype=float) * np.ones_like(xs)
    return SampledField(arc, xs, vals, m, 0.0, 0.0, float(np.max(np.abs(vals))))


@dataclass(frozen=True)
class EulerResult:
    value: float
    error_bound: float
    steps: int


def euler_flow(fld: SampledField, x0: float, t: float, steps: int) -> EulerResult:
    """Explicit Euler with step t / steps; linear interpolation between grid nodes.

    The error bound is h sup|X| (e^{Lt} - 1) / 2 for the interpolated field
    plus the interpolation error sup|X''| dx^2 / 8 propagated by Gronwall,
    plus one rounding unit of |x| + |h X| per step.
    """
    if steps < 1:
        raise PreconditionError("steps must be positive")
    if not fld.arc.contains(x0):
        raise PreconditionError("x0 outside the field's arc")
    h = t / steps
    x = float(x0)
    rounding = 0.0
    for _ in range(steps):
        dx = h * float(fld(x))
        rounding += np.finfo(float).eps * (abs(x) + abs(dx))
        x = x + dx
        if not fld.arc.contains(x):
            raise ChartEscapeError(f"trajectory left {fld.arc} at x = {x}")
    lip = fld.lipschitz
    sup = float(np.max(np.abs(fld.values)))
    growth = math.expm1(lip * abs(t))
    euler = abs(h) * sup * growth / 2.0
    interp = float(np.max(np.abs(np.diff(fld.values, 2)))) / 8.0 if fld.xs.size > 2 else 0.0
    interp_total = interp * (growth / lip if lip > 0 else abs(t))
    return EulerResult(x, euler + interp_total + rounding, steps)


# ---------------------------------------------------------------------------
# translation limits
# ---------------------------------------------------------------------------

@dataclass
class TranslationRow:
    j: int
    c0_dist: float
    c1_dist: float
    kappa_rule_fired: bool


@dataclass
class TranslationReport:
    rows: list
    kappa: int | None
    translation: float       # chart image of g(p)
    multiplier: float
    chart_defect: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["j", "c0_dist", "c1_dist", "kappa_rule_fired"])
        for r in self.rows:
            w.writerow([r.j, f"{r.c0_dist:.6e}", f"{r.c1_dist:.6e}", int(r.kappa_rule_fired)])
        return buf.getvalue()


class _LinearChart:
    """Identity chart around p (F is already the dilation x -> lam x)."""

    def __init__(self, p):
        self.center = p
        self.defect = 0.0

    def __call__(self, x):
        return np.asarray(x, dtype=float) - self.center

    def derivative(self, x):
        return np.ones_like(np.asarray(x, dtype=float))

    def inverse(self, xi):
        return np.asarray(xi, dtype=float) + self.center


def translation_limit(g: GroupWord, F: GroupWord, generators, arc: Arc, j_max: int = 20,
                      chart_domain: Arc | None = None, grid_size: int = 512) -> TranslationReport:
    """C^0 / C^1 distance of F^-j g F^j to the translation by lam^-j h(g(p)) in the chart h.

    ``arc`` is given in chart coordinates.  F is either a chart dilation
    letter (h is the identity at 0) or a circle word with an attracting
    hyperbolic fixed point p, linearized by a Koenigs chart on
    ``chart_domain`` (default p +- 0.1).
    """
    alphabet = _resolve(g, generators)
    _resolve(F, alphabet)
    if len(F.letters) == 1 and alphabet[F.letters[0][0]].chart_only:
        idx, e = F.letters[0]
        lam = alphabet[idx].params[0] ** e
        if not 0 < lam < 1:
            raise PreconditionError("F must contract toward its fixed point")
        chart = _LinearChart(0.0)
        p = 0.0
    else:
        recs = [r for r in find_fixed_points(F, alphabet, 256) if r.is_attracting]
        if not recs:
            raise PreconditionError("F has no attracting hyperbolic fixed point")
        rec: FixedPointRecord = recs[0]
        p = float(rec.location)
        lam = float(rec.multiplier)
        dom = chart_domain or Arc(p - 0.1, p + 0.1)
        chart = koenigs_linearize(F, alphabet, rec, dom, strict=True)
    gp = float(eval_jet(g, alphabet, np.array([p])).value[0])
    if abs(gp - p) < 1e-12:
        raise PreconditionError("g fixes p; the translation limit needs g(p) != p")
    tau = float(chart(np.array([gp]))[0])

    def g_hat(xi):
        x = chart.inverse(xi)
        jet = eval_jet(g, alphabet, x)
        return chart(jet.value), chart.derivative(jet.value) * jet.d1 / chart.derivative(x)

    xi = arc.grid(grid_size)
    step = arc.length / grid_size
    rows, kappa = [], None
    for j in range(j_max + 1):
        s = lam ** j
        val, der = g_hat(s * xi)
        gj = val / s
        c0 = float(np.max(np.abs(gj - xi - tau / s)))
        c1 = c0 + float(np.max(np.abs(der - 1.0)))
        dev_id = float(np.max(np.abs(gj - xi))) + float(np.max(np.abs(der - 1.0)))
        d2 = float(np.max(np.abs(np.gradient(der, step))))
        fired = kappa is None and d2 <= dev_id
        if fired:
            kappa = j
        rows.append(TranslationRow(j, c0, c1, fired))
    return TranslationReport(rows, kappa, tau, lam, float(chart.defect))
