"""Random walks, stationary measures, contraction statistics, spikes and unity decompositions."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.optimize import nnls
from scipy.ndimage import maximum_filter1d

from .circle_maps import INVERSE_MAX_ITER, INVERSE_TOL, Alphabet, GroupWord, _letter_steps, _resolve, eval_value
from .errors import PreconditionError, StallError
from .metrics import contraction_from_lift

# the bundled TBB is too old for numba; the workqueue layer is always present
numba.config.THREADING_LAYER = "workqueue"

MAX_ORBIT = 10_000_000
QUADRATURE_NODES = 4096
Z95 = 1.959963984540054


# ---------------------------------------------------------------------------
# step measures
# ---------------------------------------------------------------------------

@dataclass
class StepMeasure:
    atoms: list          # [(GroupWord, probability)]
    alphabet: Alphabet

    def __post_init__(self):
        if not self.atoms:
            raise PreconditionError("step measure needs at least one atom")
        probs = np.array([p for _, p in self.atoms], dtype=float)
        if np.any(probs <= 0):
            raise PreconditionError("probabilities must be positive on the support")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise PreconditionError(f"probabilities sum to {probs.sum()!r}, not 1")
        for w, _ in self.atoms:
            _resolve(w, self.alphabet)

    @classmethod
    def uniform(cls, words, alphabet: Alphabet) -> "StepMeasure":
        p = 1.0 / len(words)
        return cls([(w, p) for w in words], alphabet)

    @classmethod
    def symmetric_letters(cls, alphabet: Alphabet) -> "StepMeasure":
        """Uniform measure on the letters and their inverses."""
        words = [alphabet.letter(i, e) for i in range(len(alphabet)) for e in (1, -1)]
        return cls.uniform(words, alphabet)

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([p for _, p in self.atoms], dtype=float)

    @property
    def words(self) -> list:
        return [w for w, _ in self.atoms]

    @property
    def symmetric(self) -> bool:
        mass = {}
        for w, p in self.atoms:
            mass[w.letters] = mass.get(w.letters, 0.0) + p
        return all(abs(mass.get(w.inverse().letters, 0.0) - p) <= 1e-12 for w, p in self.atoms)

    def to_list(self) -> list:
        return [{"word": [list(l) for l in w.letters], "p": p} for w, p in self.atoms]


def entropy(mu: StepMeasure) -> float:
    p = mu.probabilities
    return float(-np.sum(p * np.log(p)))


# ---------------------------------------------------------------------------
# compiled word programs
# ---------------------------------------------------------------------------

ROT, TRIG, TRIG_INV, MOEB = 0, 1, 2, 3


@dataclass(frozen=True)
class Program:
    kinds: np.ndarray      # (ops,)
    params: np.ndarray     # (ops, 4)
    offsets: np.ndarray    # (atoms + 1,)


def compile_words(words, alphabet: Alphabet) -> Program:
    """Flatten words into per-letter instructions in application order."""
    kinds, params, offsets = [], [], [0]
    for w in words:
        _resolve(w, alphabet)
        for idx, sign in _letter_steps(w):
            prim = alphabet[idx]
            if prim.kind == "rotation":
                kinds.append(ROT)
                params.append((sign * prim.params[0], 0.0, 0.0, 0.0))
            elif prim.kind == "trig":
                kinds.append(TRIG if sign > 0 else TRIG_INV)
                params.append((prim.params[0], prim.params[1], 0.0, 0.0))
            elif prim.kind == "moebius":
                p = prim.params if sign > 0 else prim.inverse_primitive().params
                kinds.append(MOEB)
                params.append(tuple(p))
            else:
                raise PreconditionError("random walks need circle maps (no chart letters)")
        offsets.append(len(kinds))
    return Program(np.array(kinds, dtype=np.int64), np.array(params, dtype=float).reshape(-1, 4),
                   np.array(offsets, dtype=np.int64))


@numba.njit(cache=True)
def _trig_inverse(y, off, amp):
    k = amp / (2.0 * math.pi)
    base = y - off
    lo = base - abs(k)
    hi = base + abs(k)
    x = base - k * math.sin(2.0 * math.pi * base) / (1.0 + amp * math.cos(2.0 * math.pi * base))
    x = min(max(x, lo), hi)
    for _ in range(INVERSE_MAX_ITER):
        g = x + k * math.sin(2.0 * math.pi * x) - base
        if g < 0:
            lo = x
        elif g > 0:
            hi = x
        xn = x - g / (1.0 + amp * math.cos(2.0 * math.pi * x))
        if xn <= lo or xn >= hi:
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= INVERSE_TOL:
            return xn
        x = xn
    return x


@numba.njit(cache=True)
def _apply(x, kinds, params, start, stop):
    for i in range(start, stop):
        k = kinds[i]
        if k == ROT:
            x = x + params[i, 0]
        elif k == TRIG:
            x = x + params[i, 0] + params[i, 1] / (2.0 * math.pi) * math.sin(2.0 * math.pi * x)
        elif k == TRIG_INV:
            x = _trig_inverse(x, params[i, 0], params[i, 1])
        else:
            a, b, c, d = params[i, 0], params[i, 1], params[i, 2], params[i, 3]
            th = math.pi * x
            co, si = math.cos(th), math.sin(th)
            cross = b * co * co + (a - d) * si * co - c * si * si
            dot = d * co * co + (b + c) * si * co + a * si * si
            x = x + math.atan2(cross, dot) / math.pi
    return x


@numba.njit(cache=True)
def _orbit_kernel(x0, choices, kinds, params, offsets, out):
    x = x0
    for l in range(choices.size):
        a = choices[l]
        x = _apply(x, kinds, params, offsets[a], offsets[a + 1])
        x = x - math.floor(x)
        out[l] = x
    return x


@numba.njit(cache=True, parallel=True)
def _apply_atom_array(xs, atom, kinds, params, offsets):
    out = np.empty_like(xs)
    for i in numba.prange(xs.size):
        out[i] = _apply(xs[i], kinds, params, offsets[atom], offsets[atom + 1])
    return out


def _draws(rng: np.random.Generator, mu: StepMeasure, size: int) -> np.ndarray:
    return rng.choice(len(mu.atoms), size=size, p=mu.probabilities).astype(np.int64)


def random_orbit(mu: StepMeasure, x0: float, length: int, seed: int, chunk: int = 1_000_000) -> np.ndarray:
    """x_l = f_l o ... o f_1 (x0) mod 1 for l = 1..length, f_i iid from mu."""
    if length > MAX_ORBIT:
        raise PreconditionError(f"length must be <= {MAX_ORBIT}")
    prog = compile_words(mu.words, mu.alphabet)
    rng = np.random.default_rng(seed)
    out = np.empty(length)
    x = float(x0)
    for s in range(0, length, chunk):
        choices = _draws(rng, mu, min(chunk, length - s))
        x = _orbit_kernel(x, choices, prog.kinds, prog.params, prog.offsets, out[s:s + choices.size])
    return out


def path_generators(seed: int, num_paths: int) -> list:
    """Per-path generators: SeedSequence(seed).spawn(num_paths), in path order."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(num_paths)]


# ---------------------------------------------------------------------------
# measures on the circle
# ---------------------------------------------------------------------------

def partition_edges(cells: int) -> np.ndarray:
    if cells < 32:
        raise PreconditionError("test arcs must partition the circle into >= 32 cells")
    return np.linspace(0.0, 1.0, cells + 1)


class UniformMeasure:
    """Lebesgue measure; preimage masses are exact."""

    size = math.inf

    def preimage_masses(self, word: GroupWord, alphabet, edges: np.ndarray) -> np.ndarray:
        return np.diff(eval_value(word.inverse(), alphabet, edges))

    def masses(self, edges: np.ndarray) -> np.ndarray:
        return np.diff(edges)

    def half_width(self, p: float) -> float:
        return 0.0


class EmpiricalMeasure:
    """Sample of circle points with its CDF."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float) % 1.0
        self.points = np.sort(pts)

    @property
    def size(self) -> int:
        return self.points.size

    def cdf(self, x) -> np.ndarray:
        return np.searchsorted(self.points, np.asarray(x) % 1.0, side="right") / self.size

    def masses(self, edges: np.ndarray) -> np.ndarray:
        return np.histogram(self.points, bins=edges)[0] / self.size

    def preimage_masses(self, word: GroupWord, alphabet, edges: np.ndarray) -> np.ndarray:
        pushed = eval_value(word, alphabet, self.points) % 1.0
        return np.histogram(pushed, bins=edges)[0] / self.size

    def half_width(self, p: float) -> float:
        return Z95 * math.sqrt(p * (1 - p) / self.size)

    def ks_uniform(self) -> float:
        n = self.size
        i = np.arange(1, n + 1)
        return float(max(np.max(i / n - self.points), np.max(self.points - (i - 1) / n)))


class QuadratureMeasure:
    """Absolutely continuous measure by midpoint quadrature (default 4096 nodes)."""

    def __init__(self, density=None, nodes: int = QUADRATURE_NODES):
        self.nodes = (np.arange(nodes) + 0.5) / nodes
        w = np.ones(nodes) if density is None else np.asarray(density(self.nodes), dtype=float)
        self.weights = w / w.sum()
        self.size = nodes

    def masses(self, edges):
        return np.histogram(self.nodes, bins=edges, weights=self.weights)[0]

    def preimage_masses(self, word, alphabet, edges):
        pushed = eval_value(word, alphabet, self.nodes) % 1.0
        return np.histogram(pushed, bins=edges, weights=self.weights)[0]

    def half_width(self, p: float) -> float:
        # one node can cross each cell edge
        return 2.0 * float(np.max(self.weights))


@dataclass
class ResidualReport:
    residual: float
    half_width: float
    per_cell: np.ndarray
    cells: int

    @property
    def ratio(self) -> float:
        return self.residual / self.half_width if self.half_width > 0 else math.inf * (self.residual > 0)


def stationarity_residual(mu: StepMeasure, nu, cells: int = 64) -> ResidualReport:
    """max over cells B of |nu(B) - sum_g mu(g) nu(g^-1 B)| with a 95% half-width."""
    edges = partition_edges(cells)
    base = nu.masses(edges)
    mix = np.zeros(cells)
    for w, p in mu.atoms:
        mix += p * nu.preimage_masses(w, mu.alphabet, edges)
    per_cell = base - mix
    pbar = float(np.max(base)) if np.max(base) > 0 else 1.0 / cells
    return ResidualReport(float(np.max(np.abs(per_cell))), nu.half_width(pbar), per_cell, cells)


# ---------------------------------------------------------------------------
# martingale probe and contraction along walks
# ---------------------------------------------------------------------------

@dataclass
class MartingaleReport:
    xi: np.ndarray            # (paths, horizon)
    settled_fraction: float
    spread: float             # std of xi_horizon across paths
    l0: int
    tol: float

    @property
    def settled(self) -> bool:
        return self.settled_fraction >= 0.95


def _push_through(prog: Program, draws, xs):
    """f_1 o ... o f_l applied to xs (f_l acts first)."""
    y = xs
    for a in draws[::-1]:
        y = _apply_atom_array(y, int(a), prog.kinds, prog.params, prog.offsets)
    return y


def martingale_probe(mu: StepMeasure, nu: QuadratureMeasure, psi, num_paths: int, horizon: int,
                     seed: int, l0: int | None = None, tol: float = 0.05) -> MartingaleReport:
    """xi_l = integral of psi d(f_1 ... f_l nu) along simulated paths."""
    prog = compile_words(mu.words, mu.alphabet)
    l0 = horizon // 2 if l0 is None else l0
    xi = np.empty((num_paths, horizon))
    for k, rng in enumerate(path_generators(seed, num_paths)):
        draws = _draws(rng, mu, horizon)
        for l in range(1, horizon + 1):
            y = _push_through(prog, draws[:l], nu.nodes) % 1.0
            xi[k, l - 1] = float(np.dot(nu.weights, psi(y)))
    dev = np.max(np.abs(xi[:, l0:] - xi[:, -1:]), axis=1)
    return MartingaleReport(xi, float(np.mean(dev <= tol)), float(np.std(xi[:, -1])), l0, tol)


@dataclass
class ContractionStats:
    values: np.ndarray        # (paths, horizon) c(f_l o ... o f_1)
    median: np.ndarray
    p95: np.ndarray
    grid_size: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["l", "median", "p95"])
        for l, (m, p) in enumerate(zip(self.median, self.p95), start=1):
            w.writerow([l, f"{m:.6e}", f"{p:.6e}"])
        return buf.getvalue()


def contraction_along_walk(mu: StepMeasure, num_paths: int, horizon: int, seed: int,
                           grid_size: int = 256) -> ContractionStats:
    """Contraction coefficients of f_l o ... o f_1 for l = 1..horizon, path by path."""
    prog = compile_words(mu.words, mu.alphabet)
    xs = np.arange(grid_size) / grid_size
    vals = np.empty((num_paths, horizon))
    lifts = np.tile(xs, (num_paths, 1))
    draws = np.array([_draws(rng, mu, horizon) for rng in path_generators(seed, num_paths)])
    for l in range(horizon):
        for k in range(num_paths):
            y = _apply_atom_array(lifts[k], int(draws[k, l]), prog.kinds, prog.params, prog.offsets)
            lifts[k] = y - math.floor(y[0])
        c, _ = contraction_from_lift(lifts)
        vals[:, l] = np.minimum(c, 0.5)
    return ContractionStats(vals, np.median(vals, axis=0), np.percentile(vals, 95, axis=0), grid_size)


# ---------------------------------------------------------------------------
# spikes
# ---------------------------------------------------------------------------

def circle_distance(x, y):
    d = np.abs(np.asarray(x) - np.asarray(y)) % 1.0
    return np.minimum(d, 1.0 - d)


def _power_integral(d1, d2, p):
    """Integral of t^-p over [d1, d2] (0 < d1 <= d2)."""
    if abs(p - 1.0) < 1e-12:
        return np.log(d2 / d1)
    return (d1 ** (1 - p) - d2 ** (1 - p)) / (p - 1)


def kernel_integral(y, a: float, r: float, power: float) -> np.ndarray:
    """Integral over x in B(a, r) of d(y, x)^-power for y outside the ball (closed form)."""
    y = np.asarray(y, dtype=float)
    # u = (x - y) mod 1 sweeps [u1, u1 + 2r] inside (0, 1) since y is outside the ball
    u1 = (a - r - y) % 1.0
    u2 = u1 + 2 * r
    total = np.zeros_like(y)
    # part with d = u (u <= 1/2)
    lo, hi = u1, np.minimum(u2, 0.5)
    m = hi > lo
    total[m] += _power_integral(lo[m], hi[m], power)
    # part with d = 1 - u (u >= 1/2)
    lo, hi = np.maximum(u1, 0.5), u2
    m = hi > lo
    total[m] += _power_integral(1.0 - hi[m], 1.0 - lo[m], power)
    return total


@dataclass
class Spike:
    zeta: np.ndarray          # samples at i / N
    r: float
    a: float
    Q: float = 1.0
    theta: float = 1.0
    C: float = 10.0
    word: GroupWord | None = None

    def __post_init__(self):
        self.zeta = np.asarray(self.zeta, dtype=float)
        if np.any(self.zeta <= 0):
            raise PreconditionError("zeta must be positive")
        if not (self.r > 0 and self.Q >= 0 and self.theta >= 1 and self.C > 1):
            raise PreconditionError("spike needs r > 0, Q >= 0, theta >= 1, C > 1")

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.zeta.size) / self.zeta.size

    @property
    def sup(self) -> float:
        return float(np.max(self.zeta))

    def covers(self, x) -> np.ndarray:
        return circle_distance(x, self.a) <= self.r

    @classmethod
    def from_word(cls, word: GroupWord, generators, r: float, a: float, grid_size: int = 4096, **kw) -> "Spike":
        """zeta = derivative of word^-1, the density of word_* Leb."""
        from .circle_maps import eval_jet
        xs = np.arange(grid_size) / grid_size
        zeta = eval_jet(word.inverse(), generators, xs).d1
        return cls(zeta, r, a, word=word, **kw)


@dataclass
class SpikeReport:
    passed: bool
    margins: dict            # condition -> worst lhs / rhs (<= 1 passes, < 1 for condition 3)
    outside_sup: float | None = None

    @property
    def worst(self) -> tuple:
        k = max(self.margins, key=self.margins.get)
        return k, self.margins[k]


def spike_validate(spike: Spike, delta: float | None = None) -> SpikeReport:
    """Check the three spike conditions on the sample grid.

    With ``delta`` (local spikes) conditions 2 and 3 are only examined on
    B(a, delta), and the sup of zeta outside that ball is reported.
    """
    n = spike.zeta.size
    if n < 1024:
        raise PreconditionError("zeta must be sampled on >= 1024 points")
    xs = spike.grid
    z = spike.zeta
    dist = circle_distance(xs, spike.a)
    inside = dist <= spike.r
    zsup = spike.sup
    if not inside.any():
        raise PreconditionError("ball B(a, r) contains no grid point")
    m1 = float(np.max(zsup / spike.C / z[inside]))
    # condition 2
    za = float(np.interp(spike.a % 1.0, np.append(xs, 1.0), np.append(z, z[0])))
    scale = spike.r ** spike.Q if spike.Q > 0 else 1.0 / (1.0 + abs(math.log(spike.r)))
    region = ~inside
    if delta is not None:
        region &= dist <= delta
    if region.any():
        rhs = za * scale * spike.C * kernel_integral(xs[region], spike.a, spike.r, spike.Q + spike.theta)
        m2 = float(np.max(z[region] / rhs))
    else:
        m2 = 0.0
    # condition 3: zeta(y') < C zeta(y) whenever d(y, y') <= r
    w = int(math.floor(spike.r * n))
    if delta is None:
        hi = maximum_filter1d(z, size=2 * w + 1, mode="wrap")
        m3 = float(np.max(hi / (spike.C * z)))
    else:
        keep = dist <= delta
        zl = np.where(keep, z, 0.0)
        hi = maximum_filter1d(zl, size=2 * w + 1, mode="wrap")
        m3 = float(np.max(hi[keep] / (spike.C * z[keep])))
    margins = {"1": m1, "2": m2, "3": m3}
    passed = m1 <= 1.0 and m2 <= 1.0 and m3 < 1.0
    outside = float(np.max(z[dist > delta])) if delta is not None and np.any(dist > delta) else None
    return SpikeReport(passed, margins, outside)


def spike_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "cond1", "cond2", "cond3", "pass"])
    for i, r in enumerate(reports):
        w.writerow([i, f"{r.margins['1']:.6e}", f"{r.margins['2']:.6e}", f"{r.margins['3']:.6e}", int(r.passed)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# greedy unity decomposition
# ---------------------------------------------------------------------------

@dataclass
class UnityResult:
    coefficients: np.ndarray  # c_alpha for the unit spikes zeta / ||zeta||
    residual: np.ndarray      # final residual function on the grid
    history: list             # sup residual after each step
    min_history: list         # min residual after each step (nonnegativity record)
    rounds: int
    measure: StepMeasure | None = None

    @property
    def final(self) -> float:
        return self.history[-1]


def uncovered_arcs(spikes, grid_size: int) -> list:
    xs = np.arange(grid_size) / grid_size
    cov = np.zeros(grid_size, dtype=bool)
    for s in spikes:
        cov |= s.covers(xs)
    gaps = []
    i = 0
    while i < grid_size:
        if not cov[i]:
            j = i
            while j < grid_size and not cov[j]:
                j += 1
            gaps.append((i / grid_size, j / grid_size))
            i = j
        else:
            i += 1
    return gaps


def greedy_unity(spikes, tol: float = 1e-3, max_rounds: int = 60, steps_per_round: int = 200,
                 alphabet: Alphabet | None = None) -> UnityResult:
    """Greedy positive decomposition 1 = sum c_alpha zeta_alpha / ||zeta_alpha|| + L.

    Each step fits L by a nonnegative combination Z of the unit spikes (least
    squares relative to L) and subtracts t Z with t = min(1, min(L / Z) / 2),
    so every step keeps L >= L / 2 > 0; a final step may instead take t up to
    min(L / Z) when that alone brings sup L below ``tol``.  A round ends once sup L has halved;
    a round that cannot halve stalls.  When every spike carries its word and
    ``alphabet`` is given, the induced step measure mu(g_alpha) ~ c_alpha / ||zeta_alpha||
    is returned as well.
    """
    if not spikes:
        raise PreconditionError("empty spike family")
    n = spikes[0].zeta.size
    if any(s.zeta.size != n for s in spikes):
        raise PreconditionError("spikes must share the sample grid")
    gaps = uncovered_arcs(spikes, n)
    if gaps:
        raise StallError(f"family does not cover the circle; uncovered arcs {gaps}")
    unit = np.array([s.zeta / s.sup for s in spikes])
    coef = np.zeros(len(spikes))
    L = np.ones(n)
    history, mins = [float(L.max())], [float(L.min())]
    rounds = 0
    while history[-1] >= tol:
        if rounds >= max_rounds:
            raise StallError(f"no convergence after {max_rounds} rounds (sup residual {history[-1]:.3e})")
        target = history[-1] / 2
        for _ in range(steps_per_round):
            c, _ = nnls((unit / L).T, np.ones(n))
            Z = c @ unit
            pos = Z > 0
            if not pos.any():
                raise StallError("no spike combination reduces the residual")
            step = float(np.min(L[pos] / Z[pos]))
            # t Z <= L for t <= step, so clipping only removes rounding below zero
            full = np.maximum(L - min(1.0, step) * Z, 0.0)
            if full.max() < tol:
                t, L = min(1.0, step), full
            else:
                t = min(1.0, 0.5 * step)
                L = L - t * Z
                if L.min() <= 0:
                    raise StallError("residual became nonpositive")
            coef += t * c
            history.append(float(L.max()))
            mins.append(float(L.min()))
            if history[-1] <= target:
                break
        else:
            raise StallError(f"round {rounds + 1} did not halve the sup residual ({history[-1]:.3e})")
        rounds += 1
    measure = None
    if alphabet is not None and all(sp.word is not None for sp in spikes):
        w = coef / np.array([sp.sup for sp in spikes])
        idx = np.flatnonzero(w > 0)
        probs = w[idx] / w[idx].sum()
        atoms = [(spikes[i].word, float(p)) for i, p in zip(idx, probs)]
        # absorb rounding so the probabilities sum to one
        atoms[0] = (atoms[0][0], 1.0 - sum(p for _, p in atoms[1:]))
        measure = StepMeasure(atoms, alphabet)
    return UnityResult(coef, L, history, mins, rounds, measure)
