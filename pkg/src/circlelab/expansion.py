"""Expandability scans, expansion covers, magnification and distortion partitions."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .circle_maps import Alphabet, Arc, GroupWord, _resolve, as_alphabet, eval_jet, eval_log_d1
from .errors import DegenerateError, PreconditionError, StallError
from .metrics import log_derivative_lipschitz

MAX_SCAN_CAP = 8
EXPAND_MARGIN = 1e-6


# ---------------------------------------------------------------------------
# scan
# ---------------------------------------------------------------------------

@dataclass
class ScanResult:
    """Per grid point x_i = i / N: best derivative over words up to the cap."""

    xs: np.ndarray
    max_d1: np.ndarray
    best: np.ndarray           # index into ``words`` of the best word per point
    words: list                # GroupWords examined (identity excluded)
    log_d1: np.ndarray         # (len(words), N) log-derivatives, for cover building
    cap: int
    margin: float = EXPAND_MARGIN

    @property
    def non_expandable(self) -> np.ndarray:
        return np.flatnonzero(self.max_d1 <= 1.0 + self.margin)

    @property
    def all_expandable(self) -> bool:
        return self.non_expandable.size == 0


def reduced_words(alphabet: Alphabet, cap: int):
    """All nonempty reduced words of length <= cap as (word, last letter added)."""
    letters = [(i, s) for i in range(len(alphabet)) for s in (1, -1)]
    frontier = [((), None)]
    for _ in range(cap):
        nxt = []
        for word, _ in frontier:
            for lt in letters:
                if word and word[0][0] == lt[0] and word[0][1] == -lt[1]:
                    continue
                nxt.append(((lt,) + word, lt))
        yield from nxt
        frontier = nxt


def expandability_scan(generators, cap: int = 6, grid_size: int = 512,
                       margin: float = EXPAND_MARGIN) -> ScanResult:
    """Max of f' over reduced words up to ``cap`` at each grid point.

    Words grow by composing one more letter on the left, so each word costs a
    single letter evaluation on top of its parent.
    """
    if cap > MAX_SCAN_CAP:
        raise PreconditionError(f"word-length cap must be <= {MAX_SCAN_CAP}")
    alphabet = as_alphabet(generators)
    if any(p.chart_only for p in alphabet.generators):
        raise PreconditionError("expandability scan needs circle maps")
    xs = np.arange(grid_size) / grid_size
    letters = [(i, s) for i in range(len(alphabet)) for s in (1, -1)]
    frontier = [((), xs.copy(), np.zeros(grid_size))]
    words, logs = [], []
    for _ in range(cap):
        nxt = []
        for word, v, logd in frontier:
            for idx, s in letters:
                if word and word[0][0] == idx and word[0][1] == -s:
                    continue
                prim = alphabet[idx]
                if s > 0:
                    j = prim.jet(v)
                    nv, nl = j.value, logd + np.log(j.d1)
                else:
                    nv = prim.inverse_value(v)
                    nl = logd - np.log(prim.jet(nv).d1)
                w = ((idx, s),) + word
                nxt.append((w, nv, nl))
                words.append(GroupWord.from_letters(w, alphabet.id))
                logs.append(nl)
        frontier = nxt
    log_d1 = np.array(logs)
    best = np.argmax(log_d1, axis=0)
    return ScanResult(xs, np.exp(log_d1[best, np.arange(grid_size)]), best, words, log_d1, cap, margin)


# ---------------------------------------------------------------------------
# cover
# ---------------------------------------------------------------------------

@dataclass
class ExpansionCover:
    intervals: list
    expanders: list
    m1: float
    M1: float
    L: float
    alphabet: Alphabet
    threshold: float = 1.0

    @property
    def s(self) -> int:
        return len(self.intervals)

    def find(self, arc: Arc):
        """Index of a covering interval that contains ``arc`` (largest margin)."""
        best, best_margin = None, -1.0
        for i, U in enumerate(self.intervals):
            if U.contains_arc(arc):
                shift = math.floor(arc.lo - U.lo)
                margin = min(arc.lo - shift - U.lo, U.hi - (arc.hi - shift))
                if margin > best_margin:
                    best, best_margin = i, margin
        return best

    def to_dict(self) -> dict:
        return {
            "intervals": [[U.lo, U.hi] for U in self.intervals],
            "expanders": [[list(l) for l in w.letters] for w in self.expanders],
            "m1": self.m1, "M1": self.M1, "L": self.L,
        }


def _regions(mask: np.ndarray) -> list:
    """Maximal cyclic runs of True as (start, length) in grid indices."""
    n = mask.size
    if mask.all():
        return [(0, n)]
    if not mask.any():
        return []
    start = int(np.argmin(mask))  # a False index; runs are found after it
    runs = []
    i = 0
    while i < n:
        j = (start + i) % n
        if mask[j]:
            k = i
            while k < n and mask[(start + k) % n]:
                k += 1
            runs.append(((start + i) % n, k - i))
            i = k
        else:
            i += 1
    return runs


def _greedy_cover(scan: ScanResult, tau: float, overlap: float):
    """Greedy cyclic interval cover from the regions {f' > tau} of scanned words."""
    n = scan.xs.size
    h = 1.0 / n
    regions = []  # (lo, hi, word index) in lift coordinates, shrunk by one cell
    for w in range(len(scan.words)):
        for start, length in _regions(scan.log_d1[w] > math.log(tau)):
            if length == n:
                regions.append((0.0, 1.0 - 1e-9, w))
            elif length >= 3:
                regions.append(((start + 1) * h, (start + length - 2) * h, w))
    if not regions:
        return None
    if any(hi - lo >= 1.0 - 1e-6 for lo, hi, _ in regions):
        return "full"
    # start at the left end of the widest region
    lo0, hi0, w0 = max(regions, key=lambda r: r[1] - r[0])
    arcs = [(lo0, hi0, w0)]
    end = hi0
    while end < lo0 + 1.0 + overlap:
        p = end - overlap
        best = None
        for lo, hi, w in regions:
            for s in (math.floor(p - lo) - 1, math.floor(p - lo), math.floor(p - lo) + 1):
                if lo + s <= p - 1e-12 and hi + s > p and (best is None or hi + s > best[1]):
                    best = (p, hi + s, w)
        if best is None or best[1] - p < 2 * overlap + 1e-9:
            return None
        arcs.append(best)
        end = best[1]
        if len(arcs) > 4 * n:
            return None
    lo, hi, w = arcs[-1]
    arcs[-1] = (lo, min(hi, lo0 + 1.0 + overlap), w)
    if arcs[-1][1] - arcs[-1][0] < 2 * overlap or len(arcs) < 2:
        return None
    # the closing arc must not reach the second arc
    if len(arcs) >= 2 and arcs[-1][1] >= arcs[1][0] + 1.0:
        return None
    return arcs


def _split_three(lo: float, hi: float, w: int, overlap: float):
    step = (hi - lo) / 3
    return [(lo + i * step, lo + (i + 1) * step + overlap, w) for i in range(3)]


def build_cover(scan: ScanResult, generators, overlap: float = 0.01,
                thresholds=(1.3, 1.2, 1.15, 1.1, 1.05, 1.02, 1.0 + 1e-3),
                verify_grid: int = 256) -> ExpansionCover:
    """Cyclic cover by arcs U_i with an expander f_i, neighbours overlapping by ``overlap``.

    The largest threshold tau from ``thresholds`` for which the greedy cover
    closes up is used; m1, M1 are then re-measured on each arc on a finer grid
    and the cover is rejected if some f_i' <= 1.
    """
    alphabet = as_alphabet(generators)
    if not scan.all_expandable:
        raise DegenerateError(f"non-expandable cells at cap {scan.cap}: {scan.non_expandable[:10].tolist()}")
    arcs = None
    for tau in thresholds:
        arcs = _greedy_cover(scan, tau, overlap)
        if arcs == "full":
            # one word expands everywhere: neighbours-only overlap needs s >= 3
            w = int(scan.best[0])
            arcs = _split_three(0.0, 1.0, w, overlap)
            break
        if arcs is not None:
            break
    if arcs is None:
        raise StallError("overlap construction failed: cover has a gap")
    if len(arcs) < 3:
        lo, hi, w = max(arcs, key=lambda a: a[1] - a[0])
        arcs.remove((lo, hi, w))
        arcs += _split_three(lo, hi, w, overlap)
        arcs.sort()
    intervals, expanders, mins, maxs = [], [], [], []
    for lo, hi, w in arcs:
        U = Arc(lo, hi)
        word = scan.words[w]
        jet = eval_jet(word, alphabet, U.grid(verify_grid))
        d1 = jet.d1
        slack = float(np.max(np.abs(jet.d2))) * U.length / verify_grid / 2
        mins.append(float(np.min(d1)) - slack)
        maxs.append(float(np.max(d1)) + slack)
        intervals.append(U)
        expanders.append(word)
    m1, M1 = min(mins), max(maxs)
    if m1 <= 1.0:
        raise DegenerateError(f"cover verification failed: m1 = {m1:.6f} <= 1")
    overlaps = []
    s = len(intervals)
    for i in range(s):
        a, b = intervals[i], intervals[(i + 1) % s]
        shift = math.floor(a.hi - b.lo)
        overlaps.append(a.hi - (b.lo + shift))
    L = float(min(overlaps))
    if L <= 0:
        raise StallError("cover has a gap between neighbouring arcs")
    return ExpansionCover(intervals, expanders, m1, M1, L, alphabet, tau)


# ---------------------------------------------------------------------------
# magnification
# ---------------------------------------------------------------------------

@dataclass
class Magnification:
    source: Arc
    word: GroupWord
    r: int
    image: Arc
    steps: list = field(default_factory=list)  # covering index used at each step
    r_bound: float = float("nan")
    L: float = 0.0
    M1: float = 0.0

    @property
    def sandwich_ok(self) -> bool:
        return self.L <= self.image.length <= self.L * self.M1 * (1 + 1e-12)

    @property
    def r_bound_ok(self) -> bool:
        return self.r <= self.r_bound


def magnify(cover: ExpansionCover, source: Arc, max_steps: int = 10_000) -> Magnification:
    """Apply covering expanders until the image first has length >= L."""
    if source.length >= cover.L:
        raise PreconditionError(f"source length {source.length} must be < L = {cover.L}")
    alph = cover.alphabet
    word = alph.identity()
    J = source
    steps = []
    while J.length < cover.L:
        i = cover.find(J)
        if i is None:
            raise StallError(f"no covering interval contains {J} (cover invariant violated)")
        f = cover.expanders[i]
        J = J.image(f, alph)
        word = f * word
        steps.append(i)
        if len(steps) > max_steps:
            raise StallError("step cap exceeded")
    r = len(steps)
    bound = (math.log(cover.L * cover.M1) - math.log(source.length)) / math.log(cover.m1)
    return Magnification(source, word, r, J, steps, bound, cover.L, cover.M1)


def m_bar(cover: ExpansionCover, grid_size: int = 512) -> float:
    """max over i of sup |f_i''| on U_i."""
    return max(float(np.max(np.abs(eval_jet(f, cover.alphabet, U.grid(grid_size)).d2)))
               for U, f in zip(cover.intervals, cover.expanders))


@dataclass
class D2Growth:
    sup_d2: float
    verbatim_bound: float      # Mbar * M1^(2r)
    chain_bound: float         # r * Mbar * M1^(2r - 1) / m1
    holder_bound: float        # Cbar * |b - a|^(ln beta)
    r: int

    @property
    def passed(self) -> bool:
        return self.sup_d2 <= self.verbatim_bound and self.sup_d2 <= self.holder_bound

    @property
    def chain_passed(self) -> bool:
        return self.sup_d2 <= self.chain_bound


def d2_growth_check(mag: Magnification, cover: ExpansionCover, grid_size: int = 256,
                    mbar: float | None = None) -> D2Growth:
    """sup |D^2 F_[a,b]| on the source against the magnification bounds."""
    mb = m_bar(cover) if mbar is None else mbar
    d2 = float(np.max(np.abs(eval_jet(mag.word, cover.alphabet, mag.source.grid(grid_size)).d2)))
    M1, m1, L = cover.M1, cover.m1, cover.L
    r = mag.r
    verbatim = mb * M1 ** (2 * r)
    chain = r * mb * M1 ** (2 * r - 1) / m1
    cbar = mb * M1 ** (2 * math.log(L * M1) / math.log(m1))
    ln_beta = -2 * math.log(M1) / math.log(m1)
    holder = cbar * mag.source.length ** ln_beta
    return D2Growth(d2, verbatim, chain, holder, r)


# ---------------------------------------------------------------------------
# distortion partition
# ---------------------------------------------------------------------------

@dataclass
class PartitionResult:
    k: int
    j_min: int
    distortion: float
    bound: float
    total: float
    total_bound: float
    slack: float

    @property
    def passed(self) -> bool:
        return self.distortion <= self.bound

    @property
    def sum_rule_ok(self) -> bool:
        return self.total <= self.total_bound + self.slack


def alphabet_log_lipschitz(generators, grid_size: int = 4096) -> float:
    """C = max over letters and inverses of sup |f''| / f' on the circle."""
    alphabet = as_alphabet(generators)
    arc = Arc(0.0, 1.0 - 1e-12)
    out = 0.0
    for i in range(len(alphabet)):
        for e in (1, -1):
            out = max(out, log_derivative_lipschitz(alphabet.letter(i, e), alphabet, arc, grid_size))
    return out


def min_distortion_partition(g: GroupWord, generators, J: Arc, k: int, letters: int, C: float,
                             c1: float | None = None, points_per_cell: int = 8) -> PartitionResult:
    """Distortion of g on the 5^k equal cells of J: the minimizing cell and the bound.

    ``c1`` defaults to 1.01 / L(J), the smallest round choice with c1 L(J) > 1.
    """
    if not 1 <= k <= 8:
        raise PreconditionError("k must lie in 1..8")
    alphabet = _resolve(g, generators)
    cells = 5 ** k
    c1 = 1.01 / J.length if c1 is None else c1
    p = points_per_cell
    xs = J.grid(cells * p)
    _, logd = eval_log_d1(g, alphabet, xs)
    if not np.all(np.isfinite(logd)):
        raise DegenerateError("evaluation failed on some cell")
    idx = np.arange(cells)[:, None] * p + np.arange(p + 1)[None, :]
    block = logd[idx]
    dist = block.max(axis=1) - block.min(axis=1)
    # sampled steps within a cell stand in for the between-node slack
    step = np.max(np.abs(np.diff(block, axis=1)), axis=1)
    j = int(np.argmin(dist))
    bound = c1 * C * J.length * letters / 5 ** k
    total = float(np.sum(dist))
    return PartitionResult(k, j, float(dist[j]), float(bound), total,
                           float(c1 * C * J.length * letters), float(np.sum(step) / 2))


def partition_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "j_min", "distortion", "bound", "pass"])
    for r in rows:
        w.writerow([r.k, r.j_min, f"{r.distortion:.6e}", f"{r.bound:.6e}", int(r.passed)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Hoelder exponent
# ---------------------------------------------------------------------------

@dataclass
class HolderEstimate:
    alpha: float
    stderr: float
    band: tuple
    n: int
    lower_bound: float | None = None


def holder_exponent(pairs, constants: dict | None = None, level: float = 0.95) -> HolderEstimate:
    """Slope of log(image length) against log(source length).

    ``constants`` may carry m1 and M2; the lower bound 1 / (1 + cbar) with
    cbar = ln(M2 / m1) / ln m1 is then reported as well.
    """
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 20:
        raise PreconditionError("need at least 20 (source, image) length pairs")
    src, img = arr[:, 0], arr[:, 1]
    if np.any(src <= 0) or np.any(img <= 0):
        raise PreconditionError("lengths must be positive")
    if math.log10(src.max() / src.min()) < 3:
        raise PreconditionError("insufficient dynamic range: source lengths must span 3 decades")
    fit = stats.linregress(np.log(src), np.log(img))
    t = stats.t.ppf(0.5 + level / 2, max(len(src) - 2, 1))
    band = (fit.slope - t * fit.stderr, fit.slope + t * fit.stderr)
    lower = None
    if constants and "m1" in constants and "M2" in constants:
        m1, M2 = constants["m1"], constants["M2"]
        cbar = math.log(M2 / m1) / math.log(m1)
        lower = 1.0 / (1.0 + cbar)
    return HolderEstimate(float(fit.slope), float(fit.stderr), band, len(src), lower)
