"""Circle diffeomorphisms as words over analytic primitives.

Conventions: the circle has length 1 and every map is handled through a lift
F with F(x + 1) = F(x) + 1.  A word ``((i1, e1), (i2, e2), ...)`` denotes the
composition ``g_i1**e1 o g_i2**e2 o ...``, so the rightmost letter acts first.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import (
    AlphabetMismatchError,
    ChartEscapeError,
    DegenerateError,
    GridTooCoarseError,
    InvariantError,
    InverseEvaluationError,
    KoenigsError,
    PreconditionError,
)

TWO_PI = 2.0 * math.pi

DET_TOL = 1e-12
INVERSE_TOL = 1e-13
INVERSE_MAX_ITER = 60
ROOT_TOL = 1e-12
TANGENCY_TOL = 1e-8
PARABOLIC_MARGIN = 1e-6
KOENIGS_STEP_TOL = 1e-10
KOENIGS_DEFECT_TOL = 1e-8


class Jet3(NamedTuple):
    """Value and first three derivatives of a lift (scalars or arrays)."""

    value: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray


def identity_jet(x) -> Jet3:
    x = np.asarray(x, dtype=float)
    return Jet3(x.copy(), np.ones_like(x), np.zeros_like(x), np.zeros_like(x))


def compose_jets(outer: Jet3, inner: Jet3) -> Jet3:
    """3-jet of ``f o g`` from the jet of f at g(x) and the jet of g at x."""
    f1, f2, f3 = outer.d1, outer.d2, outer.d3
    g1, g2, g3 = inner.d1, inner.d2, inner.d3
    return Jet3(
        outer.value,
        f1 * g1,
        f2 * g1 * g1 + f1 * g2,
        f3 * g1 ** 3 + 3.0 * f2 * g2 * g1 + f1 * g3,
    )


def inverse_jet_from(x, jet_at_x: Jet3) -> Jet3:
    """Jet of f^{-1} at y = f(x), given the jet of f at x."""
    f1, f2, f3 = jet_at_x.d1, jet_at_x.d2, jet_at_x.d3
    return Jet3(
        np.asarray(x, dtype=float),
        1.0 / f1,
        -f2 / f1 ** 3,
        -f3 / f1 ** 4 + 3.0 * f2 * f2 / f1 ** 5,
    )


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PrimitiveMap:
    """An analytic circle diffeomorphism with closed-form 3-jet.

    ``kind`` is one of ``rotation``, ``moebius``, ``trig`` or ``dilation``.
    The dilation x -> lam*x is chart-local (not a circle map) and exists so
    that an exactly linear hyperbolic element can appear as a word letter.
    A Moebius matrix M acts on the point x through the vector
    (sin pi x, cos pi x), so diag(s, 1/s) repels at 0 with multiplier s^2.
    """

    kind: str
    params: tuple

    def __post_init__(self):
        k, p = self.kind, self.params
        if k == "rotation":
            if len(p) != 1 or not math.isfinite(p[0]):
                raise InvariantError(f"rotation needs one finite angle, got {p}")
        elif k == "trig":
            if len(p) != 2 or not all(math.isfinite(v) for v in p):
                raise InvariantError(f"trig needs (offset, amplitude), got {p}")
            if abs(p[1]) >= 1.0:
                raise InvariantError(f"trig amplitude must satisfy |amp| < 1, got {p[1]}")
        elif k == "moebius":
            if len(p) != 4 or not all(math.isfinite(v) for v in p):
                raise InvariantError(f"moebius needs 4 matrix entries, got {p}")
            a, b, c, d = p
            if abs(a * d - b * c - 1.0) > DET_TOL:
                raise InvariantError(f"moebius determinant {a * d - b * c!r} differs from 1")
            if a + d < 0:
                # same projective action; keeps lift displacements in (-1/2, 1/2)
                object.__setattr__(self, "params", (-a, -b, -c, -d))
        elif k == "dilation":
            if len(p) != 1 or not (p[0] > 0 and math.isfinite(p[0])):
                raise InvariantError(f"dilation needs a positive factor, got {p}")
        else:
            raise InvariantError(f"unknown primitive kind {k!r}")

    # constructors -----------------------------------------------------
    @classmethod
    def rotation(cls, theta: float) -> "PrimitiveMap":
        return cls("rotation", (float(theta),))

    @classmethod
    def trig(cls, offset: float, amplitude: float) -> "PrimitiveMap":
        return cls("trig", (float(offset), float(amplitude)))

    @classmethod
    def moebius(cls, matrix) -> "PrimitiveMap":
        m = np.asarray(matrix, dtype=float).reshape(2, 2)
        return cls("moebius", (m[0, 0], m[0, 1], m[1, 0], m[1, 1]))

    @classmethod
    def moebius_normalized(cls, matrix) -> "PrimitiveMap":
        """Rescale a matrix with positive determinant into SL2 first."""
        m = np.asarray(matrix, dtype=float).reshape(2, 2)
        det = np.linalg.det(m)
        if det <= 0:
            raise InvariantError("matrix must have positive determinant")
        return cls.moebius(m / math.sqrt(det))

    @classmethod
    def dilation(cls, lam: float) -> "PrimitiveMap":
        return cls("dilation", (float(lam),))

    @property
    def chart_only(self) -> bool:
        return self.kind == "dilation"

    @property
    def matrix(self) -> np.ndarray:
        if self.kind != "moebius":
            raise AttributeError("only moebius primitives carry a matrix")
        a, b, c, d = self.params
        return np.array([[a, b], [c, d]])

    def inverse_primitive(self) -> "PrimitiveMap | None":
        """Closed-form inverse when one exists (all kinds except trig)."""
        if self.kind == "rotation":
            return PrimitiveMap.rotation(-self.params[0])
        if self.kind == "dilation":
            return PrimitiveMap.dilation(1.0 / self.params[0])
        if self.kind == "moebius":
            a, b, c, d = self.params
            return PrimitiveMap("moebius", (d, -b, -c, a))
        return None

    # evaluation -------------------------------------------------------
    def displacement(self, x):
        """f(x) - x; accepts complex input (used to build power-series germs)."""
        k, p = self.kind, self.params
        if k == "rotation":
            return np.full_like(np.asarray(x), p[0], dtype=np.result_type(x, float))
        if k == "dilation":
            return (p[0] - 1.0) * np.asarray(x)
        if k == "trig":
            return p[0] + p[1] / TWO_PI * np.sin(TWO_PI * np.asarray(x))
        a, b, c, d = p
        th = math.pi * np.asarray(x)
        co, si = np.cos(th), np.sin(th)
        cross = b * co * co + (a - d) * si * co - c * si * si
        dot = d * co * co + (b + c) * si * co + a * si * si
        if np.iscomplexobj(th):
            return np.arctan(cross / dot) / math.pi
        return np.arctan2(cross, dot) / math.pi

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "dilation":
            return self.params[0] * x
        return x + self.displacement(x)

    def jet(self, x) -> Jet3:
        x = np.asarray(x, dtype=float)
        k, p = self.kind, self.params
        if k == "rotation":
            return Jet3(x + p[0], np.ones_like(x), np.zeros_like(x), np.zeros_like(x))
        if k == "dilation":
            lam = p[0]
            return Jet3(lam * x, np.full_like(x, lam), np.zeros_like(x), np.zeros_like(x))
        if k == "trig":
            off, amp = p
            s, c = np.sin(TWO_PI * x), np.cos(TWO_PI * x)
            return Jet3(
                x + off + amp / TWO_PI * s,
                1.0 + amp * c,
                -TWO_PI * amp * s,
                -TWO_PI * TWO_PI * amp * c,
            )
        a, b, c, d = p
        th = math.pi * x
        # Q = |M v|^2 for the unit vector v at angle th; f' = 1/Q
        al, be, ga = d * d + b * b, d * c + a * b, c * c + a * a
        c2, s2 = np.cos(2 * th), np.sin(2 * th)
        q = 0.5 * (al + ga) + 0.5 * (al - ga) * c2 + be * s2
        q1 = -(al - ga) * s2 + 2 * be * c2
        q2 = -2 * (al - ga) * c2 - 4 * be * s2
        pi = math.pi
        return Jet3(
            self.value(x),
            1.0 / q,
            -pi * q1 / (q * q),
            pi * pi * (2 * q1 * q1 / q ** 3 - q2 / (q * q)),
        )

    def inverse_value(self, y):
        """Lift of f^{-1}; bracketed Newton for trig primitives."""
        y = np.asarray(y, dtype=float)
        inv = self.inverse_primitive()
        if inv is not None:
            return inv.value(y)
        off, amp = self.params
        k = amp / TWO_PI
        base = y - off
        lo, hi = base - abs(k), base + abs(k)
        s0, c0 = np.sin(TWO_PI * base), np.cos(TWO_PI * base)
        x = np.clip(base - k * s0 / (1.0 + amp * c0), lo, hi)
        for _ in range(INVERSE_MAX_ITER):
            g = x + k * np.sin(TWO_PI * x) - base
            lo = np.where(g < 0, x, lo)
            hi = np.where(g > 0, x, hi)
            step = g / (1.0 + amp * np.cos(TWO_PI * x))
            xn = x - step
            bad = (xn <= lo) | (xn >= hi)
            xn = np.where(bad, 0.5 * (lo + hi), xn)
            done = np.abs(xn - x) <= INVERSE_TOL
            x = xn
            if np.all(done):
                return x
        worst = np.unravel_index(np.argmax(np.abs(g)), np.shape(g)) if np.ndim(g) else ()
        raise InverseEvaluationError(self, float(np.asarray(y)[worst]))

    def inverse_jet(self, y) -> Jet3:
        x = self.inverse_value(y)
        return inverse_jet_from(x, self.jet(x))

    def to_dict(self) -> dict:
        k, p = self.kind, self.params
        if k == "rotation":
            return {"kind": k, "theta": p[0]}
        if k == "trig":
            return {"kind": k, "offset": p[0], "amplitude": p[1]}
        if k == "dilation":
            return {"kind": k, "lam": p[0]}
        return {"kind": k, "matrix": [[p[0], p[1]], [p[2], p[3]]]}

    @classmethod
    def from_dict(cls, spec: dict) -> "PrimitiveMap":
        kind = spec["kind"]
        if kind == "rotation":
            return cls.rotation(spec["theta"])
        if kind == "trig":
            return cls.trig(spec.get("offset", 0.0), spec["amplitude"])
        if kind == "dilation":
            return cls.dilation(spec["lam"])
        if kind == "moebius":
            if spec.get("normalize", False):
                return cls.moebius_normalized(spec["matrix"])
            return cls.moebius(spec["matrix"])
        raise InvariantError(f"unknown primitive kind {kind!r}")


def rotation_matrix(theta: float) -> np.ndarray:
    """SL2 matrix acting on the circle as the rotation by theta."""
    c, s = math.cos(math.pi * theta), math.sin(math.pi * theta)
    return np.array([[c, s], [-s, c]])


def hyperbolic_matrix(s: float, center: float = 0.0) -> np.ndarray:
    """Matrix with repelling fixed point at ``center`` (multiplier s**2) and
    attracting fixed point at ``center + 1/2`` (multiplier s**-2)."""
    return rotation_matrix(center) @ np.diag([s, 1.0 / s]) @ rotation_matrix(-center)


# ---------------------------------------------------------------------------
# alphabets and words
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Alphabet:
    """An ordered generator list; its id ties words to it."""

    generators: tuple
    chart_radius: float | None = None
    id: str = field(init=False)

    def __post_init__(self):
        gens = tuple(self.generators)
        object.__setattr__(self, "generators", gens)
        tag = repr([(g.kind, g.params) for g in gens]) + repr(self.chart_radius)
        object.__setattr__(self, "id", hashlib.sha1(tag.encode()).hexdigest()[:12])

    def __len__(self):
        return len(self.generators)

    def __getitem__(self, i) -> PrimitiveMap:
        return self.generators[i]

    def word(self, letters: Iterable = ()) -> "GroupWord":
        return GroupWord.from_letters(letters, self.id)

    def letter(self, index: int, exponent: int = 1) -> "GroupWord":
        return GroupWord.from_letters([(index, exponent)], self.id)

    def identity(self) -> "GroupWord":
        return GroupWord((), self.id)

    def has_chart_letters(self, word: "GroupWord") -> bool:
        return any(self.generators[i].chart_only for i, _ in word.letters)

    def to_list(self) -> list:
        return [g.to_dict() for g in self.generators]

    @classmethod
    def from_list(cls, specs: Sequence[dict], chart_radius=None) -> "Alphabet":
        return cls(tuple(PrimitiveMap.from_dict(s) for s in specs), chart_radius)


def as_alphabet(generators) -> Alphabet:
    if isinstance(generators, Alphabet):
        return generators
    return Alphabet(tuple(generators))


def _reduce(letters: Iterable) -> tuple:
    stack: list = []
    for idx, exp in letters:
        idx, exp = int(idx), int(exp)
        if idx < 0:
            raise InvariantError("generator index must be >= 0")
        if exp == 0:
            continue
        if stack and stack[-1][0] == idx:
            merged = stack[-1][1] + exp
            stack.pop()
            if merged != 0:
                stack.append((idx, merged))
        else:
            stack.append((idx, exp))
    return tuple(stack)


@dataclass(frozen=True)
class GroupWord:
    """A reduced signed word over an alphabet; the empty word is the identity."""

    letters: tuple
    alphabet_id: str

    @classmethod
    def from_letters(cls, letters: Iterable, alphabet_id: str) -> "GroupWord":
        return cls(_reduce(letters), alphabet_id)

    def __post_init__(self):
        prev = None
        for idx, exp in self.letters:
            if exp == 0 or idx == prev:
                raise InvariantError("word is not reduced; use GroupWord.from_letters")
            prev = idx

    @property
    def length(self) -> int:
        return sum(abs(e) for _, e in self.letters)

    @property
    def is_identity(self) -> bool:
        return not self.letters

    def _check(self, other: "GroupWord"):
        if other.alphabet_id != self.alphabet_id:
            raise AlphabetMismatchError(f"{self.alphabet_id} vs {other.alphabet_id}")

    def __mul__(self, other: "GroupWord") -> "GroupWord":
        self._check(other)
        return GroupWord.from_letters(self.letters + other.letters, self.alphabet_id)

    def inverse(self) -> "GroupWord":
        return GroupWord(tuple((i, -e) for i, e in reversed(self.letters)), self.alphabet_id)

    def __pow__(self, k: int) -> "GroupWord":
        if k < 0:
            return self.inverse() ** (-k)
        out = GroupWord((), self.alphabet_id)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def conjugate(self, by: "GroupWord", power: int = 1) -> "GroupWord":
        """by**(-power) * self * by**power."""
        p = by ** power
        return p.inverse() * self * p

    def __str__(self):
        if not self.letters:
            return "id"
        return " ".join(f"g{i}^{e}" if e != 1 else f"g{i}" for i, e in self.letters)


def commutator(w1: GroupWord, w2: GroupWord) -> GroupWord:
    """Reduced word for [w1, w2] = w1 w2 w1^-1 w2^-1."""
    w1._check(w2)
    return GroupWord.from_letters(
        w1.letters + w2.letters + w1.inverse().letters + w2.inverse().letters,
        w1.alphabet_id,
    )


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _resolve(word: GroupWord, generators) -> Alphabet:
    alphabet = as_alphabet(generators)
    if word.alphabet_id != alphabet.id:
        raise AlphabetMismatchError(f"word alphabet {word.alphabet_id} != {alphabet.id}")
    for idx, _ in word.letters:
        if idx >= len(alphabet):
            raise AlphabetMismatchError(f"generator index {idx} out of range")
    return alphabet


def _check_chart(alphabet: Alphabet, prim: PrimitiveMap, values):
    if alphabet.chart_radius is not None and np.any(np.abs(values) > alphabet.chart_radius):
        raise ChartEscapeError(f"image left the chart |x| <= {alphabet.chart_radius} after {prim!r}")


def _letter_steps(word: GroupWord):
    """Yield (generator index, +1/-1) in order of application."""
    for idx, exp in reversed(word.letters):
        sign = 1 if exp > 0 else -1
        for _ in range(abs(exp)):
            yield idx, sign


def eval_jet(word: GroupWord, generators, x) -> Jet3:
    """3-jet of the lift of ``word`` at x (vectorized over x)."""
    alphabet = _resolve(word, generators)
    guard = alphabet.chart_radius is not None and alphabet.has_chart_letters(word)
    jet = identity_jet(x)
    for idx, sign in _letter_steps(word):
        prim = alphabet[idx]
        step = prim.jet(jet.value) if sign > 0 else prim.inverse_jet(jet.value)
        jet = compose_jets(step, jet)
        if guard:
            _check_chart(alphabet, prim, jet.value)
    return jet


def eval_value(word: GroupWord, generators, x) -> np.ndarray:
    """Lift value only; cheaper than eval_jet."""
    alphabet = _resolve(word, generators)
    guard = alphabet.chart_radius is not None and alphabet.has_chart_letters(word)
    v = np.array(x, dtype=float, copy=True)
    for idx, sign in _letter_steps(word):
        prim = alphabet[idx]
        v = prim.value(v) if sign > 0 else prim.inverse_value(v)
        if guard:
            _check_chart(alphabet, prim, v)
    return v


def eval_log_d1(word: GroupWord, generators, x):
    """(value, log d1) along the word; safe for long words whose d1 overflows."""
    alphabet = _resolve(word, generators)
    v = np.array(x, dtype=float, copy=True)
    logd = np.zeros_like(v)
    for idx, sign in _letter_steps(word):
        prim = alphabet[idx]
        if sign > 0:
            j = prim.jet(v)
            logd += np.log(j.d1)
            v = j.value
        else:
            xv = prim.inverse_value(v)
            logd -= np.log(prim.jet(xv).d1)
            v = xv
    return v, logd


def eval_log_jet(word: GroupWord, generators, x):
    """(value, log d1, d2/d1) along the word without forming d1 itself."""
    alphabet = _resolve(word, generators)
    v = np.array(x, dtype=float, copy=True)
    logd = np.zeros_like(v)
    ratio = np.zeros_like(v)  # (log g')' of the partial composition g
    for idx, sign in _letter_steps(word):
        prim = alphabet[idx]
        if sign > 0:
            j = prim.jet(v)
        else:
            j = prim.inverse_jet(v)
        # (log (f o g)')' = (f''/f')(g) g' + (log g')'
        ratio = j.d2 / j.d1 * np.exp(logd) + ratio
        logd = logd + np.log(j.d1)
        v = j.value
    return v, logd, ratio


# ---------------------------------------------------------------------------
# arcs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Arc:
    """Lift interval [lo, hi] of a proper arc of the length-1 circle."""

    lo: float
    hi: float

    def __post_init__(self):
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        length = self.hi - self.lo
        if not (0.0 < length < 1.0):
            raise InvariantError(f"arc length must lie in (0, 1), got {length}")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def center(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def grid(self, cells: int) -> np.ndarray:
        """Uniform grid with ``cells`` cells (cells + 1 nodes, endpoints included)."""
        return np.linspace(self.lo, self.hi, int(cells) + 1)

    def contains(self, x, tol: float = 0.0) -> bool:
        return bool(np.all((np.asarray(x) >= self.lo - tol) & (np.asarray(x) <= self.hi + tol)))

    def contains_arc(self, other: "Arc", tol: float = 0.0) -> bool:
        """True when ``other`` lies inside self modulo integer translation."""
        shift = math.floor(other.lo - self.lo)
        for s in (shift, shift + 1, shift - 1):
            if other.lo - s >= self.lo - tol and other.hi - s <= self.hi + tol:
                return True
        return False

    def shrink(self, margin: float) -> "Arc":
        return Arc(self.lo + margin, self.hi - margin)

    def image(self, word: GroupWord, generators) -> "Arc":
        lo, hi = eval_value(word, generators, np.array([self.lo, self.hi]))
        return Arc(lo, hi)

    @classmethod
    def centered(cls, center: float, radius: float) -> "Arc":
        return cls(center - radius, center + radius)


# ---------------------------------------------------------------------------
# fixed points
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FixedPointRecord:
    location: float
    multiplier: float
    classification: str
    transverse: bool = True

    @property
    def is_attracting(self) -> bool:
        return self.classification == "attracting-hyperbolic"


def classify_multiplier(m: float, margin: float = PARABOLIC_MARGIN) -> str:
    if abs(m - 1.0) <= margin:
        return "parabolic"
    return "attracting-hyperbolic" if m < 1.0 else "repelling-hyperbolic"


def _refine_root(fn, lo, hi, flo, tol=ROOT_TOL, max_iter=200):
    """Safeguarded Newton on a bracket [lo, hi] with fn(lo) = flo."""
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        g, dg = fn(x)
        if g == 0.0:
            return x
        if (g < 0) == (flo < 0):
            lo, flo = x, g
        else:
            hi = x
        xn = x - g / dg if dg != 0 else 0.5 * (lo + hi)
        if not (lo < xn < hi):
            xn = 0.5 * (lo + hi)
        if abs(xn - x) < tol or hi - lo < tol:
            return xn
        x = xn
    return x


def find_fixed_points(word: GroupWord, generators, grid_density: int = 256):
    """Fixed points of the circle map of ``word`` on one period [0, 1)."""
    if grid_density < 64:
        raise PreconditionError("grid_density must be >= 64")
    alphabet = _resolve(word, generators)
    if alphabet.has_chart_letters(word):
        raise PreconditionError("chart-local letters have no circle fixed points")
    if word.is_identity:
        raise DegenerateError("identically fixed: identity word")

    xs = np.linspace(0.0, 1.0, grid_density + 1)
    jet = eval_jet(word, alphabet, xs)
    disp = jet.value - xs
    shift = np.round(np.median(disp))
    g = disp - shift
    dg = jet.d1 - 1.0
    if np.max(np.abs(g)) < TANGENCY_TOL and np.max(np.abs(dg)) < TANGENCY_TOL:
        raise DegenerateError("identically fixed: word acts as the identity on the grid")

    def fn(x):
        j = eval_jet(word, alphabet, np.array([x]))
        return float(j.value[0] - x - shift), float(j.d1[0] - 1.0)

    records = []
    step = 1.0 / grid_density
    for i in range(grid_density):
        a, b = g[i], g[i + 1]
        if a == 0.0:
            root = xs[i]
        elif a * b < 0:
            if dg[i] * dg[i + 1] < 0 and min(abs(a), abs(b)) < step * max(abs(dg[i]), abs(dg[i + 1])):
                raise GridTooCoarseError(f"possible clustered roots in [{xs[i]}, {xs[i + 1]}]")
            root = _refine_root(fn, xs[i], xs[i + 1], a)
        elif dg[i] * dg[i + 1] < 0 and min(abs(a), abs(b)) < 10 * step * max(abs(dg[i]), abs(dg[i + 1])):
            # local extremum of f - id inside the cell: possible tangency
            root = _refine_extremum(fn, xs[i], xs[i + 1], dg[i])
            gv, _ = fn(root)
            if abs(gv) >= TANGENCY_TOL:
                continue
            j = eval_jet(word, alphabet, np.array([root]))
            records.append(FixedPointRecord(float(root % 1.0), float(j.d1[0]), "parabolic", transverse=False))
            continue
        else:
            continue
        j = eval_jet(word, alphabet, np.array([root]))
        m = float(j.d1[0])
        records.append(FixedPointRecord(float(root % 1.0), m, classify_multiplier(m)))
    # a root on the seam x = 0 == 1 can be found twice
    out = []
    for r in sorted(records, key=lambda r: r.location):
        if out and min(abs(r.location - out[-1].location), 1 - abs(r.location - out[-1].location)) < 1e-9:
            continue
        out.append(r)
    if len(out) > 1 and min(abs(out[0].location - out[-1].location), 1 - abs(out[0].location - out[-1].location)) < 1e-9:
        out.pop()
    return out


def _refine_extremum(fn, lo, hi, dlo, tol=1e-13):
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        _, d = fn(mid)
        if (d < 0) == (dlo < 0):
            lo, dlo = mid, d
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Koenigs linearization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KoenigsChart:
    """Sampled Koenigs coordinate h with h(p) = 0 and h o F ~ lam * h."""

    word: GroupWord
    alphabet: Alphabet
    center: float
    multiplier: float
    depth: int
    grid: np.ndarray
    values: np.ndarray
    defect: float
    converged: bool
    flagged: bool

    def __call__(self, x):
        """Evaluate the truncated chart at arbitrary points of its basin."""
        y = np.asarray(x, dtype=float)
        for _ in range(self.depth):
            y = eval_value(self.word, self.alphabet, y)
        return (y - self.center) / self.multiplier ** self.depth

    def derivative(self, x):
        y = np.asarray(x, dtype=float)
        logd = np.zeros_like(y)
        for _ in range(self.depth):
            y, ld = eval_log_d1(self.word, self.alphabet, y)
            logd += ld
        return np.exp(logd) / self.multiplier ** self.depth

    def inverse(self, xi):
        """Chart inverse by Newton started from the sampled table."""
        xi = np.asarray(xi, dtype=float)
        x = np.interp(xi, self.values, self.grid)
        for _ in range(50):
            step = (self(x) - xi) / self.derivative(x)
            x = x - step
            if np.max(np.abs(step)) < 1e-15:
                break
        return x


def koenigs_linearize(word: GroupWord, generators, fixed_point: FixedPointRecord, domain: Arc,
                      depth: int = 400, grid_size: int = 512, strict: bool = False) -> KoenigsChart:
    """Koenigs chart h(x) = lim lam^-n (F^n(x) - p) sampled on ``domain``.

    Iteration stops at the first n whose successive chart difference is below
    1e-10 on the grid, or at ``depth``.  The conjugacy defect
    sup |h(F(x)) - lam h(x)| is measured on the grid; a chart that did not
    converge or whose defect exceeds 1e-8 is flagged (raised when ``strict``).
    """
    alphabet = _resolve(word, generators)
    lam = float(fixed_point.multiplier)
    if not (0.0 < lam < 1.0):
        raise PreconditionError(f"multiplier {lam} is not attracting")
    p = fixed_point.location
    p = p + math.floor(domain.center - p + 0.5)
    if not domain.contains(p):
        raise PreconditionError("domain does not contain the fixed point")

    ends = np.array([domain.lo, domain.hi])
    for _ in range(max(depth, 2000)):
        ends = eval_value(word, alphabet, ends)
        if np.max(np.abs(ends - p)) < 1e-13:
            break
    if np.max(np.abs(ends - p)) > 1e-6:
        raise KoenigsError("domain escapes the basin of the fixed point")

    xs = domain.grid(grid_size)
    y = xs.copy()
    h = xs - p
    converged = False
    n = 0
    while n < depth:
        y = eval_value(word, alphabet, y)
        h_next = (y - p) / lam ** (n + 1)
        diff = np.max(np.abs(h_next - h))
        h = h_next
        n += 1
        if diff < KOENIGS_STEP_TOL:
            converged = True
            break
    fx = eval_value(word, alphabet, xs)
    yf = fx.copy()
    for _ in range(n):
        yf = eval_value(word, alphabet, yf)
    h_of_f = (yf - p) / lam ** n
    defect = float(np.max(np.abs(h_of_f - lam * h)))
    flagged = (not converged) or defect > KOENIGS_DEFECT_TOL
    if strict and flagged:
        raise KoenigsError(f"chart not converged within depth {depth} (defect {defect:.3e})")
    return KoenigsChart(word, alphabet, p, lam, n, xs, h, defect, converged, flagged)
