"""Commutator cascades S(k), their renormalizations and decay verification.

Two evaluation paths share the same level bookkeeping:

* word mode evaluates members letter by letter (any alphabet, small k);
* exact-chart mode models the hyperbolic element as the chart dilation
  x -> lam x and carries every member of the renormalized levels as a
  power-series germ at 0 (see ``germs``), which keeps relative precision
  through the doubly exponential decay of the cascade.

Words are built lazily: a member stores its parents and signs and spells
out its reduced word only on request.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import germs as G
from .circle_maps import (
    Alphabet,
    Arc,
    GroupWord,
    PrimitiveMap,
    _resolve,
    commutator,
    eval_jet,
    eval_value,
    find_fixed_points,
)
from .errors import DegenerateError, InvariantError, PreconditionError
from .metrics import DEFAULT_TOLERANCES, CmDistance, cm_distance, cm_distance_germ

SHRINK = 0.9


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CascadeConfig:
    a: float
    eps0: float
    eps: float
    lam: float
    n: int
    C: float
    k_max: int = 8
    delta: float = 0.1

    @property
    def arc(self) -> Arc:
        return Arc(-self.a, self.a)

    @property
    def shrunk_arc(self) -> Arc:
        return Arc(-self.a + 5 * self.eps0, self.a - 5 * self.eps0)

    def condition_a(self) -> bool:
        ln = self.lam ** self.n
        first = 0 < ln * self.a < self.a - 5 * self.eps0 and ln < 1 / 20
        if self.n == 1:
            return first
        lp = self.lam ** (self.n - 1)
        return first and not (lp * self.a < self.a - 5 * self.eps0 and lp < 1 / 20)

    def condition_c(self) -> bool:
        k = self.lam ** -self.n + 1
        return self.eps * max(k * self.C, k) < self.delta

    def appendix_condition(self) -> bool:
        return self.lam ** (2 * self.n) < 0.1

    def conditions(self) -> dict:
        return {"A": self.condition_a(), "C": self.condition_c(), "appendix": self.appendix_condition()}


def minimal_n(lam: float, a: float, eps0: float) -> int:
    n = 1
    while not (lam ** n * a < a - 5 * eps0 and lam ** n < 1 / 20):
        n += 1
    return n


def select_params(lam: float, a: float, eps0: float | None = None, C: float = 1.0,
                  delta: float = 0.1, k_max: int = 8) -> CascadeConfig:
    """Minimal n under condition (A) and the supremal eps under (C), times 0.9."""
    if not 0 < lam < 1:
        raise PreconditionError(f"lam must lie in (0, 1), got {lam}")
    if eps0 is None:
        eps0 = a / 20
    if not (a > 10 * eps0 > 0):
        raise PreconditionError(f"infeasible geometry: need a > 10 eps0 > 0 (a={a}, eps0={eps0})")
    if C <= 0 or delta <= 0:
        raise PreconditionError("C and delta must be positive")
    n = minimal_n(lam, a, eps0)
    k = lam ** -n + 1
    eps = SHRINK * delta / max(k * C, k)
    cfg = CascadeConfig(a, eps0, eps, lam, n, C, k_max, delta)
    bad = [name for name, ok in cfg.conditions().items() if not ok and name != "appendix"]
    if bad:
        raise InvariantError(f"selected parameters violate conditions {bad}")
    return cfg


# ---------------------------------------------------------------------------
# lazy words and level sets
# ---------------------------------------------------------------------------

class WordNode:
    """Lazily spelled group element: a leaf word, a commutator or a conjugate."""

    def __init__(self, kind: str, *args):
        self.kind = kind
        self.args = args

    @classmethod
    def leaf(cls, word: GroupWord) -> "WordNode":
        return cls("leaf", word)

    @classmethod
    def comm(cls, a: "WordNode", sa: int, b: "WordNode", sb: int) -> "WordNode":
        return cls("comm", a, sa, b, sb)

    @classmethod
    def conj(cls, inner: "WordNode", by: GroupWord, power: int) -> "WordNode":
        return cls("conj", inner, by, power)

    @cached_property
    def word(self) -> GroupWord:
        if self.kind == "leaf":
            return self.args[0]
        if self.kind == "comm":
            a, sa, b, sb = self.args
            wa = a.word if sa > 0 else a.word.inverse()
            wb = b.word if sb > 0 else b.word.inverse()
            return commutator(wa, wb)
        inner, by, power = self.args
        return inner.word.conjugate(by, power)


@dataclass
class Member:
    node: WordNode
    parents: tuple | None  # ((level, index, sign), (level, index, sign))
    c0: float
    germ: np.ndarray | None = None

    @property
    def word(self) -> GroupWord:
        return self.node.word


@dataclass
class LevelSet:
    k: int
    members: list
    candidate_count: int = 0
    discarded: int = 0
    renormalized: bool = False

    @property
    def degenerate(self) -> bool:
        return not self.members

    @property
    def provenance(self) -> list:
        return [m.parents for m in self.members]


def _candidate_pairs(levels, k):
    """(parent_i, parent_j) index pairs following the level recursion."""
    prev = levels[k - 1].members
    pool = [(k - 1, j) for j in range(len(prev))]
    if k >= 2:
        pool += [(k - 2, j) for j in range(len(levels[k - 2].members))]
    out = []
    for i in range(len(prev)):
        for lv, j in pool:
            if lv == k - 1 and j == i:
                continue
            for s1 in (1, -1):
                for s2 in (1, -1):
                    out.append(((k - 1, i, s1), (lv, j, s2)))
    return out


def _select(cands, prune_cap, key_extra):
    """Keep the prune_cap candidates of largest C0, ties broken deterministically."""
    order = sorted(range(len(cands)), key=lambda t: (-cands[t][0], key_extra(t)))
    return [cands[t] for t in order[:prune_cap]]


def build_levels(S0, generators, k_max: int, prune_cap: int = 16, arc: Arc | None = None,
                 grid_size: int = 256, threshold: float = DEFAULT_TOLERANCES.nonidentity_c0) -> list:
    """Word-mode levels S(0..k_max) with C0 threshold filtering and pruning.

    Building stops at the first empty level, which is returned with
    ``degenerate`` set ("numerically degenerate at level k").
    """
    alphabet = as_alphabet_checked(S0, generators)
    arc = arc or Arc(-0.2, 0.2)
    xs = arc.grid(grid_size)

    def c0(word):
        return float(np.max(np.abs(eval_value(word, alphabet, xs) - xs)))

    level0 = []
    for w in S0:
        d = c0(w)
        if d < threshold:
            raise PreconditionError(f"S0 member {w} is below the nonidentity threshold")
        level0.append(Member(WordNode.leaf(w), None, d))
    levels = [LevelSet(0, level0, len(S0))]
    for k in range(1, k_max + 1):
        pairs = _candidate_pairs(levels, k)
        seen = set()
        cands = []
        for p1, p2 in pairs:
            a = levels[p1[0]].members[p1[1]]
            b = levels[p2[0]].members[p2[1]]
            node = WordNode.comm(a.node, p1[2], b.node, p2[2])
            w = node.word
            if w.letters in seen:
                continue
            seen.add(w.letters)
            d = c0(w)
            if d >= threshold:
                cands.append((d, node, (p1, p2)))
        kept = _select(cands, prune_cap, lambda t: cands[t][1].word.letters)
        members = [Member(node, par, d) for d, node, par in kept]
        levels.append(LevelSet(k, members, len(pairs), len(pairs) - len(members)))
        if not members:
            break
    return levels


def as_alphabet_checked(S0, generators) -> Alphabet:
    if not S0:
        raise PreconditionError("S0 must be non-empty")
    alphabet = _resolve(S0[0], generators)
    for w in S0[1:]:
        _resolve(w, alphabet)
    return alphabet


def _check_hyperbolic(F: GroupWord, alphabet: Alphabet, center: float, lam: float | None):
    """Verify that F has an attracting hyperbolic fixed point at ``center``."""
    if len(F.letters) == 1 and alphabet[F.letters[0][0]].chart_only:
        idx, e = F.letters[0]
        mult = alphabet[idx].params[0] ** e
        if not (0 < mult < 1) or abs(center) > 1e-12:
            raise PreconditionError("chart dilation must contract toward the chart origin")
        return mult
    recs = [r for r in find_fixed_points(F, alphabet, 256) if r.is_attracting]
    for r in recs:
        if min(abs(r.location - center) % 1.0, 1 - abs(r.location - center) % 1.0) < 1e-9:
            if lam is not None and abs(r.multiplier - lam) > 1e-9:
                raise PreconditionError(f"multiplier {r.multiplier} differs from lam={lam}")
            return r.multiplier
    raise PreconditionError("F has no attracting hyperbolic fixed point at the arc center")


def renormalize_levels(levels, F: GroupWord, n: int, generators=None, center: float = 0.0,
                       lam: float | None = None) -> list:
    """S~(k) = F^{-kn} S(k) F^{kn}, member by member (words only)."""
    if generators is not None:
        _check_hyperbolic(F, as_alphabet(generators), center, lam)
    out = []
    for lv in levels:
        members = [Member(WordNode.conj(m.node, F, lv.k * n) if lv.k else m.node, m.parents, float("nan"))
                   for m in lv.members]
        out.append(LevelSet(lv.k, members, lv.candidate_count, lv.discarded, True))
    return out


def inline_levels(levels, F: GroupWord, n: int) -> list:
    """S~(k) through the inline recursion [F^-n f1 F^n, F^-(k-l)n f2 F^(k-l)n]."""
    out = [LevelSet(0, [Member(m.node, None, m.c0) for m in levels[0].members], renormalized=True)]
    for lv in levels[1:]:
        members = []
        for m in lv.members:
            (l1, i1, s1), (l2, i2, s2) = m.parents
            a = WordNode.conj(out[l1].members[i1].node, F, (lv.k - l1) * n)
            b = WordNode.conj(out[l2].members[i2].node, F, (lv.k - l2) * n)
            members.append(Member(WordNode.comm(a, s1, b, s2), m.parents, float("nan")))
        out.append(LevelSet(lv.k, members, lv.candidate_count, lv.discarded, True))
    return out


def as_alphabet(generators) -> Alphabet:
    from .circle_maps import as_alphabet as _as
    return _as(generators)


# ---------------------------------------------------------------------------
# exact-chart cascade
# ---------------------------------------------------------------------------

def chart_cascade(S0, generators, F: GroupWord, n: int, k_max: int, prune_cap: int = 16,
                  arc: Arc | None = None, grid_size: int = 512, rho: float | None = None,
                  degree: int = G.DEFAULT_DEGREE,
                  rel_threshold: float = DEFAULT_TOLERANCES.germ_nonidentity_rel) -> list:
    """Renormalized levels S~(0..k_max) with members carried as chart germs.

    ``F`` must be a single chart dilation letter.  A candidate is treated as
    the identity when its C0 size is below ``rel_threshold`` times
    sup|u'| sup|v| + sup|v'| sup|u|, the size of the terms that cancel in
    the commutator (an absolute floor would discard the tiny deep levels).
    """
    alphabet = as_alphabet_checked(S0, generators)
    lam = _check_hyperbolic(F, alphabet, 0.0, None)
    arc = arc or Arc(-0.2, 0.2)
    rho = rho or max(abs(arc.lo), abs(arc.hi))
    xs = arc.grid(grid_size)
    q = lam ** n

    level0 = []
    for w in S0:
        coef = G.word_germ(w, alphabet, rho, degree)
        d = float(np.max(np.abs(G.evaluate(coef, rho, xs, 0)[0])))
        if d < DEFAULT_TOLERANCES.nonidentity_c0:
            raise PreconditionError(f"S0 member {w} is below the nonidentity threshold")
        level0.append(Member(WordNode.leaf(w), None, d, coef))
    levels = [LevelSet(0, level0, len(S0), renormalized=True)]

    for k in range(1, k_max + 1):
        pairs = _candidate_pairs(levels, k)
        # renormalized parents and their inverses, cached per (level, index, sign)
        cache = {}

        def parent(ref):
            lv, i, s = ref
            key = (lv, i, s)
            if key not in cache:
                base = G.renormalize(levels[lv].members[i].germ, q ** (k - lv))
                cache[key] = base if s > 0 else G.inverse(base)
            return cache[key]

        U = np.array([parent(p1) for p1, _ in pairs])
        V = np.array([parent(p2) for _, p2 in pairs])
        W = G.commutator(U, V)
        dev = G.evaluate(W, rho, xs, 1)
        c0 = np.max(np.abs(dev[0]), axis=-1)
        du = G.evaluate(U, rho, xs, 1)
        dv = G.evaluate(V, rho, xs, 1)
        # scale of the cancelling terms u' v and v' u of f o g - g o f
        scale = (np.max(np.abs(du[1]), axis=-1) * np.max(np.abs(dv[0]), axis=-1)
                 + np.max(np.abs(dv[1]), axis=-1) * np.max(np.abs(du[0]), axis=-1))
        alive = c0 > rel_threshold * scale
        order = sorted(np.flatnonzero(alive), key=lambda t: (-c0[t], pairs[t]))
        members = []
        for t in order:
            if len(members) >= prune_cap:
                break
            # drop numerical duplicates of an already kept member
            if any(np.max(np.abs(W[t] - m.germ)) <= 1e-12 * np.max(np.abs(m.germ)) for m in members):
                continue
            p1, p2 = pairs[t]
            a = levels[p1[0]].members[p1[1]].node
            b = levels[p2[0]].members[p2[1]].node
            node = WordNode.comm(WordNode.conj(a, F, (k - p1[0]) * n), p1[2],
                                 WordNode.conj(b, F, (k - p2[0]) * n), p2[2])
            members.append(Member(node, (p1, p2), float(c0[t]), W[t].copy()))
        levels.append(LevelSet(k, members, len(pairs), len(pairs) - len(members), True))
        if not members:
            break
    return levels


def germ_resolution(coef: np.ndarray, tail: int = 4) -> float:
    """Relative size of the last coefficients: a truncation-error proxy."""
    total = np.sum(np.abs(coef))
    if total == 0:
        return 0.0
    return float(np.sum(np.abs(coef[-tail:])) / total)


# ---------------------------------------------------------------------------
# decay verification
# ---------------------------------------------------------------------------

@dataclass
class CascadeRow:
    k: int
    word_len: int
    c0: float
    c1: float
    c2: float
    c3: float
    bound: float
    ratio: float
    status: str
    slack: float = 0.0
    sup_d2: float = float("nan")
    sup_d3: float = float("nan")
    letter_bound: int = 0
    d3_ratio: float = float("nan")
    notes: str = ""


@dataclass
class CascadeReport:
    config: CascadeConfig
    rows: list
    degenerate_level: int | None = None
    checks: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return any(r.status != "PASS" for r in self.rows) or self.degenerate_level is not None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "word_len", "c0", "c1", "c2", "c3", "bound", "ratio", "status"])
        for r in self.rows:
            w.writerow([r.k, r.word_len, f"{r.c0:.6e}", f"{r.c1:.6e}", f"{r.c2:.6e}",
                        f"{r.c3:.6e}", f"{r.bound:.6e}", f"{r.ratio:.6e}", r.status])
        return buf.getvalue()


def _member_distances(member: Member, alphabet, arc: Arc, grid_size: int, rho: float) -> list:
    if member.germ is not None:
        g = G.Germ(member.germ, rho)
        return [cm_distance_germ(g, arc, m, grid_size) for m in range(4)]
    return [cm_distance(member.word, alphabet, arc, m, grid_size) for m in range(4)]


def verify_decay(levels, config: CascadeConfig, generators, orders=(0, 1, 2), grid_size: int = 512,
                 rho: float | None = None, d3_factor: float = 0.9, spell_words: bool = True,
                 letter_unit: int = 1) -> CascadeReport:
    """Tabulate the chosen member of each renormalized level against eps / 2^floor(k/2).

    A row FAILS when its C2 distance exceeds the bound by more than the grid
    slack, when (order 3 requested) sup|D^3| did not shrink by ``d3_factor``
    from the previous level, when a germ is not resolved by its degree, or
    when the configuration breaks condition (A), (C) or, for order 3, the
    appendix condition.
    """
    alphabet = as_alphabet(generators)
    arc = config.arc
    rho = rho or config.a
    rows = []
    degenerate = None
    checks = config.conditions()
    prev_d3 = None
    for lv in levels:
        if lv.k == 0:
            continue
        if lv.degenerate:
            degenerate = lv.k
            rows.append(CascadeRow(lv.k, 0, *([float("nan")] * 4), float("nan"), float("nan"),
                                   "DEGENERATE", notes=f"numerically degenerate at level {lv.k}"))
            break
        member = max(lv.members, key=lambda m: m.c0 if not math.isnan(m.c0) else -1)
        if math.isnan(member.c0):
            member = max(lv.members, key=lambda m: cm_distance(m.word, alphabet, arc, 0, grid_size).value)
        dists = _member_distances(member, alphabet, arc, grid_size, rho)
        c = [d.value for d in dists]
        bound = config.eps / 2 ** (lv.k // 2)
        ratio = c[2] / bound
        status = "PASS" if c[2] <= bound + dists[2].slack else "FAILED"
        notes = []
        sup_d3 = dists[3].per_order[3]
        d3_ratio = float("nan")
        if 3 in orders:
            if prev_d3 is not None and prev_d3 > 0:
                d3_ratio = sup_d3 / prev_d3
                if lv.k >= 2 and not d3_ratio <= d3_factor:
                    status = "FAILED"
                    notes.append("D3 decay")
            prev_d3 = sup_d3
        if member.germ is not None and germ_resolution(member.germ) > 1e-10:
            status = "FAILED"
            notes.append("germ unresolved")
        word_len = member.word.length if spell_words else -1
        rows.append(CascadeRow(lv.k, word_len, c[0], c[1], c[2], c[3], bound, ratio, status,
                               dists[2].slack, dists[2].per_order[2], sup_d3,
                               letter_unit * 4 ** lv.k + 2 * config.n * lv.k, d3_ratio, ";".join(notes)))
    # the bound is only guaranteed under the parameter conditions
    violated = [name for name in ("A", "C") if not checks[name]]
    if 3 in orders and not checks["appendix"]:
        violated.append("appendix")
    for name in violated:
        for r in rows:
            r.status = "FAILED"
            r.notes = (r.notes + ";" if r.notes else "") + f"condition {name} violated"
    return CascadeReport(config, rows, degenerate, checks)


# ---------------------------------------------------------------------------
# commutator lemmas
# ---------------------------------------------------------------------------

@dataclass
class LemmaReport:
    evaluable: bool
    lhs_c1: float
    rhs_c1: float
    ratio_c1: float
    lhs_d2: float
    rhs_d2: float
    ratio_d2: float
    lhs_d3: float = float("nan")
    rhs_d3: float = float("nan")

    @property
    def loss_ok(self) -> bool:
        return self.lhs_c1 <= self.rhs_c1

    @property
    def d2_ok(self) -> bool:
        return self.lhs_d2 <= self.rhs_d2

    @property
    def passed(self) -> bool:
        return self.evaluable and self.loss_ok and self.d2_ok


def _stays_inside(word: GroupWord, alphabet: Alphabet, xs: np.ndarray, arc: Arc) -> bool:
    from .circle_maps import _letter_steps
    v = xs.copy()
    for idx, sign in _letter_steps(word):
        prim = alphabet[idx]
        v = prim.value(v) if sign > 0 else prim.inverse_value(v)
        if np.any(v < arc.lo) or np.any(v > arc.hi):
            return False
    return True


def check_commutator_lemmas(f1: GroupWord, f2: GroupWord, generators, arc: Arc, eps0: float,
                            C: float, eps: float | None = None, grid_size: int = 512,
                            third_order: bool = False) -> LemmaReport:
    """Verify the loss-of-derivative and second-derivative commutator bounds.

    Norms of f1, f2 are taken on ``arc``; the commutator is examined on the
    arc shrunk by 5 eps0.  With ``third_order`` the D^3 bound against ten
    times the largest D^3 of f1, f2 and their inverses is also measured.
    """
    alphabet = as_alphabet(generators)
    n1 = cm_distance(f1, alphabet, arc, 2, grid_size)
    n2 = cm_distance(f2, alphabet, arc, 2, grid_size)
    if eps is not None and (n1.value >= eps or n2.value >= eps):
        raise PreconditionError(f"f1, f2 must lie in the eps-ball (norms {n1.value:.3e}, {n2.value:.3e})")
    small = arc.shrink(5 * eps0)
    w = commutator(f1, f2)
    xs = small.grid(grid_size)
    evaluable = _stays_inside(w, alphabet, xs, arc)
    lhs1 = cm_distance(w, alphabet, small, 1, grid_size).value
    rhs1 = C * n1.value * n2.value
    jet = eval_jet(w, alphabet, xs)
    lhs2 = float(np.max(np.abs(jet.d2)))
    rhs2 = 5 * max(n1.per_order[2], n2.per_order[2])
    rep = LemmaReport(evaluable, lhs1, rhs1, lhs1 / (n1.value * n2.value) if n1.value * n2.value > 0 else 0.0,
                      lhs2, rhs2, lhs2 / rhs2 if rhs2 > 0 else 0.0)
    if third_order:
        xa = arc.grid(grid_size)
        d3 = [float(np.max(np.abs(eval_jet(f, alphabet, xa).d3))) for f in (f1, f2, f1.inverse(), f2.inverse())]
        rep.lhs_d3 = float(np.max(np.abs(jet.d3)))
        rep.rhs_d3 = 10 * max(d3)
    return rep


# ---------------------------------------------------------------------------
# random near-identity pairs and calibration
# ---------------------------------------------------------------------------

def sl2_exp(X) -> np.ndarray:
    """exp of a traceless 2x2 matrix in closed form."""
    X = np.asarray(X, dtype=float)
    d = -np.linalg.det(X)
    if d > 0:
        r = math.sqrt(d)
        return math.cosh(r) * np.eye(2) + math.sinh(r) / r * X
    if d < 0:
        r = math.sqrt(-d)
        return math.cos(r) * np.eye(2) + math.sin(r) / r * X
    return np.eye(2) + X


def _primitive_of(kind: str, direction, t: float) -> PrimitiveMap:
    if kind == "rotation":
        return PrimitiveMap.rotation(t * direction[0])
    if kind == "trig":
        return PrimitiveMap.trig(t * direction[0], t * direction[1])
    X = np.array([[direction[0], direction[1]], [direction[2], -direction[0]]])
    return PrimitiveMap.moebius(sl2_exp(t * X))


def scaled_primitive(kind: str, direction, target: float, arc: Arc, grid_size: int = 256) -> PrimitiveMap:
    """Primitive of the given kind and direction with ||f - id||_2 = target on arc."""
    t = 1e-3
    for _ in range(4):
        p = _primitive_of(kind, direction, t)
        alph = Alphabet((p,))
        norm = cm_distance(alph.letter(0), alph, arc, 2, grid_size).value
        t *= target / norm
    return _primitive_of(kind, direction, t)


def random_near_identity_pair(rng: np.random.Generator, eps: float, arc: Arc,
                              kinds=("trig", "moebius", "rotation"), low: float = 0.2,
                              high: float = 0.95):
    """Alphabet of two random primitives with C2 distance in [low, high] * eps."""
    prims = []
    for _ in range(2):
        kind = kinds[rng.integers(len(kinds))]
        direction = rng.normal(size=3)
        prims.append(scaled_primitive(kind, direction, eps * rng.uniform(low, high), arc))
    alph = Alphabet(tuple(prims))
    return alph, alph.letter(0), alph.letter(1)


def calibrate_commutator_constant(n_pairs: int = 500, eps: float = 0.01, a: float = 0.2,
                                  eps0: float | None = None, seed: int = 0, safety: float = 2.0,
                                  grid_size: int = 256):
    """Empirical C = safety * max ||[f1,f2] - id||_1 / (||f1 - id||_2 ||f2 - id||_2)."""
    eps0 = a / 20 if eps0 is None else eps0
    arc = Arc(-a, a)
    rng = np.random.default_rng(seed)
    ratios = []
    for _ in range(n_pairs):
        alph, f1, f2 = random_near_identity_pair(rng, eps, arc)
        rep = check_commutator_lemmas(f1, f2, alph, arc, eps0, 1.0, eps, grid_size)
        ratios.append(rep.ratio_c1)
    worst = float(max(ratios))
    return safety * worst, np.array(ratios)


# ---------------------------------------------------------------------------
# fixtures
# ---------------------------------------------------------------------------

S0_DIRECTIONS = (
    ("rotation", (1.0, 0.0, 0.0)),
    ("trig", (0.0, 1.0, 0.0)),
    ("moebius", (0.3, 1.0, 0.6)),
)


def linear_chart_fixture(eps: float, a: float = 0.2, lam: float = 0.5, fraction: float = 0.5):
    """Alphabet [S0 generators..., dilation(lam)] with each generator at C2 distance
    ``fraction * eps`` from the identity on [-a, a]; returns (alphabet, S0, F)."""
    arc = Arc(-a, a)
    prims = [scaled_primitive(kind, d, fraction * eps, arc) for kind, d in S0_DIRECTIONS]
    prims.append(PrimitiveMap.dilation(lam))
    alph = Alphabet(tuple(prims))
    S0 = [alph.letter(i) for i in range(len(S0_DIRECTIONS))]
    return alph, S0, alph.letter(len(S0_DIRECTIONS))


def run_linear_chart(config: CascadeConfig, prune_cap: int = 16, grid_size: int = 512,
                     fraction: float = 0.5, eps_scale: float = 1.0, orders=(0, 1, 2),
                     spell_words: bool = True):
    """Build, renormalize and verify the exact-chart cascade for ``config``.

    ``eps_scale`` multiplies the initial closeness while keeping the bound
    based on the scaled eps (negative controls use 10).
    """
    eps = config.eps * eps_scale
    cfg = CascadeConfig(config.a, config.eps0, eps, config.lam, config.n, config.C,
                        config.k_max, config.delta)
    alph, S0, F = linear_chart_fixture(eps, config.a, config.lam, fraction)
    levels = chart_cascade(S0, alph, F, cfg.n, cfg.k_max, prune_cap, cfg.arc, grid_size)
    report = verify_decay(levels, cfg, alph, orders, grid_size, spell_words=spell_words)
    return report, levels, alph
