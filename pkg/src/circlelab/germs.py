"""Truncated power-series germs of near-identity maps at a chart origin.

A germ stores the displacement w(x) = f(x) - x as Taylor coefficients in the
scaled variable y = x / rho, i.e. ``coef[j] = w_j * rho**(j - 1)``, so that
the sup over |x| <= rho is controlled by the coefficient sizes.  All
operations accept a leading batch axis.

Commutators are formed without subtracting nearly equal quantities: with
f = id + u and g = id + v,

    f o g - g o f = [u(y + v) - u(y)] - [v(y + u) - v(y)] =: D,
    [f, g] = id + D o (g o f)^{-1},

and each bracketed difference is expanded as sum_j u^(j) v^j / j!.  Relative
precision is therefore kept even when the commutator is many orders of
magnitude below its arguments, which is the regime of renormalized cascades.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .circle_maps import Alphabet, GroupWord, PrimitiveMap, TWO_PI, _letter_steps, _resolve
from .errors import PreconditionError

DEFAULT_DEGREE = 32


@lru_cache(maxsize=8)
def _toeplitz_index(m: int):
    k = np.arange(m)[:, None]
    i = np.arange(m)[None, :]
    return (k - i) % m, (k >= i).astype(float)


def mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Truncated product of power series (last axis = coefficients)."""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    m = a.shape[-1]
    if a.ndim == 1:
        return np.convolve(a, b)[:m]
    idx, mask = _toeplitz_index(m)
    t = b[..., idx] * mask
    return np.einsum("...ki,...i->...k", t, a)


def derivative(a: np.ndarray) -> np.ndarray:
    """d/dy, keeping the array length."""
    a = np.asarray(a, dtype=float)
    out = np.zeros_like(a)
    j = np.arange(1, a.shape[-1])
    out[..., :-1] = a[..., 1:] * j
    return out


def _with_y(v: np.ndarray) -> np.ndarray:
    p = np.array(v, dtype=float, copy=True)
    p[..., 1] += 1.0
    return p


def compose(u: np.ndarray, p: np.ndarray) -> np.ndarray:
    """u(p(y)) by Horner; ``p`` is a full series (not a displacement)."""
    u = np.asarray(u, dtype=float)
    p = np.asarray(p, dtype=float)
    shape = np.broadcast_shapes(u.shape, p.shape)
    r = np.zeros(shape)
    r[..., 0] = u[..., -1]
    for j in range(u.shape[-1] - 2, -1, -1):
        r = mul(r, p)
        r[..., 0] += u[..., j]
    return r


def shift_difference(u: np.ndarray, v: np.ndarray, rtol: float = 1e-18) -> np.ndarray:
    """u(y + v(y)) - u(y) as sum_{j>=1} u^(j) v^j / j!."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    shape = np.broadcast_shapes(u.shape, v.shape)
    du = np.broadcast_to(u, shape).copy()
    vp = np.zeros(shape)
    vp[..., 0] = 1.0
    total = np.zeros(shape)
    first = None
    for j in range(1, shape[-1]):
        du = derivative(du) / j
        vp = mul(vp, v)
        term = mul(du, vp)
        total += term
        # per-member stopping: batch members can differ by many decades
        size = np.max(np.abs(term), axis=-1)
        if first is None:
            first = size
        if np.all(size <= rtol * np.maximum(first, np.max(np.abs(total), axis=-1))) or not np.any(du):
            break
    return total


def inverse(s: np.ndarray, max_iter: int = 400) -> np.ndarray:
    """Displacement e of (id + s)^{-1}, from the fixed point e = -s(y + e)."""
    s = np.asarray(s, dtype=float)
    e = -s.copy()
    for _ in range(max_iter):
        e_new = -(s + shift_difference(s, e))
        change = np.max(np.abs(e_new - e), axis=-1)
        e = e_new
        if np.all(change <= 1e-17 * np.max(np.abs(e), axis=-1)):
            return e
    return e


def compose_displacements(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Displacement of (id + u) o (id + v)."""
    return v + compose(u, _with_y(v))


def commutator(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Displacement of [id + u, id + v], computed cancellation-free."""
    d = shift_difference(u, v) - shift_difference(v, u)
    s = u + v + shift_difference(v, u)
    e = inverse(s)
    return d + shift_difference(d, e)


def renormalize(u: np.ndarray, q: float) -> np.ndarray:
    """Displacement of F^-m o f o F^m with F^m(x) = q x, i.e. x -> f(q x)/q."""
    u = np.asarray(u, dtype=float)
    j = np.arange(u.shape[-1])
    return u * float(q) ** (j - 1.0)


def evaluate(u: np.ndarray, rho: float, x, order: int = 3) -> list:
    """[w, w', w'', ...] in the original variable x, up to ``order``.

    Returns arrays of shape batch + x.shape.
    """
    u = np.asarray(u, dtype=float)
    y = np.asarray(x, dtype=float) / rho
    powers = y[..., None] ** np.arange(u.shape[-1])
    out = []
    c = u
    for i in range(order + 1):
        vals = np.tensordot(c, powers, axes=([-1], [-1]))
        out.append(vals * rho ** (1 - i))
        c = derivative(c)
    return out


# ---------------------------------------------------------------------------
# germs of primitives and words
# ---------------------------------------------------------------------------

def cauchy_coefficients(disp_fn, rho: float, degree: int = DEFAULT_DEGREE, oversample: int = 4):
    """Scaled coefficients of an analytic displacement from samples on |x| = rho."""
    m = degree + 1
    k = oversample * m
    z = rho * np.exp(2j * np.pi * np.arange(k) / k)
    vals = np.asarray(disp_fn(z), dtype=complex) / rho
    c = np.fft.fft(vals) / k
    return c[:m].real.copy()


def primitive_germ(prim: PrimitiveMap, rho: float, degree: int = DEFAULT_DEGREE,
                   inverse_letter: bool = False) -> np.ndarray:
    """Scaled displacement coefficients of a primitive (or its inverse) at 0."""
    m = degree + 1
    if inverse_letter:
        inv = prim.inverse_primitive()
        if inv is None:
            return inverse(primitive_germ(prim, rho, degree))
        prim = inv
    c = np.zeros(m)
    if prim.kind == "rotation":
        c[0] = prim.params[0] / rho
    elif prim.kind == "dilation":
        c[1] = prim.params[0] - 1.0
    elif prim.kind == "trig":
        off, amp = prim.params
        c[0] = off / rho
        for j in range(1, m, 2):
            c[j] = amp / TWO_PI * (-1) ** ((j - 1) // 2) * (TWO_PI * rho) ** j / math.factorial(j) / rho
    else:
        c = cauchy_coefficients(prim.displacement, rho, degree)
        xs = np.linspace(-rho, rho, 33)
        err = np.max(np.abs(evaluate(c, rho, xs, 0)[0] - prim.displacement(xs)))
        if err > 1e-12 * max(1.0, np.max(np.abs(prim.displacement(xs)))):
            raise PreconditionError(f"moebius germ at 0 is not resolved on radius {rho} (err {err:.2e})")
    return c


def word_germ(word: GroupWord, generators, rho: float, degree: int = DEFAULT_DEGREE) -> np.ndarray:
    """Germ at 0 of a word whose letters all fix a neighbourhood of the chart."""
    alphabet: Alphabet = _resolve(word, generators)
    cache = {}
    v = np.zeros(degree + 1)
    for idx, sign in _letter_steps(word):
        key = (idx, sign)
        if key not in cache:
            cache[key] = primitive_germ(alphabet[idx], rho, degree, inverse_letter=sign < 0)
        v = compose_displacements(cache[key], v)
    return v


@dataclass(frozen=True)
class Germ:
    """A chart germ: scaled displacement coefficients plus the scale rho."""

    coef: np.ndarray
    rho: float

    @classmethod
    def of_word(cls, word: GroupWord, generators, rho: float, degree: int = DEFAULT_DEGREE) -> "Germ":
        return cls(word_germ(word, generators, rho, degree), rho)

    @classmethod
    def identity(cls, rho: float, degree: int = DEFAULT_DEGREE) -> "Germ":
        return cls(np.zeros(degree + 1), rho)

    def commutator(self, other: "Germ") -> "Germ":
        return Germ(commutator(self.coef, other.coef), self.rho)

    def inverse(self) -> "Germ":
        return Germ(inverse(self.coef), self.rho)

    def compose(self, inner: "Germ") -> "Germ":
        return Germ(compose_displacements(self.coef, inner.coef), self.rho)

    def renormalized(self, q: float) -> "Germ":
        return Germ(renormalize(self.coef, q), self.rho)

    def deviations(self, x, order: int = 3) -> list:
        """[f - id, f' - 1, f'', f''', ...] at x."""
        return evaluate(self.coef, self.rho, x, order)

    def __call__(self, x):
        return np.asarray(x, dtype=float) + self.deviations(x, 0)[0]
