"""Independent reference computations used as test oracles.

Nothing here calls the circlelab evaluation code: words are re-evaluated in
mpmath from the primitive definitions, derivatives come from Richardson
extrapolated central differences, and fixed points of Moebius maps from the
exact projective action.
"""
from __future__ import annotations

import math

import mpmath as mp
import numpy as np

mp.mp.dps = 50


def mp_primitive(kind: str, params, x, inverse: bool = False):
    """Lift of one primitive (or its inverse) at an mpf point."""
    x = mp.mpf(x)
    if kind == "rotation":
        return x - params[0] if inverse else x + params[0]
    if kind == "trig":
        off, amp = (mp.mpf(p) for p in params)
        f = lambda t: t + off + amp / (2 * mp.pi) * mp.sin(2 * mp.pi * t)
        if not inverse:
            return f(x)
        # Newton from the linear guess, in high precision
        return mp.findroot(lambda t: f(t) - x, x - off)
    a, b, c, d = (mp.mpf(p) for p in params)
    if inverse:
        a, b, c, d = d, -b, -c, a
    th = mp.pi * x
    # x corresponds to the vector (sin pi x, cos pi x); continuous branch near th
    u, v = a * mp.sin(th) + b * mp.cos(th), c * mp.sin(th) + d * mp.cos(th)
    ang = mp.atan2(u, v)
    k = mp.nint((th - ang) / mp.pi)
    return (ang + k * mp.pi) / mp.pi


def mp_word(alphabet, letters, x):
    """Apply a word (rightmost letter first) in multiprecision."""
    y = mp.mpf(x)
    for idx, exp in reversed(letters):
        prim = alphabet[idx]
        for _ in range(abs(exp)):
            y = mp_primitive(prim.kind, prim.params, y, inverse=exp < 0)
    return y


def richardson_derivatives(f, x, h=mp.mpf("1e-8")):
    """(f', f'', f''') by central differences at h and h/2, Richardson-combined."""
    x = mp.mpf(x)

    def cd(step):
        fm2, fm1, f0, fp1, fp2 = (f(x + j * step) for j in (-2, -1, 0, 1, 2))
        d1 = (fp1 - fm1) / (2 * step)
        d2 = (fp1 - 2 * f0 + fm1) / step ** 2
        d3 = (fp2 - 2 * fp1 + 2 * fm1 - fm2) / (2 * step ** 3)
        return d1, d2, d3

    coarse, fine = cd(h), cd(h / 2)
    return tuple(float((4 * b - a) / 3) for a, b in zip(coarse, fine))


def moebius_fixed_points(matrix):
    """Exact fixed points (lift coordinate in [0, 1)) and multipliers of a projective map.

    The point x corresponds to the vector (sin pi x, cos pi x); an eigenvector
    is fixed and the multiplier is 1 / |M v|^2 for the unit eigenvector v.
    """
    M = np.asarray(matrix, dtype=float)
    vals, vecs = np.linalg.eig(M)
    out = []
    for k in range(2):
        v = np.real(vecs[:, k])
        v = v / np.linalg.norm(v)
        th = math.atan2(v[0], v[1]) / math.pi % 1.0
        out.append((th, 1.0 / float(np.dot(M @ v, M @ v))))
    return sorted(out)


def brute_contraction(values: np.ndarray) -> float:
    """min over arcs U_l (grid length l/N) of max(l/N, 1 - max_pos |g(U_l)|), one length at a time."""
    n = values.size
    best = math.inf
    ext = np.concatenate([values, values + 1.0])
    for j in range(1, n):
        widest = float(np.max(ext[j:j + n] - ext[:n]))
        best = min(best, max(j / n, 1.0 - widest))
    return best


def kernel_quadrature(y: float, a: float, r: float, power: float, nodes: int = 200_001) -> float:
    """Integral over B(a, r) of circle-distance(y, x)^-power by the midpoint rule."""
    x = a - r + (np.arange(nodes) + 0.5) * (2 * r / nodes)
    d = np.abs(x - y) % 1.0
    d = np.minimum(d, 1.0 - d)
    return float(np.sum(d ** -power) * (2 * r / nodes))


def power_law_pairs(beta: float, count: int = 30, lo: float = 1e-6, hi: float = 1e-1):
    """(source length, image length) pairs of h(x) = x^beta on intervals [0, d]."""
    d = np.geomspace(lo, hi, count)
    return np.column_stack([d, d ** beta])
