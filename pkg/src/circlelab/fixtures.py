"""Reusable generator sets for tests, examples and CLI scenarios."""
from __future__ import annotations

import math

from .circle_maps import Alphabet, PrimitiveMap, hyperbolic_matrix

GOLDEN = (math.sqrt(5) - 1) / 2


def two_hyperbolic(s: float = 2.0, offset: float = 0.25) -> Alphabet:
    """A = diag(s, 1/s) and its rotation by ``offset``: repelling points 0, offset."""
    return Alphabet((PrimitiveMap.moebius(hyperbolic_matrix(s, 0.0)),
                     PrimitiveMap.moebius(hyperbolic_matrix(s, offset))))


def rotation_pair(alpha: float = GOLDEN) -> Alphabet:
    return Alphabet((PrimitiveMap.rotation(alpha),))


def commuting_rotations(a: float = 0.1, b: float = 0.2) -> Alphabet:
    return Alphabet((PrimitiveMap.rotation(a), PrimitiveMap.rotation(b)))


def moebius_trig(s: float = 1.5, center: float = 0.1, offset: float = 0.05, amp: float = 0.1) -> Alphabet:
    """A hyperbolic Moebius map together with a trigonometric perturbation."""
    return Alphabet((PrimitiveMap.moebius(hyperbolic_matrix(s, center)), PrimitiveMap.trig(offset, amp)))


def hyperbolic_multiplier(s: float) -> float:
    """Attracting multiplier 1 / s^2 of hyperbolic_matrix(s, c) at c + 1/2."""
    return 1.0 / s ** 2

