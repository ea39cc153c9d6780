"""Wigner 3j/6j symbols on exactly represented half-integers.

Angular momenta are carried as doubled integers (``2j``) so that selection
rules never depend on floating point comparisons.  Racah sums are evaluated
with exact integer arithmetic and converted to float only at the very end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import permutations
from typing import Union

__all__ = [
    "HalfInt",
    "AngularMomentumError",
    "half",
    "twice",
    "triangle_ok",
    "wigner3j",
    "wigner6j",
    "clear_cache",
]


class AngularMomentumError(ValueError):
    """Invalid angular-momentum argument (bad parity pairing, non half-integer)."""


@dataclass(frozen=True, order=True)
class HalfInt:
    """A half-integer stored as its doubled value."""

    twice: int

    @classmethod
    def parse(cls, text: str) -> "HalfInt":
        text = text.strip()
        if "/" in text:
            num, den = text.split("/", 1)
            if den.strip() != "2":
                raise AngularMomentumError(f"not a half-integer: {text!r}")
            return cls(int(num))
        return cls(2 * int(text))

    @property
    def is_integer(self) -> bool:
        return self.twice % 2 == 0

    def __float__(self) -> float:
        return self.twice / 2

    def __int__(self) -> int:
        if self.twice % 2:
            raise AngularMomentumError(f"{self} is not integer valued")
        return self.twice // 2

    def __neg__(self) -> "HalfInt":
        return HalfInt(-self.twice)

    def __add__(self, other) -> "HalfInt":
        return HalfInt(self.twice + twice(other))

    def __sub__(self, other) -> "HalfInt":
        return HalfInt(self.twice - twice(other))

    def __str__(self) -> str:
        if self.twice % 2 == 0:
            return str(self.twice // 2)
        return f"{self.twice}/2"

    def __repr__(self) -> str:
        return f"HalfInt({self})"


Spin = Union[HalfInt, int, float, Fraction, str]


def twice(x: Spin) -> int:
    """Return ``2x`` as an int, rejecting anything that is not a half-integer."""
    if isinstance(x, HalfInt):
        return x.twice
    if isinstance(x, str):
        return HalfInt.parse(x).twice
    if isinstance(x, bool):
        raise AngularMomentumError("bool is not an angular momentum")
    if isinstance(x, int):
        return 2 * x
    if isinstance(x, Fraction):
        t = 2 * x
        if t.denominator != 1:
            raise AngularMomentumError(f"not a half-integer: {x}")
        return int(t)
    t = 2 * float(x)
    r = round(t)
    if abs(t - r) > 1e-9:
        raise AngularMomentumError(f"not a half-integer: {x}")
    return int(r)


def half(x: Spin) -> HalfInt:
    return HalfInt(twice(x))


def _tri2(a: int, b: int, c: int) -> bool:
    # doubled arguments
    if a < 0 or b < 0 or c < 0:
        return False
    if (a + b + c) % 2:
        return False
    return abs(a - b) <= c <= a + b


def triangle_ok(a: Spin, b: Spin, c: Spin) -> bool:
    """True iff |a-b| <= c <= a+b and a+b+c is an integer."""
    return _tri2(twice(a), twice(b), twice(c))


def _delta_sq(a: int, b: int, c: int) -> Fraction:
    # triangle coefficient squared, doubled arguments
    f = math.factorial
    return Fraction(
        f((a + b - c) // 2) * f((a - b + c) // 2) * f((-a + b + c) // 2),
        f((a + b + c) // 2 + 1),
    )


def _signed_sqrt(sign: int, square: Fraction, total: Fraction) -> float:
    if total == 0 or square == 0:
        return 0.0
    # exact until here; a single rounding in sqrt and the product
    value = math.sqrt(square) * float(total)
    return sign * value


@lru_cache(maxsize=None)
def _w3j_canonical(j1, j2, j3, m1, m2, m3) -> float:
    f = math.factorial
    pref = _delta_sq(j1, j2, j3) * (
        f((j1 + m1) // 2) * f((j1 - m1) // 2)
        * f((j2 + m2) // 2) * f((j2 - m2) // 2)
        * f((j3 + m3) // 2) * f((j3 - m3) // 2)
    )
    kmin = max(0, (j2 - j3 - m1) // 2, (j1 - j3 + m2) // 2)
    kmax = min((j1 + j2 - j3) // 2, (j1 - m1) // 2, (j2 + m2) // 2)
    total = 0
    for k in range(kmin, kmax + 1):
        den = (
            f(k)
            * f((j3 - j2 + m1) // 2 + k)
            * f((j3 - j1 - m2) // 2 + k)
            * f((j1 + j2 - j3) // 2 - k)
            * f((j1 - m1) // 2 - k)
            * f((j2 + m2) // 2 - k)
        )
        total += Fraction((-1) ** k, den)
    sign = -1 if ((j1 - j2 - m3) // 2) % 2 else 1
    return _signed_sqrt(sign, pref, total)


def _canon3j(j, m):
    """Map a 3j symbol onto a representative under column permutations and m -> -m."""
    jsum = (j[0] + j[1] + j[2]) // 2
    best = None
    for perm in permutations(range(3)):
        # parity of permutation
        inv = sum(1 for a in range(3) for b in range(a + 1, 3) if perm[a] > perm[b])
        for flip in (1, -1):
            sgn = 1
            if inv % 2:
                sgn *= -1 if jsum % 2 else 1
            if flip == -1:
                sgn *= -1 if jsum % 2 else 1
            key = tuple(j[p] for p in perm) + tuple(flip * m[p] for p in perm)
            if best is None or key < best[0]:
                best = (key, sgn)
    return best


def wigner3j(j1: Spin, j2: Spin, j3: Spin, m1: Spin, m2: Spin, m3: Spin) -> float:
    """Wigner 3j symbol ``(j1 j2 j3; m1 m2 m3)``.

    Returns exactly 0 when the m's do not sum to zero, the triangle rule
    fails or some |m| exceeds its j.  Raises :class:`AngularMomentumError`
    when a j and its m have different parity.
    """
    j = (twice(j1), twice(j2), twice(j3))
    m = (twice(m1), twice(m2), twice(m3))
    for jj, mm in zip(j, m):
        if jj < 0:
            raise AngularMomentumError("negative angular momentum")
        if (jj - mm) % 2:
            raise AngularMomentumError(f"j={jj}/2 and m={mm}/2 differ in parity")
    if sum(m) != 0 or not _tri2(*j):
        return 0.0
    if any(abs(mm) > jj for jj, mm in zip(j, m)):
        return 0.0
    key, sgn = _canon3j(j, m)
    return sgn * _w3j_canonical(*key)


@lru_cache(maxsize=None)
def _w6j_canonical(a, b, c, d, e, f_) -> float:
    f = math.factorial
    pref = _delta_sq(a, b, c) * _delta_sq(a, e, f_) * _delta_sq(d, b, f_) * _delta_sq(d, e, c)
    t1 = (a + b + c) // 2
    t2 = (a + e + f_) // 2
    t3 = (d + b + f_) // 2
    t4 = (d + e + c) // 2
    p1 = (a + b + d + e) // 2
    p2 = (a + c + d + f_) // 2
    p3 = (b + c + e + f_) // 2
    total = 0
    for k in range(max(t1, t2, t3, t4), min(p1, p2, p3) + 1):
        num = (-1) ** k * f(k + 1)
        den = f(k - t1) * f(k - t2) * f(k - t3) * f(k - t4) * f(p1 - k) * f(p2 - k) * f(p3 - k)
        total += Fraction(num, den)
    return _signed_sqrt(1, pref, total)


def _canon6j(j):
    cols = [(j[0], j[3]), (j[1], j[4]), (j[2], j[5])]
    best = None
    for perm in permutations(range(3)):
        c = [cols[p] for p in perm]
        # swapping upper/lower in any two columns
        for swap in ((False, False, False), (True, True, False), (True, False, True), (False, True, True)):
            cc = [(lo, up) if s else (up, lo) for (up, lo), s in zip(c, swap)]
            key = (cc[0][0], cc[1][0], cc[2][0], cc[0][1], cc[1][1], cc[2][1])
            if best is None or key < best:
                best = key
    return best


def wigner6j(j1: Spin, j2: Spin, j3: Spin, j4: Spin, j5: Spin, j6: Spin) -> float:
    """Wigner 6j symbol ``{j1 j2 j3; j4 j5 j6}``; exactly 0 if any triad fails."""
    j = tuple(twice(x) for x in (j1, j2, j3, j4, j5, j6))
    if any(x < 0 for x in j):
        raise AngularMomentumError("negative angular momentum")
    triads = ((j[0], j[1], j[2]), (j[0], j[4], j[5]), (j[3], j[1], j[5]), (j[3], j[4], j[2]))
    if not all(_tri2(*t) for t in triads):
        return 0.0
    return _w6j_canonical(*_canon6j(j))


def clear_cache() -> None:
    _w3j_canonical.cache_clear()
    _w6j_canonical.cache_clear()
