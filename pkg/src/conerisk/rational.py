"""Exact rational scalars and vectors for all engine I/O.

Every quantity that crosses a module or file boundary is a
``fractions.Fraction``; floats never decide anything.  JSON carries
rationals as ``"num/den"`` strings (plain integers are accepted too).
"""

from __future__ import annotations

from fractions import Fraction
from math import gcd
from typing import Iterable, Sequence

Vec = tuple[Fraction, ...]


def Q(x) -> Fraction:
    """Coerce ints, strings like ``"3/4"`` and Fractions to Fraction."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, float):
        raise TypeError(f"floats are not accepted as exact rationals: {x!r}")
    raise TypeError(f"cannot interpret {x!r} as a rational")


def qstr(x: Fraction) -> str:
    """Render a Fraction as the canonical ``num/den`` (or integer) string."""
    x = Fraction(x)
    if x.denominator == 1:
        return str(x.numerator)
    return f"{x.numerator}/{x.denominator}"


def vec(xs: Iterable) -> Vec:
    return tuple(Q(x) for x in xs)


def vec_str(v: Sequence[Fraction]) -> list[str]:
    return [qstr(x) for x in v]


def dot(a: Sequence[Fraction], b: Sequence[Fraction]) -> Fraction:
    if len(a) != len(b):
        raise ValueError(f"dimension mismatch: {len(a)} vs {len(b)}")
    total = Fraction(0)
    for x, y in zip(a, b):
        if x and y:
            total += x * y
    return total


def vadd(a: Sequence[Fraction], b: Sequence[Fraction]) -> Vec:
    return tuple(x + y for x, y in zip(a, b))


def vsub(a: Sequence[Fraction], b: Sequence[Fraction]) -> Vec:
    return tuple(x - y for x, y in zip(a, b))


def vscale(c: Fraction, a: Sequence[Fraction]) -> Vec:
    return tuple(c * x for x in a)


def vzero(n: int) -> Vec:
    return (Fraction(0),) * n


def is_zero(a: Sequence[Fraction]) -> bool:
    return all(x == 0 for x in a)


def primitive(a: Sequence[Fraction]) -> Vec:
    """Scale a vector by a positive rational to primitive-integer form.

    The direction is preserved (the scale factor is strictly positive),
    entries become integers with gcd 1.  The zero vector maps to itself.
    """
    if is_zero(a):
        return tuple(Fraction(0) for _ in a)
    denom_lcm = 1
    for x in a:
        d = Fraction(x).denominator
        denom_lcm = denom_lcm * d // gcd(denom_lcm, d)
    ints = [int(x * denom_lcm) for x in a]
    g = 0
    for k in ints:
        g = gcd(g, abs(k))
    return tuple(Fraction(k // g) for k in ints)
