"""Exact rational scalars.

All algebra runs on ``gmpy2.mpq``; it keeps numerator/denominator reduced
with a positive denominator and is roughly an order of magnitude faster
than :class:`fractions.Fraction` for the inner loops used here.
"""
from __future__ import annotations

import re
from fractions import Fraction

from gmpy2 import mpq

Q = mpq
ZERO = mpq(0)
ONE = mpq(1)

_RAT = re.compile(r"^\s*([+-]?\d+)\s*(?:/\s*(\d+))?\s*$")


def as_q(value) -> mpq:
    """Coerce int, str "p/q", Fraction or mpq into an mpq."""
    if isinstance(value, str):
        m = _RAT.match(value)
        if not m:
            raise ValueError(f"not a rational literal: {value!r}")
        num = int(m.group(1))
        den = int(m.group(2)) if m.group(2) else 1
        if den == 0:
            raise ValueError(f"zero denominator in {value!r}")
        return mpq(num, den)
    if isinstance(value, float):
        raise TypeError("floats are not accepted in exact arithmetic")
    if isinstance(value, Fraction):
        return mpq(value.numerator, value.denominator)
    return mpq(value)


def fmt_q(q) -> str:
    """Canonical "p/q" (or "p") string."""
    q = mpq(q)
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


def to_fraction(q) -> Fraction:
    q = mpq(q)
    return Fraction(int(q.numerator), int(q.denominator))
