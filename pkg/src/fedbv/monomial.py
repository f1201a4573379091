"""Packed exponent vectors.

A monomial ``x1^e1 ... xN^eN`` is stored as the integer ``sum(e_i << (BITS*i))``
so that multiplication of monomials is integer addition.  Exponents stay
far below ``2**BITS`` for every truncation used in practice; ``pack``
refuses anything larger.
"""
from __future__ import annotations

from functools import lru_cache

BITS = 8
MASK = (1 << BITS) - 1


def pack(exps) -> int:
    out = 0
    for i, e in enumerate(exps):
        if e < 0 or e > MASK:
            raise ValueError(f"exponent out of range: {e}")
        out |= e << (BITS * i)
    return out


def unpack(key: int, nvars: int) -> tuple:
    return tuple((key >> (BITS * i)) & MASK for i in range(nvars))


@lru_cache(maxsize=None)
def degree(key: int) -> int:
    d = 0
    while key:
        d += key & MASK
        key >>= BITS
    return d


def exponent(key: int, i: int) -> int:
    return (key >> (BITS * i)) & MASK


def unit(i: int) -> int:
    return 1 << (BITS * i)


def popcount(mask: int) -> int:
    return bin(mask).count("1")


def bits(mask: int):
    i = 0
    while mask:
        if mask & 1:
            yield i
        mask >>= 1
        i += 1


@lru_cache(maxsize=None)
def merge_sign(a: int, b: int) -> int:
    """Sign of reordering the odd word a·b (ascending blocks) into ascending order.

    Returns 0 when the masks overlap (an odd generator squared).
    """
    if a & b:
        return 0
    swaps = 0
    for j in bits(b):
        swaps += popcount(a >> (j + 1))
    return -1 if swaps & 1 else 1
