"""Coefficient rings for the form algebra.

A coefficient is a plain ``dict`` from a ring-specific monomial key to a
nonzero :data:`~fedbv.rational.Q`.  Ring objects carry the operations.

``JetRing``
    polynomials in the base coordinates ``x1..xN`` truncated above total
    degree ``J``.  ``J`` doubles as a precision marker: every x-derivative
    lowers it by one (see :meth:`JetRing.lowered`), so anything computed on a
    ring of order ``J`` is exact modulo x-degree ``> J``.

``FourierRing``
    finite sums of ``c * tau^k * i^s * e_m`` with ``e_m = exp(2 pi i m.x)`` on
    the flat torus, ``tau`` the formal unit ``2 pi i`` and ``i`` the imaginary
    unit.  Keys are ``(m, k, s)``.  Exact, no truncation.
"""
from __future__ import annotations

from . import monomial as mono
from .rational import Q, ZERO


class RingMismatch(TypeError):
    """Raised when coefficients of different rings meet."""


def add_into(acc: dict, c: dict, scale=1) -> dict:
    for k, v in c.items():
        nv = acc.get(k, ZERO) + v * scale
        if nv:
            acc[k] = nv
        else:
            acc.pop(k, None)
    return acc


def scaled(c: dict, s) -> dict:
    if not s:
        return {}
    return {k: v * s for k, v in c.items()}


class JetRing:
    tag = "jet"

    def __init__(self, nvars: int, J: int):
        self.nvars = nvars
        self.J = J

    def __repr__(self):
        return f"JetRing(nvars={self.nvars}, J={self.J})"

    def __eq__(self, other):
        return isinstance(other, JetRing) and (self.nvars, self.J) == (other.nvars, other.J)

    def __hash__(self):
        return hash(("jet", self.nvars, self.J))

    def meet(self, other) -> "JetRing":
        if not isinstance(other, JetRing) or other.nvars != self.nvars:
            raise RingMismatch(f"cannot combine {self!r} with {other!r}")
        return self if self.J <= other.J else other

    def lowered(self, k: int = 1) -> "JetRing":
        return JetRing(self.nvars, self.J - k)

    def one(self) -> dict:
        return {0: Q(1)} if self.J >= 0 else {}

    def const(self, q) -> dict:
        q = Q(q)
        return {0: q} if q and self.J >= 0 else {}

    def var(self, i: int) -> dict:
        return {mono.unit(i): Q(1)} if self.J >= 1 else {}

    def truncate(self, c: dict) -> dict:
        J = self.J
        deg = mono.degree
        return {k: v for k, v in c.items() if deg(k) <= J}

    def mul(self, a: dict, b: dict) -> dict:
        J = self.J
        deg = mono.degree
        out: dict = {}
        if len(a) > len(b):
            a, b = b, a
        bl = [(kb, vb, deg(kb)) for kb, vb in b.items()]
        for ka, va in a.items():
            da = deg(ka)
            if da > J:
                continue
            lim = J - da
            for kb, vb, db in bl:
                if db <= lim:
                    k = ka + kb
                    nv = out.get(k, ZERO) + va * vb
                    if nv:
                        out[k] = nv
                    else:
                        del out[k]
        return out

    def deriv(self, c: dict, i: int) -> dict:
        u = mono.unit(i)
        out = {}
        for k, v in c.items():
            e = mono.exponent(k, i)
            if e:
                out[k - u] = v * e
        return out

    def constant(self, c: dict):
        return c.get(0, ZERO)

    def constant_part(self, c: dict) -> dict:
        v = c.get(0)
        return {0: v} if v else {}

    def min_degree(self, c: dict) -> int:
        return min((mono.degree(k) for k in c), default=self.J + 1)

    def exponents(self, key) -> tuple:
        return mono.unpack(key, self.nvars)

    def key_from_exponents(self, exps) -> int:
        return mono.pack(exps)

    def integrate(self, c: dict):
        raise RingMismatch("torus integration is only defined for the Fourier ring")


class FourierRing:
    tag = "fourier"
    J = None

    def __init__(self, nvars: int):
        self.nvars = nvars
        self._zero_m = (0,) * nvars

    def __repr__(self):
        return f"FourierRing(nvars={self.nvars})"

    def __eq__(self, other):
        return isinstance(other, FourierRing) and other.nvars == self.nvars

    def __hash__(self):
        return hash(("fourier", self.nvars))

    def meet(self, other) -> "FourierRing":
        if not isinstance(other, FourierRing) or other.nvars != self.nvars:
            raise RingMismatch(f"cannot combine {self!r} with {other!r}")
        return self

    def lowered(self, k: int = 1) -> "FourierRing":
        return self

    def one(self) -> dict:
        return {(self._zero_m, 0, 0): Q(1)}

    def const(self, q) -> dict:
        q = Q(q)
        return {(self._zero_m, 0, 0): q} if q else {}

    def exp_m(self, m, q=1) -> dict:
        if len(m) != self.nvars:
            raise ValueError(f"frequency vector must have length {self.nvars}")
        return {(tuple(m), 0, 0): Q(q)}

    def truncate(self, c: dict) -> dict:
        return c

    def mul(self, a: dict, b: dict) -> dict:
        out: dict = {}
        for (ma, ta, ia), va in a.items():
            for (mb, tb, ib), vb in b.items():
                m = tuple(x + y for x, y in zip(ma, mb))
                v = va * vb
                s = ia + ib
                if s == 2:
                    s = 0
                    v = -v
                k = (m, ta + tb, s)
                nv = out.get(k, ZERO) + v
                if nv:
                    out[k] = nv
                else:
                    del out[k]
        return out

    def deriv(self, c: dict, i: int) -> dict:
        out = {}
        for (m, t, s), v in c.items():
            if m[i]:
                out[(m, t + 1, s)] = v * m[i]
        return out

    def constant_part(self, c: dict) -> dict:
        """Zero-frequency part (a polynomial in tau and i)."""
        z = self._zero_m
        return {k: v for k, v in c.items() if k[0] == z}

    def constant(self, c: dict):
        return c.get((self._zero_m, 0, 0), ZERO)

    def integrate(self, c: dict) -> dict:
        """Integral over the unit torus: keeps the zero mode."""
        return self.constant_part(c)

    def min_degree(self, c: dict) -> int:
        return 0


def same_ring(a, b):
    return a.meet(b)
