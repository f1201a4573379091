"""Truncated multigraded sections: Weyl-bundle and BV-bundle valued forms.

A term is ``coef(x) * hbar^h * y^a * theta^A * dx^B * u^p`` with the odd
blocks written in ascending index order, theta block to the left of the dx
block.  Keys are ``(h, y, A, B, p)`` where ``y`` is a packed exponent vector
and ``A``, ``B`` are bit masks over the ``2n`` indices.  Weyl forms are the
terms with ``A = 0`` and ``p = 0``.

Parity is ``(|A| + |B|) mod 2``; theta and dx are both odd, so reordering
them produces Koszul signs.  The truncation weight (the Euler grading) is
``2h + |y| + |A|``; :func:`grade` returns the pair requested by callers that
track the Weyl weight ``2h + |y|`` separately.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

from . import monomial as mono
from .monomial import merge_sign, popcount
from .rational import Q
from .rings import RingMismatch, add_into, scaled


@dataclass(frozen=True)
class TruncationPolicy:
    """Bounds applied after every operation.

    weight: keep terms with Euler weight <= weight
    x_degree: jet order J for JetRing coefficients
    hbar: keep hbar exponents <= hbar (defaults to weight // 2)
    u_min, u_max: optional bounds on the equivariant exponent
    """

    weight: int
    x_degree: int = 0
    hbar: int | None = None
    u_min: int | None = None
    u_max: int | None = None

    def __post_init__(self):
        if self.weight < 0 or self.x_degree < 0:
            raise ValueError("weight and x_degree must be nonnegative")
        if self.hbar is None:
            object.__setattr__(self, "hbar", self.weight // 2)
        if self.hbar < 0 or 2 * self.hbar > self.weight:
            raise ValueError("hbar bound must satisfy 0 <= hbar <= weight/2")

    def meet(self, other: "TruncationPolicy") -> "TruncationPolicy":
        if other is self or other == self:
            return self

        def lo(a, b):
            if a is None:
                return b
            if b is None:
                return a
            return min(a, b)

        def hi(a, b):
            if a is None:
                return b
            if b is None:
                return a
            return max(a, b)

        return TruncationPolicy(
            min(self.weight, other.weight),
            min(self.x_degree, other.x_degree),
            min(self.hbar, other.hbar),
            hi(self.u_min, other.u_min),
            lo(self.u_max, other.u_max),
        )

    def with_weight(self, w: int) -> "TruncationPolicy":
        return replace(self, weight=w, hbar=min(self.hbar, w // 2))


class DimensionMismatch(ValueError):
    pass


def key_weight(key) -> int:
    h, y, th, _dx, _u = key
    return 2 * h + mono.degree(y) + popcount(th)


def key_parity(key) -> int:
    return (popcount(key[2]) + popcount(key[3])) & 1


def grade(key) -> tuple[int, int]:
    """(cohomological degree, Weyl weight) = (|dx| - |theta| + 2u, 2h + |y|)."""
    h, y, th, dx, u = key
    return popcount(dx) - popcount(th) + 2 * u, 2 * h + mono.degree(y)


def _mul_keys(k1, k2):
    """Multiply two monomial keys; returns (sign, key) with sign 0 for a vanishing product."""
    h1, y1, a1, b1, u1 = k1
    h2, y2, a2, b2, u2 = k2
    if a1 & a2 or b1 & b2:
        return 0, None
    s = merge_sign(a1, a2) * merge_sign(b1, b2)
    # move theta block A2 past dx block B1
    if popcount(b1) & 1 and popcount(a2) & 1:
        s = -s
    return s, (h1 + h2, y1 + y2, a1 | a2, b1 | b2, u1 + u2)


class Form:
    """Sparse truncated section.  Treat instances as immutable."""

    __slots__ = ("n", "ring", "policy", "terms")

    def __init__(self, n: int, ring, policy: TruncationPolicy, terms=None, _trusted=False):
        self.n = n
        self.ring = ring
        self.policy = policy
        if terms is None:
            terms = {}
        if not _trusted:
            terms = self._clean(terms)
        self.terms = terms

    # -- construction ---------------------------------------------------------
    @property
    def dim(self) -> int:
        return 2 * self.n

    def _keep(self, key) -> bool:
        p = self.policy
        h, y, th, dx, u = key
        if h > p.hbar:
            return False
        if 2 * h + mono.degree(y) + popcount(th) > p.weight:
            return False
        if p.u_min is not None and u < p.u_min:
            return False
        if p.u_max is not None and u > p.u_max:
            return False
        return True

    def _clean(self, terms):
        out = {}
        tr = self.ring.truncate
        for k, c in terms.items():
            if not self._keep(k):
                continue
            c = tr(c)
            if c:
                out[k] = c
        return out

    def like(self, terms, ring=None, policy=None, trusted=False) -> "Form":
        return Form(self.n, ring or self.ring, policy or self.policy, terms, _trusted=trusted)

    def zero_like(self) -> "Form":
        return Form(self.n, self.ring, self.policy, {}, _trusted=True)

    @staticmethod
    def zero(n, ring, policy) -> "Form":
        return Form(n, ring, policy, {}, _trusted=True)

    @staticmethod
    def scalar(n, ring, policy, q=1) -> "Form":
        return Form(n, ring, policy, {(0, 0, 0, 0, 0): ring.const(q)})

    @staticmethod
    def monomial(n, ring, policy, coef=None, h=0, y=(), theta=(), dx=(), u=0) -> "Form":
        """Build ``coef * hbar^h * y^y * theta_{theta...} * dx_{dx...} * u^u``.

        ``y`` is an exponent vector (or empty); ``theta`` and ``dx`` are lists of
        1-based indices in the order written, so Koszul signs are applied.
        """
        N = 2 * n
        if coef is None:
            coef = ring.one()
        elif not isinstance(coef, dict):
            coef = ring.const(coef)
        yk = mono.pack(tuple(y) + (0,) * (N - len(y))) if y else 0
        sign = 1
        th = 0
        for i in theta:
            _check_index(i, N)
            b = 1 << (i - 1)
            if th & b:
                return Form.zero(n, ring, policy)
            sign *= merge_sign(th, b)
            th |= b
        dxm = 0
        for i in dx:
            _check_index(i, N)
            b = 1 << (i - 1)
            if dxm & b:
                return Form.zero(n, ring, policy)
            sign *= merge_sign(dxm, b)
            dxm |= b
        return Form(n, ring, policy, {(h, yk, th, dxm, u): scaled(coef, sign)})

    # -- combination ----------------------------------------------------------
    def _compat(self, other: "Form"):
        if not isinstance(other, Form):
            raise TypeError(f"expected Form, got {type(other).__name__}")
        if other.n != self.n:
            raise DimensionMismatch(f"dimension {2 * self.n} vs {2 * other.n}")
        ring = self.ring.meet(other.ring)
        return ring, self.policy.meet(other.policy)

    def __add__(self, other: "Form") -> "Form":
        ring, pol = self._compat(other)
        out = {k: dict(c) for k, c in self.terms.items()}
        for k, c in other.terms.items():
            if k in out:
                add_into(out[k], c)
                if not out[k]:
                    del out[k]
            else:
                out[k] = dict(c)
        return Form(self.n, ring, pol, out)

    def __neg__(self) -> "Form":
        return self.like({k: scaled(c, -1) for k, c in self.terms.items()}, trusted=True)

    def __sub__(self, other: "Form") -> "Form":
        return self + (-other)

    def scale(self, q) -> "Form":
        q = Q(q)
        if not q:
            return self.zero_like()
        return self.like({k: scaled(c, q) for k, c in self.terms.items()}, trusted=True)

    def mul_coef(self, c: dict) -> "Form":
        """Multiply every term by a ring element (an even scalar function)."""
        mul = self.ring.mul
        out = {}
        for k, v in self.terms.items():
            p = mul(v, c)
            if p:
                out[k] = p
        return self.like(out, trusted=True)

    def __mul__(self, other):
        if not isinstance(other, Form):
            return self.scale(other)
        ring, pol = self._compat(other)
        probe = Form(self.n, ring, pol, {}, _trusted=True)
        keep = probe._keep
        rmul = ring.mul
        out: dict = {}
        for k1, c1 in self.terms.items():
            for k2, c2 in other.terms.items():
                s, k = _mul_keys(k1, k2)
                if not s or not keep(k):
                    continue
                p = rmul(c1, c2)
                if not p:
                    continue
                acc = out.get(k)
                if acc is None:
                    out[k] = p if s > 0 else scaled(p, -1)
                else:
                    add_into(acc, p, s)
                    if not acc:
                        del out[k]
        return Form(self.n, ring, pol, out, _trusted=True)

    __rmul__ = scale

    def __eq__(self, other):
        if not isinstance(other, Form):
            return NotImplemented
        return self.n == other.n and self.terms == other.terms

    def __hash__(self):
        raise TypeError("Form is not hashable")

    def __bool__(self):
        return bool(self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def __len__(self):
        return len(self.terms)

    def __repr__(self):
        from .serialize import form_to_text

        return f"Form({form_to_text(self)})"

    # -- selection ------------------------------------------------------------
    def select(self, pred) -> "Form":
        return self.like({k: c for k, c in self.terms.items() if pred(k)}, trusted=True)

    def weight_part(self, w: int) -> "Form":
        return self.select(lambda k: key_weight(k) == w)

    def up_to_weight(self, w: int) -> "Form":
        return self.select(lambda k: key_weight(k) <= w)

    def hbar_part(self, h: int) -> "Form":
        return self.select(lambda k: k[0] == h)

    def max_weight(self) -> int:
        return max((key_weight(k) for k in self.terms), default=-1)

    def min_weight(self) -> int | None:
        return min((key_weight(k) for k in self.terms), default=None)

    def parity_parts(self):
        even = self.select(lambda k: key_parity(k) == 0)
        odd = self.select(lambda k: key_parity(k) == 1)
        return even, odd

    def truncate(self, policy: TruncationPolicy | None = None) -> "Form":
        pol = policy or self.policy
        return Form(self.n, self.ring, pol, self.terms)

    def with_policy(self, policy: TruncationPolicy) -> "Form":
        return Form(self.n, self.ring, policy, self.terms)

    def with_ring(self, ring) -> "Form":
        if ring.tag != self.ring.tag:
            raise RingMismatch(f"{self.ring!r} -> {ring!r}")
        return Form(self.n, ring, self.policy, self.terms)

    def shift_hbar(self, k: int) -> "Form":
        """Multiply by hbar^k; negative exponents are kept (Laurent bookkeeping)."""
        out = {(h + k, y, a, b, u): c for (h, y, a, b, u), c in self.terms.items()}
        return Form(self.n, self.ring, self.policy, out)

    def div_hbar(self) -> "Form":
        """Exact division by hbar; fails loudly on an hbar^0 term."""
        for key in self.terms:
            if key[0] == 0:
                raise ArithmeticError("division by hbar of a term of hbar order 0")
        return self.shift_hbar(-1)

    def shift_u(self, k: int) -> "Form":
        out = {(h, y, a, b, u + k): c for (h, y, a, b, u), c in self.terms.items()}
        return Form(self.n, self.ring, self.policy, out)

    def map_coefficients(self, fn) -> "Form":
        out = {}
        for k, c in self.terms.items():
            c2 = fn(c)
            if c2:
                out[k] = c2
        return self.like(out)

    # -- derivations ----------------------------------------------------------
    def d_y(self, i: int) -> "Form":
        """Partial derivative in the fiber variable y^i (even, 0-based i)."""
        u_i = mono.unit(i)
        out = {}
        for (h, y, a, b, u), c in self.terms.items():
            e = mono.exponent(y, i)
            if e:
                out[(h, y - u_i, a, b, u)] = scaled(c, e)
        return self.like(out, trusted=True)

    def d_x(self, i: int) -> "Form":
        """Partial derivative along the base coordinate x^i (0-based).

        On jet coefficients the result lives on the ring of order J-1.
        """
        ring = self.ring.lowered(1)
        der = self.ring.deriv
        out = {}
        for k, c in self.terms.items():
            d = ring.truncate(der(c, i))
            if d:
                out[k] = d
        return Form(self.n, ring, self.policy, out, _trusted=True)

    def iota_theta(self, i: int) -> "Form":
        """Left contraction with d/d theta^i (odd, 0-based i)."""
        bit = 1 << i
        out = {}
        for (h, y, a, b, u), c in self.terms.items():
            if a & bit:
                s = -1 if popcount(a & (bit - 1)) & 1 else 1
                out[(h, y, a ^ bit, b, u)] = c if s > 0 else scaled(c, -1)
        return self.like(out, trusted=True)

    def iota_dx(self, i: int) -> "Form":
        """Left contraction with the base vector field d/dx^i (odd, 0-based i)."""
        bit = 1 << i
        out = {}
        for (h, y, a, b, u), c in self.terms.items():
            if b & bit:
                nb = popcount(a) + popcount(b & (bit - 1))
                out[(h, y, a, b ^ bit, u)] = c if not nb & 1 else scaled(c, -1)
        return self.like(out, trusted=True)

    def lmul_y(self, i: int) -> "Form":
        u_i = mono.unit(i)
        out = {(h, y + u_i, a, b, u): c for (h, y, a, b, u), c in self.terms.items()}
        return self.like(out)

    def lmul_theta(self, i: int) -> "Form":
        bit = 1 << i
        out = {}
        for (h, y, a, b, u), c in self.terms.items():
            if a & bit:
                continue
            s = -1 if popcount(a & (bit - 1)) & 1 else 1
            out[(h, y, a | bit, b, u)] = c if s > 0 else scaled(c, -1)
        return self.like(out)

    def lmul_dx(self, i: int) -> "Form":
        bit = 1 << i
        out = {}
        for (h, y, a, b, u), c in self.terms.items():
            if b & bit:
                continue
            s = -1 if (popcount(a) + popcount(b & (bit - 1))) & 1 else 1
            out[(h, y, a, b | bit, u)] = c if s > 0 else scaled(c, -1)
        return self.like(out)

    def derive(self, kind: str, i: int) -> "Form":
        """Dispatch by kind: 'dy', 'dx', 'iota', 'y', 'theta', 'dx_mul'.  i is 1-based."""
        _check_index(i, self.dim)
        j = i - 1
        table = {
            "dy": self.d_y,
            "dx": self.d_x,
            "iota": self.iota_theta,
            "iota_dx": self.iota_dx,
            "y": self.lmul_y,
            "theta": self.lmul_theta,
            "dx_mul": self.lmul_dx,
        }
        if kind not in table:
            raise ValueError(f"unknown derivation kind {kind!r}")
        return table[kind](j)

    # -- projections ----------------------------------------------------------
    def symbol(self) -> "Form":
        """Set y and theta to zero (keeps hbar, dx and u)."""
        return self.select(lambda k: k[1] == 0 and k[2] == 0)

    def coefficient_of(self, h=0, y=0, theta=0, dx=0, u=0) -> dict:
        return self.terms.get((h, y, theta, dx, u), {})

    def is_weyl(self) -> bool:
        return all(k[2] == 0 and k[4] == 0 for k in self.terms)


def _check_index(i: int, N: int):
    if not 1 <= i <= N:
        raise IndexError(f"index {i} out of range 1..{N}")


def sum_forms(forms, like: Form) -> Form:
    acc = like.zero_like()
    for f in forms:
        acc = acc + f
    return acc


def linear_combination(pairs, like: Form) -> Form:
    """Fast accumulation of sum(q * form) sharing like's ring/policy."""
    out: dict = {}
    ring = like.ring
    pol = like.policy
    for q, f in pairs:
        ring = ring.meet(f.ring)
        pol = pol.meet(f.policy)
        for k, c in f.terms.items():
            acc = out.get(k)
            if acc is None:
                out[k] = scaled(c, q)
            else:
                add_into(acc, c, q)
                if not acc:
                    del out[k]
    return Form(like.n, ring, pol, out)
