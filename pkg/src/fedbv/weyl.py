"""Fiberwise Moyal product and the delta-calculus on Weyl-bundle valued forms."""
from __future__ import annotations

from math import factorial

from . import monomial as mono
from .forms import DimensionMismatch, Form, key_weight
from .monomial import merge_sign, popcount
from .rational import Q
from .rings import add_into, scaled


def _mat_inverse(m):
    """Exact inverse of a rational matrix (Gauss-Jordan)."""
    N = len(m)
    a = [[Q(v) for v in row] + [Q(int(i == j)) for j in range(N)] for i, row in enumerate(m)]
    for col in range(N):
        piv = next((r for r in range(col, N) if a[r][col]), None)
        if piv is None:
            raise ZeroDivisionError("matrix is singular")
        a[col], a[piv] = a[piv], a[col]
        p = a[col][col]
        a[col] = [v / p for v in a[col]]
        for r in range(N):
            if r != col and a[r][col]:
                f = a[r][col]
                a[r] = [x - f * y for x, y in zip(a[r], a[col])]
    return [row[N:] for row in a]


class SymplecticData:
    """omega_{ij}(x) and its inverse omega^{ij}(x) over a coefficient ring.

    omega_lower: 2n x 2n nested list of ring coefficients.  The inverse is the
    Neumann series around omega(0)^{-1}, cut at the ring's jet order.
    """

    def __init__(self, n: int, ring, omega_lower):
        self.n = n
        self.ring = ring
        N = 2 * n
        self.lower = [[ring.truncate(dict(omega_lower[i][j])) for j in range(N)] for i in range(N)]
        self.upper = self._invert()
        self.pairs = [(i, j, self.upper[i][j]) for i in range(N) for j in range(N) if self.upper[i][j]]
        self.constant = all(
            set(c) <= set(ring.one()) for row in self.lower for c in row
        )
        self._moyal_cache: dict = {}

    @classmethod
    def constant_matrix(cls, n, ring, mat):
        return cls(n, ring, [[ring.const(v) for v in row] for row in mat])

    def _invert(self):
        ring = self.ring
        N = 2 * self.n
        w0 = [[ring.constant(self.lower[i][j]) for j in range(N)] for i in range(N)]
        inv0 = _mat_inverse(w0)
        # omega = w0 + E, with E vanishing at x = 0; omega^{-1} = sum_k (-inv0 E)^k inv0
        E = [[{k: v for k, v in self.lower[i][j].items() if k != _const_key(ring)} for j in range(N)] for i in range(N)]
        inv0c = [[ring.const(inv0[i][j]) for j in range(N)] for i in range(N)]
        if ring.tag == "fourier":
            if any(E[i][j] for i in range(N) for j in range(N)):
                raise ValueError("Fourier charts need a constant symplectic form")
            return inv0c
        M = _mat_mul(ring, inv0c, E)
        M = [[scaled(c, -1) for c in row] for row in M]
        result = [row[:] for row in inv0c]
        term = inv0c
        for _ in range(ring.J):
            term = _mat_mul(ring, M, term)
            if not any(term[i][j] for i in range(N) for j in range(N)):
                break
            result = [[add_into(dict(result[i][j]), term[i][j]) for j in range(N)] for i in range(N)]
        return result

    def check_inverse(self) -> bool:
        N = 2 * self.n
        prod = _mat_mul(self.ring, self.upper, self.lower)
        return all(prod[i][j] == (self.ring.one() if i == j else {}) for i in range(N) for j in range(N))

    def omega_form(self, policy) -> Form:
        """omega = 1/2 omega_{ij} dx^i dx^j = sum_{i<j} omega_{ij} dx^i dx^j."""
        N = 2 * self.n
        terms = {}
        for i in range(N):
            for j in range(i + 1, N):
                if self.lower[i][j]:
                    terms[(0, 0, 0, (1 << i) | (1 << j), 0)] = dict(self.lower[i][j])
        return Form(self.n, self.ring, policy, terms)

    def moyal_table(self, ya: int, yb: int, hmax: int):
        """Bidifferential expansion of y^ya (x) y^yb.

        Returns a list of (order n, coefficient, ya', yb') with the factor
        (1/2)^n / n! already included (hbar^n is implicit).
        """
        key = (ya, yb, hmax)
        hit = self._moyal_cache.get(key)
        if hit is not None:
            return hit
        ring = self.ring
        out = []
        state = {(ya, yb): ring.one()}
        for order in range(1, hmax + 1):
            nxt: dict = {}
            for (a, b), c in state.items():
                for i, j, w in self.pairs:
                    ea = mono.exponent(a, i)
                    eb = mono.exponent(b, j)
                    if not ea or not eb:
                        continue
                    k2 = (a - mono.unit(i), b - mono.unit(j))
                    p = ring.mul(c, w)
                    if not p:
                        continue
                    acc = nxt.get(k2)
                    if acc is None:
                        nxt[k2] = scaled(p, ea * eb)
                    else:
                        add_into(acc, p, ea * eb)
            state = {k: v for k, v in nxt.items() if v}
            if not state:
                break
            f = Q(1, (2 ** order) * factorial(order))
            for (a, b), c in state.items():
                out.append((order, scaled(c, f), a, b))
        self._moyal_cache[key] = out
        return out


def _const_key(ring):
    return next(iter(ring.one()))


def _mat_mul(ring, A, B):
    N = len(A)
    out = [[{} for _ in range(N)] for _ in range(N)]
    for i in range(N):
        for k in range(N):
            if not A[i][k]:
                continue
            for j in range(N):
                if B[k][j]:
                    add_into(out[i][j], ring.mul(A[i][k], B[k][j]))
    return out


def _bidiff(a: Form, b: Form, s: SymplecticData, mode: str) -> Form:
    """Shared kernel for the star product, commutator and Poisson bracket.

    mode 'star': all orders; 'comm': 2 x odd orders; 'poisson': order one / hbar.
    """
    if not a.n == b.n == s.n:
        raise DimensionMismatch(f"dimensions {2 * a.n}, {2 * b.n}, {2 * s.n}")
    ring = a.ring.meet(b.ring).meet(s.ring)
    pol = a.policy.meet(b.policy)
    W, H = pol.weight, pol.hbar
    rmul = ring.mul
    out: dict = {}

    def put(k, c, sgn):
        acc = out.get(k)
        if acc is None:
            out[k] = scaled(c, sgn)
        else:
            add_into(acc, c, sgn)
            if not acc:
                del out[k]

    for k1, c1 in a.terms.items():
        h1, y1, t1, b1, u1 = k1
        if t1:
            raise ValueError("Moyal operations act on Weyl forms (no theta)")
        w1 = key_weight(k1)
        for k2, c2 in b.terms.items():
            h2, y2, t2, b2, u2 = k2
            if t2:
                raise ValueError("Moyal operations act on Weyl forms (no theta)")
            if b1 & b2:
                continue
            if w1 + key_weight(k2) > W:
                continue
            sgn = merge_sign(b1, b2)
            c12 = None
            dxm = b1 | b2
            if mode == "star" and h1 + h2 <= H:
                c12 = rmul(c1, c2)
                if c12:
                    put((h1 + h2, y1 + y2, 0, dxm, u1 + u2), c12, sgn)
            hroom = H - h1 - h2
            if mode == "poisson":
                hroom = 1
            if hroom <= 0 or not y1 or not y2:
                continue
            for order, cc, ya, yb in s.moyal_table(y1, y2, hroom):
                if mode == "comm":
                    if not order & 1:
                        continue
                    f = 2
                    hh = h1 + h2 + order
                elif mode == "poisson":
                    if order != 1:
                        continue
                    f = 2
                    hh = h1 + h2
                else:
                    f = 1
                    hh = h1 + h2 + order
                if c12 is None:
                    c12 = rmul(c1, c2)
                if not c12:
                    break
                p = rmul(c12, cc)
                if p:
                    put((hh, ya + yb, 0, dxm, u1 + u2), p, sgn * f)
    return Form(a.n, ring, pol, out)


def moyal(a: Form, b: Form, s: SymplecticData) -> Form:
    """a * b = exp(hbar/2 w^{ij} d_{y^i} (x) d_{z^j}) a(y) b(z) |_{y=z}."""
    return _bidiff(a, b, s, "star")


def moyal_commutator(a: Form, b: Form, s: SymplecticData) -> Form:
    """[a, b] = a*b - (-1)^{q1 q2} b*a (q the dx-form degree)."""
    return _bidiff(a, b, s, "comm")


def poisson(a: Form, b: Form, s: SymplecticData) -> Form:
    """{a, b} = w^{ij} d_{y^i} a  d_{y^j} b."""
    return _bidiff(a, b, s, "poisson")


def delta(a: Form) -> Form:
    """delta a = dx^k d a / d y^k."""
    out = a.zero_like()
    for k in range(a.dim):
        out = out + a.d_y(k).lmul_dx(k)
    return out


def delta_star(a: Form) -> Form:
    """delta* a = y^k iota_{d/dx^k} a."""
    out = a.zero_like()
    for k in range(a.dim):
        out = out + a.iota_dx(k).lmul_y(k)
    return out


def delta_inv(a: Form) -> Form:
    """delta^{-1} = delta* / (p + q) on (y-degree p, dx-degree q) monomials; zero if p + q = 0."""
    scaled_terms = {}
    for k, c in a.terms.items():
        pq = mono.degree(k[1]) + popcount(k[3])
        if pq:
            scaled_terms[k] = scaled(c, Q(1, pq))
    return delta_star(a.like(scaled_terms, trusted=True))


def hodge_residual(a: Form) -> Form:
    """a - (delta delta^{-1} a + delta^{-1} delta a + a_00); zero for every a."""
    a00 = a.select(lambda k: k[1] == 0 and k[3] == 0)
    return a - delta(delta_inv(a)) - delta_inv(delta(a)) - a00
