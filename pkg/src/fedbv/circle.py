"""Configuration integrals on the circle and heat-kernel numerics.

The sawtooth propagator ``P(t) = frac(t) - 1/2`` is affine on every ordering
cell of the torus ``[0,1)^k``, so products of propagators integrate exactly:
each cell is a simplex ``0 < s_1 < ... < s_k < 1`` and iterated integration of
monomials is elementary.  Floats appear only in the heat-kernel, quadrature
and Monte-Carlo helpers at the bottom of this module.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import permutations

import numpy as np
from scipy import integrate as sp_integrate
from sympy import bernoulli, factorial as sp_factorial

from .parallel import pmap
from .rational import Q, ZERO


class DiagonalError(ValueError):
    """The propagator was evaluated on the diagonal (t an integer)."""


def propagator(t) -> Q:
    """frac(t) - 1/2 for non-integral rational t."""
    if isinstance(t, float):
        t = Fraction(t).limit_denominator(10**12)
    q = Q(t) if not isinstance(t, Fraction) else Q(t.numerator, t.denominator)
    if q.denominator == 1:
        raise DiagonalError("propagator is singular on the diagonal; use boundary_value")
    fl = q.numerator // q.denominator
    return q - fl - Q(1, 2)


def boundary_value(side: str) -> Q:
    """Limits of P at the diagonal: t -> 0+ gives -1/2, t -> 1- gives +1/2."""
    if side in ("0+", "left", "-"):
        return Q(-1, 2)
    if side in ("1-", "right", "+"):
        return Q(1, 2)
    raise ValueError(f"unknown side {side!r}")


@dataclass(frozen=True)
class AmplitudeSpec:
    """k points, oriented edges (1-based pairs) and the vertices carrying a d theta."""

    k: int
    edges: tuple
    dtheta_vertices: frozenset = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(tuple(e) for e in self.edges))
        if self.dtheta_vertices is None:
            object.__setattr__(self, "dtheta_vertices", frozenset(range(1, self.k + 1)))
        else:
            object.__setattr__(self, "dtheta_vertices", frozenset(self.dtheta_vertices))
        if self.k < 1:
            raise ValueError("k must be positive")
        for a, b in self.edges:
            if not (1 <= a <= self.k and 1 <= b <= self.k):
                raise ValueError(f"edge ({a},{b}) out of range 1..{self.k}")
        for v in self.dtheta_vertices:
            if not 1 <= v <= self.k:
                raise ValueError(f"d theta vertex {v} out of range")

    @classmethod
    def wheel(cls, k: int) -> "AmplitudeSpec":
        return cls(k, tuple((i, i % k + 1) for i in range(1, k + 1)))


# -- exact polynomial integration over ordered simplices -----------------------------
# polynomials in m variables: dict exponent-tuple -> Q


def _pmul(a: dict, b: dict) -> dict:
    out: dict = {}
    for ea, ca in a.items():
        for eb, cb in b.items():
            e = tuple(x + y for x, y in zip(ea, eb))
            v = out.get(e, ZERO) + ca * cb
            if v:
                out[e] = v
            else:
                out.pop(e, None)
    return out


def _simplex_integral(poly: dict, m: int) -> Q:
    """Integral over 0 < s_1 < ... < s_m < 1 (variables indexed by position)."""
    cur = poly
    for j in range(m):
        nxt: dict = {}
        for e, c in cur.items():
            ej = e[j] + 1
            e2 = list(e)
            e2[j] = 0
            if j + 1 < m:
                e2[j + 1] += ej
            key = tuple(e2)
            v = nxt.get(key, ZERO) + c / ej
            if v:
                nxt[key] = v
            else:
                nxt.pop(key, None)
        cur = nxt
    return cur.get((0,) * m, ZERO)


def _cell_integral(order, edges, m, pos_of, ref):
    """Integral of prod P over one ordering cell.

    order: the free vertices sorted by increasing angle; pos_of maps a vertex
    to its variable slot, the reference vertex sits at angle 0.
    """
    rank = {v: i for i, v in enumerate(order)}
    if ref is not None:
        rank[ref] = -1
    zero = (0,) * m
    poly = {zero: Q(1)}
    for a, b in edges:
        # P(theta_a - theta_b) = theta_a - theta_b - 1/2 + [theta_a < theta_b]
        lin: dict = {}
        const = Q(-1, 2) + (1 if rank[a] < rank[b] else 0)
        if const:
            lin[zero] = const
        for v, s in ((a, 1), (b, -1)):
            if v == ref:
                continue
            e = [0] * m
            e[pos_of[v]] = 1
            e = tuple(e)
            nv = lin.get(e, ZERO) + s
            if nv:
                lin[e] = nv
            else:
                lin.pop(e, None)
        poly = _pmul(poly, lin)
        if not poly:
            return ZERO
    return _simplex_integral(poly, m)


def _amplitude_cells(k, edges, reference):
    verts = list(range(1, k + 1))
    free = [v for v in verts if v != reference]
    m = len(free)
    jobs = []
    for order in permutations(free):
        pos_of = {v: i for i, v in enumerate(order)}
        jobs.append((order, pos_of))
    parts = pmap(lambda job: _cell_integral(job[0], edges, m, job[1], reference), jobs)
    total = ZERO
    for p in parts:
        total += p
    return total


def amplitude_with_reason(spec: AmplitudeSpec, reference: int | None = None):
    """(value, reason) where reason explains a zero by type, else None.

    reference=None integrates over all k! ordering cells of the k-torus;
    reference=r fixes theta_r = 0 using rotation invariance ((k-1)! cells).
    """
    if len(spec.dtheta_vertices) != spec.k:
        return ZERO, "integrand is not a top form (missing d theta factors)"
    for a, b in spec.edges:
        if a == b:
            return ZERO, "tadpole edge"
    if not spec.edges:
        return Q(1), None
    if reference is not None and not 1 <= reference <= spec.k:
        raise ValueError("reference vertex out of range")
    return _cached_amplitude(spec.k, tuple(spec.edges), reference), None


@lru_cache(maxsize=4096)
def _cached_amplitude(k, edges, reference):
    return _amplitude_cells(k, edges, reference)


def amplitude(spec: AmplitudeSpec, reference: int | None = None) -> Q:
    return amplitude_with_reason(spec, reference)[0]


def wheel_zeta(k: int) -> Q:
    """2 zeta(k) / (2 pi i)^k = -B_k / k! for even k; zero for odd k."""
    if k < 1:
        raise ValueError("k must be positive")
    if k % 2:
        return ZERO
    b = bernoulli(k) / sp_factorial(k)
    return -Q(int(b.p), int(b.q))


# -- floating point numerics -----------------------------------------------------------
class SeriesMismatch(RuntimeError):
    pass


def heat_kernel_images(t: float, d: float, tol: float = 1e-14) -> float:
    """Gaussian image sum (4 pi t)^(-1/2) sum_n exp(-(d + n)^2 / 4t)."""
    pref = 1.0 / math.sqrt(4 * math.pi * t)
    d = d - math.floor(d)
    total = 0.0
    n = 0
    while True:
        terms = [math.exp(-((d + n) ** 2) / (4 * t))]
        if n:
            terms.append(math.exp(-((d - n) ** 2) / (4 * t)))
        total += sum(terms)
        if n > 1 and max(terms) * pref < tol:
            break
        n += 1
    return pref * total


def heat_kernel_fourier(t: float, d: float, tol: float = 1e-14) -> float:
    """Fourier form 1 + 2 sum_m exp(-4 pi^2 m^2 t) cos(2 pi m d)."""
    total = 1.0
    m = 1
    while True:
        w = math.exp(-4 * math.pi**2 * m * m * t)
        total += 2 * w * math.cos(2 * math.pi * m * d)
        if 2 * w < tol:
            break
        m += 1
    return total


def heat_kernel(t: float, theta1: float, theta2: float, tol: float = 1e-10) -> float:
    """Scalar heat kernel on the unit circle; both series must agree within tol."""
    if t <= 0:
        raise ValueError("t must be positive")
    d = theta1 - theta2
    a = heat_kernel_images(t, d)
    b = heat_kernel_fourier(t, d)
    if abs(a - b) > tol:
        raise SeriesMismatch(f"image sum {a!r} vs Fourier sum {b!r}")
    # positive image terms stay accurate for small t; the Fourier sum cancels there
    return a if t < 0.05 else b


def heat_kernel_mass(t: float, theta1: float = 0.0) -> float:
    """Integral over theta2 of the heat kernel (should be 1)."""
    val, _ = sp_integrate.quad(lambda s: heat_kernel_images(t, theta1 - s), 0.0, 1.0, limit=200)
    return val


def _decay(n, eps, L):
    return math.exp(-4 * math.pi**2 * n * n * eps) - math.exp(-4 * math.pi**2 * n * n * L)


def effective_propagator_series(eps: float, L: float, d: float, tol: float = 1e-15) -> float:
    """-sum_n sin(2 pi n d)/(pi n) (e^{-4 pi^2 n^2 eps} - e^{-4 pi^2 n^2 L})."""
    total = 0.0
    n = 1
    while True:
        w = _decay(n, eps, L)
        total -= math.sin(2 * math.pi * n * d) / (math.pi * n) * w
        if math.exp(-4 * math.pi**2 * n * n * eps) < tol:
            break
        n += 1
    return total


def effective_propagator(eps: float, L: float, theta1: float, theta2: float, check: bool = True) -> float:
    """P_eps^L = int_eps^L d/dtheta1 K_t dt, by quadrature of the Fourier derivative.

    With check=True the quadrature is compared against the termwise closed
    form of the t-integral.
    """
    if not 0 < eps < L:
        raise ValueError("need 0 < eps < L")
    d = theta1 - theta2

    def dK(t):
        s = 0.0
        m = 1
        while True:
            w = math.exp(-4 * math.pi**2 * m * m * t)
            s += -4 * math.pi * m * w * math.sin(2 * math.pi * m * d)
            if w < 1e-17:
                break
            m += 1
        return s

    # the integrand is negligible once t is of order 1
    upper = min(L, 2.0)
    knots = [eps * 10**j for j in range(0, 12) if eps * 10**j < upper] + [upper]
    val = 0.0
    for a, b in zip(knots, knots[1:]):
        part, _ = sp_integrate.quad(dK, a, b, limit=400, epsabs=1e-13, epsrel=1e-12)
        val += part
    if check:
        ref = effective_propagator_series(eps, L, d)
        if abs(val - ref) > 1e-7:
            raise SeriesMismatch(f"quadrature {val!r} vs series {ref!r}")
    return val


def sawtooth_partial_sum(d, N: int = 10_000):
    """-sum_{n<=N} sin(2 pi n d)/(pi n); vectorised over d."""
    d = np.asarray(d, dtype=float)
    n = np.arange(1, N + 1, dtype=float)
    return -(np.sin(2 * np.pi * np.multiply.outer(d, n)) / (np.pi * n)).sum(axis=-1)


def sawtooth(d):
    d = np.asarray(d, dtype=float)
    return d - np.floor(d) - 0.5


def amplitude_monte_carlo(spec: AmplitudeSpec, samples: int = 1_000_000, seed: int = 0, chunk: int = 200_000):
    """(mean, standard error) of prod P over uniform points on the k-torus."""
    rng = np.random.default_rng(seed)
    tot = 0.0
    tot2 = 0.0
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        th = rng.random((m, spec.k))
        val = np.ones(m)
        for a, b in spec.edges:
            val *= sawtooth(th[:, a - 1] - th[:, b - 1])
        tot += val.sum()
        tot2 += (val * val).sum()
        done += m
    mean = tot / samples
    var = max(tot2 / samples - mean * mean, 0.0)
    return mean, math.sqrt(var / samples)
