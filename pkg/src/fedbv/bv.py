"""BV-bundle operators, fiberwise Berezin integration and the twisted integrals.

Conventions (all fixed by the residual checks in the test suite):

* ``d_tm`` sends ``y^i`` to ``theta^i``; the new theta is inserted at the
  left end of the theta block.
* ``iota_theta`` contracts from the left, so ``iota_1(theta^1 theta^2) = theta^2``.
* ``iota_pi = 1/2 w^{ij} iota_i iota_j`` and ``Delta = w^{ij} d_{y^i} iota_j``;
  with these choices ``Delta = [d_tm, iota_pi]``.
* ``berezin(a) = sigma(iota_pi^n a) / n!``; ``sigma`` drops every term that
  still contains ``y`` or ``theta`` and keeps the x-dependence.
"""
from __future__ import annotations

from math import factorial

from . import monomial as mono
from .fedosov import Chart, curvature, nabla, raised
from .forms import Form, TruncationPolicy, key_parity
from .monomial import popcount
from .rational import Q
from .rings import add_into, scaled


class NilpotencyError(ValueError):
    """A twisting element has a term of form degree zero, so its exponential does not terminate."""


def _acc(out, key, coef, sgn):
    acc = out.get(key)
    if acc is None:
        out[key] = scaled(coef, sgn)
    else:
        add_into(acc, coef, sgn)
        if not acc:
            del out[key]


def d_tm(a: Form) -> Form:
    """Fiberwise de Rham differential, y^i -> theta^i (odd, degree -1)."""
    out: dict = {}
    for (h, y, th, dx, u), c in a.terms.items():
        for i in range(a.dim):
            e = mono.exponent(y, i)
            if not e:
                continue
            bit = 1 << i
            if th & bit:
                continue
            sgn = -e if popcount(th & (bit - 1)) & 1 else e
            _acc(out, (h, y - mono.unit(i), th | bit, dx, u), c, sgn)
    return a.like(out, trusted=True)


def iota_pi(a: Form, c: Chart) -> Form:
    """1/2 w^{ij} iota_i iota_j = sum_{i<j} w^{ij} iota_i iota_j."""
    up = c.symp.upper
    rmul = a.ring.meet(c.ring).mul
    out: dict = {}
    for (h, y, th, dx, u), coef in a.terms.items():
        if popcount(th) < 2:
            continue
        for j in range(a.dim):
            bj = 1 << j
            if not th & bj:
                continue
            sj = -1 if popcount(th & (bj - 1)) & 1 else 1
            rest = th ^ bj
            for i in range(j):
                bi = 1 << i
                if not rest & bi or not up[i][j]:
                    continue
                si = -1 if popcount(rest & (bi - 1)) & 1 else 1
                p = rmul(coef, up[i][j])
                if p:
                    _acc(out, (h, y, rest ^ bi, dx, u), p, si * sj)
    return Form(a.n, a.ring.meet(c.ring), a.policy, out, _trusted=True)


def bv_delta(a: Form, c: Chart) -> Form:
    """Delta = w^{ij} d_{y^i} iota_{theta^j} (odd, degree +1, square zero)."""
    up = c.symp.upper
    rmul = a.ring.meet(c.ring).mul
    out: dict = {}
    for (h, y, th, dx, u), coef in a.terms.items():
        if not th or not y:
            continue
        for j in range(a.dim):
            bj = 1 << j
            if not th & bj:
                continue
            sj = -1 if popcount(th & (bj - 1)) & 1 else 1
            for i in range(a.dim):
                e = mono.exponent(y, i)
                if not e or not up[i][j]:
                    continue
                p = rmul(coef, up[i][j])
                if p:
                    _acc(out, (h, y - mono.unit(i), th ^ bj, dx, u), p, sj * e)
    return Form(a.n, a.ring.meet(c.ring), a.policy, out, _trusted=True)


def parity(a: Form) -> int:
    """Total parity of a homogeneous form; raises on mixed input."""
    ps = {key_parity(k) for k in a.terms}
    if len(ps) > 1:
        raise ValueError("form is not homogeneous in parity")
    return ps.pop() if ps else 0


def bv_bracket(a: Form, b: Form, c: Chart) -> Form:
    """{a, b} = Delta(ab) - (Delta a) b - (-1)^|a| a Delta b (bilinear in mixed-parity input).

    Delta lowers the weight by two, so the products are formed at a raised
    truncation and the result is cut back to the common policy.
    """
    pol = a.policy.meet(b.policy)
    big = raised(pol, 2)
    a, b = a.with_policy(big), b.with_policy(big)
    out = None
    for part in a.parity_parts():
        if not part:
            continue
        p = parity(part)
        t = bv_delta(part * b, c) - bv_delta(part, c) * b
        t = t + part * bv_delta(b, c) if p else t - part * bv_delta(b, c)
        out = t if out is None else out + t
    out = out if out is not None else a.zero_like() * b
    return out.with_policy(pol)


def sigma(a: Form) -> Form:
    """Extended symbol: y = theta = 0 (x, hbar, dx and u are kept)."""
    return a.select(lambda k: k[1] == 0 and k[2] == 0)


def berezin(a: Form, c: Chart) -> Form:
    """sigma(iota_pi^n a) / n!; a form on the base (dx content passes through)."""
    x = a
    for _ in range(c.n):
        x = iota_pi(x, c)
    return sigma(x).scale(Q(1, factorial(c.n)))


def _require_twist(g: Form):
    for k in g.terms:
        if k[3] == 0:
            raise NilpotencyError("twisting element has a term without dx; exp(G/hbar) would not terminate")
    if any(key_parity(k) for k in g.terms):
        raise ValueError("twisting element must be even")


def exp_over_hbar(g: Form, policy: TruncationPolicy, sign: int = 1) -> Form:
    """exp(sign * G / hbar) as a Laurent-in-hbar form under the given policy.

    G is even with positive form degree in every term, so G^(2n+1) = 0.
    """
    _require_twist(g)
    x = g.with_policy(policy).shift_hbar(-1)
    if sign < 0:
        x = -x
    term = Form.scalar(g.n, g.ring, policy)
    out = term
    for m in range(1, 2 * g.n + 1):
        term = (term * x).scale(Q(1, m))
        if not term:
            break
        out = out + term
    return out


def _wide(pol: TruncationPolicy, n: int) -> TruncationPolicy:
    """Room for the 2n factors of G/hbar (each may lower the weight by one)."""
    return raised(pol, 2 * n + 2)


def qme_residual(g: Form, c: Chart, R_form: Form | None = None) -> Form:
    """nabla G + hbar Delta G + 1/2 {G, G} + d_tm R_nabla, through weight W - 1.

    This equals hbar * exp(-G/hbar) (nabla + hbar Delta + hbar^-1 d_tm R) exp(G/hbar).
    """
    _require_twist(g)
    if R_form is None:
        R_form = curvature(c)[1]
    pol = g.policy
    big = raised(pol, 2)
    G = g.with_policy(big)
    res = nabla(G, c) + bv_delta(G, c).shift_hbar(1) + bv_bracket(G, G, c).scale(Q(1, 2))
    res = res + d_tm(R_form.with_policy(big))
    return res.with_policy(pol.with_weight(pol.weight - 1))


def qme_residual_direct(g: Form, c: Chart, R_form: Form | None = None) -> Form:
    """Oracle for :func:`qme_residual` by explicit conjugation of the exponential."""
    _require_twist(g)
    if R_form is None:
        R_form = curvature(c)[1]
    pol = g.policy
    wide = _wide(pol, c.n)
    E = exp_over_hbar(g, wide)
    Einv = exp_over_hbar(g, wide, sign=-1)
    dR = d_tm(R_form.with_policy(wide)).shift_hbar(-1)
    op = nabla(E, c) + bv_delta(E, c).shift_hbar(1) + dR * E
    res = (Einv * op).shift_hbar(1)
    return res.with_policy(pol.with_weight(pol.weight - 1))


def qme_operator(x: Form, c: Chart, R_form: Form | None = None) -> Form:
    """(nabla + hbar Delta + hbar^-1 d_tm R_nabla) x."""
    if R_form is None:
        R_form = curvature(c)[1]
    dR = d_tm(R_form.with_policy(x.policy)).shift_hbar(-1)
    return nabla(x, c) + bv_delta(x, c).shift_hbar(1) + dR * x


def twisted_differential(a: Form, g: Form, c: Chart) -> Form:
    """(nabla + hbar Delta + {G, -}) a."""
    return nabla(a, c) + bv_delta(a, c).shift_hbar(1) + bv_bracket(g, a, c)


def integrate_twisted(a: Form, g: Form, c: Chart, policy: TruncationPolicy | None = None) -> Form:
    """hbar^n berezin(exp(G/hbar) a): the u -> 0 limit of the equivariant integral.

    The hbar^n prefactor is the normalisation under which the equivariant
    integral restricts to this map on u-free input.
    """
    pol = policy or _wide(a.policy.meet(g.policy), c.n)
    E = exp_over_hbar(g, pol)
    return berezin(E * a.with_policy(pol), c).shift_hbar(c.n)


def equivariant_integrate(a: Form, g: Form, c: Chart, policy: TruncationPolicy | None = None) -> Form:
    """sigma(u^n exp(hbar iota_pi / u) (a exp(G/hbar)))."""
    pol = policy or _wide(a.policy.meet(g.policy), c.n)
    x = a.with_policy(pol) * exp_over_hbar(g, pol)
    out = x.zero_like()
    term = x
    for m in range(c.n + 1):
        if m:
            term = iota_pi(term, c).shift_hbar(1).shift_u(-1).scale(Q(1, m))
        if not term:
            break
        out = out + sigma(term)
    return out.shift_u(c.n)


def d_base(a: Form) -> Form:
    """Exterior derivative along the base (acts on x-dependence only)."""
    out = None
    for k in range(a.dim):
        t = a.d_x(k).lmul_dx(k)
        out = t if out is None else out + t
    return out if out is not None else a
