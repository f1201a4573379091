import random
from math import factorial

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedbv import monomial as mono
from fedbv.bv import (
    NilpotencyError,
    berezin,
    bv_bracket,
    bv_delta,
    d_base,
    d_tm,
    equivariant_integrate,
    exp_over_hbar,
    integrate_twisted,
    iota_pi,
    parity,
    qme_operator,
    qme_residual,
    qme_residual_direct,
    sigma,
    twisted_differential,
)
from fedbv.fedosov import curvature, nabla, raised, solve_fedosov
from fedbv.forms import Form, TruncationPolicy
from fedbv.grammar import parse_poly
from fedbv.rational import Q
from fedbv.transfer import gamma_infinity

from support import CURVED2, CURVED4, jet_chart, random_bv_form, random_poly

FLAT = jet_chart(1, {}, 4, 4)
CUR = jet_chart(1, CURVED2, 6, 10, hbar=2)
CUR4 = jet_chart(2, CURVED4, 4, 6, hbar=2)
SETTINGS = settings(max_examples=12, deadline=None)


def M(c=FLAT, **kw):
    return Form.monomial(c.n, c.ring, c.policy, **kw)


def low(f, k=2):
    return f.with_policy(f.policy.with_weight(f.policy.weight - k))


def same(x, y, k=2):
    r = x.ring.meet(y.ring)
    return low(x.with_ring(r), k) == low(y.with_ring(r), k)


def forms(c, terms=4, max_y=2):
    return st.integers(0, 10**6).map(lambda s: random_bv_form(random.Random(s), c, terms, max_y))


# -- d_tm, iota_pi, Delta -------------------------------------------------------------------
def test_fiber_differential_examples():
    assert d_tm(M(y=[1, 1])) == M(y=[0, 1], theta=[1]) + M(y=[1, 0], theta=[2])
    _, R = curvature(CUR)
    dR = d_tm(R)
    assert dR and all(mono.degree(k[1]) == 1 and mono.popcount(k[2]) == 1 for k in dR.terms)


def test_contraction_examples():
    up12 = FLAT.symp.upper[0][1]
    # frozen convention: iota_pi(theta^1 theta^2) = -omega^{12}
    assert iota_pi(M(theta=[1, 2]), FLAT) == M(coef={k: -v for k, v in up12.items()})
    assert not iota_pi(M(theta=[2], y=[1, 0]), FLAT)
    assert not iota_pi(M(), FLAT)


def test_bv_laplacian_example():
    up12 = FLAT.symp.upper[0][1]
    assert bv_delta(M(y=[1, 0], theta=[2]), FLAT) == M(coef=up12)
    assert not bv_delta(M(y=[0, 1], theta=[2]), FLAT)


def test_berezin_examples():
    assert not berezin(M(), FLAT)
    assert berezin(M(theta=[1, 2]), FLAT) == M()
    top = Form.monomial(2, CUR4.ring, CUR4.policy, theta=[1, 2, 3, 4])
    assert berezin(top, CUR4) == Form.scalar(2, CUR4.ring, CUR4.policy)
    # dx content passes through
    assert berezin(M(theta=[1, 2], dx=[1]), FLAT) == M(dx=[1])


@SETTINGS
@given(st.data())
def test_operator_identities(data):
    for c in (CUR, CUR4):
        a = data.draw(forms(c, 4))
        D = lambda x: bv_delta(x, c)  # noqa: E731
        iota = lambda x: iota_pi(x, c)  # noqa: E731
        nab = lambda x: nabla(x, c)  # noqa: E731
        assert not d_tm(d_tm(a))
        assert not D(D(a))
        assert same(D(a), d_tm(iota(a)) - iota(d_tm(a)))
        assert same(iota(iota(a)), iota(iota(a)))
        # parallel operators: nabla (odd) anticommutes with Delta and d_tm, commutes with iota_pi
        assert same(nab(D(a)), -D(nab(a)))
        assert same(nab(d_tm(a)), -d_tm(nab(a)))
        assert same(nab(iota(a)), iota(nab(a)))
        assert not berezin(D(a), c)


def test_berezin_is_a_chain_map_for_nabla():
    for c in (CUR, CUR4):
        N = c.N
        coef = parse_poly("x1 x2 + 2 x2^2" if N == 2 else "x1 x3 + x4^2", N)
        a = Form.monomial(c.n, c.ring, c.policy, coef=coef, theta=list(range(1, N + 1)))
        a = a + Form.monomial(c.n, c.ring, c.policy, coef=coef, y=[1] + [0] * (N - 1), theta=list(range(2, N + 1)))
        lhs, rhs = berezin(nabla(a, c), c), d_base(berezin(a, c))
        assert lhs and same(lhs, rhs, 0)


# -- bracket --------------------------------------------------------------------------------
@SETTINGS
@given(st.data())
def test_bracket_axioms_as_stated(data):
    c = CUR
    a, b, x = data.draw(forms(c, 3, 1)), data.draw(forms(c, 3, 1)), data.draw(forms(c, 2, 1))
    br = lambda p, q: bv_bracket(p, q, c)  # noqa: E731
    for ah in a.parity_parts():
        for bh in b.parity_parts():
            pa, pb = parity(ah), parity(bh)
            assert same(br(ah, bh), br(bh, ah).scale((-1) ** (pa * pb)))
            for xh in x.parity_parts():
                lhs = br(ah, bh * xh)
                rhs = br(ah, bh) * xh + (bh * br(ah, xh)).scale((-1) ** ((pa + 1) * pb))
                assert same(lhs, rhs)
            third = bv_delta(br(ah, bh), c) + br(bv_delta(ah, c), bh) + br(ah, bv_delta(bh, c)).scale((-1) ** pa)
            assert not low(third)


def test_bracket_definition():
    a = M(y=[1, 0], theta=[1])
    b = M(y=[0, 1])
    expect = bv_delta(a * b, FLAT) - bv_delta(a, FLAT) * b + a * bv_delta(b, FLAT)
    assert bv_bracket(a, b, FLAT) == expect


# -- master equation ---------------------------------------------------------------------
def test_qme_trivial_and_error_cases():
    assert not qme_residual(FLAT.form(), FLAT)
    with pytest.raises(NilpotencyError):
        qme_residual(M(y=[1, 0], theta=[1]), FLAT)
    with pytest.raises(ValueError):
        exp_over_hbar(M(y=[1, 0], dx=[1]), FLAT.policy)


def test_qme_holds_for_transferred_connection_and_detects_noise():
    c = jet_chart(1, CURVED2, 5, 8, hbar=2)
    gi = gamma_infinity(solve_fedosov(c), c)
    assert not qme_residual(gi, c)
    noise = Form.monomial(1, gi.ring, gi.policy, coef=parse_poly("x1", 2), y=[1, 1], theta=[1], dx=[2])
    assert qme_residual(gi + noise, c)


@pytest.mark.parametrize("seed", [3, 4, 5])
def test_qme_residual_matches_direct_expansion(seed):
    c = jet_chart(1, CURVED2, 5, 8, hbar=2)
    rng = random.Random(seed)
    g = random_bv_form(rng, c, 10).select(lambda k: k[3] and not (mono.popcount(k[2]) + mono.popcount(k[3])) % 2)
    assert g
    a, b = qme_residual(g, c), qme_residual_direct(g, c)
    assert same(a, b, 0)


@pytest.mark.parametrize("seed", [1, 2])
def test_qme_operator_squares_to_zero(seed):
    for c in (CUR, CUR4):
        a = random_bv_form(random.Random(seed), c, 4)
        twice = qme_operator(qme_operator(a, c), c)
        assert not low(twice, 3)


# -- integration maps ---------------------------------------------------------------------
def torus_twist(c):
    """omega_{ij} theta^i dx^j on a flat chart."""
    out = c.form()
    low_ = c.symp.lower
    for i in range(c.N):
        for j in range(c.N):
            if low_[i][j]:
                out = out + Form.monomial(c.n, c.ring, c.policy, coef=low_[i][j],
                                          theta=[i + 1], dx=[j + 1])
    return out


def test_twisted_integral_without_twist_is_berezin():
    a = M(theta=[1, 2], y=[0, 0]) + M(theta=[1], dx=[2])
    out = integrate_twisted(a, FLAT.form(), FLAT)
    assert out == berezin(a, FLAT).shift_hbar(1).with_policy(out.policy)


@pytest.mark.parametrize("n", [1, 2])
def test_twisted_integral_of_one_on_flat_torus(n):
    c = jet_chart(n, {}, 4, 2)
    G = torus_twist(c)
    out = integrate_twisted(Form.scalar(n, c.ring, c.policy), G, c)
    om = c.omega_form()
    top = om
    for _ in range(n - 1):
        top = top * om
    want = top.scale(Q((-1) ** n, factorial(n))).shift_hbar(-n)
    assert out == want.with_policy(out.policy)


def integrand(seed, c):
    """Low y-degree input, so the Berezin integral sees something."""
    rng = random.Random(seed)
    out = c.form()
    for _ in range(4):
        y = [0] * c.N
        if rng.random() < 0.3:
            y[rng.randrange(c.N)] = 1
        out = out + Form.monomial(c.n, c.ring, c.policy, coef=random_poly(rng, c.N, 2, 2) or c.ring.one(), y=y,
                                  theta=rng.sample(range(1, c.N + 1), rng.randint(0, c.N)),
                                  dx=rng.sample(range(1, c.N + 1), rng.randint(0, 1)))
    return out


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_twisted_integral_is_a_cochain_map(seed):
    c = jet_chart(1, {}, 4, 6, hbar=2)
    G = torus_twist(c)
    a = integrand(seed, c)
    lhs = integrate_twisted(twisted_differential(a, G, c), G, c)
    rhs = d_base(integrate_twisted(a, G, c))
    assert lhs and same(lhs, rhs, 0)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_equivariant_limit_and_cochain(seed):
    c = jet_chart(1, {}, 4, 6, hbar=2)
    G = torus_twist(c)
    a = integrand(seed, c)
    eq = equivariant_integrate(a, G, c)
    plain = integrate_twisted(a, G, c)
    assert eq.select(lambda k: k[4] == 0) == plain.with_policy(eq.policy)
    big = a.with_policy(TruncationPolicy(a.policy.weight, a.policy.x_degree, a.policy.hbar, u_min=-2, u_max=2))
    Da = twisted_differential(big, G, c) + d_tm(big).shift_u(1)
    lhs = equivariant_integrate(Da, G, c)
    assert lhs and same(lhs, d_base(equivariant_integrate(big, G, c)), 0)


def test_equivariant_integral_of_one_on_flat_torus():
    c = jet_chart(1, {}, 4, 2)
    out = equivariant_integrate(Form.scalar(1, c.ring, c.policy), torus_twist(c), c)
    # u exp(-omega / (u hbar)) = u - omega / hbar in dimension two
    want = Form.scalar(1, c.ring, out.policy).shift_u(1) - c.omega_form().with_policy(out.policy).shift_hbar(-1)
    assert out == want


@SETTINGS
@given(st.data())
def test_conjugation_identity(data):
    c = CUR
    a = data.draw(forms(c, 4)).with_policy(TruncationPolicy(6, 10, 2, u_min=-4, u_max=4))

    def conj(x, sign):
        out, term = x, x
        for m in range(1, c.N + 1):
            term = iota_pi(term, c).shift_hbar(1).shift_u(-1).scale(Q(sign, m))
            out = out + term
        return out

    lhs = bv_delta(a, c).shift_hbar(1) + d_tm(a).shift_u(1)
    rhs = conj(d_tm(conj(a, 1)).shift_u(1), -1)
    assert lhs == rhs


def test_sigma_keeps_dx_and_u():
    a = M(dx=[1]) + M(y=[1, 0]) + M(theta=[2])
    assert sigma(a) == M(dx=[1])


def test_raised_policy_clamps_hbar():
    pol = raised(TruncationPolicy(weight=4, hbar=2), 1)
    assert pol.weight == 5 and pol.hbar == 2
