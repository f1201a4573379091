import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedbv import monomial as mono
from fedbv.forms import DimensionMismatch, Form, TruncationPolicy, grade, key_parity
from fedbv.grammar import GrammarError, format_fourier, format_poly, parse_fourier, parse_poly
from fedbv.rational import Q, as_q, fmt_q
from fedbv.rings import FourierRing, JetRing, RingMismatch

from support import jet_chart, random_bv_form

POL = TruncationPolicy(weight=6, x_degree=4)
R2 = JetRing(2, 4)
seeds = st.integers(0, 10**6)
SETTINGS = settings(max_examples=40, deadline=None)


def mon(**kw):
    return Form.monomial(1, R2, POL, **kw)


def homogeneous_parts(a):
    """Split a form into pieces of one total degree (|dx| - |theta| + 2u)."""
    parts = {}
    for k, c in a.terms.items():
        parts.setdefault(grade(k)[0], {})[k] = c
    return [a.like(t) for t in parts.values()]


# -- rationals ---------------------------------------------------------------------------
def test_rational_normal_form():
    q = Q(6, -4)
    assert (q.numerator, q.denominator) == (-3, 2)
    assert as_q("10/4") == Q(5, 2) and as_q(Fraction(1, 3)) == Q(1, 3)
    assert fmt_q(Q(4, 2)) == "2" and fmt_q(Q(-1, 12)) == "-1/12"
    with pytest.raises(TypeError):
        as_q(0.5)
    with pytest.raises(ValueError):
        as_q("1/0")


# -- products and signs ------------------------------------------------------------------
def test_odd_squares_and_koszul():
    assert not mon(dx=[1]) * mon(dx=[1])
    assert mon(theta=[1]) * mon(theta=[2]) == -(mon(theta=[2]) * mon(theta=[1]))
    assert mon(y=[1, 0], dx=[1]) * mon(y=[0, 1], dx=[2]) == mon(y=[1, 1], dx=[1, 2])
    assert mon(dx=[2, 1]) == -mon(dx=[1, 2])


def test_grade_examples():
    assert grade((1, 0, 0, 0, 0)) == (0, 2)
    assert grade((0, mono.unit(0), 0, 0, 0)) == (0, 1)
    assert grade((0, 0, 1, 0, 0)) == (-1, 0)
    assert grade((0, 0, 0, 0b11, 1)) == (4, 0)


@SETTINGS
@given(seeds)
def test_graded_commutativity_and_grade_additivity(seed):
    c = jet_chart(1, {}, 6, 4)
    rng = random.Random(seed)
    a, b = random_bv_form(rng, c, 3), random_bv_form(rng, c, 3)
    for ah in homogeneous_parts(a):
        for bh in homogeneous_parts(b):
            pa = key_parity(next(iter(ah.terms)))
            pb = key_parity(next(iter(bh.terms)))
            assert ah * bh == (bh * ah).scale((-1) ** (pa * pb))
    for ka in a.terms:
        for kb in b.terms:
            prod = Form(1, c.ring, TruncationPolicy(weight=40, x_degree=4, hbar=20),
                        {ka: a.terms[ka]}) * Form(1, c.ring, TruncationPolicy(weight=40, x_degree=4, hbar=20),
                                                  {kb: b.terms[kb]})
            for k in prod.terms:
                ga, gb, g = grade(ka), grade(kb), grade(k)
                assert g == (ga[0] + gb[0], ga[1] + gb[1])


@SETTINGS
@given(seeds)
def test_associativity(seed):
    c = jet_chart(1, {}, 6, 4)
    rng = random.Random(seed)
    a, b, x = (random_bv_form(rng, c, 3) for _ in range(3))
    assert (a * b) * x == a * (b * x)


@SETTINGS
@given(seeds, st.sampled_from(["dy", "dx", "iota", "y", "theta", "dx_mul"]), st.integers(1, 2))
def test_derivations_graded_leibniz(seed, kind, i):
    c = jet_chart(1, {}, 8, 6)
    rng = random.Random(seed)
    a, b = random_bv_form(rng, c, 3, max_y=1), random_bv_form(rng, c, 3, max_y=1)
    if kind in ("y", "theta", "dx_mul"):
        # left multiplication is associative with the product
        assert (a * b).derive(kind, i) == a.derive(kind, i) * b
        return
    odd = kind in ("iota",)
    for ah in homogeneous_parts(a):
        pa = key_parity(next(iter(ah.terms)))
        lhs = (ah * b).derive(kind, i)
        rhs = ah.derive(kind, i) * b + (ah * b.derive(kind, i) if not odd or pa == 0 else -(ah * b.derive(kind, i)))
        assert lhs.with_policy(lhs.policy.with_weight(6)) == rhs.with_policy(rhs.policy.with_weight(6))


def test_derive_examples():
    c = jet_chart(1, {}, 6, 4)
    x1 = parse_poly("x1", 2)
    assert mon(y=[1, 1]).derive("dy", 1) == mon(y=[0, 1])
    assert mon(theta=[1, 2]).derive("iota", 1) == mon(theta=[2])
    assert Form.monomial(1, c.ring, c.policy, coef=x1, y=[1, 0]).derive("dx", 1) == Form.monomial(
        1, c.ring, c.policy, y=[1, 0])
    with pytest.raises(IndexError):
        mon(y=[1, 0]).derive("dy", 3)


# -- truncation ----------------------------------------------------------------------------
def test_truncation():
    pol = TruncationPolicy(weight=6, hbar=2)
    assert not Form.monomial(1, R2, pol, h=3)
    a = Form.monomial(1, R2, TruncationPolicy(weight=10), y=[3, 2]) + Form.monomial(
        1, R2, TruncationPolicy(weight=10), y=[1, 0])
    once = a.truncate(TruncationPolicy(weight=3))
    assert once == once.truncate(TruncationPolicy(weight=3))
    b = Form.monomial(1, R2, TruncationPolicy(weight=10), h=2, y=[1, 0])
    lo = TruncationPolicy(weight=3)
    assert (a + b).truncate(lo) == a.truncate(lo) + b.truncate(lo)
    with pytest.raises(ValueError):
        TruncationPolicy(weight=2, hbar=2)
    with pytest.raises(ValueError):
        TruncationPolicy(weight=-1)


def test_mixing_rings_and_dimensions_is_an_error():
    f = Form.scalar(1, FourierRing(2), POL)
    with pytest.raises(RingMismatch):
        mon() + f
    with pytest.raises(DimensionMismatch):
        mon() * Form.scalar(2, JetRing(4, 4), POL)


# -- jets and Fourier elements -------------------------------------------------------------
def test_jet_truncation_and_derivative():
    r = JetRing(2, 2)
    p = parse_poly("x1^2 + x1 x2 + 3", 2)
    assert r.mul(p, p) == r.truncate(parse_poly("6 x1^2 + 6 x1 x2 + 9", 2))
    assert r.deriv(parse_poly("x1^2 x2", 2), 0) == parse_poly("2 x1 x2", 2)


def test_fourier_rules():
    r = FourierRing(2)
    e = r.exp_m((1, -2))
    assert r.deriv(e, 1) == {((1, -2), 1, 0): Q(-2)}
    assert r.mul(e, r.exp_m((0, 2))) == r.exp_m((1, 0))
    assert r.integrate(r.mul(e, r.exp_m((-1, 2), 3))) == r.const(3)
    assert r.integrate(e) == {}
    i2 = r.mul(parse_fourier("i", 2), parse_fourier("i", 2))
    assert i2 == r.const(-1)


# -- grammar --------------------------------------------------------------------------------
def test_poly_grammar_examples():
    p = parse_poly("3/2 x1^2 x2 - x3", 3)
    assert len(p) == 2
    assert parse_poly("0", 2) == {}
    assert parse_poly(" x1 x1 ", 2) == parse_poly("x1^2", 2)
    assert format_poly(p, 3) == "3/2 x1^2 x2 - x3"


@pytest.mark.parametrize("text, where", [("x1 +", 5), ("2/ x1", 3), ("x5", 1), ("x1^0", 4), ("x1 $", 4)])
def test_poly_grammar_errors(text, where):
    with pytest.raises(GrammarError) as e:
        parse_poly(text, 2)
    assert e.value.line == 1 and e.value.col >= 1
    assert e.value.pos + 1 >= where - 1


def test_poly_degree_overflow():
    with pytest.raises(GrammarError, match="exceeds"):
        parse_poly("x1^3", 2, J=2)


@st.composite
def polys(draw):
    terms = draw(st.lists(st.tuples(st.integers(-9, 9), st.integers(1, 5),
                                    st.lists(st.integers(0, 3), min_size=3, max_size=3)), max_size=5))
    out = {}
    for num, den, exps in terms:
        k = mono.pack(tuple(exps))
        v = out.get(k, Q(0)) + Q(num, den)
        if v:
            out[k] = v
        else:
            out.pop(k, None)
    return out


@settings(max_examples=200, deadline=None)
@given(polys())
def test_poly_round_trip(p):
    assert parse_poly(format_poly(p, 3), 3) == p


@st.composite
def fouriers(draw):
    terms = draw(st.lists(st.tuples(st.integers(-9, 9), st.integers(1, 4),
                                    st.tuples(st.integers(-2, 2), st.integers(-2, 2)),
                                    st.integers(0, 3), st.integers(0, 1)), max_size=5))
    out = {}
    for num, den, m, t, s in terms:
        k = (m, t, s)
        v = out.get(k, Q(0)) + Q(num, den)
        if v:
            out[k] = v
        else:
            out.pop(k, None)
    return out


@settings(max_examples=200, deadline=None)
@given(fouriers())
def test_fourier_round_trip(c):
    assert parse_fourier(format_fourier(c, 2), 2) == c
