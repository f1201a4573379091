"""Transfer of a Fedosov solution to the BV bundle, the local-to-global map,
traces on the flat torus and the semi-classical identities.

Graph conventions.  A graph on k vertices with edges (a, b) stands for

    hbar^(E - k + 1) / |Aut| * amp(edges) * Mult prod_{(a,b)} w^{ij} d_{y^i}^(a) d_{y^j}^(b)

applied to the vertex labels, where amp is the integral over the k-torus
of prod P(theta_a - theta_b).  Every unmarked vertex carries -d_tm(gamma) (see
:func:`vertex_label`), which is even, so the ordering of the d theta factors
produces no further sign.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import sympy

from . import monomial as mono
from .bv import (
    d_tm,
    equivariant_integrate,
    integrate_twisted,
    qme_residual,
    twisted_differential,
)
from .circle import AmplitudeSpec, amplitude, wheel_zeta
from .diagrams import automorphism_order, contract, enumerate_graphs
from .fedosov import (
    Chart,
    Curvature,
    _commutator_over_hbar,
    abelian_D,
    flat_section,
    flatness_residual,
    nabla,
    raised,
    solve_fedosov,
)
from .forms import Form, TruncationPolicy, key_weight
from .parallel import pmap
from .rational import Q, ZERO
from .rings import FourierRing, add_into


class NotFlat(ValueError):
    """gamma does not solve Fedosov's equation within the truncation."""


class NotFourierChart(TypeError):
    """Integration over M is only available on the flat-torus ring."""


def _require_flat(gamma: Form, c: Chart):
    res = flatness_residual(gamma, c)
    if res:
        raise NotFlat(f"Fedosov residual has {len(res)} nonzero terms")


def _max_ydeg(f: Form) -> int:
    return max((mono.degree(k[1]) for k in f.terms), default=0)


VERTEX_SIGN = -1


def vertex_label(gamma: Form) -> Form:
    """The label of an unmarked vertex: VERTEX_SIGN * d_tm(gamma).

    d_tm and nabla anticommute here, so the classical part of the master
    equation forces the minus sign (the d theta is placed before d_tm acts).
    """
    dg = d_tm(gamma)
    return -dg if VERTEX_SIGN < 0 else dg


# -- the graph engine ------------------------------------------------------------------------
def _graph_term(g, labels, pairs, policy, shift, n, ring):
    edges = g.edges
    spec = AmplitudeSpec(g.nv, [(a + 1, b + 1) for a, b in edges])
    amp = amplitude(spec)
    if not amp:
        return None
    w = contract(labels, edges, pairs, policy, shift, n, ring)
    if not w:
        return None
    return w.scale(amp / automorphism_order(g))


def _sum_terms(parts, zero: Form) -> Form:
    out = zero
    for p in parts:
        if p is not None:
            out = out + p
    return out


def gamma_infinity(gamma: Form, c: Chart, check: bool = True, policy: TruncationPolicy | None = None) -> Form:
    """Connected-graph sum with vertex label -d_tm(gamma).

    Bounds used to cut the enumeration: every vertex contributes one theta
    (so at most 2n vertices); a vertex of valence d needs a gamma term of
    weight >= d + 1; the output weight is sum(w_v) - 2k + 2.
    """
    if check:
        _require_flat(gamma, c)
    pol = policy or gamma.policy
    dg = vertex_label(gamma)
    W, H = pol.weight, pol.hbar
    maxdeg = _max_ydeg(dg)
    ring = dg.ring.meet(c.symp.ring)
    out = dg.with_policy(pol)
    kmax = min(2 * c.n, max(W - 2, 1))
    jobs = []
    for k in range(2, kmax + 1):
        emax = min((W + k - 2) // 2, (k * maxdeg) // 2, H + k - 1)
        if emax < k - 1:
            continue
        for g in enumerate_graphs(k, emax, H, True, min_edges=k - 1, min_vertices=k,
                                  vertex_genus=False, max_degree=maxdeg):
            jobs.append(g)
    parts = pmap(
        lambda g: _graph_term(g, [dg] * g.nv, c.symp.pairs, pol, g.n_edges - g.nv + 1, c.n, ring), jobs
    )
    return _sum_terms(parts, out)


def local_to_global(O: Form, gamma: Form, gamma_inf: Form | None, c: Chart, check: bool = False) -> Form:
    """[O]_infinity: graphs with one marked vertex carrying O and k vertices carrying -d_tm(gamma).

    The marked vertex already holds its d theta, so it is never hit by
    d_tm.  gamma_inf is accepted for interface symmetry; the graph formula
    only needs gamma.
    """
    del gamma_inf
    if check:
        _require_flat(gamma, c)
    pol = O.policy.meet(gamma.policy)
    dg = vertex_label(gamma)
    W, H = pol.weight, pol.hbar
    if not O:
        return O.with_policy(pol)
    ring = dg.ring.meet(O.ring).meet(c.symp.ring)
    w_o = min(key_weight(k) for k in O.terms)
    dx_o = min(bin(k[3]).count("1") for k in O.terms)
    maxdeg = _max_ydeg(dg)
    odeg = _max_ydeg(O)
    out = O.with_policy(pol)
    kmax = min(2 * c.n - dx_o, W - w_o)
    jobs = []
    for k in range(1, kmax + 1):
        emax = min((odeg + W - w_o + k) // 2, (odeg + k * maxdeg) // 2, H + k)
        if emax < k:
            continue
        for g in enumerate_graphs(k + 1, emax, H + 1, True, min_edges=k, min_vertices=k + 1,
                                  vertex_genus=False, max_degree=maxdeg, marked=True,
                                  marked_max_degree=odeg):
            jobs.append(g)
    parts = pmap(
        lambda g: _graph_term(g, [O] + [dg] * (g.nv - 1), c.symp.pairs, pol, g.n_edges - g.nv + 1, c.n, ring),
        jobs,
    )
    return _sum_terms(parts, out)


def cochain_residual(O: Form, gamma: Form, gamma_inf: Form, c: Chart) -> Form:
    """[nabla O + hbar^-1 [gamma, O]]_inf - (nabla + hbar Delta + {gamma_inf, -}) [O]_inf, through weight W - 1."""
    pol = O.policy.meet(gamma.policy)
    low = pol.with_weight(pol.weight - 1)
    lhs = local_to_global(abelian_D(O, gamma, c), gamma, gamma_inf, c)
    Oinf = local_to_global(O, gamma, gamma_inf, c)
    rhs = twisted_differential(Oinf, gamma_inf, c)
    return (lhs.with_policy(low) - rhs.with_policy(low).with_ring(lhs.ring.meet(rhs.ring))).with_policy(low)


def qme_check(gamma_inf: Form, c: Chart) -> dict:
    res = qme_residual(gamma_inf, c)
    return {"qme_residual_zero": not res, "max_weight_checked": gamma_inf.policy.weight - 1}


# -- flat torus ----------------------------------------------------------------------------
@dataclass
class GlobalSetup:
    """Flat torus R^2n / Z^2n with constant omega and the trivial connection.

    volume is the integral of omega^n / n! (the Fourier ring integrates with
    unit total volume, so volume = Pfaffian of omega).
    """

    chart: Chart
    gamma: Form = field(default=None, repr=False)
    gamma_inf: Form = field(default=None, repr=False)

    def __post_init__(self):
        c = self.chart
        if not isinstance(c.ring, FourierRing):
            raise NotFourierChart("global integration needs the Fourier coefficient ring")
        if c.gamma_upper:
            raise ValueError("the torus setup requires a vanishing connection")
        if self.gamma is None:
            self.gamma = solve_fedosov(c)
        if self.gamma_inf is None:
            self.gamma_inf = gamma_infinity(self.gamma, c, check=False)

    @property
    def n(self) -> int:
        return self.chart.n

    @classmethod
    def standard(cls, n: int, weight: int = 4, hbar: int | None = None, omega_k=None, scale=1):
        """T^2n with omega = scale * sum dx^(2i-1) dx^(2i)."""
        ring = FourierRing(2 * n)
        N = 2 * n
        mat = [[{} for _ in range(N)] for _ in range(N)]
        for i in range(n):
            mat[2 * i][2 * i + 1] = ring.const(scale)
            mat[2 * i + 1][2 * i] = ring.const(-scale)
        pol = TruncationPolicy(weight=weight, hbar=hbar)
        return cls(Chart(n, ring, mat, {}, omega_k=omega_k, policy=pol))


def integrate_M(a: Form, n: int) -> dict:
    """Integral over the unit torus of the top-degree part.

    Returns {hbar exponent: zero-mode coefficient}; coefficients are Fourier
    constants, i.e. polynomials in tau = 2 pi and i with rational entries.
    """
    if not isinstance(a.ring, FourierRing):
        raise NotFourierChart("integration over M needs Fourier coefficients")
    top = (1 << (2 * n)) - 1
    out: dict = {}
    for (h, y, th, dx, u), coef in a.terms.items():
        if y or th or dx != top or u:
            continue
        add_into(out.setdefault(h, {}), a.ring.integrate(coef))
    return {h: v for h, v in sorted(out.items()) if v}


def rational_value(c: dict) -> Q:
    """The rational number held by a Fourier constant free of tau and i."""
    for (m, t, s) in c:
        if any(m) or t or s:
            raise ValueError("coefficient is not a plain rational")
    return next(iter(c.values()), ZERO)


def _laurent_policy(setup: GlobalSetup) -> TruncationPolicy:
    pol = setup.gamma.policy
    return raised(pol, 2 * setup.n + 2)


def trace(f: Form, setup: GlobalSetup) -> dict:
    """Tr f = int_M int_{gamma_inf} [sigma^-1 f]_inf as {hbar exponent: Q}.

    Exponents are reliable below hbar^(H - n + 1), where H is the hbar bound of
    the setup's truncation policy.
    """
    c = setup.chart
    if not isinstance(f.ring, FourierRing):
        raise NotFourierChart("trace is defined for Fourier coefficients only")
    fpol = f.with_policy(setup.gamma.policy)
    q = flat_section(fpol, setup.gamma, c)
    obs = local_to_global(q, setup.gamma, setup.gamma_inf, c)
    val = integrate_twisted(obs, setup.gamma_inf, c, _laurent_policy(setup))
    return _cut(integrate_M(val, c.n), trace_precision(setup))


def trace_precision(setup: GlobalSetup) -> int:
    """Largest hbar exponent of the trace that the truncation determines.

    On the flat torus gamma is linear in y, and its hbar^k coefficient is
    kept only while 2k + 1 <= W and k <= H.
    """
    pol = setup.gamma.policy
    return min(pol.hbar, (pol.weight - 1) // 2) - setup.n


def _cut(series: dict, hmax: int) -> dict:
    return {h: v for h, v in series.items() if h <= hmax}


@dataclass(frozen=True)
class EquivariantObservable:
    """O d theta with O a Weyl-bundle section; only d theta-type observables are modelled."""

    weyl: Form
    dtheta: bool = True


def equivariant_trace(obs: EquivariantObservable, setup: GlobalSetup) -> dict:
    """int_M int^{S^1}_{gamma_inf} [O d theta]^{S^1}_inf as {(hbar exp, u exp): Q}."""
    if not obs.dtheta:
        raise NotImplementedError("only observables of the form O d theta are supported")
    c = setup.chart
    inf = local_to_global(obs.weyl, setup.gamma, setup.gamma_inf, c)
    val = equivariant_integrate(inf, setup.gamma_inf, c, _laurent_policy(setup))
    top = (1 << (2 * c.n)) - 1
    out: dict = {}
    for (h, y, th, dx, u), coef in val.terms.items():
        if y or th or dx != top:
            continue
        add_into(out.setdefault((h, u), {}), val.ring.integrate(coef))
    hmax = trace_precision(setup)
    return {k: v for k, v in sorted(out.items()) if v and k[0] <= hmax}


def equivariant_trace_of_function(f: Form, setup: GlobalSetup) -> dict:
    q = flat_section(f.with_policy(setup.gamma.policy), setup.gamma, setup.chart)
    return equivariant_trace(EquivariantObservable(q), setup)


# -- index ---------------------------------------------------------------------------------
def exp_integral(setup: GlobalSetup) -> dict:
    """int_M exp(-omega_hbar / hbar) as {hbar exponent: Q}."""
    c = setup.chart
    pol = _laurent_policy(setup)
    X = (-c.omega_hbar()).with_policy(pol).shift_hbar(-1)
    term = Form.scalar(c.n, c.ring, pol)
    total = term
    for m in range(1, c.n + 1):
        term = (term * X).scale(Q(1, m))
        total = total + term
    return _cut(integrate_M(total, c.n), trace_precision(setup))


def calibrate_sign(n: int) -> int:
    """c_n with hbar^n Tr(1) = c_n * int omega^n / n! on the standard torus."""
    setup = GlobalSetup.standard(n, weight=2 * n + 2)
    tr = trace(Form.scalar(n, setup.chart.ring, setup.gamma.policy), setup)
    lead = rational_value(tr.get(-n, {}))
    if lead == 0:
        raise RuntimeError("trace of 1 has no leading term")
    vol = rational_value(exp_integral(setup).get(-n, {}))
    ratio = lead / vol
    if ratio not in (1, -1):
        raise RuntimeError(f"calibration ratio {ratio} is not a sign")
    return int(ratio)


@dataclass
class IndexReport:
    trace_of_one: dict
    exp_integral: dict
    sign: int
    precision: int

    @property
    def holds(self) -> bool:
        rhs = {h: {k: q * self.sign for k, q in v.items()} for h, v in self.exp_integral.items()}
        return self.trace_of_one == rhs


def index_check(setup: GlobalSetup, sign: int | None = None) -> IndexReport:
    """Compare Tr(1) with c_n * int exp(-omega_hbar / hbar) (A-hat = 1 on the torus)."""
    n = setup.n
    if sign is None:
        sign = (-1) ** n
    one = Form.scalar(n, setup.chart.ring, setup.gamma.policy)
    return IndexReport(trace(one, setup), exp_integral(setup), sign, trace_precision(setup))


# -- Euler rescaling ------------------------------------------------------------------------
def euler_rescale_residual(gamma: Form, c: Chart) -> Form:
    """hbar times the difference of the two sides of the L_E identity, through weight W - 1.

    With X = sum_w (w - 2) gamma_w (gamma_w the Euler weight w part) the
    identity reads nabla X + hbar^-1 [gamma, X] = 2 omega + sum_k 2 (k - 1) hbar^k omega_k.
    """
    pol = gamma.policy
    X = gamma.zero_like()
    for w in range(0, pol.weight + 1):
        part = gamma.weight_part(w)
        if part and w != 2:
            X = X + part.scale(w - 2)
    lhs = nabla(X, c) + _commutator_over_hbar(gamma, X, c)
    rhs = c.omega_form().scale(2)
    for m in range(1, len(c.omega_k) + 1):
        if m != 1:
            rhs = rhs + c.omega_k_form(m).scale(2 * (m - 1))
    res = lhs - rhs.with_ring(lhs.ring.meet(rhs.ring)) if rhs else lhs
    return res.with_policy(pol.with_weight(pol.weight - 1))


# -- characteristic series -----------------------------------------------------------------
def log_a_hat_coefficient(k: int) -> Q:
    """Coefficient of u^-k ch_k in log A-hat: (k-1)! * (-B_k / k!) for even k, 0 for odd k."""
    if k < 1:
        raise ValueError("k must be positive")
    return wheel_zeta(k) * factorial(k - 1)


def a_hat_series(ch: dict | None = None, order: int = 6, u=None):
    """exp(sum_k c_k u^-k ch_k), expanded through u^-order.

    ch maps an even degree 2k to a value (number or sympy expression); missing
    degrees default to symbols ch_2k.  Returns a sympy expression in u.
    """
    u = u if u is not None else sympy.Symbol("u")
    t = sympy.Symbol("_t")
    ch = dict(ch or {})
    log = sympy.Integer(0)
    for k in range(2, order + 1, 2):
        val = ch.get(k, sympy.Symbol(f"ch_{k}"))
        c = log_a_hat_coefficient(k)
        log += sympy.Rational(int(c.numerator), int(c.denominator)) * t**k * val
    series = sympy.series(sympy.exp(log), t, 0, order + 1).removeO()
    return sympy.expand(series.subs(t, 1 / u))


# -- curvature -------------------------------------------------------------------------------
def _sym3(R: dict, i, j, k, l, ring):
    acc: dict = {}
    for a, b, cc in ((i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)):
        v = R.get((a, b, cc, l))
        if v:
            add_into(acc, v, Q(1, 6))
    return acc


def bianchi_identity_check(R, N: int | None = None) -> bool:
    """4 R_ijkl = 3 (R_(ijk)l - R_(ijl)k) for all indices (exact)."""
    tensor = R.tensor if isinstance(R, Curvature) else R
    if N is None:
        N = 2 * R.n if isinstance(R, Curvature) else 1 + max((max(k) for k in tensor), default=-1)
    for i in range(N):
        for j in range(N):
            for k in range(N):
                for l in range(N):
                    lhs = dict(tensor.get((i, j, k, l), {}))
                    for key in lhs:
                        lhs[key] = lhs[key] * 4
                    add_into(lhs, _sym3(tensor, i, j, k, l, None), -3)
                    add_into(lhs, _sym3(tensor, i, j, l, k, None), 3)
                    if lhs:
                        return False
    return True


def perturb_curvature(R: dict, ring, index=(0, 1, 2, 3), q=1) -> dict:
    """Negative control: add q to one component, keeping (ij) symmetry and [kl] antisymmetry.

    In two dimensions these symmetries already imply the identity, so the
    control needs at least four dimensions.
    """
    i, j, k, l = index
    if k == l:
        raise ValueError("k and l must differ")
    out = {key: dict(v) for key, v in R.items()}
    for a, b in {(i, j), (j, i)}:
        for (kk, ll), s in (((k, l), 1), ((l, k), -1)):
            acc = out.setdefault((a, b, kk, ll), {})
            add_into(acc, ring.const(q), s)
            if not acc:
                del out[(a, b, kk, ll)]
    return out


# -- wheels ------------------------------------------------------------------------------------
@dataclass
class WheelBridge:
    k: int
    engine: Q
    amplitude: Q
    trace_factor: Q
    automorphisms: int

    @property
    def predicted(self) -> Q:
        return wheel_zeta(self.k) * self.trace_factor / (2 * self.k)

    @property
    def match(self) -> bool:
        return self.engine == self.predicted


def _trace_power(A, up, k):
    N = len(A)
    M = [[sum((A[i][m] * up[m][j] for m in range(N)), ZERO) for j in range(N)] for i in range(N)]
    P = [[Q(int(i == j)) for j in range(N)] for i in range(N)]
    for _ in range(k):
        P = [[sum((P[i][m] * M[m][j] for m in range(N)), ZERO) for j in range(N)] for i in range(N)]
    return sum((P[i][i] for i in range(N)), ZERO)


def wheel_bridge(k: int, A, c: Chart) -> WheelBridge:
    """Evaluate the k-cycle graph through the gamma-infinity engine with vertex label 1/2 A_ij y^i y^j.

    The engine value is compared with wheel_zeta(k) * Tr((A w^up)^k) / (2k):
    the cycle has 2k automorphisms (k rotations and the reflection).
    """
    from .diagrams import Graph

    N = c.N
    ring = c.ring
    pol = TruncationPolicy(weight=2 * k + 2, x_degree=c.policy.x_degree)
    terms: dict = {}
    for i in range(N):
        for j in range(N):
            a = Q(A[i][j])
            if not a:
                continue
            key = (0, mono.unit(i) + mono.unit(j), 0, 0, 0)
            acc = terms.setdefault(key, {})
            add_into(acc, ring.const(a / 2))
    V = Form(c.n, ring, pol, {kk: v for kk, v in terms.items() if v})
    if k == 1:
        raise ValueError("a wheel needs at least two vertices")
    edges = [(i, (i + 1) % k) for i in range(k)]
    g = Graph.from_edges(k, edges)
    aut = automorphism_order(g)
    spec = AmplitudeSpec(k, [(a + 1, b + 1) for a, b in g.edges])
    amp = amplitude(spec)
    w = contract([V] * k, g.edges, c.symp.pairs, pol, 1, c.n, ring)
    val = ring.constant(w.coefficient_of(h=1)) if w else ZERO
    engine = amp * (val or ZERO) / aut
    up = [[ring.constant(c.symp.upper[i][j]) or ZERO for j in range(N)] for i in range(N)]
    Aq = [[Q(A[i][j]) for j in range(N)] for i in range(N)]
    return WheelBridge(k, engine, amplitude(AmplitudeSpec.wheel(k)), _trace_power(Aq, up, k), aut)
