"""Charts, symplectic connection and curvature, Fedosov's equation, flat
sections and the deformed star product on functions."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations

from . import monomial as mono
from .forms import Form, TruncationPolicy
from .monomial import popcount
from .rational import Q
from .rings import JetRing, add_into, scaled
from .weyl import SymplecticData, delta, delta_inv, moyal, moyal_commutator


class InvalidChart(ValueError):
    pass


class FedosovError(RuntimeError):
    pass


class JetPrecisionError(InvalidChart):
    """The chart's x_degree is too small for the requested weight."""


def _check_jets(a: Form, what: str, c) -> Form:
    # every x-derivative costs one jet order; below zero nothing is left
    J = getattr(a.ring, "J", None)
    if J is not None and J < 0:
        raise JetPrecisionError(
            f"{what}: x_degree {c.ring.J} is exhausted at weight {a.policy.weight}; raise x_degree"
        )
    return a


def raised(pol: TruncationPolicy, dw: int) -> TruncationPolicy:
    """Policy with weight + dw and hbar + ceil(dw/2); used before an exact 1/hbar division."""
    W = pol.weight + dw
    return TruncationPolicy(W, pol.x_degree, min(pol.hbar + (dw + 1) // 2, W // 2), pol.u_min, pol.u_max)


def _sym_key(i, j, k):
    return tuple(sorted((i, j, k)))


class Chart:
    """Symplectic chart data.

    n: half dimension; ring: JetRing or FourierRing over 2n variables;
    omega_lower: 2n x 2n matrix of coefficients (omega_{ij}(x));
    gamma_raw: {(i, j, k): coeff} with 0-based indices, as supplied (may list
    several permutations of one index set); omega_k: list of 2n x 2n matrices,
    entry m is the coefficient of hbar^(m+1) in omega_hbar; policy: truncation.

    The connection used is Gamma_{ijk} = S_{ijk} + (1/3)(d_j omega_{ik} + d_k omega_{ij})
    with S the symmetrised input; for constant omega this is the input itself.
    """

    def __init__(self, n, ring, omega_lower, gamma_raw=None, omega_k=None, policy=None, source=None):
        self.n = n
        self.N = 2 * n
        self.ring = ring
        self.policy = policy or TruncationPolicy(weight=4, x_degree=ring.J or 0)
        self.symp = SymplecticData(n, ring, omega_lower)
        self.gamma_raw = {tuple(k): ring.truncate(dict(v)) for k, v in (gamma_raw or {}).items()}
        self.omega_k = [[[ring.truncate(dict(c)) for c in row] for row in m] for m in (omega_k or [])]
        self.source = source
        self.S = {}
        for (i, j, k), c in self.gamma_raw.items():
            self.S.setdefault(_sym_key(i, j, k), c)
        self._build_connection()

    # -- derived tensors --------------------------------------------------------
    def _build_connection(self):
        N, ring = self.N, self.ring
        low = self.symp.lower
        dring = ring.lowered(1)
        dw = [[[dring.truncate(ring.deriv(low[i][j], k)) for k in range(N)] for j in range(N)] for i in range(N)]
        self.flat_omega = not any(dw[i][j][k] for i in range(N) for j in range(N) for k in range(N))
        G = {}
        third = Q(1, 3)
        for i in range(N):
            for j in range(N):
                for k in range(N):
                    c = dict(self.S.get(_sym_key(i, j, k), {}))
                    if not self.flat_omega:
                        c = dring.truncate(c)
                        add_into(c, dw[i][k][j], third)
                        add_into(c, dw[i][j][k], third)
                    if c:
                        G[(i, j, k)] = c
        self.gamma_lower = G
        self.conn_ring = dring if not self.flat_omega else ring
        up = self.symp.upper
        Gu = {}
        for l in range(N):
            for j in range(N):
                for k in range(N):
                    acc = {}
                    for i in range(N):
                        if up[l][i] and (i, j, k) in G:
                            add_into(acc, ring.mul(up[l][i], G[(i, j, k)]))
                    if acc:
                        Gu[(l, j, k)] = acc
        self.gamma_upper = Gu
        # by_l[l] = [(k, j, Gamma^l_{kj})]
        self.by_l = {l: [] for l in range(N)}
        for (l, k, j), c in Gu.items():
            self.by_l[l].append((k, j, c))

    @property
    def is_flat_connection(self) -> bool:
        return not self.gamma_upper

    def with_policy(self, policy: TruncationPolicy) -> "Chart":
        c = Chart.__new__(Chart)
        c.__dict__.update(self.__dict__)
        c.policy = policy
        return c

    def with_jet_order(self, J: int) -> "Chart":
        """The same chart over JetRing(2n, J); a no-op on the Fourier ring."""
        if self.ring.tag != "jet" or J == self.ring.J:
            return self
        ring = JetRing(self.N, J)
        pol = TruncationPolicy(self.policy.weight, J, self.policy.hbar, self.policy.u_min, self.policy.u_max)
        return Chart(self.n, ring, self.symp.lower, self.gamma_raw, self.omega_k, pol, self.source)

    def form(self, terms=None) -> Form:
        return Form(self.n, self.ring, self.policy, terms or {})

    def omega_form(self) -> Form:
        return self.symp.omega_form(self.policy)

    def omega_k_form(self, m: int) -> Form:
        """omega_m as a 2-form times hbar^m (m >= 1)."""
        mat = self.omega_k[m - 1]
        terms = {}
        for i in range(self.N):
            for j in range(i + 1, self.N):
                if mat[i][j]:
                    terms[(m, 0, 0, (1 << i) | (1 << j), 0)] = dict(mat[i][j])
        return Form(self.n, self.ring, self.policy, terms)

    def omega_hbar(self) -> Form:
        """omega_hbar = -omega + sum_k hbar^k omega_k."""
        out = -self.omega_form()
        for m in range(1, len(self.omega_k) + 1):
            out = out + self.omega_k_form(m)
        return out

    def gamma0(self) -> Form:
        """omega_{ij} y^i dx^j."""
        terms = {}
        low = self.symp.lower
        for i in range(self.N):
            for j in range(self.N):
                if low[i][j]:
                    terms[(0, mono.unit(i), 0, 1 << j, 0)] = dict(low[i][j])
        return self.form(terms)


# -- validation -------------------------------------------------------------------
def validate_chart(c: Chart) -> list[str]:
    """Exact diagnostics; an empty list means the chart is valid."""
    out = []
    N, ring = c.N, c.ring
    low = c.symp.lower
    for i in range(N):
        for j in range(N):
            s = add_into(dict(low[i][j]), low[j][i])
            if s:
                out.append(f"omega not antisymmetric at ({i + 1},{j + 1})")
    try:
        SymplecticData(c.n, ring, low)
    except ZeroDivisionError:
        out.append("omega(0) is not invertible")
    out += [f"omega {m}" for m in _closedness(ring, low, N)]
    for (i, j, k), v in c.gamma_raw.items():
        for p in set(permutations((i, j, k))):
            if p in c.gamma_raw and c.gamma_raw[p] != v:
                out.append(
                    "gamma_lower not symmetric: "
                    f"({i + 1}{j + 1}{k + 1}) vs ({p[0] + 1}{p[1] + 1}{p[2] + 1})"
                )
                break
    for m, mat in enumerate(c.omega_k, start=1):
        for i in range(N):
            for j in range(N):
                if add_into(dict(mat[i][j]), mat[j][i]):
                    out.append(f"omega_{m} not antisymmetric at ({i + 1},{j + 1})")
        out += [f"omega_{m} {msg}" for msg in _closedness(ring, mat, N)]
    if not out and not c.flat_omega:
        # torsion-free by construction; check compatibility nabla omega = 0
        bad = _nabla_omega(c)
        if bad:
            out.append(f"connection does not preserve omega at {bad}")
    return out


def _closedness(ring, mat, N):
    msgs = []
    dring = ring.lowered(1)
    for i in range(N):
        for j in range(i + 1, N):
            for k in range(j + 1, N):
                s = {}
                add_into(s, ring.deriv(mat[j][k], i))
                add_into(s, ring.deriv(mat[k][i], j))
                add_into(s, ring.deriv(mat[i][j], k))
                if dring.truncate(s):
                    msgs.append(f"not closed at ({i + 1},{j + 1},{k + 1})")
    return msgs


def _nabla_omega(c: Chart):
    N, ring = c.N, c.ring
    low = c.symp.lower
    dring = c.conn_ring
    for i in range(N):
        for j in range(N):
            for k in range(N):
                s = dring.truncate(ring.deriv(low[j][k], i))
                for l in range(N):
                    g1 = c.gamma_upper.get((l, i, j))
                    if g1 and low[l][k]:
                        add_into(s, dring.truncate(ring.mul(g1, low[l][k])), -1)
                    g2 = c.gamma_upper.get((l, i, k))
                    if g2 and low[j][l]:
                        add_into(s, dring.truncate(ring.mul(g2, low[j][l])), -1)
                if dring.truncate(s):
                    return (i + 1, j + 1, k + 1)
    return None


def require_valid(c: Chart):
    diag = validate_chart(c)
    if diag:
        raise InvalidChart("; ".join(diag))


# -- connection and curvature -----------------------------------------------------
def nabla(a: Form, c: Chart) -> Form:
    """nabla = dx^k (d/dx^k - Gamma^l_{kj} (y^j d/dy^l + theta^j iota_l)), dx^k on the left."""
    ring = a.ring.meet(c.ring).lowered(1)
    rmul = ring.mul
    rder = a.ring.deriv
    N = a.dim
    out: dict = {}

    def put(key, coef, sgn):
        acc = out.get(key)
        if acc is None:
            out[key] = scaled(coef, sgn)
        else:
            add_into(acc, coef, sgn)
            if not acc:
                del out[key]

    for key, coef in a.terms.items():
        h, y, th, dx, u = key
        nth = popcount(th)
        for k in range(N):
            kb = 1 << k
            if dx & kb:
                continue
            sk = -1 if (nth + popcount(dx & (kb - 1))) & 1 else 1
            d = ring.truncate(rder(coef, k))
            if d:
                put((h, y, th, dx | kb, u), d, sk)
        for l in range(N):
            conn = c.by_l[l]
            if not conn:
                continue
            e = mono.exponent(y, l)
            if e:
                ybase = y - mono.unit(l)
                for k, j, G in conn:
                    kb = 1 << k
                    if dx & kb:
                        continue
                    sk = -1 if (nth + popcount(dx & (kb - 1))) & 1 else 1
                    p = rmul(coef, G)
                    if p:
                        put((h, ybase + mono.unit(j), th, dx | kb, u), p, -e * sk)
            if th >> l & 1:
                lb = 1 << l
                s1 = -1 if popcount(th & (lb - 1)) & 1 else 1
                rest = th ^ lb
                for k, j, G in conn:
                    jb = 1 << j
                    kb = 1 << k
                    if rest & jb or dx & kb:
                        continue
                    s2 = -1 if popcount(rest & (jb - 1)) & 1 else 1
                    # the new theta block has the same size as th
                    sk = -1 if (nth + popcount(dx & (kb - 1))) & 1 else 1
                    p = rmul(coef, G)
                    if p:
                        put((h, y, rest | jb, dx | kb, u), p, -s1 * s2 * sk)
    return Form(a.n, ring, a.policy, out)


def curvature_tensor(c: Chart) -> dict:
    """R_{ijkl} = omega_{im} R^m_{jkl} with
    R^m_{jkl} = d_k G^m_{lj} - d_l G^m_{kj} + G^m_{kp} G^p_{lj} - G^m_{lp} G^p_{kj}."""
    N, ring = c.N, c.ring
    dring = ring.lowered(1)
    Gu = c.gamma_upper

    def g(m, a, b):
        return Gu.get((m, a, b), {})

    Rup = {}
    for m in range(N):
        for j in range(N):
            for k in range(N):
                for l in range(k + 1, N):
                    s = {}
                    add_into(s, ring.deriv(g(m, l, j), k))
                    add_into(s, ring.deriv(g(m, k, j), l), -1)
                    for p in range(N):
                        a1, b1 = g(m, k, p), g(p, l, j)
                        if a1 and b1:
                            add_into(s, ring.mul(a1, b1))
                        a2, b2 = g(m, l, p), g(p, k, j)
                        if a2 and b2:
                            add_into(s, ring.mul(a2, b2), -1)
                    s = dring.truncate(s)
                    if s:
                        Rup[(m, j, k, l)] = s
                        Rup[(m, j, l, k)] = scaled(s, -1)
    low = c.symp.lower
    R = {}
    for i in range(N):
        for j in range(N):
            for k in range(N):
                for l in range(N):
                    acc = {}
                    for m in range(N):
                        r = Rup.get((m, j, k, l))
                        if r and low[i][m]:
                            add_into(acc, dring.mul(low[i][m], r))
                    if acc:
                        R[(i, j, k, l)] = acc
    return R


@dataclass
class Curvature:
    tensor: dict
    ring: object
    n: int
    form: Form = field(repr=False, default=None)

    def get(self, i, j, k, l) -> dict:
        return self.tensor.get((i, j, k, l), {})


def curvature_form(R: dict, c: Chart, ring=None) -> Form:
    """R_nabla = 1/4 R_{ijkl} y^i y^j dx^k dx^l."""
    ring = ring or c.ring.lowered(1)
    out = {}
    quarter = Q(1, 4)
    for (i, j, k, l), v in R.items():
        if k == l:
            continue
        y = mono.unit(i) + mono.unit(j)
        dxm = (1 << k) | (1 << l)
        sgn = 1 if k < l else -1
        key = (0, y, 0, dxm, 0)
        acc = out.setdefault(key, {})
        add_into(acc, v, quarter * sgn)
        if not acc:
            del out[key]
    return Form(c.n, ring, c.policy, out)


def curvature(c: Chart):
    """Returns (Curvature, R_nabla form)."""
    require_valid(c)
    R = curvature_tensor(c)
    ring = c.ring.lowered(1)
    form = curvature_form(R, c, ring)
    return Curvature(R, ring, c.n, form), form


# -- Fedosov equation ---------------------------------------------------------------
def delta_pairing_sign(c: Chart) -> int:
    """Sign s with (1/hbar)[omega_{ij} y^i dx^j, a]_star = s * delta(a), probed on generators."""
    pol = raised(c.policy, 2)
    g0 = c.gamma0().with_policy(pol)
    for i in range(c.N):
        a = Form.monomial(c.n, c.ring, pol, y=[int(t == i) for t in range(c.N)])
        lhs = moyal_commutator(g0, a, c.symp).div_hbar()
        d = delta(a)
        if lhs == d:
            continue
        if lhs == -d:
            return -1
        raise FedosovError("omega-pairing is neither +delta nor -delta")
    return 1


def _commutator_over_hbar(a: Form, b: Form, c: Chart, half=False) -> Form:
    pol = a.policy.meet(b.policy)
    big = raised(pol, 2)
    cm = moyal_commutator(a.with_policy(big), b.with_policy(big), c.symp)
    if half:
        cm = cm.scale(Q(1, 2))
    return cm.div_hbar().with_policy(pol)


def flatness_residual(gamma: Form, c: Chart, R_form: Form | None = None) -> Form:
    """nabla gamma + (1/2hbar)[gamma, gamma] + R_nabla - omega_hbar, kept through weight W-1.

    Terms of weight W depend on the (dropped) weight W+1 part of gamma, so
    the reliable range ends at W-1; the result is truncated there.
    """
    if R_form is None:
        R_form = curvature(c)[1]
    pol = gamma.policy
    res = nabla(gamma, c) + _commutator_over_hbar(gamma, gamma, c, half=True) + R_form - c.omega_hbar()
    return res.with_policy(pol.with_weight(pol.weight - 1))


def solve_fedosov(c: Chart, return_steps=False):
    """gamma = omega_{ij} y^i dx^j + r with delta^{-1} r = 0 and r of weight >= 3.

    Iterates r <- delta^{-1}(s * (R + nabla r + (1/2hbar)[r,r] - Omega)) where
    Omega = sum hbar^k omega_k and s is the calibrated omega-pairing sign
    (s = -1 means (1/hbar)[omega y dx, -] = -delta).
    """
    require_valid(c)
    s = delta_pairing_sign(c)
    _, R = curvature(c)
    W = c.policy.weight
    Omega = c.omega_hbar() + c.omega_form()
    r = c.form()
    steps = max(W - 2, 0)
    for _ in range(steps):
        rhs = R + nabla(r, c) + _commutator_over_hbar(r, r, c, half=True) - Omega
        if s == 1:
            rhs = -rhs
        r = delta_inv(rhs).with_policy(c.policy)
    gamma = _check_jets(c.gamma0() + r, "solve_fedosov", c)
    if return_steps:
        return gamma, r, s
    return gamma


def fedosov_fixed_point_gap(gamma: Form, c: Chart) -> Form:
    """One more solver step applied to r minus r (compared at the lowered precision)."""
    s = delta_pairing_sign(c)
    _, R = curvature(c)
    r = gamma - c.gamma0()
    Omega = c.omega_hbar() + c.omega_form()
    rhs = R + nabla(r, c) + _commutator_over_hbar(r, r, c, half=True) - Omega
    if s == 1:
        rhs = -rhs
    nxt = delta_inv(rhs).with_policy(c.policy)
    return nxt - r.with_ring(nxt.ring)


# -- flat sections and the star product ----------------------------------------------
def abelian_D(a: Form, gamma: Form, c: Chart) -> Form:
    """D a = nabla a + (1/hbar)[gamma, a]; reliable through weight W-1."""
    pol = a.policy.meet(gamma.policy)
    out = nabla(a, c) + _commutator_over_hbar(gamma, a, c)
    return out.with_policy(pol.with_weight(pol.weight - 1))


def flat_section(f: Form, gamma: Form, c: Chart, check=True) -> Form:
    """sigma^{-1}(f): iterate a <- f + delta^{-1}(s'(nabla a + (1/hbar)[r, a])).

    f must be y-free, theta-free and of form degree 0.  With ``check`` the
    flatness residual of gamma is verified first.
    """
    for k in f.terms:
        if k[1] or k[2] or k[3]:
            raise ValueError("flat_section expects a function of x and hbar")
    if check and flatness_residual(gamma, c):
        raise FedosovError("gamma does not solve Fedosov's equation")
    s = delta_pairing_sign(c)
    r = gamma - c.gamma0()
    pol = f.policy.meet(gamma.policy)
    a = f.with_policy(pol)
    for _ in range(pol.weight):
        inner = nabla(a, c) + _commutator_over_hbar(r, a, c)
        if s == 1:
            inner = -inner
        a = (f.with_ring(inner.ring) + delta_inv(inner)).with_policy(pol)
    return _check_jets(a, "flat_section", c)


def symbol(a: Form) -> Form:
    """Projection onto y-degree 0, dx-degree 0 (and theta-degree 0)."""
    return a.select(lambda k: k[1] == 0 and k[2] == 0 and k[3] == 0)


def function_form(c: Chart, coef: dict, h: int = 0, policy=None) -> Form:
    return Form(c.n, c.ring, policy or c.policy, {(h, 0, 0, 0, 0): coef})


def star(f: Form, g: Form, gamma: Form, c: Chart) -> Form:
    """f * g = sigma(sigma^{-1} f  *  sigma^{-1} g)."""
    qf = flat_section(f, gamma, c)
    qg = flat_section(g, gamma, c)
    return symbol(moyal(qf, qg, c.symp))


def star_functions(f: dict, g: dict, c: Chart) -> Form:
    """f * g for coefficient dicts, exact in x up to the chart's jet order.

    Each pass of the flat-section iteration costs one jet order, so the
    computation runs at a raised order and the result is cut back.
    """
    J = c.ring.J
    if J is None:
        gamma = solve_fedosov(c)
        return star(function_form(c, f), function_form(c, g), gamma, c)
    margin = 2 * c.policy.weight + 4
    while True:
        big = c.with_jet_order(J + margin)
        gamma = solve_fedosov(big)
        out = star(function_form(big, f), function_form(big, g), gamma, big)
        if out.ring.J >= J:
            return Form(c.n, c.ring, c.policy, out.terms)
        margin *= 2
