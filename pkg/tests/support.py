"""Shared builders for the test suites."""
from __future__ import annotations

import random
from itertools import permutations
from pathlib import Path

from fedbv import monomial as mono
from fedbv.fedosov import Chart
from fedbv.forms import Form, TruncationPolicy
from fedbv.grammar import parse_poly
from fedbv.io import chart_from_text
from fedbv.rational import Q
from fedbv.rings import JetRing, add_into

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "data"
GOLDEN = Path(__file__).resolve().parent / "golden"

# gamma_lower entries (0-based index triples) of the two fixed curved charts
CURVED2 = {(0, 0, 0): "x2", (0, 0, 1): "x1 x2", (1, 1, 1): "1/2 x1^2"}
CURVED4 = {(0, 0, 1): "x3", (0, 2, 3): "x1 x2", (1, 1, 3): "1/2 x4^2 + 1", (2, 2, 2): "x1"}


def standard_omega(ring, n):
    N = 2 * n
    om = [[{} for _ in range(N)] for _ in range(N)]
    for i in range(n):
        om[2 * i][2 * i + 1] = ring.const(1)
        om[2 * i + 1][2 * i] = ring.const(-1)
    return om


def jet_chart(n, gamma_text, weight, J, hbar=None, omega=None):
    ring = JetRing(2 * n, J)
    pol = TruncationPolicy(weight=weight, x_degree=J, hbar=hbar)
    g = {k: parse_poly(v, 2 * n, J) for k, v in gamma_text.items()}
    return Chart(n, ring, omega or standard_omega(ring, n), g, policy=pol)


def load_chart(name):
    path = DATA / name
    return chart_from_text(path.read_text(), source=str(path))


def random_poly(rng: random.Random, N, max_deg=2, terms=3):
    pieces = []
    for _ in range(terms):
        q = Q(rng.randint(-3, 3), rng.randint(1, 3))
        if not q:
            continue
        exps = [0] * N
        for _ in range(rng.randint(0, max_deg)):
            exps[rng.randrange(N)] += 1
        pieces.append((q, exps))
    out: dict = {}
    for q, exps in pieces:
        add_into(out, {mono.pack(tuple(exps)): q})
    return out


def random_gamma(rng: random.Random, n, entries=4, max_deg=2):
    """Random symmetric Gamma_ijk (given on sorted triples) with polynomial entries."""
    N = 2 * n
    g = {}
    while len(g) < entries:
        key = tuple(sorted(rng.randrange(N) for _ in range(3)))
        p = random_poly(rng, N, max_deg)
        if p:
            g[key] = p
    return g


def random_chart(seed, n, weight, J, hbar=None):
    rng = random.Random(seed)
    ring = JetRing(2 * n, J)
    pol = TruncationPolicy(weight=weight, x_degree=J, hbar=hbar)
    return Chart(n, ring, standard_omega(ring, n), random_gamma(rng, n), policy=pol)


def expected_weight3(R, ring, n, policy):
    """1/8 R_(ijk)l y^i y^j y^k dx^l with the symmetrisation over (ijk)."""
    N = 2 * n
    terms: dict = {}
    for i in range(N):
        for j in range(N):
            for k in range(N):
                for l in range(N):
                    sym: dict = {}
                    for p in permutations((i, j, k)):
                        add_into(sym, R.get(p + (l,), {}), Q(1, 6))
                    if sym:
                        key = (0, mono.unit(i) + mono.unit(j) + mono.unit(k), 0, 1 << l, 0)
                        add_into(terms.setdefault(key, {}), sym, Q(1, 8))
    return Form(n, ring, policy, {k: v for k, v in terms.items() if v})


def common(a: Form, b: Form):
    """Bring two forms onto the coarser of their coefficient rings."""
    r = a.ring.meet(b.ring)
    return a.with_ring(r), b.with_ring(r)


def random_observable(rng: random.Random, c: Chart, terms=3):
    """Random Weyl-bundle section with x-dependent coefficients and mixed dx-degree."""
    N = c.N
    pol = c.policy
    out = Form.zero(c.n, c.ring, pol)
    for _ in range(terms):
        dx = rng.sample(range(1, N + 1), rng.randint(0, min(2, N)))
        coef = random_poly(rng, N, max_deg=2, terms=2) or c.ring.one()
        y = [rng.randint(0, 2) for _ in range(N)]
        while sum(y) > 3:
            y[rng.randrange(N)] = 0
        out = out + Form.monomial(c.n, c.ring, pol, coef=coef, h=rng.randint(0, 1), y=y, dx=dx)
    return out


def random_bv_form(rng: random.Random, c: Chart, terms=5, max_y=2):
    """Random section of the BV bundle: y, theta and dx all present."""
    N = c.N
    out = Form.zero(c.n, c.ring, c.policy)
    for _ in range(terms):
        th = rng.sample(range(1, N + 1), rng.randint(0, N))
        dx = rng.sample(range(1, N + 1), rng.randint(0, min(2, N)))
        coef = random_poly(rng, N, max_deg=2, terms=2) or c.ring.one()
        y = [rng.randint(0, max_y) for _ in range(N)]
        out = out + Form.monomial(c.n, c.ring, c.policy, coef=coef, h=rng.randint(0, 1), y=y, theta=th, dx=dx)
    return out
