import itertools
import random

import networkx as nx
import pytest

from fedbv.diagrams import (
    DecoratedGraph,
    Graph,
    SlotMismatch,
    automorphism_order,
    automorphism_order_bruteforce,
    canonical_form,
    census_text,
    enumerate_graphs,
    genus,
    graph_weight,
    hrg_flow,
    hrg_flow_direct,
)
from fedbv.forms import Form, TruncationPolicy
from fedbv.rational import Q
from fedbv.rings import JetRing

from support import jet_chart

EDGE = Graph.from_edges(2, [(0, 1)])
DOUBLE = Graph.from_edges(2, [(0, 1), (0, 1)])
TRIANGLE = Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])


def to_nx(g):
    h = nx.MultiGraph()
    h.add_nodes_from(range(g.nv))
    for (a, b), m in g.mult:
        for _ in range(m):
            h.add_edge(a, b)
    return h


def brute_census(max_v, max_e, loops=True):
    """All connected multigraphs (vertex genus 0) up to isomorphism, by networkx."""
    reps = []
    for nv in range(1, max_v + 1):
        pairs = [(a, b) for a in range(nv) for b in range(a, nv) if loops or a != b]
        for ne in range(1, max_e + 1):
            for combo in itertools.combinations_with_replacement(pairs, ne):
                g = Graph.from_edges(nv, combo)
                h = to_nx(g)
                if not nx.is_connected(h):
                    continue
                if not any(nx.is_isomorphic(h, r) for r in reps):
                    reps.append(h)
    return reps


def test_enumeration_examples():
    assert enumerate_graphs(2, 1, 0) == [canonical_form(EDGE)]
    found = enumerate_graphs(2, 2, 1)
    assert canonical_form(DOUBLE) in found
    assert all(genus(g) <= 1 for g in found)
    assert any(g.has_tadpole() for g in found)
    assert not any(g.has_tadpole() for g in enumerate_graphs(3, 3, 2, forbid_tadpoles=True))


@pytest.mark.parametrize("max_v, max_e", [(3, 3), (4, 4)])
def test_census_matches_networkx(max_v, max_e):
    ours = enumerate_graphs(max_v, max_e, max_genus=max_e, vertex_genus=False)
    theirs = brute_census(max_v, max_e)
    assert len(ours) == len(theirs)
    for i, j in itertools.combinations(range(len(ours)), 2):
        assert not nx.is_isomorphic(to_nx(ours[i]), to_nx(ours[j]))


def test_canonical_form_is_isomorphism_invariant():
    rng = random.Random(4)
    for g in enumerate_graphs(5, 5, 5, vertex_genus=False)[::7]:
        perm = list(range(g.nv))
        rng.shuffle(perm)
        h = g.relabel(perm)
        assert canonical_form(h) == canonical_form(g)
        assert h.canonical_key() == g.canonical_key()


def test_automorphism_examples():
    assert automorphism_order(EDGE) == 2
    assert automorphism_order(DOUBLE) == 4
    assert automorphism_order(TRIANGLE) == 6
    assert automorphism_order(Graph.from_edges(1, [(0, 0)])) == 2
    assert automorphism_order(Graph.from_edges(2, [(0, 1)], colors=["o", "v"])) == 1


def test_automorphisms_against_brute_force():
    for g in enumerate_graphs(4, 4, 4, vertex_genus=False):
        assert automorphism_order(g) == automorphism_order_bruteforce(g)


def test_genus_examples():
    assert genus(Graph.from_edges(3, [(0, 1), (1, 2)])) == 0
    assert genus(TRIANGLE) == 1
    assert genus(Graph.from_edges(2, [(0, 1), (0, 1)], genus=[1, 0])) == 2


def test_half_edge_constructor():
    g = Graph.from_half_edges([0, 1, 1, 2], [1, 0, 3, 2])
    assert g.nv == 3 and g.edges == [(0, 1), (1, 2)]
    with pytest.raises(ValueError):
        Graph.from_edges(2, [(0, 3)])


def test_census_text_format():
    text = census_text([EDGE, TRIANGLE])
    assert text.splitlines() == ["v=2 g=0,0 c=0,0 e=0-1", "v=3 g=0,0,0 c=0,0,0 e=0-1 0-2 1-2"]


# -- graph weights ---------------------------------------------------------------------------
C = jet_chart(1, {}, 6, 2)


def lab(**kw):
    return Form.monomial(1, C.ring, C.policy, **kw)


def test_single_vertex_weight():
    v = lab(y=[2, 1], theta=[1], dx=[2])
    dg = DecoratedGraph(Graph(1, ()), [v])
    assert graph_weight(dg, Q(3, 5), C.symp) == v.scale(Q(3, 5))


def test_single_edge_weight():
    a = lab(y=[1, 0], theta=[2])
    b = lab(y=[0, 1], dx=[1])
    dg = DecoratedGraph(EDGE, [a, b])
    want = (lab(theta=[2]) * lab(dx=[1])).mul_coef(C.symp.upper[0][1]).scale(Q(-1, 12))
    assert graph_weight(dg, Q(-1, 12), C.symp) == want


def test_tadpoles_and_slot_mismatch():
    v = lab(y=[1, 1])
    loop = DecoratedGraph(Graph.from_edges(1, [(0, 0)]), [v])
    assert not graph_weight(loop, 1, C.symp)
    short = DecoratedGraph(DOUBLE, [lab(y=[1, 0]), lab(y=[0, 2])])
    assert not graph_weight(short, 1, C.symp)
    with pytest.raises(SlotMismatch):
        graph_weight(short, 1, C.symp, strict=True)


# -- homotopic RG flow ----------------------------------------------------------------------
def hrg_input(seed):
    ring = JetRing(2, 0)
    pol = TruncationPolicy(weight=40, x_degree=0, hbar=20, u_max=3)
    rf = random.Random(seed)
    F = Form.zero(1, ring, pol)
    for _ in range(4):
        F = F + Form.monomial(1, ring, pol, coef=rf.choice([1, -2, Q(1, 3)]), h=rf.randint(0, 1),
                              y=[rf.randint(0, 2), rf.randint(0, 2)], u=rf.randint(1, 2))
    return F


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_hrg_zero_propagator_is_identity(seed):
    F = hrg_input(seed)
    assert hrg_flow([[0, 0], [0, 0]], F) == F


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_hrg_against_exponential_expansion(seed):
    F = hrg_input(seed)
    P = [[1, Q(1, 2)], [Q(1, 2), -1]]
    assert hrg_flow(P, F) == hrg_flow_direct(P, F, 3)


def test_hrg_semigroup():
    F = hrg_input(5)
    P1, P2 = [[0, 1], [1, 0]], [[2, 0], [0, Q(1, 3)]]
    P12 = [[P1[i][j] + P2[i][j] for j in range(2)] for i in range(2)]
    assert hrg_flow(P12, F) == hrg_flow(P2, hrg_flow(P1, F))


def test_hrg_requires_counting_parameter():
    ring = JetRing(2, 0)
    F = Form.monomial(1, ring, TruncationPolicy(weight=6, x_degree=0, u_max=2), y=[1, 0])
    with pytest.raises(ValueError):
        hrg_flow([[1, 0], [0, 1]], F)
