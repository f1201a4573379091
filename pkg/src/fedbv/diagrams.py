"""Feynman-graph combinatorics and the contraction engine.

Graphs are stored by their edge multiplicities; the half-edge description
(involution and attachment map) is derived on demand.  Vertices carry a genus
label and an optional colour (used to mark the observable vertex).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations, product
from math import factorial

from . import monomial as mono
from .forms import Form, TruncationPolicy, _mul_keys, key_weight
from .rational import Q
from .rings import add_into, scaled


@dataclass(frozen=True)
class Graph:
    """Multigraph on vertices 0..nv-1.

    mult: {(a, b): n} with a <= b (a == b is a self-loop); genus[v] >= 0;
    colors[v] is an arbitrary hashable tag; tails[v] counts external legs.
    """

    nv: int
    mult: tuple  # sorted tuple of ((a, b), n)
    genus: tuple = None
    colors: tuple = None
    tails: tuple = None

    def __post_init__(self):
        m = {}
        for (a, b), n in dict(self.mult).items():
            if not (0 <= a < self.nv and 0 <= b < self.nv):
                raise ValueError(f"edge ({a},{b}) out of range")
            if n < 0:
                raise ValueError("negative multiplicity")
            if n:
                k = (min(a, b), max(a, b))
                m[k] = m.get(k, 0) + n
        object.__setattr__(self, "mult", tuple(sorted(m.items())))
        for name in ("genus", "colors", "tails"):
            val = getattr(self, name)
            default = 0
            object.__setattr__(self, name, tuple(val) if val is not None else (default,) * self.nv)
            if len(getattr(self, name)) != self.nv:
                raise ValueError(f"{name} must have one entry per vertex")
        if any(g < 0 for g in self.genus):
            raise ValueError("vertex genus must be nonnegative")

    # -- constructors ---------------------------------------------------------------
    @classmethod
    def from_edges(cls, nv, edges, genus=None, colors=None, tails=None) -> "Graph":
        m: dict = {}
        for a, b in edges:
            k = (min(a, b), max(a, b))
            m[k] = m.get(k, 0) + 1
        return cls(nv, tuple(m.items()), genus, colors, tails)

    @classmethod
    def from_half_edges(cls, attach, involution, genus=None, colors=None) -> "Graph":
        """attach[h] = vertex of half-edge h; involution[h] = partner (h itself for a tail)."""
        H = len(attach)
        if len(involution) != H:
            raise ValueError("attach and involution must have equal length")
        nv = (max(attach) + 1) if attach else 0
        if genus is not None:
            nv = max(nv, len(genus))
        edges = []
        tails = [0] * nv
        for h in range(H):
            s = involution[h]
            if involution[s] != h:
                raise ValueError("involution must square to the identity")
            if s == h:
                tails[attach[h]] += 1
            elif h < s:
                edges.append((attach[h], attach[s]))
        return cls.from_edges(nv, edges, genus, colors, tails)

    # -- structure ------------------------------------------------------------------
    @property
    def edges(self) -> list:
        """Edge list (a, b), a <= b, repeated by multiplicity."""
        out = []
        for (a, b), n in self.mult:
            out += [(a, b)] * n
        return out

    @property
    def n_edges(self) -> int:
        return sum(n for _, n in self.mult)

    def half_edges(self):
        """(attach, involution) in a canonical half-edge numbering."""
        attach, inv = [], []
        for a, b in self.edges:
            h = len(attach)
            attach += [a, b]
            inv += [h + 1, h]
        for v, t in enumerate(self.tails):
            for _ in range(t):
                h = len(attach)
                attach.append(v)
                inv.append(h)
        return attach, inv

    def degree(self, v) -> int:
        d = self.tails[v]
        for (a, b), n in self.mult:
            if a == v:
                d += n
            if b == v:
                d += n
        return d

    def has_tadpole(self) -> bool:
        return any(a == b for (a, b), _ in self.mult)

    def is_connected(self) -> bool:
        if self.nv == 0:
            return True
        adj = {v: set() for v in range(self.nv)}
        for (a, b), _ in self.mult:
            adj[a].add(b)
            adj[b].add(a)
        seen = {0}
        stack = [0]
        while stack:
            v = stack.pop()
            for w in adj[v] - seen:
                seen.add(w)
                stack.append(w)
        return len(seen) == self.nv

    def components(self) -> int:
        parent = list(range(self.nv))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for (a, b), _ in self.mult:
            parent[find(a)] = find(b)
        return len({find(v) for v in range(self.nv)})

    def betti1(self) -> int:
        return self.n_edges - self.nv + self.components()

    def canonical_key(self):
        return _canonical(self)

    def relabel(self, perm) -> "Graph":
        """Graph with vertex v renamed perm[v]."""
        inv = [0] * self.nv
        for v, p in enumerate(perm):
            inv[p] = v
        return Graph(
            self.nv,
            tuple(((perm[a], perm[b]), n) for (a, b), n in self.mult),
            tuple(self.genus[inv[p]] for p in range(self.nv)),
            tuple(self.colors[inv[p]] for p in range(self.nv)),
            tuple(self.tails[inv[p]] for p in range(self.nv)),
        )


def genus(g: Graph) -> int:
    """b_1(|G|) plus the sum of vertex genera."""
    return g.betti1() + sum(g.genus)


def _vertex_label(g: Graph, v):
    return (g.colors[v], g.genus[v], g.tails[v])


def _matrix(g: Graph):
    return dict(g.mult)


def _label_perms(g: Graph):
    """Vertex permutations respecting labels and degree classes (sorted order)."""
    inv = [(_vertex_label(g, v), g.degree(v)) for v in range(g.nv)]
    classes: dict = {}
    for v in range(g.nv):
        classes.setdefault(inv[v], []).append(v)
    keys = sorted(classes, key=repr)
    blocks = [classes[k] for k in keys]
    for choice in product(*(permutations(b) for b in blocks)):
        order = [v for blk in choice for v in blk]
        perm = [0] * g.nv
        for new, old in enumerate(order):
            perm[old] = new
        yield perm, keys, blocks


def _canonical(g: Graph):
    m = _matrix(g)
    best = None
    labels = None
    for perm, keys, blocks in _label_perms(g):
        if labels is None:
            labels = tuple(k for k, b in zip(keys, blocks) for _ in b)
        ent = tuple(
            sorted(((min(perm[a], perm[b]), max(perm[a], perm[b])), n) for (a, b), n in m.items())
        )
        if best is None or ent < best:
            best = ent
    return (g.nv, labels or (), best or ())


def automorphism_order(g: Graph) -> int:
    """|Aut(G)| acting on vertices and half-edges (labels, colours and tails preserved).

    Vertex automorphisms are counted as the relabellings into sorted label
    order that give the same image; parallel edges and loop flips contribute
    the usual factorial and power-of-two factors.
    """
    m = _matrix(g)
    images = {}
    for perm, _, _ in _label_perms(g):
        img = tuple(sorted(((min(perm[a], perm[b]), max(perm[a], perm[b])), n) for (a, b), n in m.items()))
        images[img] = images.get(img, 0) + 1
    out = next(iter(images.values()))
    for (a, b), n in m.items():
        out *= factorial(n)
        if a == b:
            out *= 2**n
    for t in g.tails:
        out *= factorial(t)
    return out


def automorphism_order_bruteforce(g: Graph) -> int:
    """Count pairs (vertex permutation, half-edge permutation) preserving all structure."""
    attach, inv = g.half_edges()
    H = len(attach)
    count = 0
    for vp in permutations(range(g.nv)):
        if any(_vertex_label(g, v) != _vertex_label(g, vp[v]) for v in range(g.nv)):
            continue
        for hp in permutations(range(H)):
            if all(attach[hp[h]] == vp[attach[h]] and inv[hp[h]] == hp[inv[h]] for h in range(H)):
                count += 1
    return count


def enumerate_graphs(
    max_vertices: int,
    max_edges: int,
    max_genus: int,
    forbid_tadpoles: bool = False,
    *,
    min_edges: int = 1,
    min_vertices: int = 1,
    vertex_genus: bool = True,
    max_degree: int | None = None,
    marked: bool = False,
    marked_max_degree: int | None = None,
) -> list:
    """Connected multigraphs up to isomorphism, sorted by canonical key.

    Bounds: vertices <= max_vertices, edges in [min_edges, max_edges],
    genus <= max_genus.  vertex_genus=False keeps every vertex at genus 0.
    max_degree caps the valence of unmarked vertices (feasibility pruning).
    marked=True colours vertex 0 (the observable vertex) and caps it with
    marked_max_degree.
    """
    found = {}
    for nv in range(max(1, min_vertices), max_vertices + 1):
        slots = [(a, b) for a in range(nv) for b in range(a, nv) if not (forbid_tadpoles and a == b)]
        caps = [max_degree] * nv
        if marked:
            caps[0] = marked_max_degree
        colors = tuple([1] + [0] * (nv - 1)) if marked else None
        for mult in _compositions(slots, max_edges, caps, nv):
            E = sum(mult.values())
            if E < min_edges:
                continue
            base = Graph(nv, tuple(mult.items()), None, colors)
            if not base.is_connected():
                continue
            b1 = E - nv + 1
            if b1 > max_genus:
                continue
            spare = max_genus - b1
            gen_iter = _genus_labels(nv, spare) if vertex_genus else [(0,) * nv]
            for gl in gen_iter:
                g = Graph(nv, tuple(mult.items()), gl, colors)
                key = g.canonical_key()
                if key not in found:
                    found[key] = g
    return [found[k] for k in sorted(found, key=repr)]


def _genus_labels(nv, spare):
    for gl in product(range(spare + 1), repeat=nv):
        if sum(gl) <= spare:
            yield gl


def _compositions(slots, max_edges, caps, nv):
    """All multiplicity assignments with total <= max_edges respecting degree caps."""
    deg = [0] * nv
    cur: dict = {}

    def fits(a, b):
        return (caps[a] is None or deg[a] <= caps[a]) and (caps[b] is None or deg[b] <= caps[b])

    def rec(i, left):
        if i == len(slots):
            yield dict(cur)
            return
        a, b = slots[i]
        yield from rec(i + 1, left)
        n = 0
        while n < left:
            n += 1
            deg[a] += 1
            deg[b] += 1
            if not fits(a, b):
                break
            cur[(a, b)] = n
            yield from rec(i + 1, left - n)
        deg[a] -= n
        deg[b] -= n
        cur.pop((a, b), None)

    yield from rec(0, max_edges)


def census_text(graphs) -> str:
    """Canonical edge-list export, one graph per line.

    Format: ``v=<n> g=<g_0,...> c=<c_0,...> e=<a-b a-b ...>`` with the
    vertices renumbered by the canonical labelling.
    """
    lines = []
    for g in graphs:
        cg = canonical_form(g)
        edges = " ".join(f"{a}-{b}" for a, b in cg.edges)
        gen = ",".join(map(str, cg.genus))
        col = ",".join(map(str, cg.colors))
        lines.append(f"v={cg.nv} g={gen} c={col} e={edges}")
    return "\n".join(lines) + ("\n" if lines else "")


def canonical_form(g: Graph) -> Graph:
    best = None
    bg = None
    for perm, _, _ in _label_perms(g):
        h = g.relabel(perm)
        key = (h.mult, h.genus, tuple(map(repr, h.colors)), h.tails)
        if best is None or key < best:
            best, bg = key, h
    return bg


# -- contraction engine ----------------------------------------------------------------------


def contract(labels, edges, pairs, policy: TruncationPolicy, hbar_shift: int = 0, n=None, ring=None) -> Form:
    """Mult of the vertex labels after applying one bidifferential operator per edge.

    labels: list of Forms, one per vertex (product order = list order).
    edges: list of (a, b) vertex pairs (0-based), repeated for multiple edges;
           edge (a, b) applies sum_{ij} K^{ij} d/dy^i (on a) d/dy^j (on b).
    pairs: [(i, j, K^{ij} coefficient)], e.g. the omega^{ij} entries.
    hbar_shift: added to the hbar exponent of every output term.
    The result is truncated by policy; partial products that cannot reach a
    term inside the policy are pruned early.
    """
    k = len(labels)
    n = n if n is not None else labels[0].n
    if ring is None:
        ring = labels[0].ring
        for lab in labels[1:]:
            ring = ring.meet(lab.ring)
    rmul = ring.mul
    deg = [0] * k
    last = [-1] * k
    inc = [[] for _ in range(k)]  # edges processed when vertex v is added
    for a, b in edges:
        deg[a] += 1
        deg[b] += 1
        hi = max(a, b)
        inc[hi].append((a, b))
        last[a] = max(last[a], hi)
        last[b] = max(last[b], hi)
    for v in range(k):
        last[v] = max(last[v], v)
    W = policy.weight
    E = len(edges)
    # candidate terms per vertex, filtered by valence
    cand = []
    for v, lab in enumerate(labels):
        ts = [(key, c) for key, c in lab.terms.items() if mono.degree(key[1]) >= deg[v]]
        if not ts:
            return Form(n, ring, policy, {})
        cand.append(ts)
    minw = [min(key_weight(key) for key, _ in ts) for ts in cand]
    suffix = [0] * (k + 1)
    for v in range(k - 1, -1, -1):
        suffix[v] = suffix[v + 1] + minw[v]
    # the final weight is sum(w_v) - 2E + 2*hbar_shift; a state's own weight
    # already accounts for the edges processed so far
    H = policy.hbar
    state = {((0, 0, 0, 0, 0), ()): ring.one()}
    pending_ids: list = []
    e_done = 0
    for v in range(k):
        new_state: dict = {}
        budget = W + 2 * (E - e_done) - 2 * hbar_shift - suffix[v + 1]
        for (mk, pend), coef in state.items():
            wsofar = key_weight(mk) + sum(mono.degree(p) for p in pend)
            for key, c in cand[v]:
                if wsofar + key_weight(key) > budget:
                    continue
                h, y, th, dx, u = key
                if mk[0] + h + hbar_shift > H:
                    continue
                s, merged = _mul_keys(mk, (h, 0, th, dx, u))
                if not s:
                    continue
                p = rmul(coef, c)
                if not p:
                    continue
                nk = (merged, pend + (y,))
                acc = new_state.get(nk)
                if acc is None:
                    new_state[nk] = p if s > 0 else scaled(p, -1)
                else:
                    add_into(acc, p, s)
        state = {kk: vv for kk, vv in new_state.items() if vv}
        pending_ids = pending_ids + [v]
        for a, b in inc[v]:
            state = _apply_edge(state, pending_ids.index(a), pending_ids.index(b), pairs, rmul)
            e_done += 1
        # merge vertices whose edges are all processed
        done = [idx for idx, w_ in enumerate(pending_ids) if last[w_] <= v]
        if done:
            state = _merge_done(state, done)
            pending_ids = [w_ for idx, w_ in enumerate(pending_ids) if idx not in done]
        if not state:
            return Form(n, ring, policy, {})
    out: dict = {}
    for (mk, _pend), coef in state.items():
        h, y, th, dx, u = mk
        key = (h + hbar_shift, y, th, dx, u)
        acc = out.get(key)
        if acc is None:
            out[key] = coef
        else:
            add_into(acc, coef)
    return Form(n, ring, policy, out)


def _apply_edge(state, ia, ib, pairs, rmul):
    out: dict = {}
    for (mk, pend), coef in state.items():
        ya, yb = pend[ia], pend[ib]
        for i, j, K in pairs:
            if ia == ib:
                ea = mono.exponent(ya, i)
                if not ea:
                    continue
                y1 = ya - mono.unit(i)
                eb = mono.exponent(y1, j)
                if not eb:
                    continue
                newp = list(pend)
                newp[ia] = y1 - mono.unit(j)
            else:
                ea = mono.exponent(ya, i)
                eb = mono.exponent(yb, j)
                if not ea or not eb:
                    continue
                newp = list(pend)
                newp[ia] = ya - mono.unit(i)
                newp[ib] = yb - mono.unit(j)
            p = rmul(coef, K)
            if not p:
                continue
            nk = (mk, tuple(newp))
            acc = out.get(nk)
            if acc is None:
                out[nk] = scaled(p, ea * eb)
            else:
                add_into(acc, p, ea * eb)
    return {kk: vv for kk, vv in out.items() if vv}


def _merge_done(state, done):
    out: dict = {}
    for (mk, pend), coef in state.items():
        h, y, th, dx, u = mk
        for idx in done:
            y += pend[idx]
        rest = tuple(p for idx, p in enumerate(pend) if idx not in done)
        nk = ((h, y, th, dx, u), rest)
        acc = out.get(nk)
        if acc is None:
            out[nk] = dict(coef)
        else:
            add_into(acc, coef)
    return {kk: vv for kk, vv in out.items() if vv}


# -- decorated graphs and weights --------------------------------------------------------------


@dataclass
class DecoratedGraph:
    """A graph with a Form on every vertex.

    orientation: one (a, b) per edge, giving the order of the bidifferential
    operator; defaults to the graph's own listing.  dtheta marks vertices that
    carry a d theta (bookkeeping only; the amplitude is supplied separately).
    """

    graph: Graph
    labels: list
    orientation: list = None
    dtheta: frozenset = field(default_factory=frozenset)
    edge_labels: list = None

    def __post_init__(self):
        if len(self.labels) != self.graph.nv:
            raise ValueError("one label per vertex is required")
        if self.orientation is None:
            self.orientation = list(self.graph.edges)
        if sorted((min(a, b), max(a, b)) for a, b in self.orientation) != sorted(self.graph.edges):
            raise ValueError("orientation does not match the graph's edges")


class SlotMismatch(ValueError):
    pass


def slot_check(dg: DecoratedGraph) -> list:
    """Vertices whose label has fewer y's than the vertex valence."""
    bad = []
    for v, lab in enumerate(dg.labels):
        need = dg.graph.degree(v) - dg.graph.tails[v]
        top = max((mono.degree(k[1]) for k in lab.terms), default=-1)
        if top < need:
            bad.append(v)
    return bad


def graph_weight(dg: DecoratedGraph, amplitude, symp, policy: TruncationPolicy | None = None, strict=False) -> Form:
    """amplitude * Mult(prod over edges of w^{ij} d_i (x) d_j applied to the vertex labels).

    Tadpole edges vanish (w^{ij} is antisymmetric).  Slot mismatches give zero,
    or raise SlotMismatch when strict is set.
    """
    lab0 = dg.labels[0]
    policy = policy or lab0.policy
    bad = slot_check(dg)
    if bad:
        if strict:
            raise SlotMismatch(f"vertices {bad} lack y-slots for their edges")
        return Form(lab0.n, lab0.ring, policy, {})
    if dg.graph.has_tadpole():
        return Form(lab0.n, lab0.ring, policy, {})
    ring = lab0.ring.meet(symp.ring)
    for lab in dg.labels[1:]:
        ring = ring.meet(lab.ring)
    out = contract(dg.labels, dg.orientation, symp.pairs, policy, 0, lab0.n, ring)
    return out.scale(amplitude)


# -- homotopic renormalisation group flow ---------------------------------------------------------
# Functionals live on a single copy of the fiber variables.  The exponent of
# u is used as a counting parameter t: every vertex must carry u >= 1, and the
# flow is truncated at total t-degree policy.u_max.


def _pairs_from_matrix(P, ring):
    N = len(P)
    out = []
    for i in range(N):
        for j in range(N):
            c = ring.const(P[i][j])
            if c:
                out.append((i, j, c))
    return out


def hrg_flow(P, F: Form, max_t: int | None = None) -> Form:
    """Sum over connected graphs G of hbar^{b1(G)} W_G(P, F) / |Aut(G)|.

    P is a symmetric matrix (edge operator 1/2 P^{ij} d_i d_j on the single copy,
    so each edge of a graph contributes P^{ij} d_i d_j between its endpoints and
    self-loops are allowed).  F must have u-exponent >= 1 on every term.
    """
    pol = F.policy
    if max_t is None:
        max_t = pol.u_max
    if max_t is None:
        raise ValueError("a bound on the counting parameter is required")
    if any(k[4] < 1 for k in F.terms):
        raise ValueError("every vertex term needs a positive counting exponent")
    if not F:
        return F
    pairs = _pairs_from_matrix(P, F.ring)
    out = F.zero_like()
    for k in range(1, max_t + 1):
        # in a k-vertex graph each vertex has counting degree <= max_t - k + 1
        usable = [key for key in F.terms if key[4] <= max_t - k + 1]
        if not usable:
            break
        maxdeg = max(mono.degree(key[1]) for key in usable)
        Fk = F.select(lambda key, cap=max_t - k + 1: key[4] <= cap)
        max_edges = (k * maxdeg) // 2
        for g in enumerate_graphs(k, max_edges, max_edges, False, min_edges=0, min_vertices=k,
                                  vertex_genus=False, max_degree=maxdeg):
            shift = g.n_edges - k + 1
            w = contract([Fk] * k, g.edges, pairs, _loose(pol), shift, F.n, F.ring)
            if w:
                out = out + w.scale(Q(1, automorphism_order(g)))
    return out.with_policy(pol)


def _loose(pol: TruncationPolicy) -> TruncationPolicy:
    return TruncationPolicy(pol.weight, pol.x_degree, pol.hbar, pol.u_min, pol.u_max)


def hrg_flow_direct(P, F: Form, max_t: int) -> Form:
    """Oracle: hbar log(exp(hbar d_P) exp(F / hbar)) with d_P = 1/2 P^{ij} d_i d_j."""
    pol = F.policy
    X = F.shift_hbar(-1)
    one = Form.scalar(F.n, F.ring, pol)
    E = one
    term = one
    for m in range(1, max_t + 1):
        term = (term * X).scale(Q(1, m))
        E = E + term
    # exp(hbar d_P)
    out = E
    term = E
    m = 0
    while term:
        m += 1
        nxt = term.zero_like()
        for i in range(F.dim):
            for j in range(F.dim):
                if P[i][j]:
                    nxt = nxt + term.d_y(i).d_y(j).scale(Q(P[i][j]) / 2)
        term = nxt.shift_hbar(1).scale(Q(1, m))
        out = out + term
    # log(1 + Y), Y has counting degree >= 1
    Y = out - one
    L = Y.zero_like()
    power = one
    for m in range(1, max_t + 1):
        power = power * Y
        if not power:
            break
        L = L + power.scale(Q((-1) ** (m + 1), m))
    return L.shift_hbar(1)
