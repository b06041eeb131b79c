"""Mechanical checks of locality, additivity and resolution-limit-freeness.

The checkers refute or corroborate a property on concrete instances; they
never prove it in general.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import quality as Q
from .clustering import (Cluster, Clustering, HardClustering, clustering_support, embed,
                         harden, relabel, symmetric_difference)
from .graph import (FIGURE1_DISPUTED, FIGURE1_GROUPS, Graph, disjoint_union, figure1_graph,
                    induced_subgraph, ring_of_cliques)
from .optimize import (MAX_EXHAUSTIVE, OptimizerConfig, exhaustive_hard_optimum, mu_sym_nmf,
                       optimize_given_support)


class MalformedInstance(ValueError):
    """The instance does not satisfy the preconditions of the locality definition."""


@dataclass
class LocalityInstance:
    """Two graphs sharing a common subgraph ``GS``, two context clusterings and
    two candidate clusterings of ``GS``.

    ``gs_nodes_in_g1[k]`` is the node of ``g1`` playing GS node ``k`` (same for
    ``g2``). ``d`` and ``d_alt`` use GS node indices; ``c1`` and ``c2`` use the
    node indices of their own graphs.
    """

    g1: Graph
    g2: Graph
    gs_nodes_in_g1: tuple
    gs_nodes_in_g2: tuple
    c1: Clustering
    c2: Clustering
    d: Clustering
    d_alt: Clustering

    @property
    def ns(self) -> int:
        return len(self.gs_nodes_in_g1)

    def clusterings(self):
        """The four evaluated clusterings ``C1+D, C1+D', C2+D, C2+D'`` in graph coordinates."""
        e1, e2 = self.gs_nodes_in_g1, self.gs_nodes_in_g2
        return (self.c1 | relabel(self.d, e1), self.c1 | relabel(self.d_alt, e1),
                self.c2 | relabel(self.d, e2), self.c2 | relabel(self.d_alt, e2))

    def _to_common(self, cs: Clustering, which: int) -> Clustering:
        # GS nodes keep their GS index; other nodes get disjoint ranges
        emb = self.gs_nodes_in_g1 if which == 1 else self.gs_nodes_in_g2
        inv = {v: k for k, v in enumerate(emb)}
        base = self.ns if which == 1 else self.ns + self.g1.n
        return Clustering(c.relabeled(lambda i: inv.get(i, base + i)) for c in cs)

    def validate(self) -> None:
        ns = self.ns
        e1, e2 = list(self.gs_nodes_in_g1), list(self.gs_nodes_in_g2)
        if len(e2) != ns or len(set(e1)) != ns or len(set(e2)) != ns:
            raise MalformedInstance("GS embeddings must be injective and of equal size")
        if any(not 0 <= i < self.g1.n for i in e1) or any(not 0 <= i < self.g2.n for i in e2):
            raise MalformedInstance("GS embedding out of range")
        if not np.array_equal(self.g1.weights[np.ix_(e1, e1)], self.g2.weights[np.ix_(e2, e2)]):
            raise MalformedInstance("the two embeddings induce different subgraphs")
        for name, cs, n in (("d", self.d, ns), ("d_alt", self.d_alt, ns),
                            ("c1", self.c1, self.g1.n), ("c2", self.c2, self.g2.n)):
            if cs.max_node() >= n:
                raise MalformedInstance(f"{name} has nodes outside its graph")
        diff = symmetric_difference(self._to_common(self.c1, 1), self._to_common(self.c2, 2))
        touched = set(clustering_support(diff)) & set(clustering_support(self.d | self.d_alt))
        if touched:
            raise MalformedInstance(
                f"support(C1 ^ C2) meets support(D + D') at GS nodes {sorted(touched)}")


@dataclass
class Verdict:
    holds: bool
    qualities: tuple
    detail: str = ""

    def to_json(self) -> dict:
        return {"verdict": "holds" if self.holds else "violated",
                "qualities": list(self.qualities), "detail": self.detail}


def _ge(a: float, b: float, tol: float) -> bool:
    if math.isinf(a) or math.isinf(b):
        return a >= b
    return a >= b - tol


def _scale(qs) -> float:
    finite = [abs(q) for q in qs if math.isfinite(q)]
    return max([1.0] + finite)


def check_locality(qf, inst: LocalityInstance, rtol: float = 1e-12) -> Verdict:
    """Does ``q(G1, C1+D) >= q(G1, C1+D')`` agree with the same comparison on ``G2``?

    Differences within ``rtol`` of the quality scale count as ties.
    """
    inst.validate()
    cs = inst.clusterings()
    qs = (qf(inst.g1, cs[0]), qf(inst.g1, cs[1]), qf(inst.g2, cs[2]), qf(inst.g2, cs[3]))
    tol = rtol * _scale(qs)
    holds = _ge(qs[0], qs[1], tol) == _ge(qs[2], qs[3], tol)
    return Verdict(holds, qs)


def _difference(a: float, b: float) -> float:
    if math.isinf(a) and math.isinf(b):
        return 0.0
    return a - b


def check_additive_difference(qf, inst: LocalityInstance, rtol: float = 1e-9) -> Verdict:
    """Is ``q(G1,C1+D) - q(G1,C1+D')`` equal to ``q(G2,C2+D) - q(G2,C2+D')``?"""
    inst.validate()
    cs = inst.clusterings()
    qs = (qf(inst.g1, cs[0]), qf(inst.g1, cs[1]), qf(inst.g2, cs[2]), qf(inst.g2, cs[3]))
    d1, d2 = _difference(qs[0], qs[1]), _difference(qs[2], qs[3])
    if math.isinf(d1) or math.isinf(d2):
        equal = d1 == d2
    else:
        equal = abs(d1 - d2) <= rtol * _scale(qs)
    return Verdict(equal, qs, f"differences {d1!r} and {d2!r}")


# -- fixed number of clusters -------------------------------------------------

@dataclass(frozen=True)
class FixedKQuality:
    """``q`` with the cluster count constraint folded in: ``-inf`` unless ``|C| = k``."""

    qf: object
    k: int

    def __call__(self, g: Graph, cs) -> float:
        return self.qf(g, cs) if len(cs) == self.k else Q.NEG_INF


def check_fixed_size_locality(qf, inst: LocalityInstance, k1: int, k2: int, m: int,
                              m_alt: int, rtol: float = 1e-12) -> Verdict:
    """Fixed-size locality with the cluster count kept as a side condition."""
    for name, cs, k in (("c1", inst.c1, k1), ("c2", inst.c2, k2), ("d", inst.d, m),
                        ("d_alt", inst.d_alt, m_alt)):
        if len(cs) != k:
            raise MalformedInstance(f"{name} has {len(cs)} clusters, expected {k}")
    inst.validate()
    cs = inst.clusterings()
    ks = (k1 + m, k1 + m_alt, k2 + m, k2 + m_alt)
    gs = (inst.g1, inst.g1, inst.g2, inst.g2)
    qs = tuple(FixedKQuality(qf, k)(g, c) for g, c, k in zip(gs, cs, ks))
    tol = rtol * _scale(qs)
    return Verdict(_ge(qs[0], qs[1], tol) == _ge(qs[2], qs[3], tol), qs)


def fixed_k_counterexample(g: Graph, c: Clustering, d: Clustering) -> tuple[LocalityInstance, int]:
    """Instance showing that a ``|C| = k`` constraint inside the quality breaks locality.

    Both graphs are ``g`` plus a disjoint copy; the candidates ``d`` and ``c``
    live on the first copy, the contexts are the copies ``c'`` and ``d'``.
    Returns the instance and ``k = |c| + |d|``.
    """
    if len(c) == len(d):
        raise ValueError("c and d need different numbers of clusters")
    gg = disjoint_union(g, g)
    nodes = tuple(range(g.n))
    inst = LocalityInstance(gg, gg, nodes, nodes, embed(c, g.n), embed(d, g.n), d, c)
    return inst, len(c) + len(d)


# -- resolution-limit-freeness ------------------------------------------------

@dataclass
class RlfVerdict:
    holds: bool
    optimum: HardClustering | None = None
    witness: tuple | None = None
    best: float | None = None


def check_rlf_instance(qf: str, g: Graph, params=None, max_n: int = MAX_EXHAUSTIVE) -> RlfVerdict:
    """Every sub-collection of every optimal partition must be optimal on the
    subgraph it induces.

    ``qf`` is a hard quality name accepted by :func:`exhaustive_hard_optimum`.
    """
    if g.n > max_n or max_n > MAX_EXHAUSTIVE:
        raise ValueError(f"graph too large for exhaustive search (n={g.n}, max_n={max_n})")
    optima, best = exhaustive_hard_optimum(g, qf, params)
    cache = {}
    for C in optima:
        blocks = C.blocks()
        for r in range(1, len(blocks)):
            for D in itertools.combinations(blocks, r):
                nodes = tuple(sorted(i for b in D for i in b))
                if nodes not in cache:
                    sub = induced_subgraph(g, nodes)
                    sub_opt, _ = exhaustive_hard_optimum(sub, qf, params)
                    cache[nodes] = {h.canonical() for h in sub_opt}
                index = {v: k for k, v in enumerate(nodes)}
                local = HardClustering.from_sets([[index[i] for i in b] for b in D], len(nodes))
                if local.canonical() not in cache[nodes]:
                    return RlfVerdict(False, C, D, best)
    return RlfVerdict(True, optima[0], None, best)


# -- random instances ---------------------------------------------------------

def _random_cluster(rng, nodes, asym, with_beta):
    nodes = [int(i) for i in nodes]
    h = {i: float(rng.uniform(0.2, 1.5)) for i in nodes}
    w = {i: float(rng.uniform(0.2, 1.5)) for i in nodes} if asym else None
    beta = float(rng.uniform(0.5, 3.0)) if with_beta else None
    return Cluster(h, w, beta)


def _random_subset(rng, pool):
    pool = list(pool)
    size = int(rng.integers(1, len(pool) + 1))
    return sorted(rng.choice(pool, size=size, replace=False).tolist())


def _random_blocks(rng, pool, max_blocks=2):
    pool = list(pool)
    if not pool:
        return []
    k = int(rng.integers(1, min(max_blocks, len(pool)) + 1))
    labels = rng.integers(0, k, size=len(pool))
    return [[p for p, l in zip(pool, labels) if l == b] for b in range(k) if np.any(labels == b)]


def _coverage(cs: Clustering, n: int) -> np.ndarray:
    M = np.zeros((len(cs), n))
    for k, c in enumerate(cs):
        M[k, list(c.support)] = 1.0
    return (M.T @ M) > 0


def random_locality_instance(rng=None, *, hard: bool = False, cover_edges: bool = False,
                             integer: bool = False, asym: bool = False,
                             with_beta: bool = False, equal_sizes: bool = False,
                             density: float = 0.6) -> LocalityInstance:
    """A random instance that satisfies the locality precondition by construction.

    GS is built first and extended independently to ``g1`` and ``g2``. The
    candidates ``D, D'`` live on a random core of GS; shared context clusters
    may touch all of GS, while clusters private to one side avoid the core.

    ``hard`` makes ``C1+D``, ``C1+D'`` (and likewise on ``g2``) partitions.
    ``cover_edges`` drops edges not covered by every evaluated clustering,
    so that likelihoods which need ``ahat > 0`` on edges stay finite.
    ``equal_sizes`` gives ``D`` and ``D'`` the same number of clusters (soft
    instances only), for qualities that are additive only at fixed ``k``.
    """
    rng = np.random.default_rng(rng)
    ns = int(rng.integers(2, 7))
    n1 = ns + int(rng.integers(0, 4))
    n2 = ns + int(rng.integers(0, 4))
    e1 = tuple(int(i) for i in rng.permutation(n1)[:ns])
    e2 = tuple(int(i) for i in rng.permutation(n2)[:ns])
    core = _random_subset(rng, range(ns))
    core1 = {e1[k] for k in core}
    core2 = {e2[k] for k in core}
    free1 = [i for i in range(n1) if i not in core1]
    free2 = [i for i in range(n2) if i not in core2]
    mk = lambda nodes: _random_cluster(rng, nodes, asym, with_beta)

    if hard:
        d = Clustering(mk(b) for b in _random_blocks(rng, core))
        d_alt = Clustering(mk(b) for b in _random_blocks(rng, core))
        shared = []
        c1_only = [mk(b) for b in _random_blocks(rng, free1)]
        c2_only = [mk(b) for b in _random_blocks(rng, free2)]
    else:
        nd = int(rng.integers(1, 3))
        nd_alt = nd if equal_sizes else int(rng.integers(1, 3))
        d = Clustering(mk(_random_subset(rng, core)) for _ in range(nd))
        d_alt = Clustering(mk(_random_subset(rng, core)) for _ in range(nd_alt))
        shared = [mk(_random_subset(rng, range(ns))) for _ in range(int(rng.integers(0, 2)))]
        c1_only = [mk(_random_subset(rng, free1)) for _ in range(int(rng.integers(0, 2))) if free1]
        c2_only = [mk(_random_subset(rng, free2)) for _ in range(int(rng.integers(0, 2))) if free2]
    c1 = Clustering([c.relabeled(lambda k: e1[k]) for c in shared] + c1_only)
    c2 = Clustering([c.relabeled(lambda k: e2[k]) for c in shared] + c2_only)

    def weights(n):
        if integer:
            w = rng.integers(1, 3, size=(n, n)).astype(float)
        else:
            w = rng.uniform(0.05, 1.0, size=(n, n))
        w = np.triu(w * (rng.uniform(size=(n, n)) < density), 1)
        return w + w.T

    ws = weights(ns)
    a1, a2 = weights(n1), weights(n2)
    if cover_edges:
        inst0 = LocalityInstance(Graph(np.zeros((n1, n1))), Graph(np.zeros((n2, n2))),
                                 e1, e2, c1, c2, d, d_alt)
        cs = inst0.clusterings()
        cov1 = _coverage(cs[0], n1) & _coverage(cs[1], n1)
        cov2 = _coverage(cs[2], n2) & _coverage(cs[3], n2)
        a1 = a1 * cov1
        a2 = a2 * cov2
        ws = ws * cov1[np.ix_(e1, e1)] * cov2[np.ix_(e2, e2)]
    a1[np.ix_(e1, e1)] = ws
    a2[np.ix_(e2, e2)] = ws
    inst = LocalityInstance(Graph(a1), Graph(a2), e1, e2, c1, c2, d, d_alt)
    inst.validate()
    return inst


# -- the toy quality counterexample -------------------------------------------

def theorem3_instance() -> LocalityInstance:
    """Edgeless graphs on 7 and 6 nodes with the maxmin toy quality counterexample.

    Node ``k`` here is node ``k+1`` in the usual 1-based drawing.
    """
    from .graph import empty_graph
    g1, g2 = empty_graph(7), empty_graph(6)
    gs = tuple(range(6))
    d = Clustering.from_sets([[0, 1, 2, 3], [4], [5]])
    d_alt = Clustering.from_sets([[0, 1, 2], [3, 4, 5]])
    c1 = Clustering.from_sets([[6]])
    c2 = Clustering()
    return LocalityInstance(g1, g2, gs, gs, c1, c2, d, d_alt)


# -- Bayesian NMF is not local ------------------------------------------------

def _ring_run_supports(n: int, m: int, r: int) -> list[list[int]]:
    """Runs of ``r`` cliques, each with the two outside ring neighbours attached."""
    out = []
    for s in range(0, n, r):
        nodes = {i for k in range(s, s + r) for i in range(k * m, (k + 1) * m)}
        nodes.add(((s - 1) % n) * m + m - 1)
        nodes.add(((s + r) % n) * m)
        out.append(sorted(nodes))
    return out


@dataclass
class Theorem4Report:
    single: tuple            # q(G, C1), q(G, C2)
    double: tuple            # q(GG', C1+C1'), q(GG', C2+C2')
    single_margin: float
    double_margin: float
    single_holds: bool
    double_holds: bool
    conclusive: bool
    locality: Verdict
    additive: Verdict
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return (self.conclusive and self.single_holds and self.double_holds
                and not self.locality.holds and not self.additive.holds)

    def to_json(self) -> dict:
        return {"single": list(self.single), "double": list(self.double),
                "single_margin": self.single_margin, "double_margin": self.double_margin,
                "single_holds": self.single_holds, "double_holds": self.double_holds,
                "conclusive": self.conclusive, "locality": self.locality.to_json(),
                "additive_difference": self.additive.to_json(), **self.extra}


THEOREM4_CFG = OptimizerConfig(restarts=2, max_iter=20000, tol=1e-12)


def verify_theorem4(params: Q.BayNmfParams = Q.BayNmfParams(),
                    cfg: OptimizerConfig = THEOREM4_CFG,
                    num_cliques: int = 10, clique_size: int = 5,
                    swap: bool = False) -> Theorem4Report:
    """Bayesian NMF prefers one clique per cluster on one ring, but two cliques
    per cluster on two disjoint copies of the ring.

    C1 has one cluster per clique, C2 one per pair of cliques plus empty
    clusters so that both have the same number of clusters. Coefficients are
    optimized on the fixed supports. With ``swap`` the roles of C1 and C2 are
    exchanged, which flips the sign of both margins.
    """
    n, m = num_cliques, clique_size
    if n % 2:
        raise ValueError("num_cliques must be even")
    qf = Q.QualityFunction("bay_nmf", params)
    g = ring_of_cliques(n, m)
    gg = disjoint_union(g, g)
    nv = g.n
    s1 = _ring_run_supports(n, m, 1)
    s2 = _ring_run_supports(n, m, 2)
    s2 = s2 + [[] for _ in range(len(s1) - len(s2))]
    if swap:
        s1, s2 = s2, s1
    shift = lambda ss: [[i + nv for i in s] for s in ss]
    fits = {
        "c1": optimize_given_support(g, s1, qf, cfg),
        "c2": optimize_given_support(g, s2, qf, cfg),
        "c11": optimize_given_support(gg, s1 + shift(s1), qf, cfg),
        "c22": optimize_given_support(gg, s2 + shift(s2), qf, cfg),
    }
    conclusive = all(f.converged for f in fits.values())
    single = (fits["c1"].quality, fits["c2"].quality)
    double = (fits["c11"].quality, fits["c22"].quality)
    sm = single[0] - single[1]
    dm = double[1] - double[0]
    # strict with a margin well above the optimizer tolerance
    need = lambda a, b: 10 * cfg.tol * max(1.0, abs(a), abs(b))
    # locality instance: GS is the ring; the context on the double ring is C1'
    c1, c2 = fits["c1"].clustering, fits["c2"].clustering
    nodes = tuple(range(nv))
    inst = LocalityInstance(g, gg, nodes, nodes, Clustering(), embed(c1, nv), c1, c2)
    loc = check_locality(qf, inst)
    add = check_additive_difference(qf, inst)
    return Theorem4Report(single, double, sm, dm, sm > need(*single), dm > need(*double),
                          conclusive, loc, add,
                          extra={"iterations": {k: f.n_iter for k, f in fits.items()}})


# -- hardening symmetric NMF is not resolution-limit-free -----------------------

@dataclass
class Figure1Report:
    full: dict       # disputed node's membership in the B and C clusters, full graph
    sub: dict        # same on the zoomed-in subgraph
    full_assignment: str
    sub_assignment: str

    @property
    def flipped(self) -> bool:
        return self.full_assignment != self.sub_assignment

    def to_json(self) -> dict:
        return {"full": self.full, "sub": self.sub, "full_assignment": self.full_assignment,
                "sub_assignment": self.sub_assignment, "flipped": self.flipped}


def _group_of_cluster(H: np.ndarray, nodes: Sequence[int], groups: dict) -> dict:
    # cluster index carrying most of each group's membership
    index = {v: k for k, v in enumerate(nodes)}
    out = {}
    for name, members in groups.items():
        cols = [index[i] for i in members if i in index]
        if cols:
            out[name] = int(np.argmax(H[:, cols].sum(axis=1)))
    return out


FIGURE1_CFG = OptimizerConfig(max_iter=200000, tol=1e-15, restarts=3)


def verify_figure1_flip(cfg: OptimizerConfig = FIGURE1_CFG) -> Figure1Report:
    """Run symmetric NMF on the full counterexample (3 clusters) and on its
    zoomed-in part (2 clusters); report where the disputed node is assigned."""
    g, sub_nodes = figure1_graph()
    d = FIGURE1_DISPUTED
    groups = {k: v for k, v in FIGURE1_GROUPS.items() if k in "ABC"}

    def run(graph, nodes, k, names):
        cs = mu_sym_nmf(graph, k, cfg, prune=0.0)
        H = cs.h_matrix(graph.n)
        which = _group_of_cluster(H, nodes, {n: groups[n] for n in names})
        col = list(nodes).index(d)
        coeffs = {name: float(H[c, col]) for name, c in which.items() if name in "BC"}
        label = int(harden(cs, graph).labels[col])
        assigned = next((name for name, c in which.items() if c == label), "?")
        return coeffs, assigned

    full, fa = run(g, tuple(range(g.n)), 3, "ABC")
    sub, sa = run(induced_subgraph(g, sub_nodes), sub_nodes, 2, "BC")
    return Figure1Report(full, sub, fa, sa)
