"""Weighted undirected graphs, benchmark generators and file I/O.

Graphs are dense: a node count ``n`` and a symmetric, non-negative ``n x n``
weight matrix. Nodes are the integers ``0..n-1``.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

NodeSet = tuple  # sorted tuple of node indices


class GraphError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Graph:
    """An undirected weighted graph.

    ``origin`` is set on induced subgraphs: ``origin[k]`` is the node of the
    parent graph that became node ``k``.
    """

    weights: np.ndarray
    origin: tuple | None = field(default=None)

    def __post_init__(self):
        a = np.array(self.weights, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise GraphError(f"weights must be a square matrix, got shape {a.shape}")
        if not np.array_equal(a, a.T):
            raise GraphError("weights must be symmetric")
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise GraphError("weights must be finite and non-negative")
        a.setflags(write=False)
        object.__setattr__(self, "weights", a)
        if self.origin is not None:
            object.__setattr__(self, "origin", tuple(int(i) for i in self.origin))

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def nodes(self) -> NodeSet:
        return tuple(range(self.n))

    def edges(self):
        """Yield ``(i, j, w)`` for every edge with ``i < j``."""
        iu, ju = np.triu_indices(self.n, k=1)
        for i, j in zip(iu, ju):
            w = self.weights[i, j]
            if w > 0:
                yield int(i), int(j), float(w)

    @property
    def num_edges(self) -> int:
        return int(np.count_nonzero(np.triu(self.weights, k=1)))

    def degree(self, i: int) -> int:
        return int(np.count_nonzero(self.weights[i]))

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash(self.weights.tobytes())

    def __repr__(self):
        return f"Graph(n={self.n}, edges={self.num_edges})"


def from_edges(n: int, edges: Iterable[Sequence], validate: bool = True) -> Graph:
    """Build a graph from ``(i, j)`` or ``(i, j, w)`` tuples; edges are symmetrized."""
    a = np.zeros((n, n))
    for e in edges:
        i, j = int(e[0]), int(e[1])
        w = float(e[2]) if len(e) > 2 else 1.0
        if not (0 <= i < n and 0 <= j < n):
            raise GraphError(f"edge ({i}, {j}) out of range for n={n}")
        if validate and i == j:
            raise GraphError(f"self loop at node {i}")
        a[i, j] = a[j, i] = w
    return Graph(a)


def empty_graph(n: int) -> Graph:
    return Graph(np.zeros((n, n)))


def complete_graph(n: int) -> Graph:
    return Graph(np.ones((n, n)) - np.eye(n))


# -- generators ---------------------------------------------------------------

def ring_of_cliques(num_cliques: int, clique_size: int) -> Graph:
    """A ring of cliques.

    Clique ``k`` occupies nodes ``[k*m, (k+1)*m)``. The last node of clique
    ``k`` is joined to the first node of clique ``k+1`` (cyclically). A single
    clique has no ring edge.
    """
    if num_cliques < 1:
        raise GraphError("num_cliques must be >= 1")
    if clique_size < 2:
        raise GraphError("clique_size must be >= 2")
    m = clique_size
    n = num_cliques * m
    a = np.zeros((n, n))
    for k in range(num_cliques):
        block = slice(k * m, (k + 1) * m)
        a[block, block] = 1.0
    np.fill_diagonal(a, 0.0)
    if num_cliques > 1:
        for k in range(num_cliques):
            u = k * m + m - 1
            v = ((k + 1) % num_cliques) * m
            a[u, v] = a[v, u] = 1.0
    return Graph(a)


def overlapping_cliques(clique_size: int, overlap: int) -> Graph:
    """Two cliques of ``clique_size`` nodes sharing ``overlap`` nodes.

    The shared nodes are ``clique_size - overlap .. clique_size - 1``.
    """
    if clique_size < 1 or overlap < 1:
        raise GraphError("clique_size and overlap must be positive")
    if overlap >= clique_size:
        raise GraphError("overlap must be smaller than clique_size")
    n = 2 * clique_size - overlap
    a = np.zeros((n, n))
    a[:clique_size, :clique_size] = 1.0
    a[clique_size - overlap:, clique_size - overlap:] = 1.0
    np.fill_diagonal(a, 0.0)
    return Graph(a)


# Node layout of the resolution-limit counterexample. The near-clique B misses
# the single edge b0-b1; a4 is joined to b0, b1, b2; the bridge node d is
# joined to b4 and c1.
FIGURE1_GROUPS = {
    "A": (0, 1, 2, 3, 4),
    "B": (5, 6, 7, 8, 9),
    "d": (10,),
    "C": (11, 12, 13, 14, 15),
}
FIGURE1_DISPUTED = 10


def _figure1_edges():
    A, B, C = FIGURE1_GROUPS["A"], FIGURE1_GROUPS["B"], FIGURE1_GROUPS["C"]
    d = FIGURE1_DISPUTED
    edges = list(itertools.combinations(A, 2))
    edges += [e for e in itertools.combinations(B, 2) if e != (B[0], B[1])]
    edges += list(itertools.combinations(C, 2))
    edges += [(A[4], B[0]), (A[4], B[1]), (A[4], B[2])]
    edges += [(B[4], d), (d, C[1])]
    return edges


def figure1_graph() -> tuple[Graph, NodeSet]:
    """The 16-node hardening counterexample and its 11-node zoomed-in node set.

    Two cliques ``A`` and ``C`` and a near-clique ``B`` of five nodes each,
    plus a bridge node ``d`` between ``B`` and ``C``. The returned node set
    covers ``B``, ``d`` and ``C``.
    """
    g = from_edges(16, _figure1_edges())
    sub = tuple(sorted(FIGURE1_GROUPS["B"] + FIGURE1_GROUPS["d"] + FIGURE1_GROUPS["C"]))
    return g, sub


def two_modules(nodes_per_module: int, within_edges: int, between_edges: int,
                seed: int | None = 0) -> Graph:
    """Two random modules joined by random between-module edges.

    Each module gets exactly ``within_edges`` distinct edges, sampled
    independently and uniformly without replacement; ``between_edges`` distinct
    edges are sampled between the modules.
    """
    m = nodes_per_module
    if m < 1:
        raise GraphError("nodes_per_module must be positive")
    pairs = list(itertools.combinations(range(m), 2))
    if not 0 <= within_edges <= len(pairs):
        raise GraphError(f"within_edges must be in [0, {len(pairs)}]")
    if not 0 <= between_edges <= m * m:
        raise GraphError(f"between_edges must be in [0, {m * m}]")
    rng = np.random.default_rng(seed)
    a = np.zeros((2 * m, 2 * m))
    for offset in (0, m):
        for p in rng.choice(len(pairs), size=within_edges, replace=False):
            i, j = pairs[p]
            a[offset + i, offset + j] = a[offset + j, offset + i] = 1.0
    for p in rng.choice(m * m, size=between_edges, replace=False):
        i, j = divmod(int(p), m)
        a[i, m + j] = a[m + j, i] = 1.0
    return Graph(a)


def random_graph(n: int, density: float = 0.5, rng=None, integer: bool = False,
                 max_weight: int = 2) -> Graph:
    """Random symmetric graph with zero diagonal, used by the test suites."""
    rng = np.random.default_rng(rng)
    if integer:
        w = rng.integers(1, max_weight + 1, size=(n, n)).astype(float)
    else:
        w = rng.uniform(0.0, 1.0, size=(n, n))
    mask = rng.uniform(size=(n, n)) < density
    a = np.triu(w * mask, k=1)
    return Graph(a + a.T)


# -- composition --------------------------------------------------------------

def disjoint_union(g1: Graph, g2: Graph) -> Graph:
    """Block-diagonal union; nodes of ``g2`` are shifted by ``g1.n``."""
    n1, n2 = g1.n, g2.n
    a = np.zeros((n1 + n2, n1 + n2))
    a[:n1, :n1] = g1.weights
    a[n1:, n1:] = g2.weights
    return Graph(a)


def induced_subgraph(g: Graph, s: Iterable[int]) -> Graph:
    """Restriction of ``g`` to the nodes ``s``; node ``k`` is ``origin[k]`` of ``g``."""
    nodes = tuple(sorted(set(int(i) for i in s)))
    for i in nodes:
        if not 0 <= i < g.n:
            raise GraphError(f"node {i} out of range for n={g.n}")
    idx = np.array(nodes, dtype=int)
    return Graph(g.weights[np.ix_(idx, idx)], origin=nodes)


# -- I/O ----------------------------------------------------------------------

def to_json(g: Graph) -> dict:
    return {"n": g.n, "edges": [[i, j, w] for i, j, w in g.edges()]}


def from_json(obj: dict) -> Graph:
    try:
        n = int(obj["n"])
        edges = obj["edges"]
    except (KeyError, TypeError) as exc:
        raise GraphError(f"malformed graph JSON: {exc}") from exc
    for e in edges:
        if len(e) == 3 and float(e[2]) <= 0:
            raise GraphError(f"edge weight must be positive: {e}")
    return from_edges(n, edges)


def save(g: Graph, path) -> None:
    path = Path(path)
    if path.suffix == ".json":
        path.write_text(json.dumps(to_json(g)))
    else:
        lines = [f"# n {g.n}"] + [f"{i} {j} {w!r}" for i, j, w in g.edges()]
        path.write_text("\n".join(lines) + "\n")


def load(path) -> Graph:
    """Load a graph from JSON or a whitespace edge list (``i j w`` per line).

    Edge lists may carry a ``# n <count>`` header; otherwise the node count is
    one more than the largest index.
    """
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        try:
            return from_json(json.loads(text))
        except json.JSONDecodeError as exc:
            raise GraphError(f"{path}: {exc}") from exc
    n = None
    edges = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "n":
                n = int(parts[1])
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise GraphError(f"{path}:{lineno}: expected 'i j [w]'")
        try:
            edges.append((int(parts[0]), int(parts[1]),
                          float(parts[2]) if len(parts) == 3 else 1.0))
        except ValueError as exc:
            raise GraphError(f"{path}:{lineno}: {exc}") from exc
    if n is None:
        n = 1 + max((max(i, j) for i, j, _ in edges), default=-1)
    return from_edges(n, edges)
