"""Soft and hard clusterings.

A :class:`Cluster` stores strictly positive membership coefficients per node;
a node without a stored coefficient has membership zero. A :class:`Clustering`
is a multiset of clusters: duplicates are kept and never collapsed.
"""
from __future__ import annotations

import json
import math
from collections import Counter
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

# Default pruning threshold for coefficients produced by optimizers.
EPS_SUPPORT = 1e-8


class ClusteringError(ValueError):
    pass


def _coeffs(m: Mapping | None) -> Mapping | None:
    if m is None:
        return None
    out = {}
    for k, v in m.items():
        v = float(v)
        if not math.isfinite(v) or v < 0:
            raise ClusteringError(f"membership of node {k} must be finite and >= 0, got {v}")
        if v > 0:
            out[int(k)] = v
    return MappingProxyType(dict(sorted(out.items())))


class Cluster:
    """A soft cluster: memberships ``h``, optional second memberships ``w``
    (asymmetric NMF) and optional precision ``beta`` (Bayesian NMF).

    Zero coefficients are dropped on construction.
    """

    __slots__ = ("h", "w", "beta", "_key")

    def __init__(self, h: Mapping | Iterable[int] = (), w: Mapping | None = None,
                 beta: float | None = None):
        if not isinstance(h, Mapping):
            h = {i: 1.0 for i in h}
        self.h = _coeffs(h)
        self.w = _coeffs(w)
        if beta is not None:
            beta = float(beta)
            if not beta > 0:
                raise ClusteringError(f"beta must be positive, got {beta}")
        self.beta = beta
        self._key = (tuple(self.h.items()),
                     None if self.w is None else tuple(self.w.items()),
                     beta)

    @property
    def support(self) -> tuple:
        nodes = set(self.h)
        if self.w is not None:
            nodes |= set(self.w)
        return tuple(sorted(nodes))

    def shifted(self, shift: int) -> "Cluster":
        return self.relabeled(lambda i: i + shift)

    def relabeled(self, f) -> "Cluster":
        h = {f(i): v for i, v in self.h.items()}
        w = None if self.w is None else {f(i): v for i, v in self.w.items()}
        return Cluster(h, w, self.beta)

    def __eq__(self, other):
        if not isinstance(other, Cluster):
            return NotImplemented
        return self._key == other._key

    def __hash__(self):
        return hash(self._key)

    def __repr__(self):
        parts = [f"h={dict(self.h)}"]
        if self.w is not None:
            parts.append(f"w={dict(self.w)}")
        if self.beta is not None:
            parts.append(f"beta={self.beta}")
        return f"Cluster({', '.join(parts)})"


def hard_cluster(nodes: Iterable[int]) -> Cluster:
    """Cluster with unit membership on ``nodes``."""
    return Cluster({int(i): 1.0 for i in nodes})


class Clustering:
    """A multiset of clusters. ``C | D`` is the multiset sum."""

    __slots__ = ("clusters",)

    def __init__(self, clusters: Iterable[Cluster] = ()):
        self.clusters = tuple(clusters)
        for c in self.clusters:
            if not isinstance(c, Cluster):
                raise ClusteringError(f"not a Cluster: {c!r}")

    @classmethod
    def from_sets(cls, sets: Iterable[Iterable[int]]) -> "Clustering":
        return cls(hard_cluster(s) for s in sets)

    def __iter__(self):
        return iter(self.clusters)

    def __len__(self):
        return len(self.clusters)

    def __getitem__(self, k):
        return self.clusters[k]

    def __or__(self, other: "Clustering") -> "Clustering":
        return union(self, other)

    def __eq__(self, other):
        if not isinstance(other, Clustering):
            return NotImplemented
        return Counter(self.clusters) == Counter(other.clusters)

    def __hash__(self):
        return hash(frozenset(Counter(self.clusters).items()))

    def __repr__(self):
        return f"Clustering({list(self.clusters)!r})"

    @property
    def support(self) -> tuple:
        return clustering_support(self)

    # matrix views, rows are clusters
    def h_matrix(self, n: int) -> np.ndarray:
        return _matrix([c.h for c in self.clusters], n)

    def w_matrix(self, n: int) -> np.ndarray:
        if any(c.w is None for c in self.clusters):
            raise ClusteringError("every cluster must carry w")
        return _matrix([c.w for c in self.clusters], n)

    def betas(self) -> np.ndarray:
        if any(c.beta is None for c in self.clusters):
            raise ClusteringError("every cluster must carry beta")
        return np.array([c.beta for c in self.clusters], dtype=float)

    def max_node(self) -> int:
        return max((i for c in self.clusters for i in c.support), default=-1)


def _matrix(maps: Sequence[Mapping], n: int) -> np.ndarray:
    out = np.zeros((len(maps), n))
    for k, m in enumerate(maps):
        for i, v in m.items():
            if i >= n:
                raise ClusteringError(f"node {i} out of range for n={n}")
            out[k, i] = v
    return out


def from_matrices(H: np.ndarray, W: np.ndarray | None = None,
                  beta: Sequence[float] | None = None,
                  eps: float = EPS_SUPPORT) -> Clustering:
    """Clustering from ``k x n`` coefficient matrices, pruning entries ``<= eps``."""
    H = np.asarray(H, dtype=float)
    clusters = []
    for k in range(H.shape[0]):
        h = {i: H[k, i] for i in np.flatnonzero(H[k] > eps)}
        w = None
        if W is not None:
            w = {i: W[k, i] for i in np.flatnonzero(W[k] > eps)}
        clusters.append(Cluster(h, w, None if beta is None else beta[k]))
    return Clustering(clusters)


# -- operations ---------------------------------------------------------------

def support(c: Cluster) -> tuple:
    return c.support


def clustering_support(cs: Iterable[Cluster]) -> tuple:
    nodes = set()
    for c in cs:
        nodes.update(c.support)
    return tuple(sorted(nodes))


def union(c1: Clustering, c2: Clustering) -> Clustering:
    return Clustering(c1.clusters + c2.clusters)


def symmetric_difference(c1: Clustering, c2: Clustering) -> Clustering:
    """Multiset symmetric difference: each cluster appears ``|m1 - m2|`` times."""
    m1, m2 = Counter(c1.clusters), Counter(c2.clusters)
    out = []
    seen = set()
    for c in c1.clusters + c2.clusters:
        if c in seen:
            continue
        seen.add(c)
        out.extend([c] * abs(m1[c] - m2[c]))
    return Clustering(out)


def embed(cs: Clustering, shift: int) -> Clustering:
    """Shift every node index by ``shift``."""
    return Clustering(c.shifted(shift) for c in cs)


def relabel(cs: Clustering, mapping) -> Clustering:
    """Apply a node map (sequence or dict ``old -> new``) to every cluster."""
    return Clustering(c.relabeled(lambda i: int(mapping[i])) for c in cs)


def restrict_to(cs: Clustering, nodes: Sequence[int]) -> Clustering:
    """Map a clustering onto an induced subgraph on ``nodes`` (sorted)."""
    index = {v: k for k, v in enumerate(nodes)}
    out = []
    for c in cs:
        if not set(c.support) <= index.keys():
            raise ClusteringError("cluster support outside the node set")
        out.append(c.relabeled(index.__getitem__))
    return Clustering(out)


class HardClustering:
    """A partition of ``0..n-1`` given as one label per node."""

    __slots__ = ("labels",)

    def __init__(self, labels: Sequence[int]):
        labels = np.asarray(labels, dtype=int)
        if labels.ndim != 1:
            raise ClusteringError("labels must be one-dimensional")
        labels.setflags(write=False)
        self.labels = labels

    @classmethod
    def from_sets(cls, sets: Iterable[Iterable[int]], n: int | None = None) -> "HardClustering":
        sets = [list(s) for s in sets]
        if n is None:
            n = sum(len(s) for s in sets)
        labels = np.full(n, -1)
        for k, s in enumerate(sets):
            for i in s:
                if labels[i] != -1:
                    raise ClusteringError(f"node {i} in more than one cluster")
                labels[i] = k
        if np.any(labels < 0):
            raise ClusteringError("every node must be assigned")
        return cls(labels)

    @property
    def n(self) -> int:
        return len(self.labels)

    def blocks(self) -> list[tuple]:
        """Clusters as node tuples, ordered by first occurrence."""
        order = {}
        for i, l in enumerate(self.labels):
            order.setdefault(int(l), []).append(i)
        return [tuple(v) for v in order.values()]

    def canonical(self) -> tuple:
        """Restricted-growth-string form; equal for equal partitions."""
        relabel = {}
        return tuple(relabel.setdefault(int(l), len(relabel)) for l in self.labels)

    def to_clustering(self) -> Clustering:
        return Clustering.from_sets(self.blocks())

    def __eq__(self, other):
        if not isinstance(other, HardClustering):
            return NotImplemented
        return self.canonical() == other.canonical()

    def __hash__(self):
        return hash(self.canonical())

    def __len__(self):
        return len(self.blocks())

    def __repr__(self):
        return f"HardClustering({self.blocks()})"


def as_clustering(cs) -> Clustering:
    if isinstance(cs, HardClustering):
        return cs.to_clustering()
    if isinstance(cs, Clustering):
        return cs
    return Clustering(cs)


def harden(cs: Clustering, g_or_n) -> HardClustering:
    """Assign every node to its largest-membership cluster (lowest index on ties)."""
    n = g_or_n if isinstance(g_or_n, int) else g_or_n.n
    H = cs.h_matrix(n)
    if len(cs) == 0 or np.any(H.max(axis=0) <= 0):
        missing = np.flatnonzero(H.max(axis=0) <= 0) if len(cs) else np.arange(n)
        raise ClusteringError(f"nodes without membership: {missing.tolist()}")
    return HardClustering(np.argmax(H, axis=0))


# -- JSON ---------------------------------------------------------------------

def to_json(cs: Clustering) -> dict:
    out = []
    for c in cs:
        d = {"h": {str(i): v for i, v in c.h.items()}}
        if c.w is not None:
            d["w"] = {str(i): v for i, v in c.w.items()}
        if c.beta is not None:
            d["beta"] = c.beta
        out.append(d)
    return {"clusters": out}


def from_json(obj: dict) -> Clustering:
    try:
        return Clustering(
            Cluster({int(k): v for k, v in d["h"].items()},
                    None if d.get("w") is None else {int(k): v for k, v in d["w"].items()},
                    d.get("beta"))
            for d in obj["clusters"])
    except (KeyError, TypeError, AttributeError) as exc:
        raise ClusteringError(f"malformed clustering JSON: {exc}") from exc


def dumps(cs: Clustering) -> str:
    return json.dumps(to_json(cs))
