"""Random instance builders shared by the test modules."""
import numpy as np

from nmflocal.clustering import Cluster, Clustering
from nmflocal.graph import Graph


def random_clustering(rng, n, k=None, asym=False, beta=False, density=0.6, low=0.05, high=1.5):
    k = int(rng.integers(0, 4)) if k is None else k
    clusters = []
    for _ in range(k):
        mask = rng.uniform(size=n) < density
        h = {i: float(rng.uniform(low, high)) for i in np.flatnonzero(mask)}
        w = None
        if asym:
            w = {i: float(rng.uniform(low, high)) for i in np.flatnonzero(rng.uniform(size=n) < density)}
        clusters.append(Cluster(h, w, float(rng.uniform(0.5, 3.0)) if beta else None))
    return Clustering(clusters)


def random_graph(rng, n, integer=False, density=0.5):
    if integer:
        w = rng.integers(1, 4, size=(n, n)).astype(float)
    else:
        w = rng.uniform(0, 1, size=(n, n))
    a = np.triu(w * (rng.uniform(size=(n, n)) < density), 1)
    return Graph(a + a.T)


def covering_graph(rng, cs, n, density=0.6):
    """Integer-weight graph whose edges all lie inside some cluster support."""
    cov = np.zeros((n, n), dtype=bool)
    for c in cs:
        s = list(c.support)
        cov[np.ix_(s, s)] = True
    a = rng.integers(1, 4, size=(n, n)) * (rng.uniform(size=(n, n)) < density) * cov
    a = np.triu(a, 1).astype(float)
    return Graph(a + a.T)
