"""Optimizers for the quality functions.

* multiplicative updates for symmetric NMF and for Bayesian NMF with ARD,
* continuous optimization of coefficients on fixed supports, in log space,
* search over candidate support families,
* exhaustive search over hard partitions of small graphs.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy.optimize import minimize

from . import quality as Q
from .clustering import Cluster, Clustering, HardClustering, from_matrices
from .graph import Graph

log = logging.getLogger(__name__)


class OptimizeError(ValueError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    max_iter: int = 2000
    tol: float = 1e-9
    restarts: int = 10
    seed: int = 0
    eps: float = 1e-12
    debug: bool = False

    def __post_init__(self):
        if self.max_iter < 1 or self.restarts < 1:
            raise OptimizeError("max_iter and restarts must be positive")
        if not (self.tol > 0 and self.eps > 0):
            raise OptimizeError("tol and eps must be positive")

    def seeds(self) -> list[int]:
        """One independent seed per restart, drawn from the root seed."""
        ss = np.random.SeedSequence(self.seed)
        return [int(s.generate_state(1)[0]) for s in ss.spawn(self.restarts)]


def _converged(q_old: float, q_new: float, tol: float) -> bool:
    return abs(q_new - q_old) <= tol * max(1.0, abs(q_old), abs(q_new))


# -- symmetric NMF ------------------------------------------------------------

SYM_DAMPING = 0.5


def sym_nmf_run(A: np.ndarray, H: np.ndarray, cfg: OptimizerConfig,
                trace: bool = False):
    """Damped multiplicative updates ``h <- h (1 - d + d (HA) / (H H^T H))``.

    Returns the final ``k x n`` matrix and, with ``trace``, the quality after
    every iteration (index 0 is the starting point).
    """
    H = np.maximum(np.array(H, dtype=float), cfg.eps)
    q = -0.5 * np.sum((A - H.T @ H) ** 2)
    qs = [q]
    for it in range(cfg.max_iter):
        num = H @ A
        den = (H @ H.T) @ H
        H = H * (1 - SYM_DAMPING + SYM_DAMPING * num / np.maximum(den, cfg.eps))
        H = np.maximum(H, cfg.eps)
        q_new = -0.5 * np.sum((A - H.T @ H) ** 2)
        if cfg.debug and q_new < q - 1e-12 * max(1.0, abs(q)):
            raise AssertionError(f"symmetric MU decreased quality at iteration {it}: {q} -> {q_new}")
        if trace:
            qs.append(q_new)
        done = _converged(q, q_new, cfg.tol)
        q = q_new
        if done:
            break
    return (H, qs) if trace else H


def mu_sym_nmf(g: Graph, k: int, cfg: OptimizerConfig = OptimizerConfig(),
               init: np.ndarray | None = None, prune: float | None = None) -> Clustering:
    """Symmetric NMF with ``k`` clusters, best of ``cfg.restarts`` random starts.

    ``init`` fixes the starting matrix (``k x n``) and disables restarts.
    """
    if k < 1:
        raise OptimizeError("k must be >= 1")
    A = g.weights
    starts = ([np.asarray(init, dtype=float)] if init is not None else
              [np.random.default_rng(s).uniform(0, 1, size=(k, g.n)) for s in cfg.seeds()])
    best, best_q = None, -math.inf
    for H0 in starts:
        H = sym_nmf_run(A, H0, cfg)
        q = -0.5 * np.sum((A - H.T @ H) ** 2)
        if q > best_q:
            best, best_q = H, q
    return from_matrices(best, eps=Q_EPS if prune is None else prune)


Q_EPS = 1e-8


# -- Bayesian NMF with automatic relevance determination -----------------------

def _bay_step(V, W, H, beta, eps):
    """One majorize-minimize sweep over W, then H (exact auxiliary minimizers)."""
    def update(X, Y, ratio_prod, b):
        # X: block being updated (k x n); Y: the other factor
        s = Y.sum(axis=1, keepdims=True)
        R = X * ratio_prod
        bb = b[:, None]
        new = 2 * R / (s + np.sqrt(s * s + 4 * bb * R))
        return np.maximum(new, eps)

    Vhat = W.T @ H
    ratio = np.divide(V, Vhat, out=np.zeros_like(V), where=V > 0)
    W = update(W, H, H @ ratio.T, beta)
    Vhat = W.T @ H
    ratio = np.divide(V, Vhat, out=np.zeros_like(V), where=V > 0)
    H = update(H, W, W @ ratio, beta)
    return W, H


def _settled(X_old, X_new, floor, rtol=1e-6) -> bool:
    live = np.maximum(X_old, X_new) > floor
    return bool(np.all(np.abs(X_new - X_old)[live] <= rtol * X_old[live]))


def bay_nmf_run(V, W, H, p: Q.BayNmfParams, cfg: OptimizerConfig, trace=False,
                prune: float = 1e-8):
    n = V.shape[0]
    W = np.maximum(np.array(W, dtype=float), cfg.eps)
    H = np.maximum(np.array(H, dtype=float), cfg.eps)
    beta = Q.optimal_beta(W, H, n, p)
    q = Q.bay_nmf_value(V, W, H, beta, p)
    qs = [q]
    for it in range(cfg.max_iter):
        W_old, H_old = W, H
        W, H = _bay_step(V, W, H, beta, cfg.eps)
        beta = Q.optimal_beta(W, H, n, p)
        q_new = Q.bay_nmf_value(V, W, H, beta, p)
        if cfg.debug and q_new < q - 1e-12 * max(1.0, abs(q)):
            raise AssertionError(f"Bayesian MU decreased quality at iteration {it}: {q} -> {q_new}")
        if trace:
            qs.append(q_new)
        # dying clusters barely move the quality; keep going until they fall
        # below the pruning threshold or stop shrinking
        done = (_converged(q, q_new, cfg.tol)
                and _settled(W_old, W, prune) and _settled(H_old, H, prune))
        q = q_new
        if done:
            break
    return (W, H, beta, qs) if trace else (W, H, beta)


def mu_bay_nmf(g: Graph, k_max: int, p: Q.BayNmfParams = Q.BayNmfParams(),
               cfg: OptimizerConfig = OptimizerConfig(),
               prune: float = Q_EPS) -> Clustering:
    """Bayesian NMF with ``k_max`` clusters; unused clusters come back empty.

    Alternates multiplicative majorize-minimize updates of ``W`` and ``H`` with
    the closed-form precision update ``beta_c = (2|V| + 2(a-1)) / (S_c + 2b)``
    where ``S_c`` is the sum of squared coefficients of cluster ``c``.
    """
    if k_max < 1:
        raise OptimizeError("k_max must be >= 1")
    V = g.weights
    n = g.n
    best, best_q = None, -math.inf
    for s in cfg.seeds():
        rng = np.random.default_rng(s)
        W0 = rng.uniform(0, 1, size=(k_max, n))
        H0 = rng.uniform(0, 1, size=(k_max, n))
        W, H, beta = bay_nmf_run(V, W0, H0, p, cfg, prune=prune)
        q = Q.bay_nmf_value(V, W, H, beta, p)
        if best is None or q > best_q:
            best, best_q = (W, H, beta), q
    W, H, beta = best
    return from_matrices(H, W, beta, eps=prune)


def nonempty_clusters(cs: Clustering) -> list[Cluster]:
    return [c for c in cs if c.support]


# -- fixed-support optimization in log space ------------------------------------

CONTINUOUS = ("sym_nmf", "gauss_nmf", "local_prob", "asym_nmf", "bay_nmf")
THETA_BOUNDS = (-30.0, 5.0)


class SupportProblem:
    """Quality as a function of log-coefficients on fixed supports.

    Symmetric qualities use one mask ``(k x n)`` for ``H``; asymmetric ones
    (``asym_nmf``, ``bay_nmf``) use the same mask for ``W`` and ``H``. For
    ``bay_nmf`` the precisions are profiled out at their optimum.
    """

    def __init__(self, g: Graph, supports: Sequence[Sequence[int]], qf: Q.QualityFunction):
        if qf.name not in CONTINUOUS:
            raise OptimizeError(f"{qf.name} is not continuous in the coefficients")
        self.g, self.qf = g, qf
        n = g.n
        mask = np.zeros((len(supports), n), dtype=bool)
        for k, s in enumerate(supports):
            for i in s:
                if not 0 <= int(i) < n:
                    raise OptimizeError(f"support node {i} out of range for n={n}")
                mask[k, int(i)] = True
        self.mask = mask
        self.asym = qf.name in ("asym_nmf", "bay_nmf")
        self.idx = np.flatnonzero(mask.ravel())
        self.size = len(self.idx) * (2 if self.asym else 1)
        if qf.name == "local_prob" and qf.params.edge == "poisson":
            Q._check_integer(g.weights)
        if qf.name in ("local_prob", "bay_nmf") and (qf.name == "bay_nmf" or qf.params.edge == "poisson"):
            M = mask.astype(float)
            covered = (M.T @ M) > 0
            self.feasible = not np.any((g.weights > 0) & ~covered)
        else:
            self.feasible = True
        self._const = self._constant()

    def _constant(self) -> float:
        """Terms that depend on the supports only."""
        qf, n = self.qf, self.g.n
        k = self.mask.shape[0]
        if qf.name == "gauss_nmf":
            s = qf.params.sigma
            return n * n * Q.LOG_SQRT_2PI + k * n * 0.5 * math.log(math.pi * s * s / 2)
        if qf.name == "local_prob":
            p = qf.params
            c = p.kappa
            c += float(np.sum(Q.log_node_prior(self.mask.sum(axis=0), p)))
            c += float(np.sum(Q.log_size_prior(self.mask.sum(axis=1), p)))
            c += self.mask.sum() * 0.5 * math.log(2 * p.beta / math.pi)
            if p.coeff_scope == "all":
                c += (~self.mask).sum() * 0.5 * math.log(2 * p.beta / math.pi)
            return c
        return 0.0

    def unpack(self, theta):
        k, n = self.mask.shape
        m = len(self.idx)
        H = np.zeros(k * n)
        H[self.idx] = np.exp(theta[:m])
        H = H.reshape(k, n)
        if not self.asym:
            return H, None
        W = np.zeros(k * n)
        W[self.idx] = np.exp(theta[m:])
        return H, W.reshape(k, n)

    def value_and_grad(self, theta):
        """Quality and its gradient with respect to the log-coefficients."""
        if not self.feasible:
            return Q.NEG_INF, np.zeros_like(theta)
        H, W = self.unpack(theta)
        A = self.g.weights
        name = self.qf.name
        if name == "bay_nmf":
            p = self.qf.params
            beta = Q.optimal_beta(W, H, self.g.n, p)
            val = Q.bay_nmf_value(A, W, H, beta, p)
            Ahat = W.T @ H
            D = np.divide(A, Ahat, out=np.zeros_like(A), where=A > 0) - 1.0
            gW = H @ D.T - beta[:, None] * W
            gH = W @ D - beta[:, None] * H
            return val, self._chain(H, W, gH, gW)
        Ahat = H.T @ H if W is None else W.T @ H
        if name in ("sym_nmf", "gauss_nmf", "asym_nmf") or self.qf.params.edge == "gaussian":
            R = A - Ahat
            val = -0.5 * np.sum(R * R)
            D = R
            if name == "local_prob":
                val -= A.size * Q.LOG_SQRT_2PI
        else:
            val = float(np.sum(Q.poisson_loglik(A, Ahat)))
            D = np.divide(A, Ahat, out=np.zeros_like(A), where=A > 0) - 1.0
        if W is None:
            gH = H @ (D + D.T)
        else:
            gW = H @ D.T
            gH = W @ D
        if name == "gauss_nmf":
            s2 = self.qf.params.sigma ** 2
            val -= np.sum(H * H) / (2 * s2)
            gH = gH - H / s2
        elif name == "local_prob":
            b = self.qf.params.beta
            val -= 0.5 * b * np.sum(H * H)
            gH = gH - b * H
        return val + self._const, self._chain(H, W, gH, None if W is None else gW)

    def _chain(self, H, W, gH, gW):
        g = (gH * H).ravel()[self.idx]
        if W is None:
            return g
        return np.concatenate([g, (gW * W).ravel()[self.idx]])

    def clustering(self, theta) -> Clustering:
        H, W = self.unpack(theta)
        out = []
        for k in range(self.mask.shape[0]):
            nodes = np.flatnonzero(self.mask[k])
            h = {int(i): H[k, i] for i in nodes}
            w = None if W is None else {int(i): W[k, i] for i in nodes}
            beta = None
            if self.qf.name == "bay_nmf":
                beta = float(Q.optimal_beta(W[k:k + 1], H[k:k + 1], self.g.n, self.qf.params)[0])
            out.append(Cluster(h, w, beta))
        return Clustering(out)


@dataclass
class FitResult:
    clustering: Clustering
    quality: float
    converged: bool
    n_iter: int = 0
    label: object = None

    def pruned(self, eps: float = Q_EPS) -> Clustering:
        """Coefficients above ``eps`` only; for reporting."""
        return Clustering(Cluster({i: v for i, v in c.h.items() if v > eps},
                                  None if c.w is None else {i: v for i, v in c.w.items() if v > eps},
                                  c.beta) for c in self.clustering)


def optimize_given_support(g: Graph, supports: Sequence[Sequence[int]],
                           qf: Q.QualityFunction,
                           cfg: OptimizerConfig = OptimizerConfig(),
                           init: np.ndarray | None = None) -> FitResult:
    """Maximize ``qf`` over coefficients restricted to the given supports.

    Coefficients are ``exp(theta)`` and ``theta`` is optimized with L-BFGS-B
    (box ``[-30, 5]``); the best of ``cfg.restarts`` starts is returned.
    Coefficients outside the supports are exactly zero.
    """
    prob = SupportProblem(g, supports, qf)
    if prob.size == 0 or not prob.feasible:
        theta = np.zeros(prob.size)
        val = prob.value_and_grad(theta)[0]
        return FitResult(prob.clustering(theta), float(val), True)

    def fun(theta):
        v, gr = prob.value_and_grad(theta)
        return -v, -gr

    starts = []
    if init is not None:
        starts.append(np.asarray(init, dtype=float))
    else:
        for s in cfg.seeds():
            rng = np.random.default_rng(s)
            starts.append(np.log(rng.uniform(0.3, 1.0, size=prob.size)))
    best = None
    for theta0 in starts:
        res = minimize(fun, theta0, jac=True, method="L-BFGS-B",
                       bounds=[THETA_BOUNDS] * prob.size,
                       options={"maxiter": cfg.max_iter, "ftol": cfg.tol,
                                "gtol": 1e-9, "maxcor": 20})
        val = -float(res.fun)
        if best is None or val > best[0]:
            best = (val, res)
    val, res = best
    return FitResult(prob.clustering(res.x), val, bool(res.success), int(res.nit))


# -- support search -----------------------------------------------------------

@dataclass
class SearchResult:
    best: FitResult
    label: object
    qualities: dict = field(default_factory=dict)


def support_search(g: Graph, candidates, qf: Q.QualityFunction,
                   cfg: OptimizerConfig = OptimizerConfig()) -> SearchResult:
    """Optimize every candidate support set and keep the best (first on ties).

    ``candidates`` is an iterable of ``(label, supports)`` pairs, e.g. from
    :func:`ring_candidates`, :func:`two_module_candidates` or
    :func:`exhaustive_candidates`.
    """
    best = None
    qualities = {}
    for label, supports in candidates:
        fit = optimize_given_support(g, supports, qf, cfg)
        fit.label = label
        qualities[label] = fit.quality
        log.debug("candidate %s: quality %.6g", label, fit.quality)
        if best is None or fit.quality > best.quality:
            best = fit
    if best is None:
        raise OptimizeError("no candidates")
    return SearchResult(best, best.label, qualities)


def ring_groups(num_cliques: int, r: int) -> list[list[int]]:
    """Runs of ``r`` consecutive cliques; a shorter last run takes the remainder."""
    if r < 1:
        raise OptimizeError("r must be >= 1")
    return [list(range(s, min(s + r, num_cliques))) for s in range(0, num_cliques, r)]


BRIDGE_MODES = ("cluster", "absorb")


def ring_supports(num_cliques: int, clique_size: int, r: int,
                  bridge: str = "cluster") -> list[list[int]]:
    """Supports for a ring of cliques merged in runs of ``r`` cliques.

    Every ring edge joining two runs must be covered. With ``bridge="cluster"``
    it gets its own two-node cluster; with ``bridge="absorb"`` the cluster of
    the run before the edge also takes the far endpoint.
    """
    if bridge not in BRIDGE_MODES:
        raise OptimizeError(f"bridge must be one of {BRIDGE_MODES}")
    m = clique_size
    groups = ring_groups(num_cliques, r)
    supports = [[i for k in grp for i in range(k * m, (k + 1) * m)] for grp in groups]
    if len(groups) > 1:
        for gi, grp in enumerate(groups):
            u = grp[-1] * m + m - 1
            v = ((grp[-1] + 1) % num_cliques) * m
            if bridge == "absorb":
                supports[gi].append(v)
            else:
                supports.append([u, v])
    return supports


def ring_candidates(num_cliques: int, clique_size: int, rs: Sequence[int],
                    bridge: str = "cluster"):
    """Candidates labelled ``(r, bridge_mode)``; ``bridge="both"`` yields both modes."""
    modes = BRIDGE_MODES if bridge == "both" else (bridge,)
    for r in rs:
        if r <= num_cliques:
            for mode in modes:
                yield (r, mode), ring_supports(num_cliques, clique_size, r, mode)


def average_cliques_per_cluster(num_cliques: int, r: int) -> float:
    return num_cliques / len(ring_groups(num_cliques, r))


def two_module_candidates(g: Graph, nodes_per_module: int):
    """(a) two module clusters plus a cluster on the between-edge endpoints;
    (b) a single cluster with all nodes."""
    m = nodes_per_module
    first, second = list(range(m)), list(range(m, 2 * m))
    cross = g.weights[:m, m:] > 0
    ends = sorted(set(np.flatnonzero(cross.any(axis=1)).tolist())
                  | set((m + np.flatnonzero(cross.any(axis=0))).tolist()))
    split = [first, second] + ([ends] if ends else [])
    yield "a", split
    yield "b", [first + second]


def set_partitions(n: int) -> Iterator[tuple]:
    """All partitions of ``0..n-1`` as restricted growth strings, in lexicographic order."""
    if n == 0:
        yield ()
        return
    a = [0] * n
    while True:
        yield tuple(a)
        # prefix maxima: a[i] may grow up to 1 + max(a[:i])
        pm = [0] * n
        for i in range(1, n):
            pm[i] = max(pm[i - 1], a[i - 1])
        i = n - 1
        while i > 0 and a[i] > pm[i]:
            i -= 1
        if i == 0:
            return
        a[i] += 1
        for j in range(i + 1, n):
            a[j] = 0


MAX_EXHAUSTIVE = 10


def exhaustive_candidates(g: Graph, bridges: bool = True):
    """Every set partition of the nodes, plus (optionally) a two-node cluster
    for each edge that crosses blocks."""
    if g.n > MAX_EXHAUSTIVE:
        raise OptimizeError(f"exhaustive search limited to n <= {MAX_EXHAUSTIVE}")
    for rgs in set_partitions(g.n):
        hc = HardClustering(rgs)
        supports = [list(b) for b in hc.blocks()]
        if bridges:
            for i, j, _ in g.edges():
                if rgs[i] != rgs[j]:
                    supports.append([i, j])
        yield rgs, supports


_HARD = {
    "cpm": lambda g, hc, p: Q.q_cpm(g, hc, p or Q.CpmParams()),
    "sym_nmf_hard": lambda g, hc, p: Q.q_sym_nmf_hard(g, hc),
    "toy_maxmin": lambda g, hc, p: Q.toy_maxmin_quality(g, hc),
}


def exhaustive_hard_optimum(g: Graph, qf: str, params=None, rtol: float = 1e-9):
    """All optimal partitions of ``g`` and the optimal value.

    Partitions within ``rtol`` (relative) of the best value count as optimal.
    """
    if qf not in _HARD:
        raise OptimizeError(f"{qf} is not a hard-clustering quality")
    if g.n > MAX_EXHAUSTIVE:
        raise OptimizeError(f"exhaustive search limited to n <= {MAX_EXHAUSTIVE}")
    fn = _HARD[qf]
    values = []
    parts = []
    for rgs in set_partitions(g.n):
        hc = HardClustering(rgs)
        parts.append(hc)
        values.append(fn(g, hc, params))
    values = np.array(values)
    best = values.max()
    tol = rtol * max(1.0, abs(best))
    optimal = [hc for hc, v in zip(parts, values) if v >= best - tol]
    return optimal, float(best)
