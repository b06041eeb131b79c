"""Graph clustering quality functions.

All double sums over node pairs run over ordered pairs ``(i, j)`` including
``i == j``. Higher quality is better. Configurations with zero likelihood
evaluate to ``-inf`` instead of raising, so comparisons stay total.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.special import gammaln

from .clustering import Clustering, HardClustering, as_clustering
from .graph import Graph

NEG_INF = float("-inf")
LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


class QualityError(ValueError):
    pass


class NotAdditiveError(QualityError):
    """Raised when an additive decomposition is requested for a non-additive quality."""


# -- parameters ---------------------------------------------------------------

@dataclass(frozen=True)
class CpmParams:
    gamma: float = 0.5


@dataclass(frozen=True)
class GaussianNmfParams:
    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise QualityError("sigma must be positive")


@dataclass(frozen=True)
class BayNmfParams:
    a: float = 5.0
    b: float = 2.0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise QualityError("a and b must be positive")


NODE_PRIORS = ("poisson", "exactly_one", "none")
SIZE_PRIORS = ("flat", "crp")
EDGE_MODELS = ("poisson", "gaussian")


@dataclass(frozen=True)
class LocalPriorConfig:
    """Configuration of the local probabilistic quality.

    node_prior
        Prior ``f`` on the number of clusters covering a node: ``"poisson"``
        (rate ``lam``), ``"exactly_one"`` or ``"none"``.
    size_prior
        Prior ``g`` on cluster size: ``"flat"`` (``g = 1``) or ``"crp"``
        (``g(s) = (s-1)!``).
    beta
        Precision of the half-normal prior on membership coefficients.
    edge
        Edge likelihood, ``"poisson"`` or unit-variance ``"gaussian"``.
    coeff_scope
        ``"support"`` applies the coefficient prior only to supported
        coefficients. ``"all"`` applies it to every entry of the membership
        matrix, zeros included; that variant depends on the number of nodes
        per cluster and is not local.
    """

    node_prior: str = "poisson"
    lam: float = 1.0
    size_prior: str = "flat"
    beta: float = 1.0
    edge: str = "poisson"
    kappa: float = 0.0
    coeff_scope: str = "support"

    def __post_init__(self):
        if self.node_prior not in NODE_PRIORS:
            raise QualityError(f"node_prior must be one of {NODE_PRIORS}")
        if self.size_prior not in SIZE_PRIORS:
            raise QualityError(f"size_prior must be one of {SIZE_PRIORS}")
        if self.edge not in EDGE_MODELS:
            raise QualityError(f"edge must be one of {EDGE_MODELS}")
        if self.coeff_scope not in ("support", "all"):
            raise QualityError("coeff_scope must be 'support' or 'all'")
        if not self.lam > 0:
            raise QualityError("lam must be positive")
        if not self.beta > 0:
            raise QualityError("beta must be positive")


@dataclass
class AdditiveParts:
    q_graph: float
    q_clus: np.ndarray
    q_node: np.ndarray
    q_edge: np.ndarray

    def total(self) -> float:
        return float(self.q_graph + np.sum(self.q_clus) + np.sum(self.q_node)
                     + np.sum(self.q_edge))


# -- building blocks ----------------------------------------------------------

def predict(H: np.ndarray, W: np.ndarray | None = None) -> np.ndarray:
    """``ahat[i, j] = sum_c w[c, i] h[c, j]``; symmetric when ``W`` is None."""
    if W is None:
        W = H
    return W.T @ H


def predicted_adjacency(cs: Clustering, g: Graph, mode: str = "symmetric") -> np.ndarray:
    cs = as_clustering(cs)
    H = cs.h_matrix(g.n)
    if mode == "symmetric":
        return predict(H)
    if mode == "asymmetric":
        return predict(H, cs.w_matrix(g.n))
    raise QualityError(f"unknown mode {mode!r}")


def _check_integer(a: np.ndarray):
    if not np.all(a == np.round(a)):
        raise QualityError("poisson edge likelihood needs integer edge weights")


def poisson_loglik(a: np.ndarray, ahat: np.ndarray) -> np.ndarray:
    """Elementwise ``a log ahat - ahat - log a!`` with ``0 log 0 = 0``."""
    out = -ahat - gammaln(a + 1)
    pos = a > 0
    with np.errstate(divide="ignore"):
        out[pos] += a[pos] * np.log(ahat[pos])
    return out


def gaussian_loglik(a: np.ndarray, ahat: np.ndarray) -> np.ndarray:
    return -0.5 * (a - ahat) ** 2 - LOG_SQRT_2PI


def edge_loglik(a, ahat, model: str) -> np.ndarray:
    if model == "poisson":
        _check_integer(a)
        return poisson_loglik(a, ahat)
    return gaussian_loglik(a, ahat)


def log_node_prior(counts: np.ndarray, p: LocalPriorConfig) -> np.ndarray:
    counts = np.asarray(counts, dtype=float)
    if p.node_prior == "poisson":
        return counts * math.log(p.lam) - p.lam - gammaln(counts + 1)
    if p.node_prior == "exactly_one":
        return np.where(counts == 1, 0.0, NEG_INF)
    return np.zeros_like(counts)


def log_size_prior(sizes: np.ndarray, p: LocalPriorConfig) -> np.ndarray:
    sizes = np.asarray(sizes, dtype=float)
    if p.size_prior == "crp":
        # empty clusters contribute log g(0) = 0
        return gammaln(np.maximum(sizes, 1.0))
    return np.zeros_like(sizes)


def log_halfnormal(h, beta: float):
    """Log density of the half-normal with precision ``beta`` at ``h >= 0``."""
    return 0.5 * math.log(2 * beta / math.pi) - 0.5 * beta * np.square(h)


# -- quality functions --------------------------------------------------------

def q_sym_nmf(g: Graph, cs) -> float:
    ahat = predicted_adjacency(cs, g)
    return float(-0.5 * np.sum((g.weights - ahat) ** 2))


def q_asym_nmf(g: Graph, cs) -> float:
    ahat = predicted_adjacency(cs, g, "asymmetric")
    return float(-0.5 * np.sum((g.weights - ahat) ** 2))


def _cooccurrence(cs: Clustering, n: int) -> np.ndarray:
    M = np.zeros((len(cs), n))
    for k, c in enumerate(cs):
        M[k, list(c.support)] = 1.0
    return M.T @ M


def q_cpm(g: Graph, hc, p: CpmParams = CpmParams()) -> float:
    """Constant Potts Model. For overlapping input every co-membership counts."""
    if isinstance(hc, HardClustering):
        same = (hc.labels[:, None] == hc.labels[None, :]).astype(float)
    else:
        same = _cooccurrence(as_clustering(hc), g.n)
    return float(np.sum((g.weights - p.gamma) * same))


def q_sym_nmf_hard(g: Graph, hc: HardClustering) -> float:
    """Symmetric NMF at the binary membership encoding of a partition."""
    return q_sym_nmf(g, as_clustering(hc))


def q_gauss_nmf(g: Graph, cs, p: GaussianNmfParams = GaussianNmfParams()) -> float:
    cs = as_clustering(cs)
    n = g.n
    H = cs.h_matrix(n)
    fit = -0.5 * np.sum((g.weights - predict(H)) ** 2)
    reg = -np.sum(H ** 2) / (2 * p.sigma ** 2)
    const = n * n * LOG_SQRT_2PI + len(cs) * n * 0.5 * math.log(math.pi * p.sigma ** 2 / 2)
    return float(fit + reg + const)


def q_bay_nmf(g: Graph, cs, p: BayNmfParams = BayNmfParams()) -> float:
    cs = as_clustering(cs)
    n = g.n
    H = cs.h_matrix(n)
    W = cs.w_matrix(n)
    beta = cs.betas()
    return bay_nmf_value(g.weights, W, H, beta, p)


def bay_nmf_value(v, W, H, beta, p: BayNmfParams) -> float:
    n = v.shape[0]
    vhat = predict(H, W)
    pos = v > 0
    if np.any(vhat[pos] <= 0):
        return NEG_INF
    kl = np.sum(v[pos] * np.log(v[pos] / vhat[pos])) + np.sum(vhat)
    sq = np.sum(W ** 2, axis=1) + np.sum(H ** 2, axis=1)
    logb = np.log(beta)
    prior = -0.5 * np.sum(beta * sq - 2 * n * logb)
    hyper = -np.sum(beta * p.b - (p.a - 1) * logb)
    return float(-kl + prior + hyper)


def optimal_beta(W, H, n: int, p: BayNmfParams) -> np.ndarray:
    """Precisions maximizing the Bayesian NMF quality for fixed ``W, H``."""
    sq = np.sum(W ** 2, axis=1) + np.sum(H ** 2, axis=1)
    return (2 * n + 2 * (p.a - 1)) / (sq + 2 * p.b)


def _local_parts(g: Graph, cs: Clustering, p: LocalPriorConfig) -> AdditiveParts:
    n = g.n
    H = cs.h_matrix(n)
    S = H > 0
    counts = S.sum(axis=0)
    sizes = S.sum(axis=1)
    coeff = np.where(S, log_halfnormal(H, p.beta), 0.0).sum(axis=1)
    q_clus = log_size_prior(sizes, p) + coeff
    q_node = log_node_prior(counts, p)
    q_edge = edge_loglik(g.weights, predict(H), p.edge)
    return AdditiveParts(p.kappa, q_clus, q_node, q_edge)


def q_local_prob(g: Graph, cs, p: LocalPriorConfig = LocalPriorConfig()) -> float:
    cs = as_clustering(cs)
    parts = _local_parts(g, cs, p)
    total = parts.total()
    if p.coeff_scope == "all":
        # zero coefficients also pay log p(0) under the half-normal
        H = cs.h_matrix(g.n)
        total += float(np.sum(H == 0)) * log_halfnormal(0.0, p.beta)
    return float(total) if not math.isnan(total) else NEG_INF


def toy_maxmin_quality(g: Graph, hc) -> float:
    """Size of the largest cluster plus size of the smallest one."""
    if isinstance(hc, HardClustering):
        sizes = [len(b) for b in hc.blocks()]
    else:
        sizes = [len(c.support) for c in as_clustering(hc)]
    if not sizes:
        raise QualityError("toy quality needs a non-empty clustering")
    return float(max(sizes) + min(sizes))


# -- additive decomposition ---------------------------------------------------

def additive_parts(qf: str, g: Graph, cs, params=None) -> AdditiveParts:
    """Split a quality into graph, per-cluster, per-node and per-edge terms."""
    cs = as_clustering(cs)
    n, k = g.n, len(cs)
    zeros_c, zeros_n = np.zeros(k), np.zeros(n)
    if qf in ("sym_nmf", "asym_nmf", "sym_nmf_hard"):
        mode = "asymmetric" if qf == "asym_nmf" else "symmetric"
        ahat = predicted_adjacency(cs, g, mode)
        return AdditiveParts(0.0, zeros_c, zeros_n, -0.5 * (g.weights - ahat) ** 2)
    if qf == "cpm":
        p = params or CpmParams()
        return AdditiveParts(0.0, zeros_c, zeros_n,
                             (g.weights - p.gamma) * _cooccurrence(cs, n))
    if qf == "gauss_nmf":
        p = params or GaussianNmfParams()
        H = cs.h_matrix(n)
        q_clus = (-np.sum(H ** 2, axis=1) / (2 * p.sigma ** 2)
                  + n * 0.5 * math.log(math.pi * p.sigma ** 2 / 2))
        return AdditiveParts(n * n * LOG_SQRT_2PI, q_clus, zeros_n,
                             -0.5 * (g.weights - predict(H)) ** 2)
    if qf == "local_prob":
        p = params or LocalPriorConfig()
        if p.coeff_scope != "support":
            raise NotAdditiveError(
                "local_prob with coeff_scope='all' charges log p(0) for every "
                "unsupported coefficient, a per-cluster term that grows with |V|")
        return _local_parts(g, cs, p)
    if qf == "bay_nmf":
        raise NotAdditiveError(
            "bay_nmf is not additive: each cluster carries the term 2|V| log beta_c, "
            "which depends on the number of nodes, and the constant kappa depends "
            "on the number of clusters and nodes")
    if qf == "toy_maxmin":
        raise NotAdditiveError("toy_maxmin depends jointly on all cluster sizes")
    raise QualityError(f"unknown quality function {qf!r}")


# -- registry -----------------------------------------------------------------

_EVALUATORS: dict[str, tuple[Callable, type | None]] = {
    "sym_nmf": (q_sym_nmf, None),
    "asym_nmf": (q_asym_nmf, None),
    "cpm": (q_cpm, CpmParams),
    "sym_nmf_hard": (q_sym_nmf_hard, None),
    "gauss_nmf": (q_gauss_nmf, GaussianNmfParams),
    "bay_nmf": (q_bay_nmf, BayNmfParams),
    "local_prob": (q_local_prob, LocalPriorConfig),
    "toy_maxmin": (toy_maxmin_quality, None),
}
QUALITY_NAMES = tuple(_EVALUATORS)


@dataclass(frozen=True)
class QualityFunction:
    """A named quality function bound to its parameters."""

    name: str
    params: object = field(default=None)

    def __post_init__(self):
        if self.name not in _EVALUATORS:
            raise QualityError(f"unknown quality function {self.name!r}")
        cls = _EVALUATORS[self.name][1]
        if cls is not None and self.params is None:
            object.__setattr__(self, "params", cls())

    def __call__(self, g: Graph, cs) -> float:
        fn = _EVALUATORS[self.name][0]
        if self.params is None:
            return fn(g, cs)
        return fn(g, cs, self.params)

    def parts(self, g: Graph, cs) -> AdditiveParts:
        return additive_parts(self.name, g, cs, self.params)

    @property
    def is_additive(self) -> bool:
        if self.name in ("bay_nmf", "toy_maxmin"):
            return False
        if self.name == "local_prob":
            return self.params.coeff_scope == "support"
        return True

    def to_config(self) -> dict:
        cfg = {"qf": self.name}
        p = self.params
        if isinstance(p, LocalPriorConfig):
            cfg["node_prior"] = ({"poisson": p.lam} if p.node_prior == "poisson"
                                 else p.node_prior)
            cfg.update(size_prior=p.size_prior, beta=p.beta, edge=p.edge,
                       kappa=p.kappa, coeff_scope=p.coeff_scope)
        elif p is not None:
            cfg.update(asdict(p))
        return cfg


def quality_from_config(cfg: dict) -> QualityFunction:
    """Parse e.g. ``{"qf": "local_prob", "node_prior": {"poisson": 1.0}, ...}``."""
    cfg = dict(cfg)
    try:
        name = cfg.pop("qf")
    except KeyError:
        raise QualityError("quality config needs a 'qf' key") from None
    if name not in _EVALUATORS:
        raise QualityError(f"unknown quality function {name!r}")
    try:
        if name == "local_prob":
            node = cfg.pop("node_prior", {"poisson": 1.0})
            kw = {}
            if isinstance(node, dict):
                (kind, lam), = node.items()
                kw.update(node_prior=kind, lam=float(lam))
            else:
                kw["node_prior"] = node
            if "size_prior" in cfg:
                kw["size_prior"] = cfg.pop("size_prior")
            for key in ("beta", "edge", "kappa", "coeff_scope"):
                if key in cfg:
                    kw[key] = cfg.pop(key)
            params = LocalPriorConfig(**kw)
        else:
            cls = _EVALUATORS[name][1]
            params = cls(**cfg) if cls is not None else None
            cfg = {}
    except (TypeError, ValueError) as exc:
        raise QualityError(f"bad parameters for {name}: {exc}") from exc
    if cfg:
        raise QualityError(f"unknown keys for {name}: {sorted(cfg)}")
    return QualityFunction(name, params)
