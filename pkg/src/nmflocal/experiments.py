"""Parameter sweeps over benchmark graphs.

Each sweep returns a :class:`SweepResult` whose rows record, per parameter
point, the winning candidate label and the quality of every candidate.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import quality as Q
from .graph import ring_of_cliques, two_modules
from .optimize import (OptimizerConfig, average_cliques_per_cluster, mu_bay_nmf,
                       nonempty_clusters, ring_candidates, support_search,
                       two_module_candidates)

RING_VARIANTS = ("poisson_prior", "no_prior", "psorakis")

# Absolute slack under which two candidate qualities count as tied.
TIE_TOL = 1e-9


class SweepError(ValueError):
    pass


@dataclass
class SweepResult:
    kind: str
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def columns(self) -> list[str]:
        cols = []
        for r in self.rows:
            for k in r:
                if k not in cols:
                    cols.append(k)
        return cols

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=self.columns(), lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: _cell(v) for k, v in r.items()})
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"kind": self.kind, "meta": self.meta, "rows": self.rows}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), default=_cell)

    def column(self, name: str) -> list:
        return [r.get(name) for r in self.rows]


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return "/".join(str(x) for x in v)
    return v


def _label_str(label) -> str:
    return "/".join(str(x) for x in label) if isinstance(label, tuple) else str(label)


def _pmap(fn: Callable, items: Sequence, workers: int = 1) -> list:
    """Ordered map, optionally over processes; results do not depend on ``workers``."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _winner(qualities: dict) -> tuple[object, bool]:
    """Best label (first on ties) and whether the best is tied."""
    labels = list(qualities)
    values = [qualities[l] for l in labels]
    best = max(range(len(values)), key=lambda k: (values[k], -k))
    tie = sum(1 for v in values if v >= values[best] - TIE_TOL) > 1
    return labels[best], tie


# -- ring of cliques ----------------------------------------------------------

def ring_prior(variant: str, lam: float = 1.0) -> Q.QualityFunction:
    """Quality used by a ring sweep variant.

    ``poisson_prior`` is the local prior with Poisson node prior ``lam``.
    ``no_prior`` drops the node prior but charges the half-normal
    normalizing constant for every coefficient, supported or not.
    """
    if variant == "poisson_prior":
        return Q.QualityFunction("local_prob", Q.LocalPriorConfig(node_prior="poisson", lam=lam))
    if variant == "no_prior":
        return Q.QualityFunction("local_prob", Q.LocalPriorConfig(node_prior="none",
                                                                  coeff_scope="all"))
    raise SweepError(f"no support-search prior for variant {variant!r}")


RING_BRIDGE = {"poisson_prior": "cluster", "no_prior": "both"}


def _ring_point(args):
    variant, n, m, rs, cfg = args
    if variant == "psorakis":
        g = ring_of_cliques(n, m)
        cs = mu_bay_nmf(g, g.n, Q.BayNmfParams(), cfg)
        k = len(nonempty_clusters(cs))
        return {"n": n, "winner": k, "avg_cliques_per_cluster": n / k if k else math.nan,
                "quality": Q.q_bay_nmf(g, cs), "tie": False}
    qf = ring_prior(variant)
    res = support_search(ring_of_cliques(n, m),
                         ring_candidates(n, m, [r for r in rs if r <= n], RING_BRIDGE[variant]),
                         qf, cfg)
    _, tie = _winner(res.qualities)
    r = res.label[0]
    row = {"n": n, "winner": _label_str(res.label),
           "avg_cliques_per_cluster": average_cliques_per_cluster(n, r),
           "quality": res.best.quality, "tie": tie}
    row.update({f"q[{_label_str(l)}]": v for l, v in res.qualities.items()})
    return row


def ring_size_sweep(variant: str, ns: Iterable[int], clique_size: int = 5,
                    rs: Sequence[int] = (1, 2, 3, 4, 5, 6),
                    cfg: OptimizerConfig = OptimizerConfig(restarts=2),
                    workers: int = 1) -> SweepResult:
    """Optimal number of cliques per cluster on rings of ``n`` cliques.

    ``poisson_prior`` and ``no_prior`` compare the ring candidate families of
    :func:`ring_candidates`; ``psorakis`` runs Bayesian NMF from ``k = |V|``
    clusters and reports cliques per nonempty cluster.
    """
    if variant not in RING_VARIANTS:
        raise SweepError(f"variant must be one of {RING_VARIANTS}")
    ns = [int(n) for n in ns]
    rows = _pmap(_ring_point, [(variant, n, clique_size, tuple(rs), cfg) for n in ns], workers)
    return SweepResult("ring", rows, {"variant": variant, "clique_size": clique_size,
                                      "rs": list(rs), "seed": cfg.seed})


def _lambda_point(args):
    e, ring_sizes, m, rs, cfg = args
    lam = 10.0 ** (-e)
    qf = ring_prior("poisson_prior", lam)
    row = {"neg_log10_lambda": e, "lambda": lam}
    labels = []
    for n in ring_sizes:
        res = support_search(ring_of_cliques(n, m),
                             ring_candidates(n, m, [r for r in rs if r <= n], "cluster"), qf, cfg)
        r = res.label[0]
        _, tie = _winner(res.qualities)
        labels.append(r)
        row[f"size[n={n}]"] = average_cliques_per_cluster(n, r)
        row[f"tie[n={n}]"] = tie
    row["size"] = row[f"size[n={ring_sizes[0]}]"]
    row["consistent"] = len(set(labels)) == 1
    return row


def lambda_sweep(exponents: Iterable[float], ring_sizes: Sequence[int] = (12, 24),
                 clique_size: int = 5, rs: Sequence[int] = (1, 2, 3, 4, 6),
                 cfg: OptimizerConfig = OptimizerConfig(restarts=2),
                 workers: int = 1) -> SweepResult:
    """Optimal cliques per cluster against ``-log10(lambda)`` of the Poisson node prior.

    Every point is solved on each ring size in ``ring_sizes``; a local quality
    must give the same answer on all of them (``consistent`` column).
    """
    ring_sizes = tuple(int(n) for n in ring_sizes)
    if not ring_sizes:
        raise SweepError("need at least one ring size")
    items = [(float(e), ring_sizes, clique_size, tuple(rs), cfg) for e in exponents]
    rows = _pmap(_lambda_point, items, workers)
    return SweepResult("lambda", rows, {"ring_sizes": list(ring_sizes),
                                        "clique_size": clique_size, "rs": list(rs)})


# -- two random modules -------------------------------------------------------

def cell_seed(seed: int, within: int, between: int, rep: int) -> int:
    """Deterministic per-graph seed for one repeat of a phase-diagram cell."""
    return int(np.random.SeedSequence([seed, within, between, rep]).generate_state(1)[0])


def _module_point(args):
    w, b, m, repeats, lam, cfg, seed = args
    qf = ring_prior("poisson_prior", lam)
    qa, qb = [], []
    for rep in range(repeats):
        g = two_modules(m, w, b, cell_seed(seed, w, b, rep))
        res = support_search(g, two_module_candidates(g, m), qf, cfg)
        qa.append(res.qualities["a"])
        qb.append(res.qualities["b"])
    qa, qb = np.array(qa), np.array(qb)
    means = {"a": float(qa.mean()), "b": float(qb.mean())}
    winner, tie = _winner(means)
    return {"within": w, "between": b, "winner": winner, "tie": tie,
            "q[a]": means["a"], "q[b]": means["b"],
            "wins_a": int(np.sum(qa > qb)), "wins_b": int(np.sum(qb > qa)),
            "repeats": repeats}


def module_phase_sweep(within: Iterable[int], between: Iterable[int],
                       nodes_per_module: int = 10, repeats: int = 10, lam: float = 1.0,
                       cfg: OptimizerConfig = OptimizerConfig(restarts=2), seed: int = 0,
                       workers: int = 1) -> SweepResult:
    """Split (a) versus merged (b) on pairs of random modules.

    A cell's winner is the candidate with the higher mean quality over
    ``repeats`` random graphs; per-graph win counts are kept alongside.
    """
    items = [(int(w), int(b), nodes_per_module, repeats, lam, cfg, seed)
             for w in within for b in between]
    rows = _pmap(_module_point, items, workers)
    return SweepResult("modules", rows, {"nodes_per_module": nodes_per_module,
                                         "repeats": repeats, "lambda": lam, "seed": seed})


def flip_boundary(result: SweepResult, within: int, offset: int = 5) -> bool:
    """Does the winner change from (a) to (b) between ``within - offset`` and
    ``within + offset`` between-module edges?"""
    cells = {(r["within"], r["between"]): r["winner"] for r in result.rows}
    lo, hi = cells.get((within, within - offset)), cells.get((within, within + offset))
    if lo is None or hi is None:
        raise SweepError(f"sweep lacks cells at within={within}, between={within}+-{offset}")
    return lo == "a" and hi == "b"
