"""Command line interface: ``nmflocal <command> ...``.

Exit codes: 0 success, 1 a check or assertion failed, 2 malformed
configuration or arguments, 3 I/O failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import clustering as C
from . import experiments as E
from . import graph as G
from . import properties as P
from . import quality as Q
from .optimize import (MAX_EXHAUSTIVE, OptimizeError, OptimizerConfig, exhaustive_candidates,
                       exhaustive_hard_optimum, mu_bay_nmf, mu_sym_nmf, optimize_given_support,
                       set_partitions, support_search)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


class ConfigError(Exception):
    pass


def fmt(x) -> str:
    """Human-readable number, 6 significant digits."""
    return f"{x:.6g}" if isinstance(x, float) else str(x)


def _read_json(path) -> dict:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _write(out, payload) -> None:
    if out is None:
        return
    text = payload if isinstance(payload, str) else json.dumps(payload, indent=1)
    Path(out).write_text(text)


def _optimizer_config(args, default: OptimizerConfig = OptimizerConfig()) -> OptimizerConfig:
    if not args.optimizer:
        return default if args.seed is None else replace(default, seed=args.seed)
    if args.optimizer:
        kw = _read_json(args.optimizer)
        if not isinstance(kw, dict):
            raise ConfigError("optimizer config must be a JSON object")
    try:
        cfg = OptimizerConfig(**kw)
    except TypeError as exc:
        raise ConfigError(f"bad optimizer config: {exc}") from exc
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _quality(args) -> Q.QualityFunction:
    if not args.config:
        raise ConfigError("--config with a quality function is required")
    obj = _read_json(args.config)
    if not isinstance(obj, dict):
        raise ConfigError("quality config must be a JSON object")
    return Q.quality_from_config(obj)


# -- commands -------------------------------------------------------------------

def cmd_generate(args) -> int:
    if args.kind == "ring":
        g = G.ring_of_cliques(args.cliques, args.size)
    elif args.kind == "overlap":
        g = G.overlapping_cliques(args.size, args.overlap)
    elif args.kind == "figure1":
        g = G.figure1_graph()[0]
    else:
        g = G.two_modules(args.size, args.within, args.between,
                          0 if args.seed is None else args.seed)
    payload = G.to_json(g)
    if args.out:
        G.save(g, args.out)
    else:
        print(json.dumps(payload))
    print(f"generated {args.kind}: n={g.n} edges={g.num_edges}", file=sys.stderr)
    return EXIT_OK


def cmd_eval(args) -> int:
    qf = _quality(args)
    g = G.load(args.graph)
    cs = C.from_json(_read_json(args.clustering))
    if cs.max_node() >= g.n:
        raise ConfigError("clustering refers to nodes outside the graph")
    value = qf(g, cs)
    print(f"{qf.name}: {fmt(value)}")
    _write(args.out, {"qf": qf.to_config(), "value": value})
    return EXIT_OK


def cmd_optimize(args) -> int:
    qf = _quality(args)
    cfg = _optimizer_config(args)
    g = G.load(args.graph)
    out = {"qf": qf.to_config()}
    if qf.name == "sym_nmf":
        if args.k is None:
            raise ConfigError("sym_nmf needs --k")
        cs = mu_sym_nmf(g, args.k, cfg)
        value = qf(g, cs)
    elif qf.name == "bay_nmf" and args.supports is None:
        cs = mu_bay_nmf(g, args.k or g.n, qf.params, cfg)
        value = qf(g, cs)
    elif qf.name in ("cpm", "sym_nmf_hard", "toy_maxmin"):
        optima, value = exhaustive_hard_optimum(g, qf.name, qf.params)
        cs = optima[0].to_clustering()
        out["optima"] = [[list(b) for b in h.blocks()] for h in optima]
    elif args.supports is not None:
        supports = _read_json(args.supports)
        fit = optimize_given_support(g, supports, qf, cfg)
        cs, value = fit.clustering, fit.quality
        out["converged"] = fit.converged
    else:
        if g.n > MAX_EXHAUSTIVE:
            raise ConfigError(f"{qf.name} needs --supports for graphs over {MAX_EXHAUSTIVE} nodes")
        res = support_search(g, exhaustive_candidates(g), qf, cfg)
        cs, value = res.best.clustering, res.best.quality
    out.update(value=value, clustering=C.to_json(cs))
    print(f"{qf.name}: {fmt(value)} with {len(cs)} clusters")
    _write(args.out, out)
    return EXIT_OK


PROPTEST_SUITES = ("theorem1", "additive", "rlf-cpm")


def cmd_proptest(args) -> int:
    rng = np.random.default_rng(0 if args.seed is None else args.seed)
    failures = 0
    records = []
    for t in range(args.count):
        if args.suite == "theorem1":
            g = G.random_graph(int(rng.integers(1, 7)), 0.6, rng)
            const = -0.5 * float(np.sum(g.weights ** 2))
            ok = all(abs(Q.q_sym_nmf_hard(g, C.HardClustering(p))
                         - Q.q_cpm(g, C.HardClustering(p), Q.CpmParams(0.5)) - const) <= 1e-9
                     for p in set_partitions(g.n))
        elif args.suite == "additive":
            qf = _quality(args)
            hard = qf.name in ("cpm", "sym_nmf_hard") or (
                qf.name == "local_prob" and qf.params.node_prior == "exactly_one")
            poisson = qf.name == "local_prob" and qf.params.edge == "poisson"
            inst = P.random_locality_instance(rng, hard=hard, cover_edges=poisson,
                                              integer=poisson, asym=qf.name == "asym_nmf",
                                              equal_sizes=qf.name == "gauss_nmf")
            ok = P.check_additive_difference(qf, inst).holds
        else:
            g = G.random_graph(int(rng.integers(2, 7)), 0.5, rng)
            ok = P.check_rlf_instance("cpm", g, Q.CpmParams(float(rng.uniform(0.05, 0.95)))).holds
        failures += not ok
        records.append(ok)
    print(f"{args.suite}: {args.count - failures}/{args.count} passed")
    _write(args.out, {"suite": args.suite, "passed": args.count - failures,
                      "count": args.count, "results": records})
    return EXIT_OK if failures == 0 else EXIT_FAIL


def _sweep_range(args):
    step = args.step
    vals = np.arange(args.start, args.stop + step / 2, step)
    return [int(v) if float(v).is_integer() else float(v) for v in vals]


def cmd_sweep(args) -> int:
    cfg = _optimizer_config(args, OptimizerConfig(restarts=2))
    workers = args.threads
    if args.kind == "ring":
        res = E.ring_size_sweep(args.variant, _sweep_range(args), cfg=cfg, workers=workers)
        for r in res.rows:
            print(f"n={r['n']}: {fmt(r['avg_cliques_per_cluster'])} cliques per cluster")
    elif args.kind == "lambda":
        res = E.lambda_sweep(_sweep_range(args), cfg=cfg, workers=workers)
        for r in res.rows:
            print(f"-log10(lambda)={fmt(r['neg_log10_lambda'])}: {fmt(r['size'])} cliques per "
                  f"cluster{'' if r['consistent'] else ' (inconsistent across ring sizes)'}")
    else:
        vals = _sweep_range(args)
        res = E.module_phase_sweep(vals, vals, repeats=args.repeats, cfg=cfg,
                                   seed=0 if args.seed is None else args.seed, workers=workers)
        for r in res.rows:
            print(f"within={r['within']} between={r['between']}: {r['winner']}")
    if args.out:
        _write(args.out, res.dumps() if str(args.out).endswith(".json") else res.to_csv())
    return EXIT_OK


VERIFY_TARGETS = ("theorem1", "theorem3", "theorem4", "figure1", "fixed-size")


def cmd_verify(args) -> int:
    """Each target declares the verdict it expects; exit 0 iff it is observed."""
    target = args.target
    if target == "theorem1":
        rng = np.random.default_rng(0 if args.seed is None else args.seed)
        worst = 0.0
        for _ in range(50):
            g = G.random_graph(int(rng.integers(1, 7)), 0.6, rng)
            const = -0.5 * float(np.sum(g.weights ** 2))
            for p in set_partitions(g.n):
                h = C.HardClustering(p)
                worst = max(worst, abs(Q.q_sym_nmf_hard(g, h) - Q.q_cpm(g, h) - const))
        ok = worst <= 1e-9
        print(f"theorem1: max deviation {fmt(worst)}; expected identity, "
              f"{'observed' if ok else 'NOT observed'}")
        report = {"max_deviation": worst, "ok": ok}
    elif target == "theorem3":
        inst = P.theorem3_instance()
        v = P.check_locality(Q.QualityFunction("toy_maxmin"), inst)
        print("theorem3: qualities " + ", ".join(fmt(q) for q in v.qualities))
        ok = not v.holds
        print(f"verdict: {'not local' if ok else 'local'} (expected: not local)")
        report = {**v.to_json(), "expected": "violated", "ok": ok}
    elif target == "theorem4":
        rep = P.verify_theorem4(cfg=replace(P.THEOREM4_CFG,
                                            seed=0 if args.seed is None else args.seed))
        print(f"theorem4: single ring q(C1)={fmt(rep.single[0])} q(C2)={fmt(rep.single[1])}; "
              f"double ring q(C1+C1')={fmt(rep.double[0])} q(C2+C2')={fmt(rep.double[1])}")
        ok = rep.ok
        print(f"verdict: {'not local' if not rep.locality.holds else 'local'} "
              f"(expected: not local){'' if rep.conclusive else ' [optimizer did not converge]'}")
        report = {**rep.to_json(), "ok": ok}
    elif target == "figure1":
        seeds = range(0 if args.seed is None else args.seed,
                      (0 if args.seed is None else args.seed) + args.runs)
        reps = [P.verify_figure1_flip(replace(P.FIGURE1_CFG, seed=s)) for s in seeds]
        flips = sum(r.flipped for r in reps)
        r0 = reps[0]
        print(f"figure1: full graph B={fmt(r0.full['B'])} C={fmt(r0.full['C'])}; "
              f"subgraph B={fmt(r0.sub['B'])} C={fmt(r0.sub['C'])}")
        ok = 5 * flips >= 4 * len(reps)
        print(f"assignment flipped in {flips}/{len(reps)} runs (expected: flipped)")
        report = {"runs": [r.to_json() for r in reps], "flips": flips, "ok": ok}
    else:
        qf = Q.QualityFunction("sym_nmf")
        g = G.complete_graph(3)
        inst, k = P.fixed_k_counterexample(g, C.Clustering.from_sets([[0, 1, 2]]),
                                           C.Clustering.from_sets([[0, 1], [2]]))
        v_in = P.check_locality(P.FixedKQuality(qf, k), inst)
        rand = P.random_locality_instance(0 if args.seed is None else args.seed, equal_sizes=True)
        v_side = P.check_fixed_size_locality(qf, rand, len(rand.c1), len(rand.c2),
                                             len(rand.d), len(rand.d_alt))
        ok = (not v_in.holds) and v_side.holds
        print(f"fixed-size: k inside the quality -> {'violated' if not v_in.holds else 'holds'} "
              f"(expected: violated); k as side condition -> "
              f"{'holds' if v_side.holds else 'violated'} (expected: holds)")
        report = {"k_in_quality": v_in.to_json(), "k_side_condition": v_side.to_json(), "ok": ok}
    _write(args.out, report)
    return EXIT_OK if ok else EXIT_FAIL


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="root random seed")
    common.add_argument("--threads", type=int, default=1, help="maximum worker processes")
    common.add_argument("--out", default=None, help="machine-readable output file")
    common.add_argument("--config", default=None, help="quality function config (JSON)")
    common.add_argument("--optimizer", default=None, help="optimizer config (JSON)")

    p = argparse.ArgumentParser(prog="nmflocal", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("generate", parents=[common], help="write a benchmark graph")
    s.add_argument("kind", choices=("ring", "overlap", "figure1", "modules"))
    s.add_argument("--cliques", type=int, default=10)
    s.add_argument("--size", type=int, default=5)
    s.add_argument("--overlap", type=int, default=1)
    s.add_argument("--within", type=int, default=20)
    s.add_argument("--between", type=int, default=5)
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("eval", parents=[common], help="evaluate a quality function")
    s.add_argument("graph")
    s.add_argument("clustering")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("optimize", parents=[common], help="optimize a quality function")
    s.add_argument("graph")
    s.add_argument("--k", type=int, default=None, help="number of clusters (NMF)")
    s.add_argument("--supports", default=None, help="fixed supports (JSON list of node lists)")
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("proptest", parents=[common], help="randomized property checks")
    s.add_argument("suite", choices=PROPTEST_SUITES)
    s.add_argument("--count", type=int, default=200)
    s.set_defaults(func=cmd_proptest)

    s = sub.add_parser("sweep", parents=[common], help="parameter sweeps")
    s.add_argument("kind", choices=("ring", "lambda", "modules"))
    s.add_argument("--variant", choices=E.RING_VARIANTS, default="poisson_prior")
    s.add_argument("--from", dest="start", type=float, default=1)
    s.add_argument("--to", dest="stop", type=float, default=12)
    s.add_argument("--step", type=float, default=1)
    s.add_argument("--repeats", type=int, default=10)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("verify", parents=[common], help="check a theorem or figure claim")
    s.add_argument("target", choices=VERIFY_TARGETS)
    s.add_argument("--runs", type=int, default=10, help="seeded runs (figure1)")
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    os.environ.setdefault("OMP_NUM_THREADS", str(args.threads))
    try:
        return args.func(args)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, Q.QualityError, C.ClusteringError, G.GraphError, OptimizeError,
            E.SweepError, P.MalformedInstance, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
