"""Command-line entry point: ``cascade-lab <subcommand> ...``.

Exit codes: 0 success, 1 runtime or domain failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__, baselines, evaluation, learner, plots
from .diffusion import DiffusionSpec, generate_cascades, read_cascades, write_cascades
from .graph import (DirectedGraph, KroneckerSpec, assign_weights, kronecker_generate, read_graph,
                    scheme_model, write_graph)
from .observation import (RetentionProfile, corrupt_all, draw_rates, read_incomplete,
                          read_metadata, read_rates, write_incomplete, write_metadata, write_rates)

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

log = logging.getLogger("cascade_lab")

THREADS_ENV = "CASCADE_LAB_THREADS"
PAPER_KRON = "0.9,0.5,0.5,0.3"


class CommandError(Exception):
    pass


# -- helpers ---------------------------------------------------------------


def _floats(text, count=None):
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if count is not None and len(vals) != count:
        raise argparse.ArgumentTypeError(f"expected {count} numbers, got {len(vals)}")
    return vals


def _unit(text):
    x = float(text)
    if not 0 <= x <= 1:
        raise argparse.ArgumentTypeError("value must lie in [0, 1]")
    return x


def _threads(args) -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise CommandError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return args.threads if args.threads else (os.cpu_count() or 1)


def _atomic_write(path: Path, text: str):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_manifest(path, command, config, seed, inputs, outputs, started):
    manifest = {
        "subcommand": command,
        "config": config,
        "seed": seed,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "version": __version__,
        "duration_s": round(time.perf_counter() - started, 6),
        "argv": sys.argv[1:],
    }
    _atomic_write(Path(path), json.dumps(manifest, indent=2) + "\n")


def _manifest_for(output) -> Path:
    return Path(f"{output}.manifest.json")


def _config(args):
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}


def _spec_from_file(path, window=None):
    g, model, file_window = read_graph(path)
    return DiffusionSpec(model, g, window if window is not None else file_window)


def _load_any_model(path):
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    if "method" in d:
        return baselines.baseline_from_dict(d)
    return learner.InfluenceModel.from_dict(d)


def predict_totals(model, x):
    if isinstance(model, learner.InfluenceModel):
        return learner.predict_many(model, x).sum(axis=1)
    if isinstance(model, baselines.LogisticModel):
        return model.predict_many(x).sum(axis=1)
    return model.predict_total(x)


# -- subcommands -----------------------------------------------------------


def cmd_gen_graph(args):
    started = time.perf_counter()
    rng = np.random.default_rng(args.seed)
    seed = np.reshape(args.kron, (2, 2))
    spec = KroneckerSpec(seed, args.power, args.edges)
    model = scheme_model(args.weights)
    g = kronecker_generate(spec, rng)
    g = assign_weights(g, args.weights, rng)
    write_graph(args.output, g, model, args.window if model == "cic" else None)
    write_manifest(_manifest_for(args.output), "gen-graph", _config(args), args.seed, [],
                   [args.output], started)
    log.info("wrote %d nodes, %d edges to %s", g.n, g.m, args.output)


def cmd_simulate(args):
    started = time.perf_counter()
    g, model, window = read_graph(args.graph)
    if args.model and args.model != model:
        raise CommandError(f"graph file holds a {model} model, not {args.model}")
    if args.window is not None:
        if model != "cic":
            raise CommandError(f"--window only applies to cic graphs, graph is {model}")
        window = args.window
    spec = DiffusionSpec(model, g, window)
    rng = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(0,)))
    max_size = min(args.max_seed_size, g.n) if g.n else 1
    seed_sets = evaluation.sample_seed_sets(g.n, args.count, args.seed_exponent, max_size, rng) \
        if args.count else []
    cascades = generate_cascades(spec, seed_sets, np.random.SeedSequence(args.seed, spawn_key=(1,)))
    write_cascades(args.output, cascades)
    write_manifest(_manifest_for(args.output), "simulate", _config(args), args.seed,
                   [args.graph], [args.output], started)
    if cascades:
        log.info("mean cascade size %.3f", np.mean([len(c.active) for c in cascades]))


def cmd_corrupt(args):
    started = time.perf_counter()
    cascades = read_cascades(args.cascades)
    n = args.n if args.n is not None else read_graph(args.graph)[0].n if args.graph else \
        1 + max((max(c.active) for c in cascades), default=-1)
    rate_rng = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(0,)))
    if args.sigma > 0:
        profile = draw_rates(n, args.retention, args.sigma, args.dist, rate_rng)
    else:
        profile = RetentionProfile.uniform(n, args.retention)
    observed = corrupt_all(cascades, profile,
                           np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(1,))))
    write_incomplete(args.output, observed)
    outputs = [args.output]
    rates_file = None
    if args.sigma > 0:
        rates_file = Path(f"{args.output}.rates.json")
        write_rates(rates_file, profile)
        outputs.append(rates_file)
    meta = Path(f"{args.output}.meta.json")
    write_metadata(meta, args.retention, rates_file.name if rates_file else None)
    outputs.append(meta)
    write_manifest(_manifest_for(args.output), "corrupt", _config(args), args.seed,
                   [args.cascades], outputs, started)


def _training_profile(args, n):
    meta_path = Path(f"{args.cascades}.meta.json")
    meta = read_metadata(meta_path) if meta_path.exists() else {}
    if args.rates_file:
        mean = args.retention if args.retention is not None else None
        profile = read_rates(args.rates_file, mean)
        if profile.n != n:
            raise CommandError(f"rates file has {profile.n} entries, graph has {n} nodes")
        return profile
    r = args.retention if args.retention is not None else meta.get("retention_mean", 1.0)
    if not 0 < r <= 1:
        raise CommandError("retention rate must lie in (0, 1]")
    return RetentionProfile.uniform(n, r)


def cmd_train(args):
    started = time.perf_counter()
    cascades = read_incomplete(args.cascades)
    if not cascades:
        raise CommandError("no cascades to train on")
    if args.graph:
        n = read_graph(args.graph)[0].n
    elif args.n is not None:
        n = args.n
    else:
        raise CommandError("pass --graph or --n so the node count is known")
    inputs = [args.cascades] + ([args.graph] if args.graph else [])
    if args.method in ("ours", "influlearner"):
        profile = _training_profile(args, n)
        if args.method == "influlearner":
            profile = RetentionProfile.uniform(n, 1.0)
        cfg = learner.TrainConfig(lam=args.lam, loss=args.loss, max_iter=args.max_iter)
        model = learner.train_all(cascades, n, profile, args.k, cfg,
                                  np.random.default_rng(args.seed), threads=_threads(args))
        learner.write_model(args.output, model)
    elif args.method == "logistic":
        baselines.write_baseline(args.output, baselines.train_logistic_all(cascades, n, args.l2))
    else:
        baselines.write_baseline(args.output, baselines.train_linear(cascades, n, args.l2))
    write_manifest(_manifest_for(args.output), "train", _config(args), args.seed, inputs,
                   [args.output], started)


def cmd_eval(args):
    started = time.perf_counter()
    spec = _spec_from_file(args.graph)
    model = _load_any_model(args.model)
    rng = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(0,)))
    max_size = min(args.max_seed_size, spec.n)
    sets = evaluation.sample_seed_sets(spec.n, args.test_count, args.seed_exponent, max_size, rng)
    truth = evaluation.ground_truth(spec, sets, args.samples,
                                    np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(1,))))
    pred = predict_totals(model, evaluation.indicator(sets, spec.n))
    out = {
        "method": getattr(model, "to_dict", lambda: {})().get("method", "influence-model")
        if not isinstance(model, learner.InfluenceModel) else "influence-model",
        "mae": evaluation.mae_total(pred, truth.totals),
        "test_sets": len(sets),
        "samples": args.samples,
        "predicted_totals": [float(x) for x in pred],
        "true_totals": [float(x) for x in truth.totals],
    }
    Path(args.output).write_text(json.dumps(out, indent=2) + "\n", encoding="utf-8")
    write_manifest(_manifest_for(args.output), "eval", _config(args), args.seed,
                   [args.graph, args.model], [args.output], started)
    print(f"MAE {out['mae']:.6f} over {len(sets)} seed sets")


def load_sweep_config(path):
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix == ".toml":
        d = tomllib.loads(raw.decode("utf-8"))
    else:
        d = json.loads(raw)
    kind = d.get("sweep", "retention")
    if kind not in evaluation.SWEEPS:
        raise CommandError(f"unknown sweep {kind!r}; choose from {sorted(evaluation.SWEEPS)}")
    return kind, evaluation.ExperimentConfig.from_dict(d)


def cmd_sweep(args):
    started = time.perf_counter()
    kind, cfg = load_sweep_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    table = evaluation.SWEEPS[kind](cfg, threads=_threads(args))
    results = outdir / "results.csv"
    agg = outdir / "aggregated.csv"
    table.write_csv(results)
    table.write_aggregate(agg)
    written = [results, agg] + plots.render_sweep(kind, table, outdir, truth=cfg.true_retention)
    write_manifest(outdir / "manifest.json", "sweep", {"sweep": kind, **cfg.to_dict()}, cfg.seed,
                   [args.config], written, started)
    for m, p, mean, std in table.aggregate():
        print(f"{m:>13} {p:8.3f}  mae {mean:.4f} +- {std:.4f}")


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cascade-lab",
                                description="Influence-function learning from incomplete cascades.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed_default=0):
        sp.add_argument("--seed", type=int, default=seed_default, help="master random seed")
        sp.add_argument("--threads", type=int, default=None,
                        help=f"worker threads (default: all cores; {THREADS_ENV} overrides)")
        sp.add_argument("-o", "--output", required=True, help="output path")

    g = sub.add_parser("gen-graph", help="generate a weighted Kronecker graph")
    g.add_argument("--kron", type=lambda s: _floats(s, 4), default=_floats(PAPER_KRON),
                   help="2x2 seed matrix, row-major a,b,c,d (default %(default)s)")
    g.add_argument("--power", type=int, default=9, help="graph has 2**power nodes")
    g.add_argument("--edges", type=int, default=1024, help="number of distinct edges")
    g.add_argument("--weights", default="dic-uniform:0,0.4",
                   help="dic-uniform:a,b | dlt-indegree | cic-uniform:a,b")
    g.add_argument("--window", type=float, default=1.0, help="CIC observation window")
    common(g)
    g.set_defaults(func=cmd_gen_graph)

    s = sub.add_parser("simulate", help="simulate complete cascades on a graph file")
    s.add_argument("--graph", required=True)
    s.add_argument("--model", choices=("dic", "dlt", "cic"),
                   help="expected model; mismatch with the graph file is an error")
    s.add_argument("--count", type=int, default=8192)
    s.add_argument("--seed-exponent", type=float, default=2.5)
    s.add_argument("--max-seed-size", type=int, default=64)
    s.add_argument("--window", type=float, default=None, help="override the CIC window")
    common(s)
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("corrupt", help="drop non-seed activations at random")
    c.add_argument("--cascades", required=True)
    c.add_argument("--retention", type=_unit, required=True, help="(mean) retention rate")
    c.add_argument("--sigma", type=float, default=0.0, help="spread of per-node rates")
    c.add_argument("--dist", choices=("uniform", "gaussian"), default="gaussian")
    c.add_argument("--graph", help="graph file, for the node count")
    c.add_argument("--n", type=int, help="node count if no graph is given")
    common(c)
    c.set_defaults(func=cmd_corrupt)

    t = sub.add_parser("train", help="fit an influence model to incomplete cascades")
    t.add_argument("--cascades", required=True)
    t.add_argument("--graph", help="graph file, for the node count")
    t.add_argument("--n", type=int, help="node count if no graph is given")
    t.add_argument("--method", choices=evaluation.METHODS, default="ours")
    t.add_argument("--retention", type=float, default=None,
                   help="assumed retention rate (default: from the .meta.json sidecar, else 1)")
    t.add_argument("--rates-file", help="JSON array of per-node retention rates")
    t.add_argument("--k", type=int, default=200, help="features per node")
    t.add_argument("--lambda", dest="lam", type=float, default=learner.TrainConfig.lam,
                   help="truncation level")
    t.add_argument("--loss", choices=learner.LOSSES, default="corrected")
    t.add_argument("--max-iter", type=int, default=learner.TrainConfig.max_iter)
    t.add_argument("--l2", type=float, default=baselines.DEFAULT_L2, help="ridge for baselines")
    common(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="MAE of a model's total influence on fresh test seed sets")
    e.add_argument("--model", required=True)
    e.add_argument("--graph", required=True, help="graph file with the true parameters")
    e.add_argument("--test-count", type=int, default=50)
    e.add_argument("--samples", type=int, default=10_000, help="live-edge samples for ground truth")
    e.add_argument("--seed-exponent", type=float, default=2.5)
    e.add_argument("--max-seed-size", type=int, default=64)
    common(e)
    e.set_defaults(func=cmd_eval)

    w = sub.add_parser("sweep", help="run a retention / misspecification / nonuniform sweep")
    w.add_argument("--config", required=True, help="TOML or JSON sweep config")
    w.add_argument("--seed", type=int, default=None, help="override the config's master seed")
    w.add_argument("--threads", type=int, default=None,
                   help=f"worker threads (default: all cores; {THREADS_ENV} overrides)")
    w.add_argument("-o", "--output", required=True, help="output directory")
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (CommandError, ValueError, KeyError, OSError, RuntimeError) as exc:
        print(f"cascade-lab {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
