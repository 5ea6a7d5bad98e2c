"""Ground truth, error metrics, seed-set sampling and the synthetic experiment sweeps."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.stats import spearmanr

from . import baselines, learner
from .diffusion import DiffusionSpec, generate_cascades, reachable_many, sample_live_edge, simulate
from .features import seed_matrix
from .graph import KroneckerSpec, assign_weights, kronecker_generate, scheme_model
from .observation import RetentionProfile, corrupt_all, draw_rates

log = logging.getLogger(__name__)

METHODS = ("ours", "influlearner", "logistic", "linear")


def stream(master: int, *keys: int) -> np.random.Generator:
    """Independent generator for the cell ``keys`` under ``master``."""
    return np.random.default_rng(np.random.SeedSequence(master, spawn_key=tuple(keys)))


def sample_seed_sets(n: int, count: int, exponent: float = 2.5, max_size: int | None = None,
                     rng: np.random.Generator | None = None):
    """Seed sets with power-law sizes ``P(s) ~ s**-exponent`` on ``1..max_size``."""
    if not exponent > 1:
        raise ValueError("power-law exponent must exceed 1")
    max_size = n if max_size is None else max_size
    if not 1 <= max_size <= n:
        raise ValueError("max_size must lie in [1, n]")
    rng = np.random.default_rng() if rng is None else rng
    sizes = np.arange(1, max_size + 1)
    p = sizes ** -float(exponent)
    p /= p.sum()
    drawn = rng.choice(sizes, size=count, p=p)
    return [frozenset(rng.choice(n, size=int(s), replace=False).tolist()) for s in drawn]


def indicator(seed_sets, n: int) -> np.ndarray:
    x = np.zeros((len(seed_sets), n), dtype=bool)
    for i, s in enumerate(seed_sets):
        x[i, list(s)] = True
    return x


@dataclass(frozen=True, eq=False)
class GroundTruth:
    marginals: np.ndarray    # (sets, n)
    totals: np.ndarray       # (sets,)
    total_se: np.ndarray     # (sets,) standard error of each total
    samples: int


def ground_truth(spec: DiffusionSpec, seed_sets, samples: int = 10_000,
                 rng: np.random.Generator | None = None) -> GroundTruth:
    """Monte Carlo influence where every live-edge sample answers all seed sets."""
    rng = np.random.default_rng() if rng is None else rng
    x = indicator(seed_sets, spec.n)
    acc = np.zeros(x.shape)
    tot = np.zeros(len(x))
    tot_sq = np.zeros(len(x))
    for _ in range(samples):
        reach = reachable_many(sample_live_edge(spec, rng), x, spec.window)
        acc += reach
        size = reach.sum(axis=1)
        tot += size
        tot_sq += size.astype(float) ** 2
    mean = tot / samples
    var = np.maximum(tot_sq / samples - mean**2, 0.0)
    se = np.sqrt(var / max(samples - 1, 1))
    return GroundTruth(acc / samples, mean, se, samples)


def mae_total(predicted, true) -> float:
    predicted = np.asarray(predicted, dtype=float)
    true = np.asarray(true, dtype=float)
    if predicted.shape != true.shape or predicted.size == 0:
        raise ValueError("need equal-length, nonempty total vectors")
    return float(np.abs(predicted - true).mean())


def sq_error(predict_fn, spec: DiffusionSpec, seed_sets, samples: int,
             rng: np.random.Generator) -> float:
    """Mean of ``|chi_A - F(S)|^2 / n`` over ``samples`` fresh cascades per seed set.

    ``predict_fn`` maps an ``(sets, n)`` seed indicator matrix to predictions.
    """
    x = indicator(seed_sets, spec.n)
    pred = np.asarray(predict_fn(x), dtype=float)
    total = 0.0
    for i, s in enumerate(seed_sets):
        for _ in range(samples):
            chi = np.zeros(spec.n)
            chi[list(simulate(spec, s, rng).active)] = 1.0
            total += ((chi - pred[i]) ** 2).mean()
    return total / (len(seed_sets) * samples)


# -- experiment configuration -----------------------------------------------


@dataclass
class ExperimentConfig:
    kron_seed: tuple = (0.9, 0.5, 0.5, 0.3)
    power: int = 7
    edges: int = 256
    scheme: str = "dic-uniform:0,0.4"
    window: float = 1.0
    cascades: int = 2000
    seed_exponent: float = 2.5
    max_seed_size: int = 32
    test_sets: int = 50
    truth_samples: int = 10_000
    K: int = 200
    lam: float = learner.TrainConfig.lam
    loss: str = "corrected"
    l2: float = baselines.DEFAULT_L2
    methods: tuple = METHODS
    retention_grid: tuple = (0.2, 0.5, 0.8, 1.0)
    true_retention: float = 0.8
    assumed_grid: tuple = (0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 1.0)
    sigma_grid: tuple = (0.0, 0.02, 0.05, 0.1, 0.2)
    sigma_dist: str = "gaussian"
    replications: int = 3
    seed: int = 0

    def __post_init__(self):
        for name in ("retention_grid", "assumed_grid", "sigma_grid", "methods", "kron_seed"):
            value = tuple(getattr(self, name))
            if not value:
                raise ValueError(f"{name} must be nonempty")
            setattr(self, name, value)
        if self.cascades < 1:
            raise ValueError("need at least one training cascade")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")

    @property
    def kind(self) -> str:
        return scheme_model(self.scheme)

    def train_config(self) -> learner.TrainConfig:
        return learner.TrainConfig(lam=self.lam, loss=self.loss)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        preset = d.pop("preset", None)
        base = PRESETS[preset] if preset else cls()
        known = set(asdict(base))
        extra = set(d) - known - {"sweep", "outdir"}
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        return replace(base, **{k: v for k, v in d.items() if k in known})


PRESETS = {
    "desk": ExperimentConfig(),
    "paper": ExperimentConfig(power=9, edges=1024, cascades=8192, test_sets=200,
                              max_seed_size=64, replications=5,
                              retention_grid=(0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)),
}


# -- results ---------------------------------------------------------------


@dataclass
class ResultsTable:
    rows: list = field(default_factory=list)

    def add(self, method, param, replication, mae):
        if not mae >= 0:
            raise ValueError("MAE must be non-negative")
        self.rows.append((method, float(param), int(replication), float(mae)))

    def methods(self):
        return list(dict.fromkeys(r[0] for r in self.rows))

    def params(self, method=None):
        return sorted({r[1] for r in self.rows if method is None or r[0] == method})

    def values(self, method, param):
        return np.array([r[3] for r in self.rows if r[0] == method and r[1] == param])

    def aggregate(self):
        """``[(method, param, mean_mae, std_mae)]`` in first-seen method order."""
        return [(m, p, float(v.mean()), float(v.std()))
                for m in self.methods() for p in self.params(m)
                for v in [self.values(m, p)]]

    def relative(self, reference):
        """Per-replication ``(mae - mae_ref) / mae_ref`` aggregated as ``(method, param, mean, std)``."""
        out = []
        for m in self.methods():
            ref = {r[2]: r[3] for r in self.rows if r[0] == m and r[1] == reference}
            if not ref:
                continue
            for p in self.params(m):
                rel = np.array([(r[3] - ref[r[2]]) / ref[r[2]]
                                for r in self.rows if r[0] == m and r[1] == p])
                out.append((m, p, float(rel.mean()), float(rel.std())))
        return out

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "param", "replication", "mae"])
            w.writerows([m, repr(p), rep, repr(mae)] for m, p, rep, mae in self.rows)

    def write_aggregate(self, path, reference=None):
        rows = self.aggregate() if reference is None else self.relative(reference)
        head = ["method", "param", "mean_mae", "std_mae"] if reference is None else \
            ["method", "param", "mean_rel", "std_rel"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(head)
            w.writerows([m, repr(p), repr(a), repr(b)] for m, p, a, b in rows)


def degradation_trend(table: ResultsTable, truth: float, method: str = "ours") -> float:
    """Spearman correlation between mean relative MAE and ``|assumed - truth|``."""
    rel = [(p, mean) for m, p, mean, _ in table.relative(truth) if m == method]
    dist = [abs(p - truth) for p, _ in rel]
    return float(spearmanr(dist, [mean for _, mean in rel]).statistic)


# -- sweeps ----------------------------------------------------------------

# spawn-key slots for per-replication substreams
_GRAPH, _WEIGHTS, _TRAIN_SEEDS, _CASCADES, _TEST_SEEDS, _TRUTH, _CORRUPT, _FIT, _RATES = range(9)


@dataclass
class _Instance:
    spec: DiffusionSpec
    cascades: list
    test_x: np.ndarray
    truth: GroundTruth


def build_instance(cfg: ExperimentConfig, rep: int) -> _Instance:
    """Graph, complete training cascades, test seed sets and their ground truth for one replication."""
    ks = KroneckerSpec(np.reshape(cfg.kron_seed, (2, 2)), cfg.power, cfg.edges)
    g = kronecker_generate(ks, stream(cfg.seed, rep, _GRAPH))
    g = assign_weights(g, cfg.scheme, stream(cfg.seed, rep, _WEIGHTS))
    spec = DiffusionSpec(cfg.kind, g, cfg.window if cfg.kind == "cic" else None)
    n = g.n
    max_size = min(cfg.max_seed_size, n)
    train = sample_seed_sets(n, cfg.cascades, cfg.seed_exponent, max_size,
                             stream(cfg.seed, rep, _TRAIN_SEEDS))
    cascades = generate_cascades(spec, train, np.random.SeedSequence(cfg.seed, spawn_key=(rep, _CASCADES)))
    test = sample_seed_sets(n, cfg.test_sets, cfg.seed_exponent, max_size,
                            stream(cfg.seed, rep, _TEST_SEEDS))
    truth = ground_truth(spec, test, cfg.truth_samples, stream(cfg.seed, rep, _TRUTH))
    return _Instance(spec, cascades, indicator(test, n), truth)


def predicted_totals(method, observed, n, assumed, cfg, rep, x, threads=1, rates=None):
    if method in ("ours", "influlearner"):
        r = 1.0 if method == "influlearner" else assumed
        profile = RetentionProfile(rates, r) if rates is not None else RetentionProfile.uniform(n, r)
        model = learner.train_all(observed, n, profile, cfg.K, cfg.train_config(),
                                  stream(cfg.seed, rep, _FIT), threads=threads)
        return learner.predict_many(model, x).sum(axis=1)
    if method == "logistic":
        return baselines.train_logistic_all(observed, n, cfg.l2).predict_many(x).sum(axis=1)
    if method == "linear":
        return baselines.train_linear(observed, n, cfg.l2).predict_total(x)
    raise ValueError(f"unknown method {method!r}")


def run_retention_sweep(cfg: ExperimentConfig, threads: int = 1, progress=None) -> ResultsTable:
    """MAE of every method per retention rate; the loss draws are shared across rates."""
    table = ResultsTable()
    for rep in range(cfg.replications):
        inst = build_instance(cfg, rep)
        n = inst.spec.n
        for r in cfg.retention_grid:
            observed = corrupt_all(inst.cascades, RetentionProfile.uniform(n, r),
                                   stream(cfg.seed, rep, _CORRUPT))
            for method in cfg.methods:
                tot = predicted_totals(method, observed, n, r, cfg, rep, inst.test_x, threads)
                table.add(method, r, rep, mae_total(tot, inst.truth.totals))
                _report(progress, table)
    return table


def run_misspecification_sweep(cfg: ExperimentConfig, threads: int = 1, progress=None) -> ResultsTable:
    """Train with every assumed rate on data lost at ``cfg.true_retention``."""
    table = ResultsTable()
    for rep in range(cfg.replications):
        inst = build_instance(cfg, rep)
        n = inst.spec.n
        observed = corrupt_all(inst.cascades, RetentionProfile.uniform(n, cfg.true_retention),
                               stream(cfg.seed, rep, _CORRUPT))
        for a in cfg.assumed_grid:
            tot = predicted_totals("ours", observed, n, a, cfg, rep, inst.test_x, threads)
            table.add("ours", a, rep, mae_total(tot, inst.truth.totals))
            _report(progress, table)
    return table


def run_nonuniform_sweep(cfg: ExperimentConfig, threads: int = 1, progress=None) -> ResultsTable:
    """Per-node rates drawn around ``cfg.true_retention``; training assumes the scalar mean."""
    table = ResultsTable()
    for rep in range(cfg.replications):
        inst = build_instance(cfg, rep)
        n = inst.spec.n
        for sigma in cfg.sigma_grid:
            # same rate and loss streams for every sigma, so sigma=0 is the paired reference
            profile = draw_rates(n, cfg.true_retention, sigma, cfg.sigma_dist,
                                 stream(cfg.seed, rep, _RATES))
            observed = corrupt_all(inst.cascades, profile, stream(cfg.seed, rep, _CORRUPT))
            tot = predicted_totals("ours", observed, n, cfg.true_retention, cfg, rep,
                                   inst.test_x, threads)
            table.add("ours", sigma, rep, mae_total(tot, inst.truth.totals))
            _report(progress, table)
    return table


SWEEPS = {
    "retention": run_retention_sweep,
    "misspecification": run_misspecification_sweep,
    "nonuniform": run_nonuniform_sweep,
}


def _report(progress, table):
    m, p, rep, mae = table.rows[-1]
    log.info("%s param=%g rep=%d mae=%.4f", m, p, rep, mae)
    if progress is not None:
        progress(table.rows[-1])
