"""Noise-corrected influence learner over sampled reachability features.

Each node's influence function is a convex combination of
``min(1, |S & T_k|)`` basis functions, squeezed into ``[lam, 1 - lam]``,
and fit by maximizing an adjusted log-likelihood on the probability
simplex with exponentiated gradient ascent.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import features as ft
from .features import FeatureBank
from .observation import RetentionProfile

LOSSES = ("corrected", "paper-literal")


class TrainingError(RuntimeError):
    def __init__(self, msg, node=None):
        super().__init__(msg if node is None else f"node {node}: {msg}")
        self.node = node


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 1e-3
    step: float = 1.0
    max_iter: int = 2000
    tol: float = 1e-8
    loss: str = "corrected"
    alpha: float = ft.DEFAULT_ALPHA
    floor: float = ft.DEFAULT_FLOOR
    em_iters: int = ft.DEFAULT_EM_ITERS

    def __post_init__(self):
        if not 0 < self.lam < 0.5:
            raise ValueError("lam must lie in (0, 0.5)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")


# -- adjusted log-likelihood ---------------------------------------------------


def adjusted_loss(t, y, r, variant: str = "corrected"):
    """Log-likelihood surrogate whose expectation over the lossy label is ``y log t + (1-y) log(1-t)``.

    ``variant="paper-literal"`` keeps the alternative weighting
    ``(2r - 1) / r`` on the negative term, which is not unbiased for r < 1.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    r = np.asarray(r, dtype=float)
    log_t, log_1t = np.log(t), np.log1p(-t)
    if variant == "corrected":
        pos = log_t / r - (1 - r) / r * log_1t
        neg = log_1t
    elif variant == "paper-literal":
        pos = log_t / r
        neg = (2 * r - 1) / r * log_1t
    else:
        raise ValueError(f"unknown loss variant {variant!r}")
    return y * pos + (1 - y) * neg


def adjusted_loss_grad(t, y, r, variant: str = "corrected"):
    """Derivative of :func:`adjusted_loss` with respect to ``t``."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if variant == "corrected":
        pos = 1 / (r * t) + (1 - r) / r / (1 - t)
        neg = -1 / (1 - t)
    else:
        pos = 1 / (r * t)
        neg = -(2 * r - 1) / r / (1 - t)
    return y * pos + (1 - y) * neg


# -- per-node fit ------------------------------------------------------------


@dataclass
class _Problem:
    phi: np.ndarray      # (rows, K) basis values, deduplicated
    y: np.ndarray        # (rows,)
    w: np.ndarray        # (rows,) multiplicities / total
    r: float
    lam: float
    loss: str

    @classmethod
    def build(cls, phi, y, r, lam, loss):
        phi = np.asarray(phi, dtype=bool)
        y = np.asarray(y, dtype=bool)
        packed = np.packbits(np.column_stack([phi, y]), axis=1)
        keys = np.ascontiguousarray(packed).view(np.dtype((np.void, packed.shape[1]))).ravel()
        _, first, counts = np.unique(keys, return_index=True, return_counts=True)
        return cls(phi[first].astype(float), y[first].astype(float),
                   counts / counts.sum(), r, lam, loss)

    def predict(self, beta):
        return self.lam + (1 - 2 * self.lam) * (self.phi @ beta)

    def objective(self, beta):
        return float(self.w @ adjusted_loss(self.predict(beta), self.y, self.r, self.loss))

    def gradient(self, beta):
        return self.value_and_grad(beta)[1]

    def value_and_grad(self, beta):
        t = self.predict(beta)
        val = float(self.w @ adjusted_loss(t, self.y, self.r, self.loss))
        d = adjusted_loss_grad(t, self.y, self.r, self.loss)
        return val, (1 - 2 * self.lam) * (self.phi.T @ (self.w * d))


def _exp_gradient(prob: _Problem, K: int, cfg: TrainConfig):
    beta = np.full(K, 1.0 / K)
    obj, g = prob.value_and_grad(beta)
    if not np.isfinite(obj):
        raise TrainingError("non-finite objective; check lam")
    best, best_obj = beta, obj
    for it in range(1, cfg.max_iter + 1):
        scale = np.abs(g).max()
        if scale == 0:
            break
        # sup-norm normalized step keeps the schedule independent of loss scale
        z = np.log(beta + 1e-300) + cfg.step / np.sqrt(it) * g / scale
        z -= z.max()
        beta = np.exp(z)
        beta /= beta.sum()
        prev = obj
        obj, g = prob.value_and_grad(beta)
        if not np.isfinite(obj):
            raise TrainingError("non-finite objective; check lam")
        if obj > best_obj:
            best, best_obj = beta, obj
        if abs(obj - prev) < cfg.tol:
            break
    return best


def fit_beta(phi, y, r: float, cfg: TrainConfig) -> np.ndarray:
    """Maximize the mean adjusted log-likelihood over the simplex.

    ``phi`` is the ``(M, K)`` 0/1 basis matrix of the training cascades and
    ``y`` the observed activation labels of the target node.
    """
    phi = np.asarray(phi, dtype=float)
    K = phi.shape[1]
    if K == 1 or phi.shape[0] == 0:
        return np.full(K, 1.0 / K)
    prob = _Problem.build(phi, y, r, cfg.lam, cfg.loss)
    return _exp_gradient(prob, K, cfg)


def train_node(v: int, cascades, bank: FeatureBank, profile: RetentionProfile,
               cfg: TrainConfig = TrainConfig()) -> np.ndarray:
    n = bank.n
    seeds = ft.seed_matrix(cascades, n)
    observed = ft.observed_matrix(cascades, n)
    return _train_from_matrices(v, seeds, observed, bank, profile.rates[v], cfg)


def _train_from_matrices(v, seeds, observed, bank, r, cfg):
    keep = ~seeds[:, v]
    phi = ft.activations(bank, seeds[keep])
    try:
        return fit_beta(phi, observed[keep, v], r, cfg)
    except TrainingError as exc:
        raise TrainingError(str(exc), node=v) from None


# -- whole-graph model ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class InfluenceModel:
    lam: float
    retention_mean: float
    banks: tuple
    betas: tuple
    rates: np.ndarray | None = field(default=None)

    @property
    def n(self) -> int:
        return len(self.banks)

    def to_dict(self) -> dict:
        d = {"lambda": self.lam, "retention_mean": self.retention_mean, "n": self.n}
        if self.rates is not None:
            d["rates"] = [float(x) for x in self.rates]
        d["nodes"] = [
            {"v": v, "features": bank.node_sets(), "beta": [float(b) for b in beta]}
            for v, (bank, beta) in enumerate(zip(self.banks, self.betas))
        ]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "InfluenceModel":
        nodes = sorted(d["nodes"], key=lambda x: x["v"])
        n = int(d.get("n", len(nodes)))
        banks, betas = [], []
        for node in nodes:
            f = np.zeros((len(node["features"]), n), dtype=bool)
            for k, ids in enumerate(node["features"]):
                f[k, ids] = True
            banks.append(FeatureBank(int(node["v"]), f))
            betas.append(np.asarray(node["beta"], dtype=float))
        rates = d.get("rates")
        return cls(float(d["lambda"]), float(d["retention_mean"]), tuple(banks), tuple(betas),
                   None if rates is None else np.asarray(rates, dtype=float))


def _node_streams(rng: np.random.Generator, n: int):
    root = np.random.SeedSequence(int(rng.integers(2**63)))
    return root.spawn(n)


def train_all(cascades, graph, profile: RetentionProfile, K: int = ft.DEFAULT_K,
              cfg: TrainConfig = TrainConfig(), rng: np.random.Generator | None = None,
              threads: int = 1) -> InfluenceModel:
    """Fit every node independently; node ``v`` samples features from substream ``v``."""
    n = graph if isinstance(graph, int) else graph.n
    if profile.n != n:
        raise ValueError("retention profile size does not match the graph")
    rng = np.random.default_rng() if rng is None else rng
    streams = _node_streams(rng, n)
    seeds = ft.seed_matrix(cascades, n)
    observed = ft.observed_matrix(cascades, n)

    def one(v):
        r = profile.rates[v]
        if r <= 0:
            raise TrainingError("retention rate must be positive", node=v)
        marg = ft.marginals_from_matrices(seeds, observed, v, r, cfg.alpha, cfg.floor,
                                          cfg.em_iters)
        bank = ft.sample_features(marg, K, np.random.default_rng(streams[v]), target=v)
        return bank, _train_from_matrices(v, seeds, observed, bank, r, cfg)

    if threads > 1 and n > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, range(n)))
    else:
        results = [one(v) for v in range(n)]
    rates = None if profile.is_uniform() else profile.rates.copy()
    return InfluenceModel(cfg.lam, profile.mean, tuple(b for b, _ in results),
                          tuple(beta for _, beta in results), rates)


def predict_many(model: InfluenceModel, seed_matrix: np.ndarray) -> np.ndarray:
    """Predictions for an ``(M, n)`` seed indicator matrix; seeds predict 1."""
    x = np.asarray(seed_matrix, dtype=bool)
    out = np.empty(x.shape)
    for v, (bank, beta) in enumerate(zip(model.banks, model.betas)):
        out[:, v] = model.lam + (1 - 2 * model.lam) * (ft.activations(bank, x) @ beta)
    out[x] = 1.0
    return out


def predict(model: InfluenceModel, seeds):
    x = np.zeros((1, model.n), dtype=bool)
    x[0, list(seeds)] = True
    p = predict_many(model, x)[0]
    return p, float(p.sum())


def write_model(path, model: InfluenceModel):
    Path(path).write_text(json.dumps(model.to_dict()) + "\n", encoding="utf-8")


def read_model(path) -> InfluenceModel:
    return InfluenceModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
