"""Reachability features: marginal source-to-target estimates and sampled node sets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .observation import RetentionProfile

DEFAULT_K = 200
DEFAULT_ALPHA = 0.1
DEFAULT_FLOOR = 1e-3
DEFAULT_EM_ITERS = 20


@dataclass(frozen=True, eq=False)
class FeatureBank:
    """K sampled node sets for one target node.

    ``features[k, u]`` is True when source ``u`` belongs to the k-th set,
    read as "u has a live path to the target".
    """

    target: int
    features: np.ndarray
    marginals: np.ndarray | None = None

    def __post_init__(self):
        f = np.array(self.features, dtype=bool)
        if f.ndim != 2 or f.shape[0] < 1:
            raise ValueError("a feature bank needs at least one feature")
        f.setflags(write=False)
        object.__setattr__(self, "features", f)

    @property
    def K(self) -> int:
        return self.features.shape[0]

    @property
    def n(self) -> int:
        return self.features.shape[1]

    def node_sets(self):
        return [np.flatnonzero(row).tolist() for row in self.features]


def seed_matrix(cascades, n: int) -> np.ndarray:
    x = np.zeros((len(cascades), n), dtype=bool)
    for i, c in enumerate(cascades):
        x[i, list(c.seeds)] = True
    return x


def observed_matrix(cascades, n: int) -> np.ndarray:
    x = np.zeros((len(cascades), n), dtype=bool)
    for i, c in enumerate(cascades):
        x[i, list(c.observed)] = True
    return x


def marginals_from_matrices(seeds, observed, v, rate, alpha=DEFAULT_ALPHA,
                            floor=DEFAULT_FLOOR, em_iters=0):
    """Vectorized estimator on precomputed ``(M, n)`` seed/observed indicators."""
    if not alpha > 0:
        raise ValueError("smoothing alpha must be positive")
    if not 0 < floor < 0.5:
        raise ValueError("floor must lie in (0, 0.5)")
    if em_iters > 0:
        return _noisy_or_em(seeds, observed, v, rate, alpha, floor, em_iters)
    as_seed = seeds[:, v]
    seen_lost_able = observed[:, v] & ~as_seed
    c_u = seeds.sum(axis=0).astype(float)
    # v as a seed is never lost, so those hits need no correction
    hits = seeds[as_seed].sum(axis=0) + seeds[seen_lost_able].sum(axis=0) / rate
    return np.clip((hits + alpha) / (c_u + 2 * alpha), floor, 1 - floor)


def _noisy_or_em(seeds, observed, v, rate, alpha, floor, iters):
    # v's own seeded cascades say nothing about who reaches v; seedless rows say nothing at all
    keep = ~seeds[:, v] & seeds.any(axis=1)
    x = seeds[keep].astype(float)
    y = observed[keep, v]
    c_u = x.sum(axis=0)
    p = np.clip((x[y].sum(axis=0) / rate + alpha) / (c_u + 2 * alpha), floor, 1 - floor)
    for _ in range(iters):
        hit = 1.0 - np.exp(x @ np.log1p(-p))
        # E[z_u | observation] / p_u: certain hit if seen, else the lost-hit posterior
        resp = np.where(y, 1.0 / hit, (1.0 - rate) / (1.0 - rate * hit))
        p = np.clip((p * (x.T @ resp) + alpha) / (c_u + 2 * alpha), floor, 1 - floor)
    return p


def estimate_marginals(cascades, v: int, profile: RetentionProfile,
                       alpha: float = DEFAULT_ALPHA, floor: float = DEFAULT_FLOOR,
                       em_iters: int = 0) -> np.ndarray:
    """Estimate, for every source u, the probability that u reaches ``v``.

    With ``em_iters=0`` this is the closed form: the count of cascades with
    u seeded and v observed, divided by v's retention rate to undo the
    one-sided loss (hits where v itself is a seed are taken raw), Laplace
    smoothed with ``alpha`` and clamped to ``[floor, 1 - floor]``.

    With ``em_iters > 0`` the closed form (restricted to cascades where v is
    not a seed) initializes EM under a noisy-OR model
    ``P(v observed | S) = r_v * (1 - prod_{u in S} (1 - p_u))``, which
    splits the credit for a hit among co-seeds instead of giving each of
    them a full count. On single-seed cascades both agree.
    """
    n = profile.n
    rate = profile.rates[v]
    if rate <= 0:
        raise ValueError(f"retention rate of node {v} must be positive")
    return marginals_from_matrices(
        seed_matrix(cascades, n), observed_matrix(cascades, n), v, rate, alpha, floor, em_iters
    )


def sample_features(marginals, K: int, rng: np.random.Generator, target: int = -1) -> FeatureBank:
    if K < 1:
        raise ValueError("K must be at least 1")
    p = np.asarray(marginals, dtype=float)
    return FeatureBank(target, rng.random((K, len(p))) < p, p)


def basis_eval(feature, seeds) -> int:
    """``min(1, |seeds & T|)`` for the node set T encoded by ``feature``."""
    feature = np.asarray(feature, dtype=bool)
    idx = list(seeds)
    if not idx:
        return 0
    if max(idx) >= len(feature) or min(idx) < 0:
        raise ValueError("seed id outside the feature's node range")
    return int(feature[idx].any())


def activations(bank: FeatureBank, seeds: np.ndarray) -> np.ndarray:
    """Basis values for many seed sets: ``(M, n)`` indicators -> ``(M, K)`` in {0, 1}."""
    seeds = np.asarray(seeds, dtype=float)
    return (seeds @ bank.features.T.astype(float) > 0).astype(float)
