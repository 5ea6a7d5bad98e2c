"""Random loss of non-seed activations and per-node retention rates."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diffusion import Cascade


class ObservationError(ValueError):
    pass


@dataclass(frozen=True)
class IncompleteCascade:
    seeds: frozenset
    observed: frozenset

    def __post_init__(self):
        object.__setattr__(self, "seeds", frozenset(int(x) for x in self.seeds))
        object.__setattr__(self, "observed", frozenset(int(x) for x in self.observed))
        if not self.seeds <= self.observed:
            raise ObservationError("seeds must be contained in the observed set")


@dataclass(frozen=True, eq=False)
class RetentionProfile:
    """Per-node retention rates plus the mean rate they were drawn around."""

    rates: np.ndarray
    mean: float

    def __post_init__(self):
        rates = np.array(self.rates, dtype=float).reshape(-1)
        if np.any(rates < 0) or np.any(rates > 1) or not np.all(np.isfinite(rates)):
            raise ObservationError("retention rates must lie in [0, 1]")
        rates.setflags(write=False)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "mean", float(self.mean))

    @classmethod
    def uniform(cls, n: int, r: float) -> "RetentionProfile":
        return cls(np.full(n, float(r)), r)

    @property
    def n(self) -> int:
        return len(self.rates)

    def is_uniform(self) -> bool:
        return bool(np.all(self.rates == self.mean))


def corrupt(c: Cascade, profile: RetentionProfile, rng: np.random.Generator) -> IncompleteCascade:
    # one uniform per lost-able node, ascending id order
    kept = set(c.seeds)
    for v in sorted(c.active - c.seeds):
        if rng.random() < profile.rates[v]:
            kept.add(v)
    return IncompleteCascade(c.seeds, frozenset(kept))


def corrupt_all(cascades, profile: RetentionProfile, rng: np.random.Generator):
    return [corrupt(c, profile, rng) for c in cascades]


def draw_rates(n: int, mean: float, sigma: float, dist: str, rng: np.random.Generator) -> RetentionProfile:
    """Draw per-node rates around ``mean``; out-of-range draws are clamped to [0, 1]."""
    if not 0 <= mean <= 1:
        raise ObservationError("mean retention rate must lie in [0, 1]")
    if sigma < 0:
        raise ObservationError("sigma must be non-negative")
    if dist == "uniform":
        rates = rng.uniform(mean - sigma, mean + sigma, size=n)
    elif dist == "gaussian":
        rates = rng.normal(mean, sigma, size=n)
    else:
        raise ObservationError(f"unknown rate distribution {dist!r}")
    return RetentionProfile(np.clip(rates, 0.0, 1.0), mean)


# -- files -----------------------------------------------------------------


def write_incomplete(path, cascades):
    with open(path, "w", encoding="utf-8") as fh:
        for c in cascades:
            fh.write(json.dumps({"seeds": sorted(c.seeds), "observed": sorted(c.observed)}) + "\n")


def read_incomplete(path):
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            d = json.loads(line)
            out.append(IncompleteCascade(d["seeds"], d["observed"]))
    return out


def write_metadata(path, retention_mean: float, rates_file=None):
    d = {"retention_mean": float(retention_mean)}
    if rates_file is not None:
        d["rates_file"] = str(rates_file)
    Path(path).write_text(json.dumps(d) + "\n", encoding="utf-8")


def read_metadata(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_rates(path, profile: RetentionProfile):
    Path(path).write_text(json.dumps(profile.rates.tolist()) + "\n", encoding="utf-8")


def read_rates(path, mean: float | None = None) -> RetentionProfile:
    rates = np.asarray(json.loads(Path(path).read_text(encoding="utf-8")), dtype=float)
    return RetentionProfile(rates, rates.mean() if mean is None else mean)
