"""Loss-unaware regression baselines: per-node logistic and total-influence linear."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, log_expit

from .features import observed_matrix, seed_matrix

DEFAULT_L2 = 1e-4
# bias for nodes never observed as non-seeds; finite so model files stay valid JSON
_NEVER = -50.0


@dataclass(frozen=True, eq=False)
class LogisticModel:
    """Row ``v`` of ``weights`` and ``bias[v]`` give ``P(v active | S) = expit(chi_S . c_v + b_v)``."""

    weights: np.ndarray
    bias: np.ndarray

    @property
    def n(self) -> int:
        return len(self.bias)

    def predict_many(self, seed_matrix: np.ndarray) -> np.ndarray:
        x = np.asarray(seed_matrix, dtype=bool)
        p = expit(x.astype(float) @ self.weights.T + self.bias)
        p[x] = 1.0
        return p

    def to_dict(self) -> dict:
        return {"method": "logistic", "n": self.n,
                "weights": self.weights.tolist(), "bias": self.bias.tolist()}


@dataclass(frozen=True, eq=False)
class LinearModel:
    weights: np.ndarray
    bias: float

    def predict_total(self, seed_matrix: np.ndarray) -> np.ndarray:
        return np.asarray(seed_matrix, dtype=float) @ self.weights + self.bias

    def to_dict(self) -> dict:
        return {"method": "linear", "n": len(self.weights),
                "weights": self.weights.tolist(), "bias": float(self.bias)}


def logistic_objective(params, x, y, l2):
    """Mean logistic loss plus ``l2/2 |c|^2`` (bias unpenalized); returns ``(value, gradient)``."""
    c, b = params[:-1], params[-1]
    z = x @ c + b
    loss = -(y * log_expit(z) + (1 - y) * log_expit(-z)).mean() + 0.5 * l2 * (c @ c)
    resid = (expit(z) - y) / len(y)
    grad = np.append(x.T @ resid + l2 * c, resid.sum())
    return loss, grad


def fit_logistic_row(x, y, l2=DEFAULT_L2):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    res = minimize(logistic_objective, np.zeros(x.shape[1] + 1), args=(x, y, l2),
                   jac=True, method="L-BFGS-B", options={"maxiter": 1000})
    return res.x[:-1], res.x[-1]


def train_logistic(cascades, v: int, l2: float = DEFAULT_L2, n: int | None = None):
    """Fit node ``v``'s row from cascades where it is not a seed, labels as observed."""
    if not cascades:
        raise ValueError("need at least one cascade")
    n = n if n is not None else 1 + max(max(c.observed) for c in cascades)
    seeds = seed_matrix(cascades, n)
    observed = observed_matrix(cascades, n)
    keep = ~seeds[:, v]
    if not keep.any():
        return np.zeros(n), _NEVER
    return fit_logistic_row(seeds[keep], observed[keep, v], l2)


def train_logistic_all(cascades, n: int, l2: float = DEFAULT_L2) -> LogisticModel:
    seeds = seed_matrix(cascades, n)
    observed = observed_matrix(cascades, n)
    weights = np.zeros((n, n))
    bias = np.zeros(n)
    for v in range(n):
        keep = ~seeds[:, v]
        if keep.any():
            weights[v], bias[v] = fit_logistic_row(seeds[keep], observed[keep, v], l2)
        else:
            bias[v] = _NEVER
    return LogisticModel(weights, bias)


def train_linear(cascades, n: int, l2: float = DEFAULT_L2) -> LinearModel:
    """Ridge regression of observed cascade size on the seed indicator, via normal equations."""
    if not cascades:
        raise ValueError("need at least one cascade")
    x = seed_matrix(cascades, n).astype(float)
    y = np.array([len(c.observed) for c in cascades], dtype=float)
    a = np.column_stack([x, np.ones(len(y))])
    gram = a.T @ a
    gram[:n, :n] += l2 * np.eye(n)
    if l2 == 0 and np.linalg.matrix_rank(gram) < n + 1:
        raise np.linalg.LinAlgError("singular normal equations; use a positive ridge")
    sol = np.linalg.solve(gram, a.T @ y)
    return LinearModel(sol[:n], float(sol[n]))


def write_baseline(path, model):
    Path(path).write_text(json.dumps(model.to_dict()) + "\n", encoding="utf-8")


def baseline_from_dict(d: dict):
    if d.get("method") == "logistic":
        return LogisticModel(np.asarray(d["weights"], dtype=float).reshape(d["n"], d["n"]),
                             np.asarray(d["bias"], dtype=float))
    if d.get("method") == "linear":
        return LinearModel(np.asarray(d["weights"], dtype=float), float(d["bias"]))
    raise ValueError(f"unknown baseline method {d.get('method')!r}")
