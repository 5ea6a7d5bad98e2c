"""Directed graphs, stochastic Kronecker generation and the shadow-layer transform."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MODELS = ("dic", "dlt", "cic")

# resampling budget per requested edge before giving up
_ATTEMPTS_PER_EDGE = 1000


class GraphError(ValueError):
    pass


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype).reshape(-1)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DirectedGraph:
    """Weighted directed graph on nodes ``0..n-1``.

    Edges are stored as parallel arrays ``src``, ``dst`` and ``weights``.
    Instances are immutable; the arrays are flagged read-only.
    """

    n: int
    src: np.ndarray
    dst: np.ndarray
    weights: np.ndarray
    _in_edges: tuple = field(init=False, repr=False)
    _out_edges: tuple = field(init=False, repr=False)

    def __post_init__(self):
        src = _frozen(self.src, np.int64)
        dst = _frozen(self.dst, np.int64)
        w = _frozen(self.weights, np.float64)
        if not (len(src) == len(dst) == len(w)):
            raise GraphError("src, dst and weights must have equal length")
        if self.n < 0:
            raise GraphError("negative node count")
        if len(src):
            if src.min() < 0 or dst.min() < 0 or max(src.max(), dst.max()) >= self.n:
                raise GraphError("edge endpoint out of range")
            if np.any(src == dst):
                raise GraphError("self-loops are not allowed")
            keys = src * self.n + dst
            if len(np.unique(keys)) != len(keys):
                raise GraphError("duplicate edges are not allowed")
            if not np.all(np.isfinite(w)):
                raise GraphError("non-finite edge weight")
        object.__setattr__(self, "src", src)
        object.__setattr__(self, "dst", dst)
        object.__setattr__(self, "weights", w)
        ins = [[] for _ in range(self.n)]
        outs = [[] for _ in range(self.n)]
        for e, (u, v) in enumerate(zip(src.tolist(), dst.tolist())):
            outs[u].append(e)
            ins[v].append(e)
        object.__setattr__(self, "_in_edges", tuple(tuple(x) for x in ins))
        object.__setattr__(self, "_out_edges", tuple(tuple(x) for x in outs))

    @classmethod
    def from_edges(cls, n, edges, weights=None):
        edges = list(edges)
        src = [int(u) for u, _ in edges]
        dst = [int(v) for _, v in edges]
        if weights is None:
            weights = np.zeros(len(edges))
        return cls(n, src, dst, weights)

    @property
    def m(self) -> int:
        return len(self.src)

    def edges(self):
        return list(zip(self.src.tolist(), self.dst.tolist()))

    def in_edges(self, v):
        return self._in_edges[v]

    def out_edges(self, u):
        return self._out_edges[u]

    def in_degree(self):
        return np.bincount(self.dst, minlength=self.n)

    def in_weight_sums(self):
        return np.bincount(self.dst, weights=self.weights, minlength=self.n)

    def with_weights(self, weights) -> "DirectedGraph":
        return DirectedGraph(self.n, self.src, self.dst, weights)

    def __eq__(self, other):
        if not isinstance(other, DirectedGraph):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.src, other.src)
            and np.array_equal(self.dst, other.dst)
            and np.array_equal(self.weights, other.weights)
        )

    __hash__ = None


@dataclass(frozen=True)
class LayeredGraph:
    """A base graph plus one shadow node ``n + v`` per base node ``v``.

    ``shadow_rates[v]`` is the weight of the shadow edge ``(v, n + v)``.
    """

    base: DirectedGraph
    shadow_rates: np.ndarray

    @property
    def n(self) -> int:
        return 2 * self.base.n

    def shadow(self, v: int) -> int:
        return self.base.n + v

    def as_graph(self) -> DirectedGraph:
        """Flatten into a single ``DirectedGraph`` with ``2n`` nodes, base edges first."""
        n = self.base.n
        ids = np.arange(n)
        return DirectedGraph(
            2 * n,
            np.concatenate([self.base.src, ids]),
            np.concatenate([self.base.dst, ids + n]),
            np.concatenate([self.base.weights, self.shadow_rates]),
        )


@dataclass(frozen=True)
class KroneckerSpec:
    seed: tuple
    power: int
    edge_count: int

    def __post_init__(self):
        seed = np.asarray(self.seed, dtype=float).reshape(2, 2)
        if np.any(seed < 0) or np.any(seed > 1):
            raise GraphError("Kronecker seed entries must lie in [0, 1]")
        if self.power < 0:
            raise GraphError("power must be non-negative")
        object.__setattr__(self, "seed", tuple(map(tuple, seed.tolist())))
        n = 2**self.power
        if self.edge_count < 0 or self.edge_count > n * (n - 1):
            raise GraphError(
                f"infeasible edge_count {self.edge_count}: at most {n * (n - 1)} "
                f"distinct non-self-loop edges on {n} nodes"
            )

    @property
    def n(self) -> int:
        return 2**self.power


def kronecker_matrix(seed, power: int) -> np.ndarray:
    """``power``-fold Kronecker product of the 2x2 seed (unnormalized cell probabilities)."""
    seed = np.asarray(seed, dtype=float).reshape(2, 2)
    out = np.ones((1, 1))
    for _ in range(power):
        out = np.kron(out, seed)
    return out


def _drop_balls(seed, power, count, rng):
    # descend `power` levels, picking a quadrant with probability proportional to its cell
    probs = seed.reshape(-1) / seed.sum()
    quad = rng.choice(4, size=(count, power), p=probs)
    row_bits, col_bits = quad // 2, quad % 2
    scale = 1 << np.arange(power - 1, -1, -1, dtype=np.int64)
    return row_bits @ scale, col_bits @ scale


def kronecker_generate(spec: KroneckerSpec, rng: np.random.Generator) -> DirectedGraph:
    """Sample ``spec.edge_count`` distinct edges by ball dropping.

    Self-loops and repeated edges are rejected and resampled. Edges are
    returned in acceptance order with zero weights.
    """
    seed = np.asarray(spec.seed, dtype=float)
    n = spec.n
    if spec.edge_count == 0:
        return DirectedGraph(n, [], [], [])
    if seed.sum() <= 0:
        raise GraphError("Kronecker seed matrix has no positive cell")
    budget = _ATTEMPTS_PER_EDGE * spec.edge_count
    seen = set()
    src, dst = [], []
    attempts = 0
    while len(src) < spec.edge_count:
        if attempts >= budget:
            raise GraphError(
                f"gave up after {attempts} draws with {len(src)} of "
                f"{spec.edge_count} edges placed; seed matrix too concentrated"
            )
        batch = min(max(2 * (spec.edge_count - len(src)), 64), budget - attempts)
        rows, cols = _drop_balls(seed, spec.power, batch, rng)
        attempts += batch
        for u, v in zip(rows.tolist(), cols.tolist()):
            if u == v or (u, v) in seen:
                continue
            seen.add((u, v))
            src.append(u)
            dst.append(v)
            if len(src) == spec.edge_count:
                break
    return DirectedGraph(n, src, dst, np.zeros(len(src)))


def parse_scheme(scheme: str):
    """Parse ``dic-uniform:a,b``, ``cic-uniform:a,b`` or ``dlt-indegree``."""
    name, _, args = scheme.partition(":")
    if name == "dlt-indegree":
        if args:
            raise GraphError("dlt-indegree takes no arguments")
        return name, ()
    if name in ("dic-uniform", "cic-uniform"):
        try:
            a, b = (float(x) for x in args.split(","))
        except ValueError:
            raise GraphError(f"{name} needs two bounds, e.g. {name}:0,0.4") from None
        if a > b:
            raise GraphError(f"empty interval [{a}, {b}]")
        if name == "dic-uniform" and (a < 0 or b > 1):
            raise GraphError("dic-uniform bounds must lie in [0, 1]")
        if name == "cic-uniform" and a < 0:
            raise GraphError("cic-uniform rates must be non-negative")
        return name, (a, b)
    raise GraphError(f"unknown weight scheme {scheme!r}")


def scheme_model(scheme: str) -> str:
    return parse_scheme(scheme)[0].split("-")[0]


def assign_weights(g: DirectedGraph, scheme: str, rng: np.random.Generator) -> DirectedGraph:
    name, args = parse_scheme(scheme)
    if name == "dlt-indegree":
        deg = g.in_degree()
        return g.with_weights(1.0 / deg[g.dst] if g.m else [])
    a, b = args
    w = rng.uniform(a, b, size=g.m)
    if name == "cic-uniform":
        # rates must be strictly positive
        while np.any(w <= 0):
            bad = w <= 0
            w[bad] = rng.uniform(a, b, size=int(bad.sum()))
    return g.with_weights(w)


def transform_graph(g: DirectedGraph, rates) -> LayeredGraph:
    rates = np.broadcast_to(np.asarray(rates, dtype=float), (g.n,)).copy()
    if np.any(rates <= 0) or np.any(rates > 1):
        raise GraphError("shadow rates must lie in (0, 1]")
    rates.setflags(write=False)
    return LayeredGraph(g, rates)


def transform_cascades(cascades, n: int, rates, rng: np.random.Generator):
    """Map incomplete cascades on the base graph to cascades on the layered graph.

    Observed non-seeds get their shadow node deterministically; each seed's
    shadow node is included independently with probability ``rates[v]``.
    One uniform draw is consumed per seed, in ascending id order.
    """
    from .diffusion import Cascade

    rates = np.broadcast_to(np.asarray(rates, dtype=float), (n,))
    out = []
    for c in cascades:
        active = set(c.observed)
        for v in sorted(c.observed - c.seeds):
            active.add(n + v)
        for v in sorted(c.seeds):
            if rng.random() < rates[v]:
                active.add(n + v)
        out.append(Cascade(c.seeds, frozenset(active)))
    return out


# -- graph file ------------------------------------------------------------


def graph_to_dict(g: DirectedGraph, model: str, window: float | None = None) -> dict:
    if model not in MODELS:
        raise GraphError(f"unknown model {model!r}")
    d = {"n": int(g.n), "model": model}
    if model == "cic":
        if window is None:
            raise GraphError("CIC graphs need an observation window")
        d["window"] = float(window)
    d["edges"] = [[u, v, w] for (u, v), w in zip(g.edges(), g.weights.tolist())]
    return d


def graph_from_dict(d: dict):
    """Return ``(graph, model, window)`` from a parsed graph file."""
    model = d.get("model")
    if model not in MODELS:
        raise GraphError(f"unknown model {model!r}")
    edges = d.get("edges", [])
    g = DirectedGraph(
        int(d["n"]),
        [int(e[0]) for e in edges],
        [int(e[1]) for e in edges],
        [float(e[2]) for e in edges],
    )
    window = d.get("window")
    if model == "cic" and window is None:
        raise GraphError("CIC graph file lacks 'window'")
    return g, model, (None if window is None else float(window))


def write_graph(path, g: DirectedGraph, model: str, window=None):
    text = json.dumps(graph_to_dict(g, model, window), ensure_ascii=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_graph(path):
    return graph_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
