"""DIC / DLT / CIC diffusion: simulation, live-edge sampling and influence.

All three models are progressive. The discrete-time models are simulated
round by round; the continuous-time model uses exponential edge delays and
an earliest-arrival relaxation cut off at the observation window.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .graph import DirectedGraph

KINDS = ("dic", "dlt", "cic")

MAX_DIC_EDGES = 22
MAX_DLT_CONFIGS = 4_000_000
_CHUNK = 1 << 16
_SUM_SLACK = 1e-9


class DiffusionError(ValueError):
    pass


@dataclass(frozen=True)
class DiffusionSpec:
    kind: str
    graph: DirectedGraph
    window: float | None = None

    def __post_init__(self):
        kind = self.kind.lower()
        object.__setattr__(self, "kind", kind)
        w = self.graph.weights
        if kind not in KINDS:
            raise DiffusionError(f"unknown diffusion kind {self.kind!r}")
        if kind in ("dic", "dlt"):
            if np.any(w < 0) or np.any(w > 1):
                raise DiffusionError(f"{kind.upper()} weights must lie in [0, 1]")
        if kind == "dlt":
            sums = self.graph.in_weight_sums()
            if np.any(sums > 1 + _SUM_SLACK):
                v = int(np.argmax(sums))
                raise DiffusionError(f"DLT in-weight sum {sums[v]:.6g} > 1 at node {v}")
        if kind == "cic":
            if np.any(w <= 0):
                raise DiffusionError("CIC rates must be strictly positive")
            if self.window is None or not self.window > 0:
                raise DiffusionError("CIC needs a positive observation window")

    @property
    def n(self) -> int:
        return self.graph.n


@dataclass(frozen=True)
class Cascade:
    seeds: frozenset
    active: frozenset

    def __post_init__(self):
        object.__setattr__(self, "seeds", frozenset(int(x) for x in self.seeds))
        object.__setattr__(self, "active", frozenset(int(x) for x in self.active))
        if not self.seeds <= self.active:
            raise DiffusionError("cascade seeds must be contained in the active set")


@dataclass(frozen=True, eq=False)
class LiveEdgeGraph:
    """Boolean live mask over the graph's edges; CIC samples also carry delays."""

    graph: DirectedGraph
    live: np.ndarray
    delays: np.ndarray | None = None

    def live_edges(self):
        idx = np.flatnonzero(self.live)
        return list(zip(self.graph.src[idx].tolist(), self.graph.dst[idx].tolist()))


def _check_seeds(n, seeds, allow_empty=False):
    seeds = frozenset(int(s) for s in seeds)
    if not seeds and not allow_empty:
        raise DiffusionError("seed set must be nonempty")
    for s in seeds:
        if not 0 <= s < n:
            raise DiffusionError(f"seed id {s} out of range for n={n}")
    return seeds


# -- simulation ------------------------------------------------------------


def simulate(spec: DiffusionSpec, seeds, rng: np.random.Generator, trace=None) -> Cascade:
    """Run one cascade from ``seeds`` and return the final active set.

    If ``trace`` is a list, the active set after every round (or, for CIC,
    after every activation in arrival order) is appended to it.
    """
    seeds = _check_seeds(spec.n, seeds)
    if spec.kind == "dic":
        active = _simulate_dic(spec.graph, seeds, rng, trace)
    elif spec.kind == "dlt":
        active = _simulate_dlt(spec.graph, seeds, rng, trace)
    else:
        active = _simulate_cic(spec.graph, seeds, spec.window, rng, trace)
    return Cascade(seeds, active)


def _simulate_dic(g, seeds, rng, trace):
    active = set(seeds)
    frontier = sorted(seeds)
    dst, w = g.dst, g.weights
    if trace is not None:
        trace.append(frozenset(active))
    while frontier:
        new = []
        for u in frontier:
            for e in g.out_edges(u):
                v = int(dst[e])
                if v in active:
                    continue
                if rng.random() < w[e]:
                    active.add(v)
                    new.append(v)
        frontier = sorted(new)
        if trace is not None and new:
            trace.append(frozenset(active))
    return active


def _simulate_dlt(g, seeds, rng, trace):
    theta = rng.random(g.n)
    load = np.zeros(g.n)
    active = set(seeds)
    frontier = sorted(seeds)
    dst, w = g.dst, g.weights
    if trace is not None:
        trace.append(frozenset(active))
    while frontier:
        touched = set()
        for u in frontier:
            for e in g.out_edges(u):
                v = int(dst[e])
                if v not in active:
                    load[v] += w[e]
                    touched.add(v)
        new = sorted(v for v in touched if load[v] > 0 and load[v] >= theta[v])
        active.update(new)
        frontier = new
        if trace is not None and new:
            trace.append(frozenset(active))
    return active


def _simulate_cic(g, seeds, window, rng, trace):
    dist = {s: 0.0 for s in seeds}
    heap = [(0.0, s) for s in sorted(seeds)]
    heapq.heapify(heap)
    done = set()
    dst, w = g.dst, g.weights
    while heap:
        d, u = heapq.heappop(heap)
        if u in done or d > window:
            continue
        done.add(u)
        if trace is not None:
            trace.append(frozenset(done))
        for e in g.out_edges(u):
            v = int(dst[e])
            if v in done:
                continue
            t = d + rng.exponential(1.0 / w[e])
            if t <= window and t < dist.get(v, math.inf):
                dist[v] = t
                heapq.heappush(heap, (t, v))
    return done


def generate_cascades(spec: DiffusionSpec, seed_sets, seed: int | np.random.SeedSequence):
    """Simulate one cascade per seed set, each with its own index-derived substream."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = ss.spawn(len(seed_sets))
    return [
        simulate(spec, s, np.random.default_rng(child))
        for s, child in zip(seed_sets, children)
    ]


# -- live-edge graphs ------------------------------------------------------


def sample_live_edge(spec: DiffusionSpec, rng: np.random.Generator) -> LiveEdgeGraph:
    g = spec.graph
    if spec.kind == "dic":
        return LiveEdgeGraph(g, rng.random(g.m) < g.weights)
    if spec.kind == "dlt":
        live = np.zeros(g.m, dtype=bool)
        u = rng.random(g.n)
        w = g.weights
        for v in range(g.n):
            acc = 0.0
            for e in g.in_edges(v):
                acc += w[e]
                if u[v] < acc:
                    live[e] = True
                    break
        return LiveEdgeGraph(g, live)
    delays = rng.exponential(1.0 / g.weights) if g.m else np.zeros(0)
    return LiveEdgeGraph(g, np.isfinite(delays), delays)


def reachable(live: LiveEdgeGraph, seeds, window: float | None = None) -> frozenset:
    g = live.graph
    seeds = _check_seeds(g.n, seeds, allow_empty=True)
    if not seeds:
        return frozenset()
    if live.delays is not None:
        if window is None:
            raise DiffusionError("CIC reachability needs a window")
        dist = {s: 0.0 for s in seeds}
        heap = [(0.0, s) for s in seeds]
        heapq.heapify(heap)
        done = set()
        while heap:
            d, u = heapq.heappop(heap)
            if u in done:
                continue
            done.add(u)
            for e in g.out_edges(u):
                if not live.live[e]:
                    continue
                v = int(g.dst[e])
                t = d + live.delays[e]
                if t <= window and t < dist.get(v, math.inf):
                    dist[v] = t
                    heapq.heappush(heap, (t, v))
        return frozenset(done)
    seen = set(seeds)
    stack = list(seeds)
    while stack:
        u = stack.pop()
        for e in g.out_edges(u):
            v = int(g.dst[e])
            if live.live[e] and v not in seen:
                seen.add(v)
                stack.append(v)
    return frozenset(seen)


def reachable_many(live: LiveEdgeGraph, seed_matrix: np.ndarray, window=None) -> np.ndarray:
    """Reachability for many seed sets at once.

    ``seed_matrix`` is a boolean ``(count, n)`` indicator matrix; the result
    has the same shape.
    """
    g = live.graph
    x = np.asarray(seed_matrix, dtype=bool)
    if x.shape[0] == 0 or g.m == 0:
        return x.copy()
    idx = np.flatnonzero(live.live)
    if live.delays is not None:
        if window is None:
            raise DiffusionError("CIC reachability needs a window")
        adj = csr_matrix((live.delays[idx], (g.src[idx], g.dst[idx])), shape=(g.n, g.n))
        out = np.zeros_like(x)
        for i, row in enumerate(x):
            seeds = np.flatnonzero(row)
            if len(seeds):
                d = dijkstra(adj, indices=seeds, min_only=True, limit=window)
                out[i] = d <= window
        return out
    adj = np.zeros((g.n, g.n))
    adj[g.src[idx], g.dst[idx]] = 1.0
    while True:
        nxt = x | (x @ adj > 0)
        if np.array_equal(nxt, x):
            return x
        x = nxt


# -- influence -------------------------------------------------------------


def _propagate(g, live, seeds_mask):
    # live: (batch, m) bool, seeds_mask: (n,) bool -> (batch, n) bool reach
    reach = np.repeat(seeds_mask[None, :], live.shape[0], axis=0)
    src, dst = g.src.tolist(), g.dst.tolist()
    changed = True
    while changed:
        changed = False
        for e, (u, v) in enumerate(zip(src, dst)):
            add = reach[:, u] & live[:, e] & ~reach[:, v]
            if add.any():
                reach[:, v] |= add
                changed = True
    return reach


def _dic_configs(g):
    m = g.m
    w = g.weights
    total = 1 << m
    for start in range(0, total, _CHUNK):
        masks = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        live = ((masks[:, None] >> np.arange(m)) & 1).astype(bool)
        prob = np.where(live, w, 1.0 - w).prod(axis=1)
        yield live, prob


def _dlt_configs(g):
    options = []
    for v in range(g.n):
        ins = list(g.in_edges(v))
        if ins:
            p = [g.weights[e] for e in ins]
            options.append((ins, np.array(p + [max(0.0, 1.0 - sum(p))])))
    radices = np.array([len(ins) + 1 for ins, _ in options], dtype=np.int64)
    total = int(np.prod(radices)) if len(radices) else 1
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        live = np.zeros((len(idx), g.m), dtype=bool)
        prob = np.ones(len(idx))
        rest = idx
        for (ins, p), radix in zip(options, radices):
            choice = rest % radix
            rest = rest // radix
            prob *= p[choice]
            for j, e in enumerate(ins):
                live[:, e] = choice == j
        yield live, prob


def exact_influence(spec: DiffusionSpec, seeds) -> np.ndarray:
    """Marginal activation probabilities by enumerating every live-edge graph."""
    g = spec.graph
    seeds = _check_seeds(g.n, seeds, allow_empty=True)
    if spec.kind == "cic":
        raise DiffusionError("exact influence is not available for CIC")
    if spec.kind == "dic":
        if g.m > MAX_DIC_EDGES:
            raise DiffusionError(f"DIC enumeration limited to {MAX_DIC_EDGES} edges, got {g.m}")
        configs = _dic_configs(g)
    else:
        n_configs = int(np.prod((g.in_degree() + 1).astype(float)))
        if n_configs > MAX_DLT_CONFIGS:
            raise DiffusionError(f"DLT enumeration limited to {MAX_DLT_CONFIGS} configurations")
        configs = _dlt_configs(g)
    mask = np.zeros(g.n, dtype=bool)
    mask[list(seeds)] = True
    out = np.zeros(g.n)
    for live, prob in configs:
        out += prob @ _propagate(g, live, mask)
    return out


def mc_influence(spec: DiffusionSpec, seeds, samples: int, rng: np.random.Generator):
    """Monte Carlo marginals over ``samples`` live-edge graphs; returns ``(marginals, total)``."""
    if samples < 1:
        raise DiffusionError("need at least one sample")
    seeds = _check_seeds(spec.n, seeds, allow_empty=True)
    acc = np.zeros(spec.n)
    for _ in range(samples):
        live = sample_live_edge(spec, rng)
        hit = reachable(live, seeds, spec.window)
        acc[list(hit)] += 1
    marg = acc / samples
    return marg, float(marg.sum())


# -- cascade file ----------------------------------------------------------


def write_cascades(path, cascades):
    with open(path, "w", encoding="utf-8") as fh:
        for c in cascades:
            fh.write(json.dumps({"seeds": sorted(c.seeds), "active": sorted(c.active)}) + "\n")


def read_cascades(path):
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            d = json.loads(line)
            out.append(Cascade(d["seeds"], d["active"]))
    return out
