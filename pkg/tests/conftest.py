import numpy as np
import pytest

from cascade_lab.diffusion import DiffusionSpec
from cascade_lab.graph import DirectedGraph


def random_tiny_graph(rng, max_nodes=5, max_edges=8):
    n = int(rng.integers(2, max_nodes + 1))
    pairs = [(u, v) for u in range(n) for v in range(n) if u != v]
    m = int(rng.integers(1, min(max_edges, len(pairs)) + 1))
    chosen = rng.choice(len(pairs), size=m, replace=False)
    return n, [pairs[i] for i in sorted(chosen)]


def dlt_weights(rng, n, edges):
    """Random in-weights with per-node sums strictly below 1."""
    w = np.zeros(len(edges))
    for v in range(n):
        idx = [e for e, (_, b) in enumerate(edges) if b == v]
        if idx:
            share = rng.dirichlet(np.ones(len(idx) + 1))
            w[idx] = share[:-1]
    return w


def random_tiny_spec(rng, kind, max_nodes=5, max_edges=8):
    n, edges = random_tiny_graph(rng, max_nodes, max_edges)
    if kind == "dic":
        w = rng.uniform(0, 1, size=len(edges))
    else:
        w = dlt_weights(rng, n, edges)
    return DiffusionSpec(kind, DirectedGraph.from_edges(n, edges, w))


def random_seed_set(rng, n):
    k = int(rng.integers(1, n + 1))
    return frozenset(rng.choice(n, size=k, replace=False).tolist())


@pytest.fixture
def chain_dic():
    return DiffusionSpec("dic", DirectedGraph.from_edges(3, [(0, 1), (1, 2)], [0.5, 0.5]))


@pytest.fixture
def diamond_dic():
    # u=0 -> v=1 directly, and 0 -> x=2 -> 1
    return DiffusionSpec("dic", DirectedGraph.from_edges(3, [(0, 1), (0, 2), (2, 1)], [0.5, 0.5, 0.5]))


@pytest.fixture
def fork_dlt():
    # u1=0, u2=1 both point at v=2
    return DiffusionSpec("dlt", DirectedGraph.from_edges(3, [(0, 2), (1, 2)], [0.3, 0.4]))


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Criterion number -> (passed, detail); printed in the terminal summary."""
    return request.config.stash.setdefault(ACCEPTANCE, {})


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(ACCEPTANCE, {})
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(log):
        ok, detail = log[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
