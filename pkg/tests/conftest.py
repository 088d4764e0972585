from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra as sp_dijkstra

from tdroute.generator import GenConfig, generate
from tdroute.graph import INF, PERIOD, Graph, TravelTimeFunctions

ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


def random_graph(n: int, m: int, seed: int, max_w: int = 1000, symmetric: bool = False):
    """Simple directed graph with positive integer weights (edge order = CSR order)."""
    rng = np.random.default_rng(seed)
    pairs = set()
    tries = 0
    while len(pairs) < m and tries < 20 * m + 100:
        tries += 1
        u, v = (int(x) for x in rng.integers(0, n, 2))
        if u == v:
            continue
        pairs.add((u, v))
        if symmetric:
            pairs.add((v, u))
    pairs = sorted(pairs)
    tails = np.array([p[0] for p in pairs], dtype=np.int64)
    heads = np.array([p[1] for p in pairs], dtype=np.int64)
    g, perm = Graph.from_edges(n, tails, heads)
    w = rng.integers(1, max_w, len(pairs))
    return g, w[perm].astype(np.int64)  # perm[e] = input position of edge e


def scalar_apsp(g: Graph, weights) -> np.ndarray:
    """All-pairs scalar distances (INF where unreachable) via scipy."""
    w = np.asarray(weights, dtype=np.float64)
    mask = w < INF
    mat = sp.csr_matrix((w[mask], (g.tails()[mask], g.head[mask])), shape=(g.n, g.n))
    d = sp_dijkstra(mat, directed=True)
    out = np.full(d.shape, INF, dtype=np.int64)
    fin = np.isfinite(d)
    out[fin] = d[fin].astype(np.int64)
    return out


def random_ttf(m: int, seed: int, td_fraction: float = 0.5, max_bp: int = 6) -> TravelTimeFunctions:
    """Random FIFO-valid periodic functions (slopes kept well above -1)."""
    rng = np.random.default_rng(seed)
    funcs = []
    for _ in range(m):
        base = int(rng.integers(1000, 600_000))
        if rng.random() >= td_fraction:
            funcs.append([(0, base)])
            continue
        k = int(rng.integers(2, max_bp + 1))
        deps = np.sort(rng.choice(PERIOD // 60_000, size=k, replace=False)) * 60_000
        vals = (base + rng.integers(0, 3_600_000, k)).tolist()
        changed = True
        while changed:  # raise values until no segment falls faster than time passes
            changed = False
            for i in range(k):
                j = (i + 1) % k
                gap = int((deps[j] - deps[i]) % PERIOD) or PERIOD
                if vals[j] < vals[i] - gap:
                    vals[j] = vals[i] - gap
                    changed = True
        funcs.append(list(zip(deps.tolist(), vals)))
    ttf = TravelTimeFunctions.from_lists(funcs)
    ttf.validate()
    return ttf


SMALL_CFG = dict(rows=6, cols=6, max_subdivisions=3, highway_every=3, highway_span=2,
                 incidents=25, blocked_fraction=0.1, td_fraction=0.5)


@pytest.fixture(scope="session")
def small_instance():
    cfg = GenConfig(seed=7, **SMALL_CFG)
    g, free, ttf, live = generate(cfg)
    return cfg, g, free, ttf, live


MEDIUM_CFG = dict(rows=12, cols=12, max_subdivisions=4, incidents=120, blocked_fraction=0.05,
                  td_fraction=0.6)


@pytest.fixture(scope="session")
def medium_pipeline():
    """Generated instance of a few hundred vertices, preprocessed and updated."""
    from tdroute.engine import preprocess, update

    cfg = GenConfig(seed=3, **MEDIUM_CFG)
    g, free, ttf, live = generate(cfg)
    pre = preprocess(g, ttf)
    return cfg, g, ttf, live, pre, update(pre, ttf, live)


def sample_queries(g, cfg, count, seed, spread=3 * 3_600_000):
    rng = np.random.default_rng(seed)
    return [(int(rng.integers(0, g.n)), int(rng.integers(0, g.n)),
             cfg.tau_now + int(rng.integers(0, spread))) for _ in range(count)]
