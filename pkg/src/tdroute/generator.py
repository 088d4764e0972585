"""Deterministic synthetic road-like instances.

All randomness comes from a counter-based hash keyed by ``(seed, stream,
entity)``, so every edge's attributes are independent of generation order.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import minimum_spanning_tree

from .graph import INF, PERIOD, Graph, TravelTimeFunctions
from .traffic import LiveOverlay

HOUR = 3_600_000
MINUTE = 60_000

# hash streams
_S_DELETE, _S_SPLIT, _S_LEN, _S_SPEED, _S_TREE = 1, 2, 3, 4, 5
_S_TD, _S_PEAK = 10, 11
_S_INCIDENT, _S_BLOCK, _S_SLOW = 20, 21, 22


def _mix(x: np.ndarray) -> np.ndarray:
    x = x + np.uint64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def hash64(seed: int, stream: int, ids) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.uint64)
    with np.errstate(over="ignore"):
        key = _mix(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) * np.uint64(0x100000001B3)
                   + np.uint64(stream))
        return _mix(ids ^ key)


def uniform(seed: int, stream: int, ids) -> np.ndarray:
    """Uniform floats in [0, 1) per entity."""
    return (hash64(seed, stream, ids) >> np.uint64(11)).astype(np.float64) / float(1 << 53)


@dataclass
class GenConfig:
    seed: int = 1
    rows: int = 50
    cols: int = 50
    delete_fraction: float = 0.15
    max_subdivisions: int = 22
    block_m: tuple[float, float] = (1000.0, 2500.0)
    urban_kmh: tuple[float, float] = (30.0, 60.0)
    highway_every: int = 8
    highway_span: int = 3
    highway_kmh: float = 100.0
    td_fraction: float = 0.38
    peaks: tuple[tuple[float, float], ...] = ((8.0, 1.0), (17.5, 1.5))  # (center h, width h)
    peak_amplitude: tuple[float, float] = (0.2, 1.5)
    incidents: int = 600
    blocked_fraction: float = 0.02
    slowdown: tuple[float, float] = (1.5, 4.0)
    tau_now: int = 7 * HOUR + 30 * MINUTE
    horizon: int = HOUR

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        d = dict(d)
        for k in ("block_m", "urban_kmh", "peak_amplitude", "slowdown"):
            if k in d:
                d[k] = tuple(d[k])
        if "peaks" in d:
            d["peaks"] = tuple(tuple(p) for p in d["peaks"])
        return cls(**d)


def _travel_ms(length_m, kmh):
    return np.maximum(1, np.round(np.asarray(length_m) * 3600.0 / np.asarray(kmh))).astype(np.int64)


def gen_network(cfg: GenConfig) -> tuple[Graph, np.ndarray]:
    """Perturbed bidirectional grid with subdivided streets and a highway
    overlay; returns the graph and free-flow travel times (ms)."""
    r, c = cfg.rows, cfg.cols
    if r < 1 or c < 1 or r * c < 2:
        raise ValueError("grid needs at least two intersections")
    seed = cfg.seed
    idx = np.arange(r * c).reshape(r, c)
    su = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    sv = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    nseg = len(su)
    seg_ids = np.arange(nseg)

    # keep a random spanning tree so deletions never disconnect the grid
    tw = uniform(seed, _S_TREE, seg_ids) + 1e-9
    tree = minimum_spanning_tree(coo_matrix((tw, (su, sv)), shape=(r * c, r * c)).tocsr()).tocoo()
    in_tree = np.zeros(nseg, dtype=bool)
    key = {(int(a), int(b)): i for i, (a, b) in enumerate(zip(su, sv))}
    for a, b in zip(tree.row, tree.col):
        i = key.get((int(a), int(b)), key.get((int(b), int(a))))
        in_tree[i] = True
    keep = in_tree | (uniform(seed, _S_DELETE, seg_ids) >= cfg.delete_fraction)
    su, sv, seg_ids = su[keep], sv[keep], seg_ids[keep]

    length = cfg.block_m[0] + (cfg.block_m[1] - cfg.block_m[0]) * uniform(seed, _S_LEN, seg_ids)
    speed = cfg.urban_kmh[0] + (cfg.urban_kmh[1] - cfg.urban_kmh[0]) * uniform(seed, _S_SPEED, seg_ids)
    pieces = 1 + (uniform(seed, _S_SPLIT, seg_ids) * (cfg.max_subdivisions + 1)).astype(np.int64)
    pieces = np.minimum(pieces, cfg.max_subdivisions + 1)

    n_inter = r * c
    n = n_inter + int((pieces - 1).sum())
    tails, heads, tts = [], [], []
    next_id = n_inter
    for a, b, k, ln, sp in zip(su.tolist(), sv.tolist(), pieces.tolist(), length.tolist(),
                               speed.tolist()):
        chain = [a] + list(range(next_id, next_id + k - 1)) + [b]
        next_id += k - 1
        tt = int(_travel_ms(ln / k, sp))
        for x, y in zip(chain[:-1], chain[1:]):
            tails += [x, y]
            heads += [y, x]
            tts += [tt, tt]

    # highways along every few rows and columns, skipping intersections
    he, span = cfg.highway_every, cfg.highway_span
    if he > 0 and span > 0:
        mean_block = 0.5 * (cfg.block_m[0] + cfg.block_m[1])
        hw_tt = int(_travel_ms(mean_block * span, cfg.highway_kmh))
        lines = [idx[i, :] for i in range(he // 2, r, he)] + [idx[:, j] for j in range(he // 2, c, he)]
        for line in lines:
            for p in range(0, len(line) - span, span):
                x, y = int(line[p]), int(line[p + span])
                tails += [x, y]
                heads += [y, x]
                tts += [hw_tt, hw_tt]

    tails = np.asarray(tails, dtype=np.int64)
    heads = np.asarray(heads, dtype=np.int64)
    g, perm = Graph.from_edges(n, tails, heads)
    free = np.asarray(tts, dtype=np.int64)[perm]
    return g, free


def _rush_profile(free: int, amps, centers, widths):
    """Breakpoints of free * (1 + sum of raised-cosine bumps), FIFO-repaired."""
    pts = {0}
    for cen, wid in zip(centers, widths):
        for k in range(-4, 5):
            pts.add(int(round(cen + k * wid / 4)) % PERIOD)
    dep = np.array(sorted(pts), dtype=np.int64)
    val = np.full(len(dep), float(free))
    for a, cen, wid in zip(amps, centers, widths):
        d = np.abs(((dep - cen + PERIOD // 2) % PERIOD) - PERIOD // 2)
        bump = np.where(d < wid, 0.5 * (1 + np.cos(np.pi * d / wid)), 0.0)
        val += free * a * bump
    tt = np.maximum(np.round(val).astype(np.int64), free)
    # FIFO repair: travel time may drop at most as fast as time passes
    for _ in range(2):
        for i in range(len(dep)):
            j = (i + 1) % len(dep)
            gap = (dep[j] - dep[i]) % PERIOD or PERIOD
            if tt[j] < tt[i] - gap:
                tt[j] = tt[i] - gap
    return list(zip(dep.tolist(), tt.tolist()))


def gen_predictions(cfg: GenConfig, g: Graph, free: np.ndarray) -> TravelTimeFunctions:
    """Rush-hour profiles on a fraction of edges, free flow elsewhere."""
    seed = cfg.seed
    ids = np.arange(g.m)
    td = uniform(seed, _S_TD, ids) < cfg.td_fraction
    funcs = []
    lo, hi = cfg.peak_amplitude
    for e in range(g.m):
        f = int(free[e])
        if not td[e]:
            funcs.append([(0, f)])
            continue
        u = uniform(seed, _S_PEAK, np.arange(4 * len(cfg.peaks)) + 64 * e)
        amps, centers, widths = [], [], []
        for i, (ch, wh) in enumerate(cfg.peaks):
            amps.append(lo + (hi - lo) * u[4 * i])
            centers.append(int((ch + (u[4 * i + 1] - 0.5)) * HOUR))
            widths.append(int(wh * (0.75 + 0.5 * u[4 * i + 2]) * HOUR))
        funcs.append(_rush_profile(f, amps, centers, widths))
    return TravelTimeFunctions.from_lists(funcs)


def gen_live(cfg: GenConfig, g: Graph, ttf: TravelTimeFunctions,
             tau_now: int | None = None, seed: int | None = None) -> LiveOverlay:
    """Incidents on hash-selected edges, each slower than the prediction at
    ``tau_now``; a fraction is blocked outright."""
    tau_now = cfg.tau_now if tau_now is None else int(tau_now)
    seed = cfg.seed if seed is None else seed
    count = min(cfg.incidents, g.m)
    if count <= 0:
        return LiveOverlay.empty(tau_now)
    ids = np.arange(g.m)
    chosen = np.sort(np.argsort(hash64(seed, _S_INCIDENT, ids), kind="stable")[:count])
    blocked = uniform(seed, _S_BLOCK, chosen) < cfg.blocked_fraction
    slow = cfg.slowdown[0] + (cfg.slowdown[1] - cfg.slowdown[0]) * uniform(seed, _S_SLOW, chosen)
    entries = []
    for e, b, f in zip(chosen.tolist(), blocked.tolist(), slow.tolist()):
        p = ttf.evaluate(e, tau_now)
        lv = INF if b else max(int(p * f), p + 1)
        entries.append((e, lv, tau_now + cfg.horizon))
    return LiveOverlay.build(ttf, tau_now, entries)


def generate(cfg: GenConfig):
    g, free = gen_network(cfg)
    ttf = gen_predictions(cfg, g, free)
    return g, free, ttf, gen_live(cfg, g, ttf)
