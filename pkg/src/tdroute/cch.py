"""Customizable contraction hierarchies.

Everything inside the hierarchy lives in *rank space*: vertex ``r`` is the
vertex with rank ``r``. Each undirected augmented edge ("arc") is stored once,
at its lower endpoint, with an upward weight (lower -> higher) and a downward
weight (higher -> lower).
"""
from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .graph import INF, Graph, read_u32, write_u32
from .heap import heap_clear, heap_pop, heap_push, heap_update
from .ordering import order_from_rank, validate_rank


@njit(cache=True)
def find_arc(up_first_out, up_head, lo, hi):
    a = up_first_out[lo]
    b = up_first_out[lo + 1]
    while a < b:
        mid = (a + b) >> 1
        if up_head[mid] < hi:
            a = mid + 1
        else:
            b = mid
    if a < up_first_out[lo + 1] and up_head[a] == hi:
        return a
    return -1


@njit(cache=True)
def _count_triangles(up_first_out):
    n = up_first_out.shape[0] - 1
    total = 0
    for x in range(n):
        d = up_first_out[x + 1] - up_first_out[x]
        total += d * (d - 1) // 2
    return total


@njit(cache=True)
def _enumerate_triangles(up_first_out, up_head, tri_first, tri_lo, tri_hi, tri_top):
    n = up_first_out.shape[0] - 1
    k = 0
    for x in range(n):
        tri_first[x] = k
        lo_a = up_first_out[x]
        hi_a = up_first_out[x + 1]
        for i in range(lo_a, hi_a):
            for j in range(i + 1, hi_a):
                top = find_arc(up_first_out, up_head, up_head[i], up_head[j])
                if top < 0:
                    return -1
                tri_lo[k] = i
                tri_hi[k] = j
                tri_top[k] = top
                k += 1
    tri_first[n] = k
    return k


@njit(cache=True, nogil=True)
def _basic_customize(tri_lo, tri_hi, tri_top, tri_x, w_up, w_down, mid_up, mid_down):
    for k in range(tri_top.shape[0]):
        xl = tri_lo[k]
        xh = tri_hi[k]
        top = tri_top[k]
        # lower -> x -> higher
        c = np.int64(w_down[xl]) + np.int64(w_up[xh])
        if c < w_up[top]:
            w_up[top] = c if c < INF else INF
            mid_up[top] = tri_x[k]
        # higher -> x -> lower
        c = np.int64(w_down[xh]) + np.int64(w_up[xl])
        if c < w_down[top]:
            w_down[top] = c if c < INF else INF
            mid_down[top] = tri_x[k]


@njit(cache=True, nogil=True)
def _perfect_customize(tri_lo, tri_hi, tri_top, w_up, w_down):
    for k in range(tri_top.shape[0] - 1, -1, -1):
        xl = tri_lo[k]
        xh = tri_hi[k]
        top = tri_top[k]
        c = np.int64(w_up[xh]) + np.int64(w_down[top])
        if c < w_up[xl]:
            w_up[xl] = c
        c = np.int64(w_up[top]) + np.int64(w_down[xh])
        if c < w_down[xl]:
            w_down[xl] = c
        c = np.int64(w_up[xl]) + np.int64(w_up[top])
        if c < w_up[xh]:
            w_up[xh] = c
        c = np.int64(w_down[top]) + np.int64(w_down[xl])
        if c < w_down[xh]:
            w_down[xh] = c


@njit(cache=True)
def upward_search(up_first_out, up_head, w, alive, src, dist, stamp, gen,
                  hkeys, hids, hpos, visited):
    """Dijkstra from ``src`` over upward arcs with weights ``w``; returns the
    number of reached vertices, listed in ``visited``."""
    dist[src] = 0
    stamp[src] = gen
    size = heap_push(hkeys, hids, hpos, 0, src, 0)
    count = 0
    while size > 0:
        u, du, size = heap_pop(hkeys, hids, hpos, size)
        visited[count] = u
        count += 1
        for a in range(up_first_out[u], up_first_out[u + 1]):
            if not alive[a] or w[a] >= INF:
                continue
            v = up_head[a]
            nd = du + w[a]
            if stamp[v] != gen or nd < dist[v]:
                dist[v] = nd
                stamp[v] = gen
                if hpos[v] >= 0:
                    heap_update(hkeys, hids, hpos, size, v, nd)
                else:
                    size = heap_push(hkeys, hids, hpos, size, v, nd)
    return count


@njit(cache=True)
def _ch_query(up_first_out, up_head, w_up, w_down, alive_up, alive_down, s, t,
              fdist, fstamp, bdist, bstamp, gen, hkeys, hids, hpos, visited):
    upward_search(up_first_out, up_head, w_up, alive_up, s, fdist, fstamp, gen,
                  hkeys, hids, hpos, visited)
    best = np.int64(INF)
    bdist[t] = 0
    bstamp[t] = gen
    size = heap_push(hkeys, hids, hpos, 0, t, 0)
    while size > 0:
        u, du, size = heap_pop(hkeys, hids, hpos, size)
        if du >= best:
            break
        if fstamp[u] == gen:
            c = fdist[u] + du
            if c < best:
                best = c
        for a in range(up_first_out[u], up_first_out[u + 1]):
            if not alive_down[a] or w_down[a] >= INF:
                continue
            v = up_head[a]
            nd = du + w_down[a]
            if bstamp[v] != gen or nd < bdist[v]:
                bdist[v] = nd
                bstamp[v] = gen
                if hpos[v] >= 0:
                    heap_update(hkeys, hids, hpos, size, v, nd)
                else:
                    size = heap_push(hkeys, hids, hpos, size, v, nd)
    heap_clear(hids, hpos, size)
    return best if best < INF else np.int64(INF)


@dataclass
class AugmentedHierarchy:
    """Metric-independent CCH topology in rank space.

    ``edge_arc[e]``/``edge_up[e]`` place input edge ``e`` on its arc and
    direction; ``arc_edge_up``/``arc_edge_down`` is the reverse alignment
    (``-1`` where the arc direction has no input edge).
    """

    rank: np.ndarray
    order: np.ndarray
    up_first_out: np.ndarray
    up_head: np.ndarray
    edge_arc: np.ndarray
    edge_up: np.ndarray
    arc_edge_up: np.ndarray
    arc_edge_down: np.ndarray
    tri_first: np.ndarray
    tri_lo: np.ndarray
    tri_hi: np.ndarray
    tri_top: np.ndarray
    tri_x: np.ndarray

    @property
    def n(self) -> int:
        return len(self.rank)

    @property
    def num_arcs(self) -> int:
        return len(self.up_head)

    @property
    def num_triangles(self) -> int:
        return len(self.tri_top)

    def arc_tails(self) -> np.ndarray:
        return np.repeat(np.arange(self.n, dtype=np.int32), np.diff(self.up_first_out))

    def find_arc(self, a: int, b: int) -> int:
        lo, hi = (a, b) if a < b else (b, a)
        return int(find_arc(self.up_first_out, self.up_head, lo, hi))

    def check_triangle_closure(self) -> bool:
        """Every pair of upward neighbours of a vertex is itself an arc."""
        for x in range(self.n):
            hs = self.up_head[self.up_first_out[x]:self.up_first_out[x + 1]]
            for i in range(len(hs)):
                for j in range(i + 1, len(hs)):
                    if self.find_arc(int(hs[i]), int(hs[j])) < 0:
                        return False
        return True


def _build_hierarchy(rank, up_first_out, up_head, g: Graph) -> AugmentedHierarchy:
    n = len(rank)
    num_arcs = len(up_head)
    tails = g.tails()
    rt = rank[tails]
    rh = rank[g.head]
    lo = np.minimum(rt, rh)
    hi = np.maximum(rt, rh)
    edge_arc = np.empty(g.m, dtype=np.int32)
    for e in range(g.m):
        edge_arc[e] = find_arc(up_first_out, up_head, lo[e], hi[e])
    if g.m and edge_arc.min() < 0:
        raise ValueError("input edge missing from augmented topology")
    edge_up = rt < rh
    arc_edge_up = np.full(num_arcs, -1, dtype=np.int32)
    arc_edge_down = np.full(num_arcs, -1, dtype=np.int32)
    ids = np.arange(g.m, dtype=np.int32)
    arc_edge_up[edge_arc[edge_up]] = ids[edge_up]
    arc_edge_down[edge_arc[~edge_up]] = ids[~edge_up]

    t_total = _count_triangles(up_first_out)
    tri_first = np.zeros(n + 1, dtype=np.int64)
    tri_lo = np.empty(t_total, dtype=np.int32)
    tri_hi = np.empty(t_total, dtype=np.int32)
    tri_top = np.empty(t_total, dtype=np.int32)
    if _enumerate_triangles(up_first_out, up_head, tri_first, tri_lo, tri_hi, tri_top) < 0:
        raise ValueError("topology is not closed under triangles")
    tri_x = np.repeat(np.arange(n, dtype=np.int32), np.diff(tri_first))
    return AugmentedHierarchy(rank, order_from_rank(rank), up_first_out, up_head,
                              edge_arc, edge_up, arc_edge_up, arc_edge_down,
                              tri_first, tri_lo, tri_hi, tri_top, tri_x)


def contract(g: Graph, rank: np.ndarray) -> AugmentedHierarchy:
    """Elimination game in rank order; the result is chordal."""
    rank = np.asarray(rank, dtype=np.int32)
    validate_rank(rank, g.n)
    n = g.n
    nbrs = [set() for _ in range(n)]
    rt = rank[g.tails()].tolist()
    rh = rank[g.head].tolist()
    for a, b in zip(rt, rh):
        if a != b:
            nbrs[a].add(b)
            nbrs[b].add(a)
    upward = []
    for x in range(n):
        up = sorted(y for y in nbrs[x] if y > x)
        if len(up) > 1:
            y0 = up[0]
            s0 = nbrs[y0]
            for z in up[1:]:
                s0.add(z)
                nbrs[z].add(y0)
        upward.append(up)
        nbrs[x] = None
    counts = np.fromiter((len(u) for u in upward), dtype=np.int64, count=n)
    up_first_out = np.zeros(n + 1, dtype=np.int32)
    np.cumsum(counts, out=up_first_out[1:])
    up_head = np.fromiter((y for u in upward for y in u), dtype=np.int32,
                          count=int(up_first_out[-1]))
    return _build_hierarchy(rank, up_first_out, up_head, g)


@dataclass
class Metric:
    """Customized arc weights. ``w_up_star``/``alive_*`` exist after perfect
    customization; ``mid_*`` holds the lower middle vertex (rank) of the
    best path, ``-1`` when the input edge itself is best."""

    w_up: np.ndarray
    w_down: np.ndarray
    mid_up: np.ndarray | None = None
    mid_down: np.ndarray | None = None
    w_up_star: np.ndarray | None = None
    w_down_star: np.ndarray | None = None
    alive_up: np.ndarray | None = None
    alive_down: np.ndarray | None = None

    @property
    def perfect(self) -> bool:
        return self.w_up_star is not None


def input_arc_weights(h: AugmentedHierarchy, edge_weights) -> tuple[np.ndarray, np.ndarray]:
    w = np.minimum(np.asarray(edge_weights, dtype=np.int64), INF).astype(np.int32)
    w_up = np.full(h.num_arcs, INF, dtype=np.int32)
    w_down = np.full(h.num_arcs, INF, dtype=np.int32)
    w_up[h.edge_arc[h.edge_up]] = w[h.edge_up]
    w_down[h.edge_arc[~h.edge_up]] = w[~h.edge_up]
    return w_up, w_down


def basic_customize(h: AugmentedHierarchy, edge_weights) -> Metric:
    """Weights of shortest paths over lower-ranked interior vertices."""
    w_up, w_down = input_arc_weights(h, edge_weights)
    mid_up = np.full(h.num_arcs, -1, dtype=np.int32)
    mid_down = np.full(h.num_arcs, -1, dtype=np.int32)
    _basic_customize(h.tri_lo, h.tri_hi, h.tri_top, h.tri_x, w_up, w_down, mid_up, mid_down)
    return Metric(w_up, w_down, mid_up, mid_down)


def perfect_customize(h: AugmentedHierarchy, metric: Metric) -> Metric:
    """Exact distances on every arc; arcs whose basic weight is superseded
    are marked dead (they are on no needed up-down path)."""
    w_up = metric.w_up.copy()
    w_down = metric.w_down.copy()
    _perfect_customize(h.tri_lo, h.tri_hi, h.tri_top, w_up, w_down)
    return replace(metric, w_up_star=w_up, w_down_star=w_down,
                   alive_up=metric.w_up <= w_up, alive_down=metric.w_down <= w_down)


class CHQuery:
    """Reusable scalar CH query on a customized metric."""

    def __init__(self, h: AugmentedHierarchy, metric: Metric, use_perfect: bool = False,
                 alive_up=None, alive_down=None):
        self.h = h
        if use_perfect:
            if not metric.perfect:
                raise ValueError("metric has no perfect weights")
            self.w_up, self.w_down = metric.w_up_star, metric.w_down_star
        else:
            self.w_up, self.w_down = metric.w_up, metric.w_down
        ones = np.ones(h.num_arcs, dtype=np.bool_)
        self.alive_up = ones if alive_up is None else alive_up
        self.alive_down = ones if alive_down is None else alive_down
        n = h.n
        self.fdist = np.zeros(n, dtype=np.int64)
        self.bdist = np.zeros(n, dtype=np.int64)
        self.fstamp = np.zeros(n, dtype=np.int32)
        self.bstamp = np.zeros(n, dtype=np.int32)
        self.hkeys = np.zeros(n, dtype=np.int64)
        self.hids = np.zeros(n, dtype=np.int32)
        self.hpos = np.full(n, -1, dtype=np.int32)
        self.visited = np.zeros(n, dtype=np.int32)
        self.gen = 0

    def distance(self, s: int, t: int) -> int:
        self.gen += 1
        h = self.h
        return int(_ch_query(h.up_first_out, h.up_head, self.w_up, self.w_down,
                             self.alive_up, self.alive_down, h.rank[s], h.rank[t],
                             self.fdist, self.fstamp, self.bdist, self.bstamp, self.gen,
                             self.hkeys, self.hids, self.hpos, self.visited))


def ch_query(h: AugmentedHierarchy, metric: Metric, s: int, t: int,
             use_perfect: bool = False, reduced: bool = False) -> int:
    """Shortest scalar distance via the best up-down path."""
    alive_up = metric.alive_up if reduced else None
    alive_down = metric.alive_down if reduced else None
    return CHQuery(h, metric, use_perfect, alive_up, alive_down).distance(s, t)


def unpack_arc(h: AugmentedHierarchy, metric: Metric, a: int, upward: bool) -> list[int]:
    """Original vertex path (rank IDs) behind a directed arc."""
    lo = int(np.searchsorted(h.up_first_out, a, side="right")) - 1
    hi = int(h.up_head[a])
    path = [lo if upward else hi]
    # arcs still to expand, last one first: (arc, lo, hi, upward)
    stack = [(a, lo, hi, upward)]
    while stack:
        a, lo, hi, up = stack.pop()
        mid = int(metric.mid_up[a] if up else metric.mid_down[a])
        if mid < 0:
            path.append(hi if up else lo)
            continue
        a_lo = h.find_arc(mid, lo)
        a_hi = h.find_arc(mid, hi)
        if up:  # lo -> mid -> hi
            stack.append((a_hi, mid, hi, True))
            stack.append((a_lo, mid, lo, False))
        else:  # hi -> mid -> lo
            stack.append((a_lo, mid, lo, True))
            stack.append((a_hi, mid, hi, False))
    return path


@dataclass
class ReducedTopology:
    """Compacted upward adjacency keeping only arcs alive in some direction."""

    up_first_out: np.ndarray
    up_head: np.ndarray
    arcs: np.ndarray  # original arc id per kept arc
    alive_up: np.ndarray
    alive_down: np.ndarray

    def take(self, arc_values: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(arc_values[..., self.arcs])


def reduce_topology(h: AugmentedHierarchy, alive_up, alive_down) -> ReducedTopology:
    keep = np.asarray(alive_up) | np.asarray(alive_down)
    arcs = np.flatnonzero(keep).astype(np.int32)
    tails = h.arc_tails()[arcs]
    counts = np.bincount(tails, minlength=h.n)
    first_out = np.zeros(h.n + 1, dtype=np.int32)
    np.cumsum(counts, out=first_out[1:])
    return ReducedTopology(first_out, h.up_head[arcs].copy(), arcs,
                           np.asarray(alive_up)[arcs].copy(), np.asarray(alive_down)[arcs].copy())


# -- persistence -------------------------------------------------------------

def save_order(path, rank: np.ndarray) -> None:
    write_u32(path, rank)


def load_order(path) -> np.ndarray:
    return read_u32(path).astype(np.int32)


def save_hierarchy(directory, h: AugmentedHierarchy) -> None:
    os.makedirs(directory, exist_ok=True)
    save_order(os.path.join(directory, "order"), h.rank)
    write_u32(os.path.join(directory, "cch_first_out"), h.up_first_out)
    write_u32(os.path.join(directory, "cch_head"), h.up_head)


def load_hierarchy(directory, g: Graph) -> AugmentedHierarchy:
    rank = load_order(os.path.join(directory, "order"))
    validate_rank(rank, g.n)
    first_out = read_u32(os.path.join(directory, "cch_first_out")).astype(np.int32)
    head = read_u32(os.path.join(directory, "cch_head")).astype(np.int32)
    return _build_hierarchy(rank, first_out, head, g)
