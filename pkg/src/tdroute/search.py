"""Time-dependent Dijkstra and label-correcting A* with pluggable potentials.

A potential supplies a jitted ``kernel(state, v, tau) -> int`` and the
``state`` tuple it operates on; the search kernel is specialized per kernel.
``INF`` from a potential means the target is unreachable from ``v`` and the
vertex is never queued.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .graph import INF, Graph
from .heap import heap_clear, heap_pop, heap_push, heap_update
from .traffic import TrafficWeights, combined_eval_kernel

POPS, RELAXED, RESETTLES, POT_EVALS = range(4)


@njit(cache=True, inline="always")
def _is_chain(first_out, head, v, u):
    lo = first_out[v]
    deg = first_out[v + 1] - lo
    if deg == 1:
        return True
    if deg == 2:
        return head[lo] == u or head[lo + 1] == u
    return False


@njit(cache=True, nogil=True)
def astar_kernel(first_out, head, first_bp, bp_dep, bp_tt, live_val, live_end,
                 s, t, tau_dep, pot_fn, pot_state,
                 dist, stamp, pred, popped, potv, hkeys, hids, hpos, gen,
                 chain_opt, stats):
    h = pot_fn(pot_state, s, tau_dep)
    stats[POT_EVALS] += 1
    if h >= INF:
        return np.int64(INF)
    dist[s] = tau_dep
    stamp[s] = gen
    pred[s] = -1
    potv[s] = h
    size = heap_push(hkeys, hids, hpos, 0, s, tau_dep + h)
    result = np.int64(INF)
    while size > 0:
        u, _, size = heap_pop(hkeys, hids, hpos, size)
        stats[POPS] += 1
        if popped[u] == gen:
            stats[RESETTLES] += 1
        popped[u] = gen
        if u == t:
            result = dist[t]
            break
        du = dist[u]
        for e in range(first_out[u], first_out[u + 1]):
            v = head[e]
            stats[RELAXED] += 1
            w = combined_eval_kernel(first_bp, bp_dep, bp_tt, live_val, live_end, e, du)
            if w >= INF:
                continue
            nd = du + w
            if stamp[v] == gen and nd >= dist[v]:
                continue
            if chain_opt and v != t and _is_chain(first_out, head, v, u):
                hv = potv[u] - w
                if hv < 0:
                    hv = 0
            else:
                hv = pot_fn(pot_state, v, nd)
                stats[POT_EVALS] += 1
            if hv >= INF:
                continue
            dist[v] = nd
            stamp[v] = gen
            pred[v] = u
            potv[v] = hv
            if hpos[v] >= 0:
                heap_update(hkeys, hids, hpos, size, v, nd + hv)
            else:
                size = heap_push(hkeys, hids, hpos, size, v, nd + hv)
    heap_clear(hids, hpos, size)
    return result


@njit(cache=True)
def settle_order_kernel(first_out, head, first_bp, bp_dep, bp_tt, live_val, live_end,
                        s, tau_dep, limit, order, arrival,
                        dist, stamp, hkeys, hids, hpos, gen):
    """One-to-all Dijkstra recording vertices in settle order (at most ``limit``)."""
    dist[s] = tau_dep
    stamp[s] = gen
    size = heap_push(hkeys, hids, hpos, 0, s, tau_dep)
    count = 0
    while size > 0 and count < limit:
        u, du, size = heap_pop(hkeys, hids, hpos, size)
        order[count] = u
        arrival[count] = du
        count += 1
        for e in range(first_out[u], first_out[u + 1]):
            v = head[e]
            w = combined_eval_kernel(first_bp, bp_dep, bp_tt, live_val, live_end, e, du)
            if w >= INF:
                continue
            nd = du + w
            if stamp[v] == gen and nd >= dist[v]:
                continue
            if stamp[v] == gen and hpos[v] < 0:
                continue  # settled
            dist[v] = nd
            stamp[v] = gen
            if hpos[v] >= 0:
                heap_update(hkeys, hids, hpos, size, v, nd)
            else:
                size = heap_push(hkeys, hids, hpos, size, v, nd)
    heap_clear(hids, hpos, size)
    return count


class SearchWorkspace:
    """Per-thread mutable search arrays, reset in O(1) via generation stamps."""

    def __init__(self, n: int):
        self.n = n
        self.dist = np.zeros(n, dtype=np.int64)
        self.stamp = np.zeros(n, dtype=np.int32)
        self.pred = np.full(n, -1, dtype=np.int32)
        self.popped = np.zeros(n, dtype=np.int32)
        self.potv = np.zeros(n, dtype=np.int64)
        self.hkeys = np.zeros(n, dtype=np.int64)
        self.hids = np.zeros(n, dtype=np.int32)
        self.hpos = np.full(n, -1, dtype=np.int32)
        self.gen = 0

    def next_gen(self) -> int:
        self.gen += 1
        if self.gen >= 2**31 - 1:
            self.stamp[:] = 0
            self.popped[:] = 0
            self.gen = 1
        return self.gen

    def reached(self, v: int) -> bool:
        return self.stamp[v] == self.gen

    def settled(self, v: int) -> bool:
        return self.popped[v] == self.gen

    def settled_vertices(self) -> np.ndarray:
        return np.flatnonzero(self.popped == self.gen)


@dataclass
class SearchResult:
    distance: int
    path: list[int] = field(default_factory=list)
    pops: int = 0
    relaxed: int = 0
    resettles: int = 0
    pot_evals: int = 0

    @property
    def reachable(self) -> bool:
        return self.distance < INF


class Potential:
    """Base for A* potentials; subclasses set ``kernel`` and implement ``state``."""

    kernel = None
    name = "potential"

    def init(self, s: int, t: int, tau_dep: int) -> None:
        pass

    def state(self) -> tuple:
        raise NotImplementedError

    def evaluate(self, v: int, tau: int) -> int:
        return int(self.kernel(self.state(), v, tau))


@njit(cache=True)
def _zero_kernel(state, v, tau):
    return np.int64(0)


@njit(cache=True)
def _array_kernel(state, v, tau):
    return np.int64(state[0][v])


class ZeroPotential(Potential):
    kernel = staticmethod(_zero_kernel)
    name = "dijkstra"

    def __init__(self):
        self._state = (np.zeros(1, dtype=np.int64),)

    def state(self):
        return self._state


class ArrayPotential(Potential):
    """Time-independent estimates from a precomputed array (tests, baselines)."""

    kernel = staticmethod(_array_kernel)
    name = "array"

    def __init__(self, values):
        self._state = (np.minimum(np.asarray(values, dtype=np.int64), INF),)

    def state(self):
        return self._state


def _unpack_path(pred, s, t) -> list[int]:
    path = [t]
    v = t
    while v != s:
        v = int(pred[v])
        path.append(v)
    return path[::-1]


def astar(g: Graph, weights: TrafficWeights, s: int, t: int, tau_dep: int,
          potential: Potential, workspace: SearchWorkspace | None = None,
          chain_opt: bool = False, init: bool = True) -> SearchResult:
    """Exact earliest-arrival query; re-settles vertices when a potential is
    only a lower bound and not feasible."""
    ws = workspace if workspace is not None else SearchWorkspace(g.n)
    if init:
        potential.init(s, t, tau_dep)
    gen = ws.next_gen()
    stats = np.zeros(4, dtype=np.int64)
    arrival = astar_kernel(g.first_out, g.head, *weights.arrays, s, t, tau_dep,
                           potential.kernel, potential.state(),
                           ws.dist, ws.stamp, ws.pred, ws.popped, ws.potv,
                           ws.hkeys, ws.hids, ws.hpos, gen, chain_opt, stats)
    res = SearchResult(INF, [], int(stats[POPS]), int(stats[RELAXED]),
                       int(stats[RESETTLES]), int(stats[POT_EVALS]))
    if arrival < INF:
        res.distance = int(arrival - tau_dep)
        res.path = _unpack_path(ws.pred, s, t)
    return res


_ZERO = None


def td_dijkstra(g: Graph, weights: TrafficWeights, s: int, t: int, tau_dep: int,
                workspace: SearchWorkspace | None = None) -> SearchResult:
    global _ZERO
    if _ZERO is None:
        _ZERO = ZeroPotential()
    return astar(g, weights, s, t, tau_dep, _ZERO, workspace)


def settle_order(g: Graph, weights: TrafficWeights, s: int, tau_dep: int,
                 limit: int | None = None, workspace: SearchWorkspace | None = None):
    """Vertices in Dijkstra settle order from ``s`` and their arrival times."""
    ws = workspace if workspace is not None else SearchWorkspace(g.n)
    limit = g.n if limit is None else min(limit, g.n)
    order = np.empty(limit, dtype=np.int32)
    arrival = np.empty(limit, dtype=np.int64)
    gen = ws.next_gen()
    count = settle_order_kernel(g.first_out, g.head, *weights.arrays, s, tau_dep, limit,
                                order, arrival, ws.dist, ws.stamp, ws.hkeys, ws.hids,
                                ws.hpos, gen)
    return order[:count], arrival[:count]


def earliest_arrivals(g: Graph, weights: TrafficWeights, s: int, tau_dep: int) -> np.ndarray:
    """Arrival time at every vertex (``INF`` where unreachable)."""
    order, arrival = settle_order(g, weights, s, tau_dep)
    out = np.full(g.n, INF, dtype=np.int64)
    out[order] = arrival
    return out


@dataclass
class FeasibilityViolation:
    edge: int
    tau: int
    slack: int


def check_feasibility(g: Graph, weights: TrafficWeights, potential: Potential, samples):
    """Report sampled ``(edge, tau)`` pairs with negative reduced weight
    ``pi(v, tau + w) + w - pi(u, tau)``. The potential must be initialized."""
    tails = g.tails()
    out = []
    for e, tau in samples:
        e, tau = int(e), int(tau)
        u, v = int(tails[e]), int(g.head[e])
        w = weights.evaluate(e, tau)
        if w >= INF:
            continue
        pu = potential.evaluate(u, tau)
        if pu >= INF:
            continue
        pv = potential.evaluate(v, tau + w)
        slack = (INF if pv >= INF else pv) + w - pu
        if slack < 0:
            out.append(FeasibilityViolation(e, tau, slack))
    return out
