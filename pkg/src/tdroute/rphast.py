"""Lazy RPHAST: memoized many-to-one distances on a customized hierarchy, and
the time-independent CCH potential built on it."""
from __future__ import annotations

import numpy as np
from numba import njit

from .cch import AugmentedHierarchy, Metric, upward_search
from .graph import INF
from .search import Potential


@njit(cache=True)
def lazy_dist(first_out, head, w_up, alive_up, dbw, dstamp, memo, mstamp, gen,
              stack, it, u, counter):
    """Exact up-down distance from ``u`` (rank) to the target, memoized.

    Depth-first over upward arcs with an explicit stack; ``counter[0]`` counts
    arc relaxations.
    """
    if mstamp[u] == gen:
        return memo[u]
    top = 0
    stack[0] = u
    it[u] = first_out[u]
    memo[u] = dbw[u] if dstamp[u] == gen else INF
    while top >= 0:
        x = stack[top]
        a = it[x]
        if a == first_out[x + 1]:
            mstamp[x] = gen
            top -= 1
            continue
        if not alive_up[a] or w_up[a] >= INF:
            it[x] = a + 1
            continue
        y = head[a]
        if mstamp[y] == gen:
            counter[0] += 1
            c = memo[y] + w_up[a]
            if c < memo[x]:
                memo[x] = c
            it[x] = a + 1
        else:
            top += 1
            stack[top] = y
            it[y] = first_out[y]
            memo[y] = dbw[y] if dstamp[y] == gen else INF
    return memo[u]


@njit(cache=True)
def _cch_pot_kernel(state, v, tau):
    (first_out, head, w_up, alive_up, dbw, dstamp, memo, mstamp, genarr,
     stack, it, counter, rank) = state
    d = lazy_dist(first_out, head, w_up, alive_up, dbw, dstamp, memo, mstamp,
                  genarr[0], stack, it, rank[v], counter)
    return d if d < INF else np.int64(INF)


class LazyRphast:
    """Many-to-one distances toward a target chosen by :meth:`init`.

    Works on any upward adjacency in rank space; ``w_down[a]`` is the weight of
    arc ``a`` traversed from its higher to its lower endpoint.
    """

    def __init__(self, first_out, head, w_up, w_down, alive_up=None, alive_down=None,
                 rank=None):
        n = len(first_out) - 1
        self.first_out = first_out
        self.head = head
        self.w_up = np.ascontiguousarray(w_up)
        self.w_down = np.ascontiguousarray(w_down)
        ones = np.ones(len(head), dtype=np.bool_)
        self.alive_up = ones if alive_up is None else np.asarray(alive_up, dtype=np.bool_)
        self.alive_down = ones if alive_down is None else np.asarray(alive_down, dtype=np.bool_)
        self.rank = np.arange(n, dtype=np.int32) if rank is None else rank
        self.dbw = np.zeros(n, dtype=np.int64)
        self.dstamp = np.zeros(n, dtype=np.int32)
        self.memo = np.zeros(n, dtype=np.int64)
        self.mstamp = np.zeros(n, dtype=np.int32)
        self.genarr = np.zeros(1, dtype=np.int32)
        self.stack = np.zeros(n, dtype=np.int32)
        self.it = np.zeros(n, dtype=np.int32)
        self.counter = np.zeros(1, dtype=np.int64)
        self._hkeys = np.zeros(n, dtype=np.int64)
        self._hids = np.zeros(n, dtype=np.int32)
        self._hpos = np.full(n, -1, dtype=np.int32)
        self._visited = np.zeros(n, dtype=np.int32)
        self.search_space = 0

    @classmethod
    def from_metric(cls, h: AugmentedHierarchy, metric: Metric, use_perfect: bool = False):
        if use_perfect:
            return cls(h.up_first_out, h.up_head, metric.w_up_star, metric.w_down_star,
                       metric.alive_up, metric.alive_down, h.rank)
        return cls(h.up_first_out, h.up_head, metric.w_up, metric.w_down, rank=h.rank)

    def init(self, t: int) -> None:
        """Backward search from ``t`` (original ID) over downward arcs."""
        g = int(self.genarr[0]) + 1
        if g >= 2**31 - 1:
            self.dstamp[:] = 0
            self.mstamp[:] = 0
            g = 1
        self.genarr[0] = g
        self.counter[0] = 0
        self.search_space = int(upward_search(
            self.first_out, self.head, self.w_down, self.alive_down, self.rank[t],
            self.dbw, self.dstamp, g, self._hkeys, self._hids, self._hpos, self._visited))

    def backward_label(self, v: int) -> int:
        r = self.rank[v]
        return int(self.dbw[r]) if self.dstamp[r] == self.genarr[0] else INF

    def distance(self, u: int) -> int:
        return int(lazy_dist(self.first_out, self.head, self.w_up, self.alive_up, self.dbw,
                             self.dstamp, self.memo, self.mstamp, self.genarr[0],
                             self.stack, self.it, self.rank[u], self.counter))

    @property
    def relaxations(self) -> int:
        return int(self.counter[0])

    def kernel_state(self) -> tuple:
        return (self.first_out, self.head, self.w_up, self.alive_up, self.dbw, self.dstamp,
                self.memo, self.mstamp, self.genarr, self.stack, self.it, self.counter,
                self.rank)


class CCHPotential(Potential):
    """Time-independent potential: exact distances under a lower-bound metric."""

    kernel = staticmethod(_cch_pot_kernel)
    name = "cchpot"

    def __init__(self, h: AugmentedHierarchy, metric: Metric, use_perfect: bool = False):
        self.rphast = LazyRphast.from_metric(h, metric, use_perfect)
        self._state = self.rphast.kernel_state()

    def init(self, s: int, t: int, tau_dep: int) -> None:
        self.rphast.init(t)

    def state(self) -> tuple:
        return self._state
