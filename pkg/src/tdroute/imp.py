"""Interval-minimum potentials: bucketed time-dependent lower bounds on the
hierarchy, evaluated over per-vertex arrival intervals.

Profiles are piecewise constant with ``K`` buckets of ``beta`` ms aligned to
midnight. They are computed by a conservative triangle relaxation: for a
shortcut ``u -> x -> v`` departing in bucket ``k`` the arrival at ``x`` lies in
``[k*beta + lb(u->x, k), k*beta + beta - 1 + ub(u->x)]``, so the minimum of
``x -> v`` over that window plus ``lb(u->x, k)`` bounds the path from below.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np
from numba import njit

from .cch import (AugmentedHierarchy, Metric, basic_customize, input_arc_weights,
                  perfect_customize, upward_search)
from .graph import INF, PERIOD, TravelTimeFunctions
from .heap import heap_clear, heap_pop, heap_push, heap_update
from .search import Potential
from .traffic import LiveOverlay, extract_bounds

NUM_BUCKETS = 96
BUCKET_MS = PERIOD // NUM_BUCKETS


@njit(cache=True, inline="always")
def _floor_log2(x):
    r = 0
    while (2 << r) <= x:
        r += 1
    return r


@njit(cache=True)
def _relax_profile(first, a_first, ub_first, st, gmin, i_second, target, a_target, K, beta):
    for k in range(K):
        l1 = np.int64(first[k, a_first])
        if l1 >= INF:
            continue
        if ub_first >= INF:
            m = gmin[i_second]
        else:
            ba = (k * beta + l1) // beta
            bb = (k * beta + beta - 1 + ub_first) // beta
            length = bb - ba + 1
            if length >= K:
                m = gmin[i_second]
            else:
                s = ba % K
                lv = _floor_log2(length)
                m1 = st[lv, i_second, s]
                m2 = st[lv, i_second, s + length - (1 << lv)]
                m = m1 if m1 < m2 else m2
        if m >= INF:
            continue
        c = l1 + m
        if c < target[k, a_target]:
            target[k, a_target] = c if c < INF else INF


@njit(cache=True, nogil=True)
def _bucket_customize(up_first_out, tri_first, tri_lo, tri_hi, tri_top,
                      prof_up, prof_down, ub_up, ub_down, K, beta, max_deg):
    n = up_first_out.shape[0] - 1
    levels = _floor_log2(K) + 1
    st = np.empty((levels, max_deg, 2 * K), dtype=np.int64)
    gmin = np.empty(max_deg, dtype=np.int64)
    for x in range(n):
        t0 = tri_first[x]
        t1 = tri_first[x + 1]
        if t0 == t1:
            continue
        a0 = up_first_out[x]
        deg = up_first_out[x + 1] - a0
        # sparse tables over the doubled (cyclic) up profiles of x's arcs
        for i in range(deg):
            a = a0 + i
            g = np.int64(INF)
            for j in range(2 * K):
                v = np.int64(prof_up[j % K, a])
                st[0, i, j] = v
                if v < g:
                    g = v
            gmin[i] = g
            for lv in range(1, levels):
                half = 1 << (lv - 1)
                for j in range(2 * K - (1 << lv) + 1):
                    p = st[lv - 1, i, j]
                    q = st[lv - 1, i, j + half]
                    st[lv, i, j] = p if p < q else q
        for tr in range(t0, t1):
            xl = tri_lo[tr]
            xh = tri_hi[tr]
            top = tri_top[tr]
            # lo -> x -> hi and hi -> x -> lo
            _relax_profile(prof_down, xl, np.int64(ub_down[xl]), st, gmin, xh - a0,
                           prof_up, top, K, beta)
            _relax_profile(prof_down, xh, np.int64(ub_down[xh]), st, gmin, xl - a0,
                           prof_down, top, K, beta)
            c = np.int64(ub_down[xl]) + np.int64(ub_up[xh])
            if c < ub_up[top]:
                ub_up[top] = c
            c = np.int64(ub_down[xh]) + np.int64(ub_up[xl])
            if c < ub_down[top]:
                ub_down[top] = c


@njit(cache=True, inline="always")
def bucket_min(prof, table, bmin, a, lo, hi, K, beta):
    """Minimum of arc ``a``'s profile over absolute times ``[lo, hi]``."""
    if hi >= INF:
        return np.int64(bmin[a])
    b0 = lo // beta
    b1 = hi // beta
    if b1 - b0 + 1 >= K:
        return np.int64(bmin[a])
    m = np.int64(INF)
    for b in range(b0, b1 + 1):
        v = np.int64(prof[table[b % K], a])
        if v < m:
            m = v
    return m


@njit(cache=True)
def ailr_dist(first_out, head, wlo, whi, alive_down, flo, fhi, fstamp,
              alo, ahi, astamp, gen, stack, it, u):
    """Lower and upper distance from the source to ``u`` (rank): forward
    labels on upward arcs, then a memoized descent over downward arcs."""
    if astamp[u] == gen:
        return alo[u], ahi[u]
    top = 0
    stack[0] = u
    it[u] = first_out[u]
    if fstamp[u] == gen:
        alo[u] = flo[u]
        ahi[u] = fhi[u]
    else:
        alo[u] = INF
        ahi[u] = INF
    while top >= 0:
        x = stack[top]
        a = it[x]
        if a == first_out[x + 1]:
            astamp[x] = gen
            top -= 1
            continue
        if not alive_down[a] or wlo[a] >= INF:
            it[x] = a + 1
            continue
        y = head[a]
        if astamp[y] == gen:
            c = alo[y] + wlo[a]
            if c < alo[x]:
                alo[x] = c
            if ahi[y] < INF and whi[a] < INF:
                c = ahi[y] + whi[a]
                if c < ahi[x]:
                    ahi[x] = c
            it[x] = a + 1
        else:
            top += 1
            stack[top] = y
            it[y] = first_out[y]
            if fstamp[y] == gen:
                alo[y] = flo[y]
                ahi[y] = fhi[y]
            else:
                alo[y] = INF
                ahi[y] = INF
    return alo[u], ahi[u]


@njit(cache=True, inline="always")
def _window(ailr, u, tau_dep):
    (first_out, head, wlo_down, whi_down, alive_down, flo, fhi, fstamp,
     alo, ahi, astamp, gen, stack, it) = ailr
    lo, hi = ailr_dist(first_out, head, wlo_down, whi_down, alive_down, flo, fhi, fstamp,
                       alo, ahi, astamp, gen, stack, it, u)
    if lo >= INF:
        return np.int64(INF), np.int64(INF)
    hi = tau_dep + hi if hi < INF else np.int64(INF)
    return tau_dep + lo, hi


@njit(cache=True)
def imp_backward(first_out, head, prof_down, table, bmin_down, alive_down, K, beta,
                 ailr, tau_dep, t, dbw, dstamp, gen, hkeys, hids, hpos):
    """Dijkstra from ``t`` over reversed downward arcs; each arc is weighted by
    its profile minimum over the arrival interval at its tail."""
    dbw[t] = 0
    dstamp[t] = gen
    size = heap_push(hkeys, hids, hpos, 0, t, 0)
    count = 0
    while size > 0:
        u, du, size = heap_pop(hkeys, hids, hpos, size)
        count += 1
        for a in range(first_out[u], first_out[u + 1]):
            if not alive_down[a]:
                continue
            y = head[a]
            lo, hi = _window(ailr, y, tau_dep)
            if lo >= INF:
                continue
            d = bucket_min(prof_down, table, bmin_down, a, lo, hi, K, beta)
            if d >= INF:
                continue
            nd = du + d
            if dstamp[y] != gen or nd < dbw[y]:
                dbw[y] = nd
                dstamp[y] = gen
                if hpos[y] >= 0:
                    heap_update(hkeys, hids, hpos, size, y, nd)
                else:
                    size = heap_push(hkeys, hids, hpos, size, y, nd)
    heap_clear(hids, hpos, size)
    return count


@njit(cache=True)
def imp_dist(first_out, head, prof_up, table, bmin_up, alive_up, K, beta, ailr, tau_dep,
             dbw, dstamp, memo, cursor, hib, mstamp, gen, stack, it, u, tau, counter):
    """Estimate from ``u`` (rank) when reached at ``tau``; arcs are weighted by
    their profile minimum over ``[max(tau_min, tau), tau_max]`` at the tail.
    A memoized value is reused while ``tau``'s bucket is not below the one it
    was computed for."""
    lo, hi = _window(ailr, u, tau_dep)
    if lo >= INF:
        return np.int64(INF)
    if tau > lo:
        lo = tau
    if mstamp[u] == gen and lo // beta >= cursor[u]:
        return memo[u]
    top = 0
    stack[0] = u
    it[u] = first_out[u]
    memo[u] = dbw[u] if dstamp[u] == gen else INF
    cursor[u] = lo // beta
    hib[u] = hi if hi > lo else lo
    mstamp[u] = 0
    while top >= 0:
        x = stack[top]
        a = it[x]
        if a == first_out[x + 1]:
            mstamp[x] = gen
            top -= 1
            continue
        if not alive_up[a]:
            it[x] = a + 1
            continue
        y = head[a]
        ylo, yhi = _window(ailr, y, tau_dep)
        if ylo >= INF:
            it[x] = a + 1
            continue
        if tau > ylo:
            ylo = tau
        if mstamp[y] == gen and ylo // beta >= cursor[y]:
            counter[0] += 1
            if memo[y] < INF:
                w = bucket_min(prof_up, table, bmin_up, a, cursor[x] * beta, hib[x], K, beta)
                c = memo[y] + w
                if c < memo[x]:
                    memo[x] = c
            it[x] = a + 1
        else:
            top += 1
            stack[top] = y
            it[y] = first_out[y]
            memo[y] = dbw[y] if dstamp[y] == gen else INF
            cursor[y] = ylo // beta
            hib[y] = yhi if yhi > ylo else ylo
            mstamp[y] = 0
    return memo[u]


@njit(cache=True)
def _imp_kernel(state, v, tau):
    (first_out, head, prof_up, table, bmin_up, alive_up, params, ailr,
     dbw, dstamp, memo, cursor, hib, mstamp, stack, it, counter, rank) = state
    d = imp_dist(first_out, head, prof_up, table, bmin_up, alive_up, params[0], params[1],
                 ailr, params[2], dbw, dstamp, memo, cursor, hib, mstamp, params[3],
                 stack, it, rank[v], tau, counter)
    return d if d < INF else np.int64(INF)


@dataclass
class BucketProfile:
    """Bucket-major lower-bound profiles per arc direction.

    ``func_up[table[k], a]`` is the bound for arc ``a`` traversed upward when
    departing in bucket ``k``; ``ub_*`` are scalar upper bounds of the
    predictions used during customization.
    """

    K: int
    beta: int
    func_up: np.ndarray
    func_down: np.ndarray
    table: np.ndarray
    ub_up: np.ndarray
    ub_down: np.ndarray
    bmin_up: np.ndarray
    bmin_down: np.ndarray

    @property
    def num_arcs(self) -> int:
        return self.func_up.shape[1]

    def bucket(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        r = int(self.table[k])
        return self.func_up[r], self.func_down[r]

    def with_compression(self, func_up, func_down, table) -> "BucketProfile":
        return BucketProfile(self.K, self.beta, np.ascontiguousarray(func_up),
                             np.ascontiguousarray(func_down),
                             np.asarray(table, dtype=np.int32), self.ub_up, self.ub_down,
                             self.bmin_up, self.bmin_down)


def bucket_customize(h: AugmentedHierarchy, ttf: TravelTimeFunctions,
                     K: int = NUM_BUCKETS) -> BucketProfile:
    if K < 1 or PERIOD % K:
        raise ValueError("bucket count must divide the period")
    beta = PERIOD // K
    A = h.num_arcs
    prof_up = np.full((K, A), INF, dtype=np.int32)
    prof_down = np.full((K, A), INF, dtype=np.int32)
    for k in range(K):
        prof_up[k], prof_down[k] = input_arc_weights(h, ttf.all_min_over(k * beta, k * beta + beta - 1))
    ub_up, ub_down = input_arc_weights(h, ttf.global_max())
    ub_up = ub_up.astype(np.int64)
    ub_down = ub_down.astype(np.int64)
    max_deg = int(np.diff(h.up_first_out).max()) if h.n else 0
    _bucket_customize(h.up_first_out, h.tri_first, h.tri_lo, h.tri_hi, h.tri_top,
                      prof_up, prof_down, ub_up, ub_down, K, beta, max(max_deg, 1))
    ub_up = np.minimum(ub_up, INF)
    ub_down = np.minimum(ub_down, INF)
    return BucketProfile(K, beta, prof_up, prof_down, np.arange(K, dtype=np.int32),
                         ub_up, ub_down, prof_up.min(axis=0), prof_down.min(axis=0))


@dataclass
class ScalarBounds:
    """Update-phase products: upper-bound metric and the alive subgraph."""

    cmax: Metric
    alive_up: np.ndarray
    alive_down: np.ndarray
    tau_now: int


def imp_bounds(prof: BucketProfile, cmax: Metric, tau_now: int) -> ScalarBounds:
    """A direction of an arc is dead when its exact upper bound undercuts its
    smallest lower bound."""
    alive_up = ~(cmax.w_up_star < prof.bmin_up)
    alive_down = ~(cmax.w_down_star < prof.bmin_down)
    return ScalarBounds(cmax, alive_up, alive_down, int(tau_now))


def imp_update(h: AugmentedHierarchy, prof: BucketProfile, ttf: TravelTimeFunctions,
               overlay: LiveOverlay, cmax: Metric | None = None) -> ScalarBounds:
    """Customize and perfect the all-day upper bound (unless given) and
    derive the alive subgraph."""
    if cmax is None:
        cmax_e, _ = extract_bounds(ttf, overlay)
        cmax = perfect_customize(h, basic_customize(h, cmax_e))
    return imp_bounds(prof, cmax, overlay.tau_now)


class ArrivalIntervals:
    """Per-query arrival-interval oracle from one source (rank space inside)."""

    def __init__(self, h: AugmentedHierarchy, prof: BucketProfile, bounds: ScalarBounds):
        n = h.n
        self.h = h
        self.prof = prof
        self.bounds = bounds
        self.wlo_up = prof.bmin_up
        self.wlo_down = prof.bmin_down
        self.whi_up = bounds.cmax.w_up_star
        self.whi_down = bounds.cmax.w_down_star
        self.flo = np.zeros(n, dtype=np.int64)
        self.fhi = np.zeros(n, dtype=np.int64)
        self.fstamp = np.zeros(n, dtype=np.int32)
        self._hstamp = np.zeros(n, dtype=np.int32)
        self.alo = np.zeros(n, dtype=np.int64)
        self.ahi = np.zeros(n, dtype=np.int64)
        self.astamp = np.zeros(n, dtype=np.int32)
        self.genarr = np.zeros(1, dtype=np.int32)
        self.stack = np.zeros(n, dtype=np.int32)
        self.it = np.zeros(n, dtype=np.int32)
        self._hkeys = np.zeros(n, dtype=np.int64)
        self._hids = np.zeros(n, dtype=np.int32)
        self._hpos = np.full(n, -1, dtype=np.int32)
        self._visited = np.zeros(n, dtype=np.int32)
        self.tau_dep = 0
        self._tuple = None

    def init(self, s: int, tau_dep: int) -> int:
        g = int(self.genarr[0]) + 1
        if g >= 2**31 - 1:
            self.fstamp[:] = 0
            self.astamp[:] = 0
            self._hstamp[:] = 0
            g = 1
        self.genarr[0] = g
        self.tau_dep = int(tau_dep)
        h = self.h
        r = h.rank[s]
        b = self.bounds
        cnt = upward_search(h.up_first_out, h.up_head, self.wlo_up, b.alive_up, r, self.flo,
                            self.fstamp, g, self._hkeys, self._hids, self._hpos, self._visited)
        reached = self._visited[:cnt].copy()
        upward_search(h.up_first_out, h.up_head, self.whi_up, b.alive_up, r, self.fhi,
                      self._hstamp, g, self._hkeys, self._hids, self._hpos, self._visited)
        # the upper search may miss vertices only reachable through blocked arcs
        miss = reached[self._hstamp[reached] != g]
        self.fhi[miss] = INF
        self._tuple = (h.up_first_out, h.up_head, self.wlo_down, self.whi_down, b.alive_down,
                       self.flo, self.fhi, self.fstamp, self.alo, self.ahi, self.astamp, g,
                       self.stack, self.it)
        return cnt

    def kernel_tuple(self) -> tuple:
        return self._tuple

    def interval(self, v: int) -> tuple[int, int]:
        """``[tau_min, tau_max]`` at ``v`` (original ID); ``INF`` bounds if unreachable."""
        lo, hi = _window(self._tuple, self.h.rank[v], self.tau_dep)
        return int(lo), int(hi)


class IMPotential(Potential):
    kernel = staticmethod(_imp_kernel)
    name = "imp"

    def __init__(self, h: AugmentedHierarchy, prof: BucketProfile, bounds: ScalarBounds):
        n = h.n
        self.h = h
        self.prof = prof
        self.bounds = bounds
        self.ailr = ArrivalIntervals(h, prof, bounds)
        self.dbw = np.zeros(n, dtype=np.int64)
        self.dstamp = np.zeros(n, dtype=np.int32)
        self.memo = np.zeros(n, dtype=np.int64)
        self.cursor = np.zeros(n, dtype=np.int64)
        self.hib = np.zeros(n, dtype=np.int64)
        self.mstamp = np.zeros(n, dtype=np.int32)
        self.stack = np.zeros(n, dtype=np.int32)
        self.it = np.zeros(n, dtype=np.int32)
        self.counter = np.zeros(1, dtype=np.int64)
        self.params = np.array([prof.K, prof.beta, 0, 0], dtype=np.int64)
        self._hkeys = np.zeros(n, dtype=np.int64)
        self._hids = np.zeros(n, dtype=np.int32)
        self._hpos = np.full(n, -1, dtype=np.int32)
        self._state = None

    def init(self, s: int, t: int, tau_dep: int) -> None:
        self.ailr.init(s, tau_dep)
        g = int(self.ailr.genarr[0])
        if g == 1:
            self.dstamp[:] = 0
            self.mstamp[:] = 0
        self.params[2] = tau_dep
        self.params[3] = g
        self.counter[0] = 0
        p, b, h = self.prof, self.bounds, self.h
        tup = self.ailr.kernel_tuple()
        imp_backward(h.up_first_out, h.up_head, p.func_down, p.table, p.bmin_down,
                     b.alive_down, p.K, p.beta, tup, tau_dep, h.rank[t], self.dbw,
                     self.dstamp, g, self._hkeys, self._hids, self._hpos)
        self._state = (h.up_first_out, h.up_head, p.func_up, p.table, p.bmin_up, b.alive_up,
                       self.params, tup, self.dbw, self.dstamp, self.memo, self.cursor,
                       self.hib, self.mstamp, self.stack, self.it, self.counter, h.rank)

    def state(self) -> tuple:
        return self._state

    def cursor_of(self, v: int) -> int | None:
        r = self.h.rank[v]
        return int(self.cursor[r]) if self.mstamp[r] == self.params[3] else None


# -- persistence -------------------------------------------------------------

_HEADER = struct.Struct("<4I")


def save_profile(path, prof: BucketProfile) -> None:
    """Header ``(K, beta, arcs, functions)``, bucket-major u32 profiles (up then
    down), the upper bounds, then the bucket -> function table."""
    with open(path, "wb") as f:
        f.write(_HEADER.pack(prof.K, prof.beta, prof.num_arcs, prof.func_up.shape[0]))
        for arr in (prof.func_up, prof.func_down, prof.ub_up, prof.ub_down, prof.table):
            f.write(np.asarray(arr, dtype="<u4").tobytes())


def load_profile(path) -> BucketProfile:
    with open(path, "rb") as f:
        K, beta, A, F = _HEADER.unpack(f.read(_HEADER.size))

        def take(count, shape):
            return np.frombuffer(f.read(4 * count), dtype="<u4").reshape(shape)

        fu = take(F * A, (F, A)).astype(np.int32)
        fd = take(F * A, (F, A)).astype(np.int32)
        ubu = take(A, (A,)).astype(np.int64)
        ubd = take(A, (A,)).astype(np.int64)
        table = take(K, (K,)).astype(np.int32)
    return BucketProfile(K, beta, fu, fd, table, ubu, ubd,
                         fu[np.unique(table)].min(axis=0), fd[np.unique(table)].min(axis=0))


def profile_file(directory) -> str:
    return os.path.join(directory, "imp_profile.bin")
