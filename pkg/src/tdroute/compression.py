"""Greedy pairwise merging of lower-bound weight functions.

Repeatedly merges the pair with the smallest sum of squared differences into
their elementwise minimum until ``k`` functions remain. Pair sums are
accumulated lazily: an entry carries the index up to which it has been summed,
and summation pauses once the partial sum exceeds the best exact sum known so
far. Because partial sums only grow, the first exact entry at the top of the
queue is the true minimum (ties go to the lowest ``(i, j)``).
"""
from __future__ import annotations

import heapq
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .graph import INF

TERM_CAP = 1 << 40  # per-element cap; INF mismatches cost exactly this
CHUNK = 4096
NO_BOUND = np.iinfo(np.int64).max


@njit(cache=True, nogil=True)
def _partial_sum(fi, fj, start, acc, threshold, chunk):
    n = fi.shape[0]
    idx = start
    while idx < n:
        stop = min(idx + chunk, n)
        for e in range(idx, stop):
            a = np.int64(fi[e])
            b = np.int64(fj[e])
            if a == b:
                continue
            if a >= INF or b >= INF:
                acc += TERM_CAP
            else:
                d = a - b
                t = d * d
                acc += t if t < TERM_CAP else TERM_CAP
        idx = stop
        if acc > threshold:
            break
    return acc, idx


def squared_difference(fi, fj) -> int:
    s, _ = _partial_sum(np.asarray(fi), np.asarray(fj), 0, 0, NO_BOUND, CHUNK)
    return int(s)


@dataclass
class CompressionResult:
    """``functions[table[slot]]`` is the merged function serving ``slot``;
    ``merges`` lists ``(i, j, delta)`` in original slot IDs (``j`` merged into
    ``i``); ``groups[f]`` are the slots behind function ``f``."""

    functions: np.ndarray
    table: np.ndarray
    merges: list[tuple[int, int, int]] = field(default_factory=list)
    groups: list[list[int]] = field(default_factory=list)
    pair_work: int = 0

    def apply(self, slot: int) -> int:
        return int(self.table[slot])


def apply(table, slot: int) -> int:
    return int(table[slot])


def _check(functions, k):
    f = np.asarray(functions)
    if f.ndim != 2 or f.shape[0] == 0:
        raise ValueError("need a non-empty list of equal-length weight vectors")
    if not 1 <= k <= f.shape[0]:
        raise ValueError(f"target count {k} outside [1, {f.shape[0]}]")
    return f


def _finish(f, alive, members, merges, work):
    ids = np.flatnonzero(alive)
    table = np.empty(len(alive), dtype=np.int32)
    groups = []
    for new, old in enumerate(ids):
        groups.append(sorted(members[old]))
        table[members[old]] = new
    return CompressionResult(np.ascontiguousarray(f[ids]), table, merges, groups, work)


def compress(functions, k: int, threads: int = 1) -> CompressionResult:
    f = _check(functions, k).copy()
    n, length = f.shape
    alive = np.ones(n, dtype=bool)
    version = np.zeros(n, dtype=np.int64)
    members = {i: [i] for i in range(n)}
    # entries: (key, i, j, resume, ver_i, ver_j)
    heap = [(0, i, j, 0, 0, 0) for i in range(n) for j in range(i + 1, n)]
    heapq.heapify(heap)
    merges: list[tuple[int, int, int]] = []
    work = 0
    pool = ThreadPoolExecutor(threads) if threads > 1 else None

    def valid(e):
        return alive[e[1]] and alive[e[2]] and version[e[1]] == e[4] and version[e[2]] == e[5]

    def advance(e, threshold):
        s, idx = _partial_sum(f[e[1]], f[e[2]], e[3], e[0], threshold, CHUNK)
        return (int(s), e[1], e[2], int(idx), e[4], e[5])

    try:
        while alive.sum() > k:
            delta_min = min((e[0] for e in heap if e[3] == length and valid(e)), default=NO_BOUND)
            while True:
                top = heapq.heappop(heap)
                if not valid(top):
                    continue
                if top[3] == length:
                    break
                batch = [top]
                # further unfinished entries for concurrent summation
                while pool is not None and len(batch) < threads and heap:
                    e = heapq.heappop(heap)
                    if not valid(e):
                        continue
                    if e[3] == length:
                        heapq.heappush(heap, e)
                        break
                    batch.append(e)
                if pool is None:
                    done = [advance(top, delta_min)]
                else:
                    done = list(pool.map(lambda e: advance(e, delta_min), batch))
                for old, e in zip(batch, done):
                    work += e[3] - old[3]
                    if e[3] == length and e[0] < delta_min:
                        delta_min = e[0]
                    heapq.heappush(heap, e)
            key, i, j = top[0], top[1], top[2]
            np.minimum(f[i], f[j], out=f[i])
            alive[j] = False
            version[i] += 1
            members[i] += members.pop(j)
            merges.append((i, j, key))
            for x in np.flatnonzero(alive):
                if x != i:
                    a, b = (i, int(x)) if i < x else (int(x), i)
                    heapq.heappush(heap, (0, a, b, 0, int(version[a]), int(version[b])))
    finally:
        if pool is not None:
            pool.shutdown()
    return _finish(f, alive, members, merges, work)


def compress_naive(functions, k: int) -> CompressionResult:
    """Reference: exact sums for every pair in every round."""
    f = _check(functions, k).copy()
    n = f.shape[0]
    alive = np.ones(n, dtype=bool)
    members = {i: [i] for i in range(n)}
    merges = []
    while alive.sum() > k:
        ids = np.flatnonzero(alive)
        best = None
        for a in range(len(ids)):
            for b in range(a + 1, len(ids)):
                i, j = int(ids[a]), int(ids[b])
                cand = (squared_difference(f[i], f[j]), i, j)
                if best is None or cand < best:
                    best = cand
        key, i, j = best
        np.minimum(f[i], f[j], out=f[i])
        alive[j] = False
        members[i] += members.pop(j)
        merges.append((i, j, key))
    return _finish(f, alive, members, merges, 0)


def replay_groups(functions, result: CompressionResult) -> bool:
    """Each merged function equals the elementwise minimum of its group."""
    f = np.asarray(functions)
    return all(np.array_equal(result.functions[g], f[members].min(axis=0))
               for g, members in enumerate(result.groups))
