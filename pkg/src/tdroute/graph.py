"""Graph storage, periodic piecewise-linear travel time functions and path evaluation.

Times and durations are integer milliseconds. ``INF`` is the saturating
"blocked / unreachable" sentinel; all sums are clamped to it.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from numba import njit

PERIOD = 86_400_000
INF = 2**31 - 1


class PathError(ValueError):
    pass


@njit(cache=True, inline="always")
def sat_add(a, b):
    s = a + b
    if s > INF:
        return INF
    return s


@njit(cache=True)
def ttf_eval(first_bp, bp_dep, bp_tt, e, tau):
    lo = first_bp[e]
    hi = first_bp[e + 1]
    if hi - lo == 1:
        return np.int64(bp_tt[lo])
    t = tau % PERIOD
    # largest index with departure <= t
    a = lo
    b = hi
    while a < b:
        mid = (a + b) >> 1
        if bp_dep[mid] <= t:
            a = mid + 1
        else:
            b = mid
    idx = a - 1
    if idx < lo:
        t1 = np.int64(bp_dep[hi - 1]) - PERIOD
        w1 = np.int64(bp_tt[hi - 1])
        t2 = np.int64(bp_dep[lo])
        w2 = np.int64(bp_tt[lo])
    elif idx == hi - 1:
        t1 = np.int64(bp_dep[idx])
        w1 = np.int64(bp_tt[idx])
        t2 = np.int64(bp_dep[lo]) + PERIOD
        w2 = np.int64(bp_tt[lo])
    else:
        t1 = np.int64(bp_dep[idx])
        w1 = np.int64(bp_tt[idx])
        t2 = np.int64(bp_dep[idx + 1])
        w2 = np.int64(bp_tt[idx + 1])
    if t == t1:
        return w1
    # exact integer interpolation, then rounded down (values are positive)
    return w1 + ((w2 - w1) * (t - t1)) // (t2 - t1)


@njit(cache=True)
def ttf_min_over(first_bp, bp_dep, bp_tt, e, a, b):
    lo = first_bp[e]
    hi = first_bp[e + 1]
    if hi - lo == 1:
        return np.int64(bp_tt[lo])
    if b - a >= PERIOD - 1:
        m = np.int64(bp_tt[lo])
        for i in range(lo + 1, hi):
            if bp_tt[i] < m:
                m = np.int64(bp_tt[i])
        return m
    m = min(ttf_eval(first_bp, bp_dep, bp_tt, e, a), ttf_eval(first_bp, bp_dep, bp_tt, e, b))
    a_mod = a % PERIOD
    length = b - a
    for i in range(lo, hi):
        off = (np.int64(bp_dep[i]) - a_mod) % PERIOD
        if 0 < off < length and bp_tt[i] < m:
            m = np.int64(bp_tt[i])
    return m


@njit(cache=True)
def ttf_max_over(first_bp, bp_dep, bp_tt, e, a, b):
    lo = first_bp[e]
    hi = first_bp[e + 1]
    if hi - lo == 1:
        return np.int64(bp_tt[lo])
    if b - a >= PERIOD - 1:
        m = np.int64(bp_tt[lo])
        for i in range(lo + 1, hi):
            if bp_tt[i] > m:
                m = np.int64(bp_tt[i])
        return m
    m = max(ttf_eval(first_bp, bp_dep, bp_tt, e, a), ttf_eval(first_bp, bp_dep, bp_tt, e, b))
    a_mod = a % PERIOD
    length = b - a
    for i in range(lo, hi):
        off = (np.int64(bp_dep[i]) - a_mod) % PERIOD
        if 0 < off < length and bp_tt[i] > m:
            m = np.int64(bp_tt[i])
    return m


@njit(cache=True)
def _all_min_over(first_bp, bp_dep, bp_tt, a, b, out):
    for e in range(out.shape[0]):
        out[e] = ttf_min_over(first_bp, bp_dep, bp_tt, e, a, b)


@njit(cache=True)
def _all_max_over(first_bp, bp_dep, bp_tt, a, b, out):
    for e in range(out.shape[0]):
        out[e] = ttf_max_over(first_bp, bp_dep, bp_tt, e, a, b)


@njit(cache=True)
def _fifo_violations(first_bp, bp_dep, bp_tt, out):
    # slope between consecutive breakpoints (including wrap) must be >= -1
    for e in range(first_bp.shape[0] - 1):
        lo = first_bp[e]
        hi = first_bp[e + 1]
        bad = False
        for i in range(lo, hi):
            if bp_tt[i] < 0:
                bad = True
            if i > lo and bp_dep[i] <= bp_dep[i - 1]:
                bad = True
            if bp_dep[i] < 0 or bp_dep[i] >= PERIOD:
                bad = True
        if hi - lo > 1 and not bad:
            for i in range(lo, hi):
                t1 = np.int64(bp_dep[i])
                w1 = np.int64(bp_tt[i])
                if i + 1 < hi:
                    t2 = np.int64(bp_dep[i + 1])
                    w2 = np.int64(bp_tt[i + 1])
                else:
                    t2 = np.int64(bp_dep[lo]) + PERIOD
                    w2 = np.int64(bp_tt[lo])
                if w2 - w1 < -(t2 - t1):
                    bad = True
        out[e] = bad


@dataclass(frozen=True)
class Graph:
    """Directed simple graph in compressed sparse row form.

    Edge ``e`` runs from the vertex whose range ``first_out[u]:first_out[u+1]``
    contains ``e`` to ``head[e]``.
    """

    first_out: np.ndarray
    head: np.ndarray

    @property
    def n(self) -> int:
        return len(self.first_out) - 1

    @property
    def m(self) -> int:
        return len(self.head)

    @classmethod
    def from_edges(cls, n: int, tails, heads) -> tuple["Graph", np.ndarray]:
        """Build from an edge list; returns the graph and the permutation that
        maps new edge IDs to positions in the input list."""
        tails = np.asarray(tails, dtype=np.int64)
        heads = np.asarray(heads, dtype=np.int64)
        perm = np.lexsort((heads, tails))
        t = tails[perm]
        h = heads[perm]
        if len(t) and (t.min() < 0 or t.max() >= n or h.min() < 0 or h.max() >= n):
            raise ValueError("edge endpoint out of range")
        if len(t) > 1:
            dup = (t[1:] == t[:-1]) & (h[1:] == h[:-1])
            if dup.any():
                raise ValueError("graph must be simple: duplicate edge")
        counts = np.bincount(t, minlength=n)
        first_out = np.zeros(n + 1, dtype=np.int32)
        np.cumsum(counts, out=first_out[1:])
        return cls(first_out, h.astype(np.int32)), perm

    def tails(self) -> np.ndarray:
        return np.repeat(np.arange(self.n, dtype=np.int32), np.diff(self.first_out))

    def out_edges(self, u: int) -> range:
        return range(int(self.first_out[u]), int(self.first_out[u + 1]))

    def find_edge(self, u: int, v: int) -> int:
        lo, hi = int(self.first_out[u]), int(self.first_out[u + 1])
        i = lo + int(np.searchsorted(self.head[lo:hi], v))
        if i < hi and self.head[i] == v:
            return i
        return -1

    def validate(self) -> None:
        fo = self.first_out
        if fo[0] != 0 or fo[-1] != self.m or np.any(np.diff(fo) < 0):
            raise ValueError("out-edge ranges must partition [0, m)")
        if self.m and (self.head.min() < 0 or self.head.max() >= self.n):
            raise ValueError("head out of range")
        t = self.tails()
        key = t.astype(np.int64) * self.n + self.head
        if len(np.unique(key)) != self.m:
            raise ValueError("duplicate edge")


def reverse(g: Graph) -> tuple[Graph, np.ndarray]:
    """Reversed graph plus ``orig[e_rev]`` = ID of the original edge."""
    rg, perm = Graph.from_edges(g.n, g.head, g.tails())
    return rg, perm.astype(np.int32)


@dataclass(frozen=True)
class TravelTimeFunctions:
    """Per-edge periodic piecewise-linear functions in struct-of-arrays form."""

    first_bp: np.ndarray
    bp_dep: np.ndarray
    bp_tt: np.ndarray

    @property
    def m(self) -> int:
        return len(self.first_bp) - 1

    @classmethod
    def constant(cls, values) -> "TravelTimeFunctions":
        values = np.asarray(values, dtype=np.int64)
        m = len(values)
        return cls(
            np.arange(m + 1, dtype=np.int32),
            np.zeros(m, dtype=np.int32),
            values.astype(np.int32),
        )

    @classmethod
    def from_lists(cls, functions) -> "TravelTimeFunctions":
        """``functions[e]`` is a list of ``(departure, travel)`` pairs."""
        counts = [len(f) for f in functions]
        if any(c == 0 for c in counts):
            raise ValueError("every function needs at least one breakpoint")
        first_bp = np.zeros(len(functions) + 1, dtype=np.int32)
        np.cumsum(counts, out=first_bp[1:])
        flat = [bp for f in functions for bp in f]
        arr = np.asarray(flat, dtype=np.int64).reshape(-1, 2)
        return cls(first_bp, arr[:, 0].astype(np.int32), arr[:, 1].astype(np.int32))

    def breakpoints(self, e: int) -> list[tuple[int, int]]:
        lo, hi = int(self.first_bp[e]), int(self.first_bp[e + 1])
        return list(zip(self.bp_dep[lo:hi].tolist(), self.bp_tt[lo:hi].tolist()))

    def is_constant(self) -> np.ndarray:
        return np.diff(self.first_bp) == 1

    def evaluate(self, e: int, tau: int) -> int:
        return int(ttf_eval(self.first_bp, self.bp_dep, self.bp_tt, e, tau))

    def min_over(self, e: int, a: int, b: int) -> int:
        if a > b:
            raise ValueError("interval start after end")
        return int(ttf_min_over(self.first_bp, self.bp_dep, self.bp_tt, e, a, b))

    def max_over(self, e: int, a: int, b: int) -> int:
        if a > b:
            raise ValueError("interval start after end")
        return int(ttf_max_over(self.first_bp, self.bp_dep, self.bp_tt, e, a, b))

    def all_min_over(self, a: int, b: int) -> np.ndarray:
        out = np.empty(self.m, dtype=np.int64)
        _all_min_over(self.first_bp, self.bp_dep, self.bp_tt, a, b, out)
        return out

    def all_max_over(self, a: int, b: int) -> np.ndarray:
        out = np.empty(self.m, dtype=np.int64)
        _all_max_over(self.first_bp, self.bp_dep, self.bp_tt, a, b, out)
        return out

    def global_min(self) -> np.ndarray:
        return self.all_min_over(0, PERIOD)

    def global_max(self) -> np.ndarray:
        return self.all_max_over(0, PERIOD)

    def invalid_edges(self) -> np.ndarray:
        """Edges whose breakpoints are malformed or violate FIFO."""
        out = np.zeros(self.m, dtype=np.bool_)
        _fifo_violations(self.first_bp, self.bp_dep, self.bp_tt, out)
        return np.flatnonzero(out)

    def validate(self) -> None:
        bad = self.invalid_edges()
        if len(bad):
            raise ValueError(f"{len(bad)} travel time functions are invalid, first: edge {bad[0]}")


def path_travel_time(g: Graph, weights, path, tau: int) -> int:
    """Travel time of ``path`` departing at ``tau``; ``weights`` is anything with
    ``evaluate(e, tau)`` (predicted functions or combined traffic weights)."""
    t = int(tau)
    total = 0
    for u, v in zip(path[:-1], path[1:]):
        e = g.find_edge(int(u), int(v))
        if e < 0:
            raise PathError(f"no edge {u}->{v}")
        w = weights.evaluate(e, t)
        if w >= INF:
            return INF
        total += w
        t += w
    return min(total, INF)


# -- binary directory format -------------------------------------------------

_GRAPH_FILES = ("first_out", "head", "ttf_first_bp", "bp_departure", "bp_travel")


def write_u32(path, arr) -> None:
    a = np.asarray(arr)
    if a.size and (a.min() < 0 or a.max() > 0xFFFFFFFF):
        raise ValueError(f"{path}: value out of u32 range")
    a.astype("<u4").tofile(path)


def read_u32(path) -> np.ndarray:
    return np.fromfile(path, dtype="<u4")


def save_graph(directory, g: Graph, ttf: TravelTimeFunctions) -> None:
    os.makedirs(directory, exist_ok=True)
    arrays = (g.first_out, g.head, ttf.first_bp, ttf.bp_dep, ttf.bp_tt)
    for name, arr in zip(_GRAPH_FILES, arrays):
        write_u32(os.path.join(directory, name), arr)


def load_graph(directory) -> tuple[Graph, TravelTimeFunctions]:
    first_out, head, first_bp, dep, tt = (
        read_u32(os.path.join(directory, name)) for name in _GRAPH_FILES
    )
    g = Graph(first_out.astype(np.int32), head.astype(np.int32))
    ttf = TravelTimeFunctions(first_bp.astype(np.int32), dep.astype(np.int32), tt.astype(np.int32))
    g.validate()
    if ttf.m != g.m:
        raise ValueError("travel time function count does not match edge count")
    return g, ttf
