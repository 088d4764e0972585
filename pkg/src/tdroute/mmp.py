"""Multi-metric potentials: scalar lower-bound metrics for many departure
windows, one chosen (and refined while the search runs) per query."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .cch import (AugmentedHierarchy, CHQuery, Metric, ReducedTopology, basic_customize,
                  perfect_customize, reduce_topology, upward_search)
from .graph import INF, PERIOD, TravelTimeFunctions
from .search import Potential
from .traffic import LIVE_WINDOW, LiveOverlay, extract_bounds

HOUR = 3_600_000
MINUTE = 60_000
FULL_DAY = -1  # slot start marker: valid at every time


@dataclass(frozen=True)
class IntervalGrid:
    """Departure windows: each length starts every ``step`` within the day window."""

    lengths: tuple[int, ...] = (HOUR, 2 * HOUR, 4 * HOUR, 8 * HOUR)
    step: int = 30 * MINUTE
    day_start: int = 6 * HOUR
    day_end: int = 22 * HOUR
    live_window: int = LIVE_WINDOW

    def intervals(self) -> list[tuple[int, int]]:
        """Full day first, then every window in (length, start) order."""
        out = [(0, PERIOD)]
        for ln in self.lengths:
            a = self.day_start
            while a + ln <= self.day_end:
                out.append((a, a + ln))
                a += self.step
        return out

    @classmethod
    def parse(cls, text: str) -> "IntervalGrid":
        """``key = value`` lines; lengths in hours (comma list), the rest in minutes
        except ``day_start_h``/``day_end_h``."""
        kv = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            k, _, v = line.partition("=")
            kv[k.strip()] = v.strip()
        d = cls()
        lengths = (tuple(int(round(float(x) * HOUR)) for x in kv["lengths_h"].split(","))
                   if "lengths_h" in kv else d.lengths)
        return cls(
            lengths=lengths,
            step=int(round(float(kv.get("step_min", d.step / MINUTE)) * MINUTE)),
            day_start=int(round(float(kv.get("day_start_h", d.day_start / HOUR)) * HOUR)),
            day_end=int(round(float(kv.get("day_end_h", d.day_end / HOUR)) * HOUR)),
            live_window=int(round(float(kv.get("live_window_min", d.live_window / MINUTE)) * MINUTE)),
        )

    def dump(self) -> str:
        return (f"lengths_h = {','.join(str(x / HOUR) for x in self.lengths)}\n"
                f"step_min = {self.step / MINUTE}\n"
                f"day_start_h = {self.day_start / HOUR}\n"
                f"day_end_h = {self.day_end / HOUR}\n"
                f"live_window_min = {self.live_window / MINUTE}\n")


@njit(cache=True)
def mmp_dist(first_out, head, w_up, alive_up, dbw, dstamp, memo, mslot, mstamp, gen,
             contains, cand_row, stack, it, u, j, counter):
    """Lazy RPHAST distance under candidate ``j``; memoized values computed for
    a candidate whose window contains ``j``'s are reused as they are."""
    if mstamp[u] == gen and contains[mslot[u], j]:
        return memo[u]
    row = cand_row[j]
    top = 0
    stack[0] = u
    it[u] = first_out[u]
    memo[u] = dbw[u] if dstamp[u] == gen else INF
    mstamp[u] = 0
    while top >= 0:
        x = stack[top]
        a = it[x]
        if a == first_out[x + 1]:
            mstamp[x] = gen
            mslot[x] = j
            top -= 1
            continue
        w = w_up[row, a]
        if not alive_up[a] or w >= INF:
            it[x] = a + 1
            continue
        y = head[a]
        if mstamp[y] == gen and contains[mslot[y], j]:
            counter[0] += 1
            c = memo[y] + w
            if c < memo[x]:
                memo[x] = c
            it[x] = a + 1
        else:
            top += 1
            stack[top] = y
            it[y] = first_out[y]
            memo[y] = dbw[y] if dstamp[y] == gen else INF
            mstamp[y] = 0
    return memo[u]


@njit(cache=True)
def _mmp_kernel(state, v, tau):
    (first_out, head, w_up, alive_up, dbw, dstamp, memo, mslot, mstamp, genarr,
     contains, cand_row, cand_start, meta, stack, it, counter, rank) = state
    tau_max = meta[0]
    ncand = meta[1]
    tc = tau if tau < tau_max else tau_max
    j = ncand - 1
    for i in range(ncand):
        if cand_start[i] <= tc:
            j = i
            break
    d = mmp_dist(first_out, head, w_up, alive_up, dbw, dstamp, memo, mslot, mstamp,
                 genarr[0], contains, cand_row, stack, it, rank[v], j, counter)
    return d if d < INF else np.int64(INF)


def _customize_many(h, weight_rows, threads):
    with ThreadPoolExecutor(max(1, threads)) as pool:
        metrics = list(pool.map(lambda w: basic_customize(h, w), weight_rows))
    up = np.stack([m.w_up for m in metrics])
    down = np.stack([m.w_down for m in metrics])
    return up, down


@dataclass
class MmpData:
    """Customized interval metrics plus the update-phase products.

    ``table[i]`` maps interval ``i`` to a row of ``func_up``/``func_down``
    (identity until compressed).
    """

    h: AugmentedHierarchy
    grid: IntervalGrid
    intervals: list[tuple[int, int]]
    func_up: np.ndarray
    func_down: np.ndarray
    table: np.ndarray
    full_up: np.ndarray
    full_down: np.ndarray
    tau_now: int | None = None
    live_up: np.ndarray | None = None
    live_down: np.ndarray | None = None
    cmax: Metric | None = None
    reduced: ReducedTopology | None = None
    red_up: np.ndarray | None = None
    red_down: np.ndarray | None = None

    @property
    def updated(self) -> bool:
        return self.reduced is not None

    def interval_metric(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        r = int(self.table[i])
        return self.func_up[r], self.func_down[r]

    def with_compression(self, func_up, func_down, table) -> "MmpData":
        """Swap in compressed interval functions; the update must be rerun."""
        return MmpData(self.h, self.grid, self.intervals, func_up, func_down,
                       np.asarray(table, dtype=np.int32), self.full_up, self.full_down)


def mmp_preprocess(h: AugmentedHierarchy, ttf: TravelTimeFunctions,
                   grid: IntervalGrid | None = None, threads: int = 1) -> MmpData:
    """Per-interval lower bounds of the predictions, each basic-customized."""
    grid = grid or IntervalGrid()
    intervals = grid.intervals()
    rows = [ttf.all_min_over(a, b) for a, b in intervals]
    up, down = _customize_many(h, rows, threads)
    table = np.arange(len(intervals), dtype=np.int32)
    return MmpData(h, grid, intervals, up, down, table, up[0].copy(), down[0].copy())


def update_metrics(h: AugmentedHierarchy, ttf: TravelTimeFunctions, overlay: LiveOverlay,
                   live_window: int = LIVE_WINDOW) -> tuple[Metric, Metric]:
    """Live-window lower-bound metric and the perfected all-day upper bound."""
    cmax_e, live_lb = extract_bounds(ttf, overlay, live_window)
    live = basic_customize(h, live_lb)
    cmax = perfect_customize(h, basic_customize(h, cmax_e))
    return live, cmax


def mmp_assemble(data: MmpData, live: Metric, cmax: Metric, tau_now: int) -> MmpData:
    """Shared reduced topology for all metrics.

    A direction of an arc is dropped when even the full-day lower bound
    exceeds the exact upper-bound distance; every other metric dominates the
    full-day one, so the test holds for all of them at once.
    """
    alive_up = ~(data.full_up.astype(np.int64) > cmax.w_up_star)
    alive_down = ~(data.full_down.astype(np.int64) > cmax.w_down_star)
    red = reduce_topology(data.h, alive_up, alive_down)
    red_up = np.concatenate([red.take(data.func_up), red.take(live.w_up)[None]])
    red_down = np.concatenate([red.take(data.func_down), red.take(live.w_down)[None]])
    return MmpData(data.h, data.grid, data.intervals, data.func_up, data.func_down, data.table,
                   data.full_up, data.full_down, int(tau_now), live.w_up, live.w_down,
                   cmax, red, np.ascontiguousarray(red_up), np.ascontiguousarray(red_down))


def mmp_update(data: MmpData, ttf: TravelTimeFunctions, overlay: LiveOverlay) -> MmpData:
    live, cmax = update_metrics(data.h, ttf, overlay, data.grid.live_window)
    return mmp_assemble(data, live, cmax, overlay.tau_now)


class MMPotential(Potential):
    """Lower bounds from the tightest window containing every arrival time
    that matters, optionally refined as the search advances in time."""

    kernel = staticmethod(_mmp_kernel)
    name = "mmp"

    def __init__(self, data: MmpData, switching: bool = True):
        if not data.updated:
            raise RuntimeError("mmp_update must run before queries")
        self.data = data
        self.switching = switching
        red = data.reduced
        n = data.h.n
        self.nslots = len(data.intervals) + 1
        self.live_row = len(data.func_up)
        self.ub = CHQuery(data.h, data.cmax, use_perfect=True,
                          alive_up=data.cmax.alive_up, alive_down=data.cmax.alive_down)
        self.dbw = np.zeros(n, dtype=np.int64)
        self.dstamp = np.zeros(n, dtype=np.int32)
        self.memo = np.zeros(n, dtype=np.int64)
        self.mslot = np.zeros(n, dtype=np.int32)
        self.mstamp = np.zeros(n, dtype=np.int32)
        self.genarr = np.zeros(1, dtype=np.int32)
        self.contains = np.zeros((self.nslots, self.nslots), dtype=np.bool_)
        self.cand_row = np.zeros(self.nslots, dtype=np.int32)
        self.cand_start = np.zeros(self.nslots, dtype=np.int64)
        self.meta = np.zeros(2, dtype=np.int64)
        self.stack = np.zeros(n, dtype=np.int32)
        self.it = np.zeros(n, dtype=np.int32)
        self.counter = np.zeros(1, dtype=np.int64)
        self._hkeys = np.zeros(n, dtype=np.int64)
        self._hids = np.zeros(n, dtype=np.int32)
        self._hpos = np.full(n, -1, dtype=np.int32)
        self._visited = np.zeros(n, dtype=np.int32)
        self._state = (red.up_first_out, red.up_head, data.red_up, red.alive_up, self.dbw,
                       self.dstamp, self.memo, self.mslot, self.mstamp, self.genarr,
                       self.contains, self.cand_row, self.cand_start, self.meta, self.stack,
                       self.it, self.counter, data.h.rank)
        self.tau_max = INF
        self.selected: list[tuple[int, int]] = []

    def windows(self, tau_dep: int) -> list[tuple[int, int, int]]:
        """``(start, end, row)`` of every window usable for departures on the
        day of ``tau_dep``; the full day uses start ``FULL_DAY``."""
        d = self.data
        k = (tau_dep // PERIOD) * PERIOD
        out = []
        for i, (a, b) in enumerate(d.intervals):
            row = int(d.table[i])
            if (a, b) == (0, PERIOD):
                out.append((FULL_DAY, INF, row))
            else:
                out.append((k + a, k + b, row))
        if d.tau_now is not None:
            out.append((d.tau_now, d.tau_now + d.grid.live_window, self.live_row))
        return out

    def select(self, tau_dep: int, tau_max: int) -> list[tuple[int, int, int]]:
        """Eligible windows ordered tightest first; the last one contains
        ``[tau_dep, tau_max]`` and, with switching off, is the only one."""
        wins = self.windows(tau_dep)

        def length(w):
            return INF if w[0] == FULL_DAY else w[1] - w[0]

        if tau_max >= INF:
            outer = next(w for w in wins if w[0] == FULL_DAY)
        else:
            ok = [w for w in wins if w[0] == FULL_DAY or (w[0] <= tau_dep and tau_max <= w[1])]
            outer = min(ok, key=lambda w: (length(w), -w[0]))
        if not self.switching or outer[0] == FULL_DAY and tau_max >= INF:
            return [outer]

        def inside(w, o):
            return o[0] == FULL_DAY or (w[0] != FULL_DAY and o[0] <= w[0] and w[1] <= o[1])

        cands = [w for w in wins if inside(w, outer) and w[1] >= tau_max and w != outer]
        cands.sort(key=lambda w: (length(w), -w[0]))
        return cands + [outer]

    def init(self, s: int, t: int, tau_dep: int) -> None:
        ub = self.ub.distance(s, t)
        self.tau_max = INF if ub >= INF else tau_dep + ub
        sel = self.select(tau_dep, self.tau_max)
        self.selected = sel
        c = len(sel)
        for i, (a, b, row) in enumerate(sel):
            self.cand_row[i] = row
            self.cand_start[i] = a
            for j, (a2, b2, _) in enumerate(sel):
                self.contains[i, j] = a == FULL_DAY or (a2 != FULL_DAY and a <= a2 and b2 <= b)
        self.meta[0] = self.tau_max
        self.meta[1] = c
        g = int(self.genarr[0]) + 1
        if g >= 2**31 - 1:
            self.dstamp[:] = 0
            self.mstamp[:] = 0
            g = 1
        self.genarr[0] = g
        self.counter[0] = 0
        red = self.data.reduced
        outer_row = sel[-1][2]
        upward_search(red.up_first_out, red.up_head, self.data.red_down[outer_row],
                      red.alive_down, self.data.h.rank[t], self.dbw, self.dstamp, g,
                      self._hkeys, self._hids, self._hpos, self._visited)

    def state(self) -> tuple:
        return self._state
