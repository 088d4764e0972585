"""Live traffic overlay and the combined predicted/live travel time function."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .graph import INF, Graph, TravelTimeFunctions, sat_add, ttf_eval, ttf_min_over

log = logging.getLogger(__name__)

LIVE_WINDOW = 59 * 60 * 1000


@njit(cache=True)
def combined_eval_kernel(first_bp, bp_dep, bp_tt, live_val, live_end, e, tau):
    p = ttf_eval(first_bp, bp_dep, bp_tt, e, tau)
    end = np.int64(live_end[e])
    if tau >= end:
        return p
    g = sat_add(ttf_eval(first_bp, bp_dep, bp_tt, e, end), end - tau)
    lv = np.int64(live_val[e])
    if lv < g:
        g = lv
    return g if g > p else p


@njit(cache=True)
def _live_min_over(first_bp, bp_dep, bp_tt, e, lv, end, a, b):
    """Exact min of max(p, min(lv, p(end) + end - tau)) over integer tau in [a, b]."""
    best = np.int64(INF)
    # after the live entry expires the function is p
    if b >= end:
        m = ttf_min_over(first_bp, bp_dep, bp_tt, e, max(a, end), b)
        if m < best:
            best = m
    if a >= end:
        return best
    pe = ttf_eval(first_bp, bp_dep, bp_tt, e, end)
    # live value dominates while lv <= pe + end - tau, i.e. tau <= cross
    cross = np.int64(INF) if lv >= INF else pe + end - lv
    if lv < INF and a <= cross:
        hi = min(b, cross, end - 1)
        if hi >= a:
            m = ttf_min_over(first_bp, bp_dep, bp_tt, e, a, hi)
            v = m if m > lv else lv
            if v < best:
                best = v
    # switch-back segment with slope -1; g - p is non-increasing there
    lo = a
    if lv < INF and cross + 1 > lo:
        lo = cross + 1
    hi = min(b, end - 1)
    if lo <= hi:
        x, y = lo, hi + 1
        while x < y:
            mid = (x + y) >> 1
            if pe + end - mid < ttf_eval(first_bp, bp_dep, bp_tt, e, mid):
                y = mid
            else:
                x = mid + 1
        first_p = x  # first tau where p wins
        if first_p > lo:
            v = pe + end - (first_p - 1)
            if v < best:
                best = v
        if first_p <= hi:
            m = ttf_min_over(first_bp, bp_dep, bp_tt, e, first_p, hi)
            if m < best:
                best = m
    return best


@njit(cache=True)
def _extract_bounds(first_bp, bp_dep, bp_tt, live_edges, live_vals, live_ends, a, b,
                    cmax, live_lb):
    for i in range(live_edges.shape[0]):
        e = live_edges[i]
        lv = np.int64(live_vals[i])
        cmax[e] = INF if lv >= INF else max(cmax[e], lv)
        live_lb[e] = _live_min_over(first_bp, bp_dep, bp_tt, e, lv, np.int64(live_ends[i]), a, b)


@dataclass(frozen=True)
class LiveOverlay:
    """Live travel times ``live[i]`` for ``edges[i]`` valid until ``end[i]``.

    Edges without an entry implicitly expire at ``tau_now``.
    """

    tau_now: int
    edges: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int32))
    live: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    end: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.edges)

    @classmethod
    def empty(cls, tau_now: int = 0) -> "LiveOverlay":
        return cls(int(tau_now))

    @classmethod
    def build(cls, ttf: TravelTimeFunctions, tau_now: int, entries) -> "LiveOverlay":
        """Validate ``(edge, live_ms, end_ms)`` entries against the model.

        Entries not slower than the prediction at ``tau_now`` are dropped with a
        warning, as are entries expiring before ``tau_now``.
        """
        keep = {}
        dropped_fast = dropped_expired = 0
        for e, lv, end in entries:
            e, lv, end = int(e), min(int(lv), INF), int(end)
            if end < tau_now:
                dropped_expired += 1
                continue
            if lv <= ttf.evaluate(e, tau_now):
                dropped_fast += 1
                continue
            keep[e] = (lv, end)
        if dropped_fast:
            log.warning("dropped %d live entries not slower than the prediction", dropped_fast)
        if dropped_expired:
            log.warning("dropped %d live entries already expired", dropped_expired)
        edges = np.array(sorted(keep), dtype=np.int32)
        live = np.array([keep[e][0] for e in edges], dtype=np.int64)
        end = np.array([keep[e][1] for e in edges], dtype=np.int64)
        return cls(int(tau_now), edges, live, end)

    def dense(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        live_val = np.zeros(m, dtype=np.int64)
        live_end = np.full(m, self.tau_now, dtype=np.int64)
        live_val[self.edges] = self.live
        live_end[self.edges] = self.end
        return live_val, live_end


class TrafficWeights:
    """Combined weights c: predicted functions with an optional live overlay.

    Evaluated on demand, never materialized. Swapping the overlay builds a
    new object, so in-flight users keep the old arrays.
    """

    def __init__(self, ttf: TravelTimeFunctions, overlay: LiveOverlay | None = None):
        self.ttf = ttf
        self.overlay = overlay if overlay is not None else LiveOverlay.empty()
        self.live_val, self.live_end = self.overlay.dense(ttf.m)

    @property
    def arrays(self):
        t = self.ttf
        return t.first_bp, t.bp_dep, t.bp_tt, self.live_val, self.live_end

    def evaluate(self, e: int, tau: int) -> int:
        return int(combined_eval_kernel(*self.arrays, e, tau))


def combined_eval(e: int, tau: int, ttf: TravelTimeFunctions, overlay: LiveOverlay) -> int:
    """c(e, tau) = max(p(e, tau), min(live(e), p(e, end(e)) + end(e) - tau))."""
    i = int(np.searchsorted(overlay.edges, e))
    if i >= len(overlay.edges) or overlay.edges[i] != e:
        return ttf.evaluate(e, tau)
    end = int(overlay.end[i])
    p = ttf.evaluate(e, tau)
    if tau >= end:
        return p
    g = min(int(overlay.live[i]), min(ttf.evaluate(e, end) + end - tau, INF))
    return max(p, g)


def extract_bounds(ttf: TravelTimeFunctions, overlay: LiveOverlay, delta: int = LIVE_WINDOW):
    """Per-edge upper bound of c over all future times and the lower bound of c
    over ``[tau_now, tau_now + delta]``. Blocked edges get ``INF`` upper bounds."""
    a = overlay.tau_now
    b = a + delta
    cmax = ttf.global_max()
    live_lb = ttf.all_min_over(a, b)
    _extract_bounds(ttf.first_bp, ttf.bp_dep, ttf.bp_tt, overlay.edges, overlay.live,
                    overlay.end, a, b, cmax, live_lb)
    return cmax, live_lb


# -- snapshot text format ----------------------------------------------------

def write_snapshot(path, overlay: LiveOverlay) -> None:
    with open(path, "w") as f:
        f.write(f"{overlay.tau_now}\n")
        for e, lv, end in zip(overlay.edges, overlay.live, overlay.end):
            lv_s = "INF" if lv >= INF else str(int(lv))
            f.write(f"{int(e)} {lv_s} {int(end)}\n")


def read_snapshot(path, ttf: TravelTimeFunctions) -> LiveOverlay:
    with open(path) as f:
        lines = [ln.split() for ln in f if ln.strip() and not ln.startswith("#")]
    if not lines or len(lines[0]) != 1:
        raise ValueError(f"{path}: first line must hold tau_now_ms")
    tau_now = int(lines[0][0])
    entries = []
    for parts in lines[1:]:
        if len(parts) != 3:
            raise ValueError(f"{path}: malformed line {' '.join(parts)!r}")
        lv = INF if parts[1].upper() == "INF" else int(parts[1])
        entries.append((int(parts[0]), lv, int(parts[2])))
    bad = [e for e, _, _ in entries if not 0 <= e < ttf.m]
    if bad:
        raise ValueError(f"{path}: edge id {bad[0]} out of range")
    return LiveOverlay.build(ttf, tau_now, entries)


def resolve_vertex_pairs(g: Graph, pairs) -> tuple[list[tuple[int, int, int]], int]:
    """Map ``(tail, head, live_ms, end_ms)`` records to edge IDs; returns the
    resolved entries and the count of unresolvable pairs."""
    out = []
    skipped = 0
    for u, v, lv, end in pairs:
        e = g.find_edge(int(u), int(v)) if 0 <= int(u) < g.n else -1
        if e < 0:
            skipped += 1
            continue
        out.append((e, lv, end))
    if skipped:
        log.warning("skipped %d live entries with unknown vertex pairs", skipped)
    return out, skipped
