"""Independent brute-force oracles for the bucket and acceptance tests."""
import heapq

import numpy as np
from numba import njit

INF = 2**31 - 1
PERIOD = 86_400_000


@njit(cache=True)
def _eval(first_bp, bp_dep, bp_tt, e, tau):
    lo, hi = first_bp[e], first_bp[e + 1]
    if hi - lo == 1:
        return np.int64(bp_tt[lo])
    t = tau % PERIOD
    # linear scan: functions here are short
    i = hi - 1
    while i >= lo and bp_dep[i] > t:
        i -= 1
    if i < lo:
        t1, w1 = np.int64(bp_dep[hi - 1]) - PERIOD, np.int64(bp_tt[hi - 1])
        t2, w2 = np.int64(bp_dep[lo]), np.int64(bp_tt[lo])
    elif i == hi - 1:
        t1, w1 = np.int64(bp_dep[i]), np.int64(bp_tt[i])
        t2, w2 = np.int64(bp_dep[lo]) + PERIOD, np.int64(bp_tt[lo])
    else:
        t1, w1 = np.int64(bp_dep[i]), np.int64(bp_tt[i])
        t2, w2 = np.int64(bp_dep[i + 1]), np.int64(bp_tt[i + 1])
    return w1 + ((w2 - w1) * (t - t1)) // (t2 - t1)


@njit(cache=True)
def bucket_minima(first_out, head, first_bp, bp_dep, bp_tt, rank, x, y, threshold,
                  step, K, beta):
    """Minimum over each bucket of the x -> y travel time whose interior
    vertices all rank below ``threshold``, sampling departures every ``step``."""
    n = first_out.shape[0] - 1
    out = np.full(K, INF, dtype=np.int64)
    arr = np.full(n, INF, dtype=np.int64)
    touched = np.empty(n, dtype=np.int64)
    for dep in range(0, K * beta, step):
        nt = 0
        arr[x] = dep
        touched[nt] = x
        nt += 1
        heap = [(np.int64(dep), np.int64(x))]
        best = np.int64(INF)
        while len(heap) > 0:
            d, u = heapq.heappop(heap)
            if d > arr[u]:
                continue
            if u == y:
                best = d - dep
                break
            if u != x and rank[u] >= threshold:
                continue
            for e in range(first_out[u], first_out[u + 1]):
                v = head[e]
                if v != y and rank[v] >= threshold:
                    continue
                c = d + _eval(first_bp, bp_dep, bp_tt, e, d)
                if c < arr[v]:
                    if arr[v] == INF:
                        touched[nt] = v
                        nt += 1
                    arr[v] = c
                    heapq.heappush(heap, (c, np.int64(v)))
        for i in range(nt):
            arr[touched[i]] = INF
        k = dep // beta
        if best < out[k]:
            out[k] = best
    return out


def check_buckets(g, ttf, h, prof, step=1000):
    """Count bucket values above the sampled restricted minimum; returns
    ``(violations, checked)``."""
    order, tails = h.order, h.arc_tails()
    bad = checked = 0
    for a in range(h.num_arcs):
        lo, hi = int(order[tails[a]]), int(order[h.up_head[a]])
        thr = int(h.rank[lo])
        for func, x, y in ((prof.func_up, lo, hi), (prof.func_down, hi, lo)):
            sampled = bucket_minima(g.first_out, g.head, ttf.first_bp, ttf.bp_dep, ttf.bp_tt,
                                    h.rank, x, y, thr, step, prof.K, prof.beta)
            vals = func[prof.table, a].astype(np.int64)
            bad += int(np.sum(vals > sampled))
            checked += prof.K
    return bad, checked
