import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tdroute.cch import basic_customize, contract
from tdroute.engine import preprocess, update
from tdroute.graph import INF, PERIOD, TravelTimeFunctions
from tdroute.imp import (ArrivalIntervals, IMPotential, bucket_customize, imp_update,
                         load_profile, save_profile)
from tdroute.ordering import compute_order
from tdroute.rphast import CCHPotential
from tdroute.search import astar, earliest_arrivals, td_dijkstra
from tdroute.traffic import LiveOverlay, TrafficWeights

from conftest import random_graph, random_ttf, sample_queries

HOUR = 3_600_000


def eval_many(ttf, e, times):
    """Vectorised periodic evaluation with floored interpolation."""
    bps = ttf.breakpoints(e)
    dep = np.array([d for d, _ in bps] + [bps[0][0] + PERIOD], dtype=np.int64)
    tt = np.array([w for _, w in bps] + [bps[0][1]], dtype=np.int64)
    x = times % PERIOD
    x = np.where(x < dep[0], x + PERIOD, x)
    i = np.searchsorted(dep, x, side="right") - 1
    span = dep[i + 1] - dep[i]
    return tt[i] + ((tt[i + 1] - tt[i]) * (x - dep[i])) // span


def restricted_td_distance(g, ttf, rank, u, v, times):
    """Earliest arrival u -> v for every departure in ``times``, using only
    interior vertices ranked below both ends."""
    lo = min(rank[u], rank[v])
    tails = g.tails()
    keep = [e for e in range(g.m)
            if all(rank[x] < lo or x in (u, v) for x in (tails[e], g.head[e]))]
    arr = {x: np.full(len(times), INF, dtype=np.int64) for x in range(g.n)}
    arr[u] = times.copy()
    changed = True
    while changed:
        changed = False
        for e in keep:
            x, y = int(tails[e]), int(g.head[e])
            ok = arr[x] < INF
            if not ok.any():
                continue
            cand = np.full(len(times), INF, dtype=np.int64)
            cand[ok] = arr[x][ok] + eval_many(ttf, e, arr[x][ok])
            better = cand < arr[y]
            if better.any():
                arr[y] = np.where(better, cand, arr[y])
                changed = True
    return np.where(arr[v] < INF, arr[v] - times, INF)


def test_vectorised_evaluation_agrees_with_library():
    ttf = random_ttf(10, 2, td_fraction=1.0)
    times = np.random.default_rng(0).integers(0, 3 * PERIOD, 300)
    for e in range(10):
        assert eval_many(ttf, e, times).tolist() == [ttf.evaluate(e, int(t)) for t in times]


@settings(max_examples=4, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_bucket_bounds_below_sampled_restricted_distances(seed):
    g, _ = random_graph(7, 16, seed)
    ttf = random_ttf(g.m, seed, td_fraction=0.8)
    h = contract(g, compute_order(g))
    prof = bucket_customize(h, ttf)
    times = np.arange(0, PERIOD, 1000, dtype=np.int64)
    order, tails = h.order, h.arc_tails()
    per_bucket = PERIOD // prof.K // 1000
    for a in range(h.num_arcs):
        lo, hi = int(order[tails[a]]), int(order[h.up_head[a]])
        for func, (x, y) in ((prof.func_up, (lo, hi)), (prof.func_down, (hi, lo))):
            d = restricted_td_distance(g, ttf, h.rank, x, y, times)
            sampled = d.reshape(prof.K, per_bucket).min(axis=1)
            assert np.all(func[:, a] <= sampled)


def test_constant_predictions_give_flat_profiles():
    g, w = random_graph(60, 220, 3)
    h = contract(g, compute_order(g))
    prof = bucket_customize(h, TravelTimeFunctions.constant(w))
    m = basic_customize(h, w)
    assert np.all(prof.func_up == m.w_up) and np.all(prof.func_down == m.w_down)


def test_profiles_dominate_global_lower_bound(medium_pipeline):
    cfg, g, ttf, live, pre, upd = medium_pipeline
    p = pre.imp
    assert np.all(p.func_up >= pre.lower.w_up) and np.all(p.func_down >= pre.lower.w_down)
    assert np.all(p.bmin_up >= pre.lower.w_up) and np.all(p.bmin_down >= pre.lower.w_down)
    assert np.array_equal(p.bmin_up, p.func_up.min(axis=0))


def test_bucket_count_must_divide_the_day():
    g, w = random_graph(5, 8, 1)
    with pytest.raises(ValueError):
        bucket_customize(contract(g, compute_order(g)), TravelTimeFunctions.constant(w), K=7)


def test_arrival_intervals_bracket_earliest_arrivals(medium_pipeline):
    cfg, g, ttf, live, pre, upd = medium_pipeline
    ailr = ArrivalIntervals(pre.h, pre.imp, upd.imp)
    for s, _, tau in sample_queries(g, cfg, 12, 6):
        ailr.init(s, tau)
        assert ailr.interval(s) == (tau, tau)
        ea = earliest_arrivals(g, upd.weights, s, tau)
        for v in range(g.n):
            lo, hi = ailr.interval(v)
            if ea[v] >= INF:
                continue
            assert lo <= ea[v] <= hi


def test_arrival_intervals_collapse_on_constant_weights():
    g, w = random_graph(60, 220, 8)
    ttf = TravelTimeFunctions.constant(w)
    pre = preprocess(g, ttf)
    upd = update(pre, ttf, LiveOverlay.empty(8 * HOUR))
    ailr = ArrivalIntervals(pre.h, pre.imp, upd.imp)
    ailr.init(0, 8 * HOUR)
    ea = earliest_arrivals(g, TrafficWeights(ttf), 0, 8 * HOUR)
    for v in range(g.n):
        if ea[v] < INF:
            assert ailr.interval(v) == (ea[v], ea[v])


def test_exact_with_lower_bounds_on_shortest_paths(medium_pipeline):
    cfg, g, ttf, live, pre, upd = medium_pipeline
    w = upd.weights
    pot = IMPotential(pre.h, pre.imp, upd.imp)
    checked = 0
    for s, t, tau in sample_queries(g, cfg, 40, 8):
        truth = td_dijkstra(g, w, s, t, tau)
        r = astar(g, w, s, t, tau, pot)
        assert r.distance == truth.distance
        if truth.reachable:
            arr = tau
            for x, y in zip(truth.path, truth.path[1:] + [None]):
                assert pot.evaluate(x, arr) <= td_dijkstra(g, w, x, t, arr).distance
                checked += 1
                if y is not None:
                    arr += w.evaluate(g.find_edge(x, y), arr)
    assert checked > 50


def test_start_estimate_is_at_least_the_global_bound(medium_pipeline):
    cfg, g, ttf, live, pre, upd = medium_pipeline
    imp = IMPotential(pre.h, pre.imp, upd.imp)
    cch = CCHPotential(pre.h, pre.lower)
    for s, t, tau in sample_queries(g, cfg, 20, 12):
        imp.init(s, t, tau)
        cch.init(s, t, tau)
        assert imp.evaluate(s, tau) >= cch.evaluate(s, tau)


def test_cursor_only_advances(medium_pipeline):
    cfg, g, ttf, live, pre, upd = medium_pipeline
    pot = IMPotential(pre.h, pre.imp, upd.imp)
    rng = np.random.default_rng(2)
    for s, t, tau in sample_queries(g, cfg, 10, 13):
        pot.init(s, t, tau)
        for v in rng.integers(0, g.n, 8):
            v = int(v)
            seen = []
            for x in range(tau, tau + 3 * HOUR, 7 * 60_000):
                est = pot.evaluate(v, x)
                c = pot.cursor_of(v)
                if c is not None:
                    seen.append((c, est))
            assert [c for c, _ in seen] == sorted(c for c, _ in seen)
            assert [e for _, e in seen] == sorted(e for _, e in seen)


def test_profile_roundtrip(tmp_path, medium_pipeline):
    *_, pre, _ = medium_pipeline
    path = tmp_path / "imp_profile.bin"
    save_profile(path, pre.imp)
    back = load_profile(path)
    for f in ("func_up", "func_down", "table", "ub_up", "ub_down", "bmin_up", "bmin_down"):
        assert np.array_equal(getattr(back, f), getattr(pre.imp, f)), f
    assert (back.K, back.beta) == (pre.imp.K, pre.imp.beta)


def test_update_is_idempotent(medium_pipeline):
    cfg, g, ttf, live, pre, upd = medium_pipeline
    again = imp_update(pre.h, pre.imp, ttf, live)
    assert np.array_equal(again.alive_up, upd.imp.alive_up)
    assert np.array_equal(again.cmax.w_up_star, upd.imp.cmax.w_up_star)


def test_dead_arcs_are_never_needed(medium_pipeline):
    cfg, g, ttf, live, pre, upd = medium_pipeline
    b = upd.imp
    dead = ~b.alive_up
    assert np.all(b.cmax.w_up_star[dead] < pre.imp.bmin_up[dead])
    assert not dead.all()
