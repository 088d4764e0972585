import heapq
import itertools

import numpy as np
from hypothesis import given, settings, strategies as st

from tdroute.graph import INF, Graph, TravelTimeFunctions, path_travel_time
from tdroute.heap import Heap
from tdroute.search import (ArrayPotential, ZeroPotential, astar, check_feasibility,
                            earliest_arrivals, settle_order, td_dijkstra)
from tdroute.traffic import LiveOverlay, TrafficWeights

from conftest import random_graph, random_ttf, scalar_apsp


def weights_of(funcs, overlay=None):
    return TrafficWeights(TravelTimeFunctions.from_lists(funcs), overlay)


def build(n, edges, funcs):
    g, perm = Graph.from_edges(n, [e[0] for e in edges], [e[1] for e in edges])
    return g, weights_of([funcs[i] for i in perm])


def all_simple_paths(g, s, t):
    def rec(path):
        u = path[-1]
        if u == t:
            yield list(path)
            return
        for e in g.out_edges(u):
            v = int(g.head[e])
            if v not in path:
                yield from rec(path + [v])
    yield from rec([s])


def test_source_equals_target():
    g, w = build(2, [(0, 1)], [[(0, 5)]])
    r = td_dijkstra(g, w, 0, 0, 123)
    assert r.distance == 0 and r.path == [0]


def test_triangle_prefers_two_hops():
    g, w = build(3, [(0, 1), (1, 2), (0, 2)], [[(0, 100)], [(0, 100)], [(0, 250)]])
    r = td_dijkstra(g, w, 0, 2, 0)
    assert r.distance == 200 and r.path == [0, 1, 2]


def test_time_dependent_detour_matches_enumeration():
    # s=0, t=3; direct edge rises from 100 to 300 around departure 60
    edges = [(0, 3), (0, 1), (1, 3), (0, 2), (2, 3)]
    funcs = [[(0, 100), (50, 300)], [(0, 120)], [(0, 130)], [(0, 90)], [(0, 200)]]
    g, w = build(4, edges, funcs)
    for tau in (0, 30, 60, 200, 86_399_999):
        best = min(path_travel_time(g, w, p, tau) for p in all_simple_paths(g, 0, 3))
        assert td_dijkstra(g, w, 0, 3, tau).distance == best


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_dijkstra_matches_enumeration_on_small_td_graphs(seed):
    g, _ = random_graph(6, 14, seed)
    w = TrafficWeights(random_ttf(g.m, seed, td_fraction=0.7))
    rng = np.random.default_rng(seed)
    for _ in range(4):
        s, t = (int(x) for x in rng.integers(0, 6, 2))
        tau = int(rng.integers(0, 86_400_000))
        paths = list(all_simple_paths(g, s, t))
        best = min((path_travel_time(g, w, p, tau) for p in paths), default=INF)
        r = td_dijkstra(g, w, s, t, tau)
        assert r.distance == best
        if r.reachable:
            assert path_travel_time(g, w, r.path, tau) == r.distance


def test_unreachable_target():
    g, w = build(3, [(0, 1)], [[(0, 5)]])
    r = td_dijkstra(g, w, 0, 2, 0)
    assert r.distance == INF and not r.reachable and r.path == []


def test_zero_potential_pops_like_dijkstra():
    g, wts = random_graph(40, 150, 3)
    w = TrafficWeights(TravelTimeFunctions.constant(wts))
    for s, t in [(0, 5), (7, 30), (12, 13)]:
        a = astar(g, w, s, t, 0, ZeroPotential())
        d = td_dijkstra(g, w, s, t, 0)
        assert (a.distance, a.pops) == (d.distance, d.pops)


def test_exact_potential_settles_only_the_shortest_path():
    g, wts = random_graph(60, 240, 9)
    w = TrafficWeights(TravelTimeFunctions.constant(wts))
    dist = scalar_apsp(g, wts)
    checked = 0
    for s, t in [(0, 17), (3, 44), (25, 59), (11, 2)]:
        if dist[s, t] >= INF:
            continue
        r = astar(g, w, s, t, 0, ArrayPotential(dist[:, t]))
        assert r.distance == dist[s, t]
        # ties aside every pop lies on a shortest path
        assert r.pops <= len(r.path) + sum(
            1 for v in range(g.n) if dist[s, v] + dist[v, t] == dist[s, t]) and r.resettles == 0
        checked += 1
    assert checked


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(0.0, 1.0))
def test_astar_with_lower_bound_potential_is_exact(seed, scale):
    g, _ = random_graph(30, 100, seed)
    ttf = random_ttf(g.m, seed, td_fraction=0.6)
    w = TrafficWeights(ttf)
    lb = scalar_apsp(g, ttf.global_min())
    rng = np.random.default_rng(seed)
    for _ in range(5):
        s, t = (int(x) for x in rng.integers(0, 30, 2))
        tau = int(rng.integers(0, 86_400_000))
        pot = np.where(lb[:, t] >= INF, INF, (lb[:, t] * scale).astype(np.int64))
        for chain in (False, True):
            r = astar(g, w, s, t, tau, ArrayPotential(pot), chain_opt=chain)
            assert r.distance == td_dijkstra(g, w, s, t, tau).distance


def test_infeasible_lower_bound_potential_stays_exact_with_resettles():
    # potential is a lower bound at every vertex but inconsistent across edge 0->1
    g, w = build(4, [(0, 1), (0, 2), (2, 1), (1, 3)],
                 [[(0, 10)], [(0, 1)], [(0, 1)], [(0, 10)]])
    pot = ArrayPotential([12, 10, 0, 0])
    r = astar(g, w, 0, 3, 0, pot)
    assert r.distance == 12 and r.path == [0, 2, 1, 3]


def test_astar_with_live_overlay_matches_dijkstra():
    g, wts = random_graph(50, 200, 5)
    ttf = random_ttf(g.m, 5)
    now = 8 * 3_600_000
    entries = [(e, INF if e % 3 == 0 else ttf.evaluate(e, now) + 500_000, now + 1_800_000)
               for e in range(0, g.m, 7)]
    w = TrafficWeights(ttf, LiveOverlay.build(ttf, now, entries))
    lb = scalar_apsp(g, ttf.global_min())
    for s, t in [(0, 10), (4, 33), (20, 41)]:
        r = astar(g, w, s, t, now, ArrayPotential(lb[:, t]))
        assert r.distance == td_dijkstra(g, w, s, t, now).distance


def test_settle_order_and_earliest_arrivals():
    g, wts = random_graph(40, 160, 12)
    w = TrafficWeights(TravelTimeFunctions.constant(wts))
    dist = scalar_apsp(g, wts)
    order, arr = settle_order(g, w, 0, 1000)
    assert order[0] == 0 and np.all(np.diff(arr) >= 0)
    assert np.array_equal(arr - 1000, dist[0, order])
    ea = earliest_arrivals(g, w, 0, 1000)
    reach = dist[0] < INF
    assert np.array_equal(ea[reach] - 1000, dist[0, reach]) and np.all(ea[~reach] == INF)
    assert len(settle_order(g, w, 0, 0, limit=5)[0]) == min(5, reach.sum())


def test_feasibility_reports():
    g, wts = random_graph(30, 110, 21)
    w = TrafficWeights(TravelTimeFunctions.constant(wts))
    dist = scalar_apsp(g, wts)
    t = int(np.argmax((dist < INF).sum(axis=0)))
    samples = [(e, 0) for e in range(g.m)]
    assert check_feasibility(g, w, ZeroPotential(), samples) == []
    assert check_feasibility(g, w, ArrayPotential(dist[:, t]), samples) == []
    bad = dist[:, t].copy()
    tails = g.tails()
    e = next(e for e in range(g.m) if bad[g.head[e]] < INF and bad[tails[e]] < INF
             and bad[tails[e]] == bad[g.head[e]] + wts[e])
    bad[g.head[e]] += 1
    assert len(check_feasibility(g, w, ArrayPotential(bad), samples)) >= 1


@settings(max_examples=50, deadline=None)
@given(ops=st.lists(st.tuples(st.integers(0, 2), st.integers(0, 19), st.integers(0, 1000)),
                    max_size=80))
def test_heap_matches_reference(ops):
    h = Heap(20)
    ref = {}
    for op, v, k in ops:
        if op < 2:
            if v not in ref or k < ref[v]:
                h.push_or_update(v, k)
                ref[v] = k
        elif ref:
            got = h.pop()
            want = min((key, vid) for vid, key in ref.items())
            assert got == (want[1], want[0])
            del ref[want[1]]
    drained = []
    while len(h):
        drained.append(h.pop())
    assert drained == sorted(((v, k) for v, k in ref.items()), key=lambda x: (x[1], x[0]))
