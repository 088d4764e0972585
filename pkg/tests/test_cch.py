import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from scipy.sparse.csgraph import dijkstra as sp_dijkstra

from tdroute.cch import (CHQuery, basic_customize, ch_query, contract, load_hierarchy,
                         perfect_customize, reduce_topology, save_hierarchy, unpack_arc)
from tdroute.graph import INF, Graph
from tdroute.ordering import compute_order, order_from_rank, peel_low_degree, undirected_adjacency

from conftest import random_graph, scalar_apsp


def undirected(n, pairs):
    tails = [a for a, b in pairs] + [b for a, b in pairs]
    heads = [b for a, b in pairs] + [a for a, b in pairs]
    g, perm = Graph.from_edges(n, tails, heads)
    return g, perm


def path3(direct=None):
    """a=0, b=1, c=2 with unit path weights and an optional direct a-c edge."""
    pairs = [(0, 1), (1, 2)] + ([(0, 2)] if direct is not None else [])
    g, perm = undirected(3, pairs)
    w = np.ones(g.m, dtype=np.int64)
    if direct is not None:
        for e in range(g.m):
            if {int(g.tails()[e]), int(g.head[e])} == {0, 2}:
                w[e] = direct
    return g, w


def test_three_path_one_shortcut():
    g, w = path3()
    h = contract(g, np.array([1, 0, 2]))  # b lowest
    assert h.num_arcs == 2 + 1
    m = basic_customize(h, w)
    a = h.find_arc(h.rank[0], h.rank[2])
    assert m.w_up[a] == m.w_down[a] == 2
    assert m.mid_up[a] == h.rank[1]
    assert ch_query(h, m, 0, 2) == 2 and ch_query(h, m, 2, 0) == 2 and ch_query(h, m, 1, 1) == 0


def test_star_leaves_first_has_no_shortcuts():
    k = 7
    g, _ = undirected(k + 1, [(0, i) for i in range(1, k + 1)])
    rank = np.array([k] + list(range(k)))
    h = contract(g, rank)
    assert h.num_arcs == k


def test_triangle_is_already_chordal():
    g, _ = undirected(3, [(0, 1), (1, 2), (0, 2)])
    assert contract(g, np.arange(3)).num_arcs == 3


def test_two_by_two_grid_gets_one_diagonal():
    g, _ = undirected(4, [(0, 1), (0, 2), (1, 3), (2, 3)])
    h = contract(g, np.arange(4))
    assert h.num_arcs == 5
    assert h.find_arc(1, 2) >= 0 and h.find_arc(0, 3) < 0


def test_infinite_input_edge_stays_infinite_without_triangle():
    g, _ = undirected(2, [(0, 1)])
    m = basic_customize(contract(g, np.arange(2)), [INF, INF])
    assert m.w_up[0] == INF and m.w_down[0] == INF


def test_perfect_customization_supersedes_direct_edge():
    g, w = path3(direct=5)
    h = contract(g, np.arange(3))  # a lowest: the a-c arc keeps its input weight
    basic = basic_customize(h, w)
    a = h.find_arc(0, 2)
    assert basic.w_up[a] == 5
    perf = perfect_customize(h, basic)
    assert perf.w_up_star[a] == perf.w_down_star[a] == 2
    assert not perf.alive_up[a] and not perf.alive_down[a]
    for s in range(3):
        for t in range(3):
            assert ch_query(h, perf, s, t, use_perfect=True, reduced=True) == ch_query(h, basic, s, t)
    g, w = path3(direct=1)
    perf = perfect_customize(h := contract(g, np.arange(3)), basic_customize(h, w))
    assert perf.alive_up[h.find_arc(0, 2)]


def restricted_distance(g, weights, rank, u, v):
    """Shortest u -> v path whose interior vertices all rank below both ends."""
    lo = min(rank[u], rank[v])
    keep = rank < lo
    keep[u] = keep[v] = True
    ids = np.flatnonzero(keep)
    local = -np.ones(g.n, dtype=np.int64)
    local[ids] = np.arange(len(ids))
    t, hd = g.tails(), g.head
    m = keep[t] & keep[hd] & (np.asarray(weights) < INF)
    mat = sp.csr_matrix((np.asarray(weights, dtype=float)[m], (local[t[m]], local[hd[m]])),
                        shape=(len(ids), len(ids)))
    d = sp_dijkstra(mat, indices=local[u])[local[v]]
    return INF if not np.isfinite(d) else int(d)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.integers(2, 40), density=st.floats(1.0, 4.0),
       random_order=st.booleans())
def test_basic_customization_matches_restricted_dijkstra(seed, n, density, random_order):
    g, w = random_graph(n, int(n * density), seed)
    rank = (np.random.default_rng(seed).permutation(n).astype(np.int32) if random_order
            else compute_order(g))
    h = contract(g, rank)
    assert h.check_triangle_closure()
    m = basic_customize(h, w)
    order = h.order
    for lo in range(n):
        for a in range(h.up_first_out[lo], h.up_first_out[lo + 1]):
            u, v = int(order[lo]), int(order[h.up_head[a]])
            assert m.w_up[a] == restricted_distance(g, w, rank, u, v)
            assert m.w_down[a] == restricted_distance(g, w, rank, v, u)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.integers(2, 60), density=st.floats(1.0, 4.0),
       random_order=st.booleans())
def test_queries_and_perfect_weights_match_all_pairs(seed, n, density, random_order):
    g, w = random_graph(n, int(n * density), seed)
    rank = (np.random.default_rng(seed).permutation(n).astype(np.int32) if random_order
            else compute_order(g))
    h = contract(g, rank)
    basic = basic_customize(h, w)
    perf = perfect_customize(h, basic)
    apsp = scalar_apsp(g, w)
    order = h.order
    tails = h.arc_tails()
    assert np.all(perf.w_up_star <= basic.w_up) and np.all(perf.w_down_star <= basic.w_down)
    u, v = order[tails], order[h.up_head]
    assert np.array_equal(perf.w_up_star, np.minimum(apsp[u, v], INF))
    assert np.array_equal(perf.w_down_star, np.minimum(apsp[v, u], INF))
    q_basic = CHQuery(h, basic)
    q_red = CHQuery(h, perf, use_perfect=True, alive_up=perf.alive_up, alive_down=perf.alive_down)
    for s in range(n):
        for t in range(n):
            assert q_basic.distance(s, t) == apsp[s, t]
            assert q_red.distance(s, t) == apsp[s, t]


def test_customizations_on_one_topology_do_not_interact():
    g, w1 = random_graph(30, 90, 4)
    _, w2 = random_graph(30, 90, 4)
    w2 = w2[::-1].copy()
    h = contract(g, compute_order(g))
    a = basic_customize(h, w1)
    basic_customize(h, w2)
    again = basic_customize(h, w1)
    assert np.array_equal(a.w_up, again.w_up) and np.array_equal(a.w_down, again.w_down)


def test_unpacked_arcs_reproduce_their_weights():
    g, w = random_graph(50, 160, 8)
    h = contract(g, compute_order(g))
    m = basic_customize(h, w)
    order = h.order
    tails = h.arc_tails()
    for a in range(h.num_arcs):
        for upward, weight in ((True, m.w_up[a]), (False, m.w_down[a])):
            if weight >= INF:
                continue
            path = [int(order[x]) for x in unpack_arc(h, m, a, upward)]
            ends = (order[tails[a]], order[h.up_head[a]])
            assert (path[0], path[-1]) == (ends if upward else ends[::-1])
            assert sum(w[g.find_edge(x, y)] for x, y in zip(path, path[1:])) == weight


def test_generated_instance_all_pairs(small_instance):
    _, g, free, ttf, _ = small_instance
    assert g.n <= 200
    lower = ttf.global_min()
    h = contract(g, compute_order(g))
    m = perfect_customize(h, basic_customize(h, lower))
    apsp = scalar_apsp(g, lower)
    q = CHQuery(h, m, use_perfect=True, alive_up=m.alive_up, alive_down=m.alive_down)
    for s in range(g.n):
        assert [q.distance(s, t) for t in range(g.n)] == apsp[s].tolist()


def test_reduced_topology_keeps_alive_arcs_only():
    g, w = random_graph(40, 140, 2)
    h = contract(g, compute_order(g))
    m = perfect_customize(h, basic_customize(h, w))
    red = reduce_topology(h, m.alive_up, m.alive_down)
    keep = m.alive_up | m.alive_down
    assert len(red.arcs) == keep.sum()
    assert np.array_equal(red.up_head, h.up_head[keep])
    assert np.array_equal(red.take(m.w_up), m.w_up[keep])


def test_order_is_a_permutation_and_peeling_removes_chains():
    g, _ = random_graph(80, 200, 6, symmetric=True)
    rank = compute_order(g)
    assert np.array_equal(np.sort(rank), np.arange(80))
    assert np.array_equal(order_from_rank(rank)[rank], np.arange(80))
    chain, _ = undirected(6, [(i, i + 1) for i in range(5)])
    peeled, core, _ = peel_low_degree(undirected_adjacency(chain))
    assert len(peeled) + len(core) == 6 and len(peeled) >= 4


def test_hierarchy_roundtrip(tmp_path):
    g, w = random_graph(30, 100, 1)
    h = contract(g, compute_order(g))
    save_hierarchy(tmp_path, h)
    h2 = load_hierarchy(tmp_path, g)
    for f in ("rank", "up_first_out", "up_head", "edge_arc", "tri_lo", "tri_hi", "tri_top"):
        assert np.array_equal(getattr(h, f), getattr(h2, f))


def test_bad_order_is_rejected():
    g, _ = random_graph(5, 8, 1)
    with pytest.raises(ValueError):
        contract(g, np.array([0, 0, 1, 2, 3]))
