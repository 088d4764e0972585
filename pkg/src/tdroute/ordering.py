"""Vertex orders: low-degree elimination followed by nested dissection of the
remaining core via recursive BFS-level bisection."""
from __future__ import annotations

from collections import deque

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, shortest_path

from .graph import Graph

LEAF_SIZE = 8


def undirected_adjacency(g: Graph) -> sp.csr_matrix:
    tails = g.tails()
    keep = tails != g.head
    rows = np.concatenate([tails[keep], g.head[keep]])
    cols = np.concatenate([g.head[keep], tails[keep]])
    a = sp.csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(g.n, g.n))
    a.sum_duplicates()
    a.data[:] = 1
    return a


def _level_separator(sub: sp.csr_matrix):
    """Split a connected subgraph along the thinnest BFS level near the middle.

    Returns a boolean mask per local vertex: 0 = side A, 1 = side B, 2 = separator.
    """
    n = sub.shape[0]
    deg = np.diff(sub.indptr)
    start = int(np.argmin(deg))
    for _ in range(2):
        d = shortest_path(sub, method="D", unweighted=True, directed=False, indices=start)
        start = int(np.argmax(d))
    depth = shortest_path(sub, method="D", unweighted=True, directed=False,
                          indices=start).astype(np.int64)
    counts = np.bincount(depth)
    before = np.concatenate([[0], np.cumsum(counts)[:-1]])
    after = n - before - counts
    ok = (before >= n // 4) & (after >= n // 4)
    if not ok.any():
        ok = (before > 0) & (after > 0)
    if not ok.any():
        return None
    cand = np.flatnonzero(ok)
    # thinnest level, then the most balanced one
    score = counts[cand] * (n + 1) + np.abs(before[cand] - after[cand])
    lvl = cand[int(np.argmin(score))]
    part = np.where(depth < lvl, 0, np.where(depth > lvl, 1, 2))
    return part


def _dissect(adj: sp.csr_matrix, verts: np.ndarray, out: list) -> None:
    # explicit work stack; entries are ("cut", verts) or ("emit", verts)
    stack = [("cut", verts)]
    while stack:
        kind, vs = stack.pop()
        if kind == "emit":
            out.append(vs)
            continue
        if len(vs) <= LEAF_SIZE:
            sub = adj[vs][:, vs]
            out.append(vs[np.argsort(np.diff(sub.indptr), kind="stable")])
            continue
        sub = adj[vs][:, vs]
        ncomp, labels = connected_components(sub, directed=False)
        if ncomp > 1:
            for c in range(ncomp - 1, -1, -1):
                stack.append(("cut", vs[labels == c]))
            continue
        part = _level_separator(sub)
        if part is None:
            out.append(vs[np.argsort(np.diff(sub.indptr), kind="stable")])
            continue
        # separator ranks above both halves: emit it last
        stack.append(("emit", vs[part == 2]))
        stack.append(("cut", vs[part == 1]))
        stack.append(("cut", vs[part == 0]))


def peel_low_degree(adj: sp.csr_matrix, max_degree: int = 2):
    """Eliminate vertices of degree <= ``max_degree`` while any exist.

    Eliminating such a vertex adds at most one fill edge, so chains of
    degree-two vertices collapse without growing the core. Returns the
    eliminated vertices in order and the core adjacency including fill edges.
    """
    n = adj.shape[0]
    nbrs = [set(adj.indices[adj.indptr[v]:adj.indptr[v + 1]].tolist()) for v in range(n)]
    gone = np.zeros(n, dtype=bool)
    queued = np.zeros(n, dtype=bool)
    q = deque()
    for v in range(n):
        if len(nbrs[v]) <= max_degree:
            q.append(v)
            queued[v] = True
    peeled = []
    while q:
        x = q.popleft()
        nx = nbrs[x]
        if len(nx) > max_degree:
            queued[x] = False
            continue
        gone[x] = True
        peeled.append(x)
        ys = sorted(nx)
        for y in ys:
            nbrs[y].discard(x)
        for i, a in enumerate(ys):
            for b in ys[i + 1:]:
                nbrs[a].add(b)
                nbrs[b].add(a)
        for y in ys:
            if not queued[y] and len(nbrs[y]) <= max_degree:
                q.append(y)
                queued[y] = True
        nbrs[x] = set()
    core = np.flatnonzero(~gone)
    local = np.full(n, -1, dtype=np.int64)
    local[core] = np.arange(len(core))
    rows, cols = [], []
    for i, v in enumerate(core.tolist()):
        for y in nbrs[v]:
            rows.append(i)
            cols.append(local[y])
    core_adj = sp.csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)),
                             shape=(len(core), len(core)))
    return np.asarray(peeled, dtype=np.int64), core, core_adj


def compute_order(g: Graph) -> np.ndarray:
    """Returns ``rank[v]`` (position in the order): peeled low-degree vertices
    first, then a nested dissection of the core."""
    adj = undirected_adjacency(g)
    peeled, core, core_adj = peel_low_degree(adj)
    pieces: list = [peeled]
    if len(core):
        nd: list = []
        _dissect(core_adj, np.arange(len(core), dtype=np.int64), nd)
        pieces.append(core[np.concatenate(nd)])
    order = np.concatenate(pieces)
    rank = np.empty(g.n, dtype=np.int32)
    rank[order] = np.arange(g.n, dtype=np.int32)
    return rank


def order_from_rank(rank: np.ndarray) -> np.ndarray:
    order = np.empty_like(rank)
    order[rank] = np.arange(len(rank), dtype=rank.dtype)
    return order


def validate_rank(rank: np.ndarray, n: int) -> None:
    if len(rank) != n or not np.array_equal(np.sort(rank), np.arange(n)):
        raise ValueError("order is not a permutation of the vertices")
