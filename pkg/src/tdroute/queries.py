"""Deterministic query sets: uniform random pairs, one-hour targets and
Dijkstra-rank targets."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .generator import hash64, uniform
from .graph import PERIOD, Graph
from .search import SearchWorkspace, settle_order
from .traffic import TrafficWeights

KINDS = ("random", "1h", "rank")
ONE_HOUR = 3_600_000

_S_SOURCE, _S_TARGET, _S_DEPART = 101, 102, 103


@dataclass(frozen=True)
class QuerySpec:
    kind: str = "random"
    count: int = 1000
    seed: int = 1
    # None: tau_now when live traffic is configured, otherwise uniform over the day
    fixed_departure: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown query kind {self.kind!r}; expected one of {KINDS}")
        if self.count < 0:
            raise ValueError("query count must be non-negative")


@dataclass(frozen=True)
class Query:
    source: int
    target: int
    tau_dep: int
    rank: int = 0  # Dijkstra rank for rank queries, 0 otherwise


@dataclass
class QuerySet:
    spec: QuerySpec
    queries: list[Query]
    resampled: int = 0  # one-hour sources without a target beyond one hour


def _departures(spec: QuerySpec, weights: TrafficWeights, ids) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    if spec.fixed_departure is not None:
        return np.full(len(ids), spec.fixed_departure, dtype=np.int64)
    if len(weights.overlay) > 0:
        return np.full(len(ids), weights.overlay.tau_now, dtype=np.int64)
    return (uniform(spec.seed, _S_DEPART, ids) * PERIOD).astype(np.int64)


def _vertex(seed: int, stream: int, i: int, n: int) -> int:
    return int(hash64(seed, stream, np.array([i], dtype=np.int64))[0] % np.uint64(n))


def gen_queries(g: Graph, weights: TrafficWeights, spec: QuerySpec) -> QuerySet:
    if g.n == 0:
        raise ValueError("empty graph")
    if spec.kind == "random":
        idx = np.arange(spec.count)
        s = (hash64(spec.seed, _S_SOURCE, idx) % np.uint64(g.n)).astype(np.int64)
        t = (hash64(spec.seed, _S_TARGET, idx) % np.uint64(g.n)).astype(np.int64)
        dep = _departures(spec, weights, idx)
        return QuerySet(spec, [Query(int(a), int(b), int(c)) for a, b, c in zip(s, t, dep)])
    ws = SearchWorkspace(g.n)
    if spec.kind == "1h":
        return _one_hour(g, weights, spec, ws)
    return _rank(g, weights, spec, ws)


def _one_hour(g, weights, spec, ws) -> QuerySet:
    out: list[Query] = []
    resampled = 0
    draw = 0
    while len(out) < spec.count:
        if resampled > 10 * spec.count + 100:
            raise RuntimeError("too few sources reach any vertex beyond one hour")
        s = _vertex(spec.seed, _S_SOURCE, draw, g.n)
        dep = int(_departures(spec, weights, [draw])[0])
        draw += 1
        order, arrival = settle_order(g, weights, s, dep, workspace=ws)
        far = np.flatnonzero(arrival - dep > ONE_HOUR)
        if len(far) == 0:
            resampled += 1
            continue
        out.append(Query(s, int(order[far[0]]), dep))
    return QuerySet(spec, out, resampled)


def _rank(g, weights, spec, ws) -> QuerySet:
    """``count`` sources, one query per rank ``2**i`` the source reaches."""
    out: list[Query] = []
    for i in range(spec.count):
        s = _vertex(spec.seed, _S_SOURCE, i, g.n)
        dep = int(_departures(spec, weights, [i])[0])
        order, _ = settle_order(g, weights, s, dep, workspace=ws)
        r = 2
        while r <= len(order):
            out.append(Query(s, int(order[r - 1]), dep, r))
            r *= 2
    return QuerySet(spec, out)


def write_queries(path, qs: QuerySet) -> None:
    with open(path, "w", newline="") as f:
        f.write(f"# kind={qs.spec.kind} count={qs.spec.count} seed={qs.spec.seed} "
                f"resampled={qs.resampled}\n")
        w = csv.writer(f)
        w.writerow(["source", "target", "tau_dep_ms", "rank"])
        for q in qs.queries:
            w.writerow([q.source, q.target, q.tau_dep, q.rank])


def read_queries(path) -> list[Query]:
    with open(path, newline="") as f:
        rows = csv.DictReader(ln for ln in f if not ln.startswith("#"))
        return [Query(int(r["source"]), int(r["target"]), int(r["tau_dep_ms"]), int(r["rank"]))
                for r in rows]
