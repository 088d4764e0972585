"""Query batches against every algorithm with Dijkstra as the oracle, CSV
reporting and counterexample dumps."""
from __future__ import annotations

import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .engine import Router
from .graph import INF, PERIOD
from .queries import Query

CSV_HEADER = "# tdroute-bench-csv v1"
COLUMNS = ("query", "source", "target", "tau_dep_ms", "rank", "algo", "distance_ms",
           "pops", "relaxed", "resettles", "time_ns", "exact")


@dataclass
class Row:
    query: int
    source: int
    target: int
    tau_dep: int
    rank: int
    algo: str
    distance: int
    pops: int
    relaxed: int
    resettles: int
    time_ns: int
    exact: bool
    path: list[int] = field(default_factory=list, repr=False)


@dataclass
class Aggregate:
    algo: str
    queries: int
    mean_time_ns: float
    mean_pops: float
    mean_resettles: float
    speedup: float  # mean Dijkstra time over mean time of this algorithm
    pop_ratio: float  # mean Dijkstra pops over mean pops
    mismatches: int


@dataclass
class RunReport:
    algos: list[str]
    rows: list[Row]
    phase_ns: dict[str, int] = field(default_factory=dict)

    @property
    def mismatches(self) -> list[Row]:
        return [r for r in self.rows if not r.exact]

    @property
    def passed(self) -> bool:
        return not self.mismatches

    def by_algo(self, algo: str) -> list[Row]:
        return [r for r in self.rows if r.algo == algo]

    def aggregates(self, rows: list[Row] | None = None) -> list[Aggregate]:
        rows = self.rows if rows is None else rows
        base = [r for r in rows if r.algo == "dijkstra"]
        bt = np.mean([r.time_ns for r in base]) if base else float("nan")
        bp = np.mean([r.pops for r in base]) if base else float("nan")
        out = []
        for a in self.algos:
            rs = [r for r in rows if r.algo == a]
            if not rs:
                continue
            t = float(np.mean([r.time_ns for r in rs]))
            p = float(np.mean([r.pops for r in rs]))
            out.append(Aggregate(a, len(rs), t, p, float(np.mean([r.resettles for r in rs])),
                                 float(bt / t) if t > 0 else float("nan"),
                                 float(bp / p) if p > 0 else float("nan"),
                                 sum(not r.exact for r in rs)))
        return out

    def by_hour(self) -> dict[int, list[Aggregate]]:
        hours = sorted({(r.tau_dep % PERIOD) // 3_600_000 for r in self.rows})
        return {h: self.aggregates([r for r in self.rows if (r.tau_dep % PERIOD) // 3_600_000 == h])
                for h in hours}

    def write_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.csv())

    def csv(self) -> str:
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        buf.write(",".join(COLUMNS) + "\n")
        for r in self.rows:
            d = "inf" if r.distance >= INF else str(r.distance)
            buf.write(f"{r.query},{r.source},{r.target},{r.tau_dep},{r.rank},{r.algo},{d},"
                      f"{r.pops},{r.relaxed},{r.resettles},{r.time_ns},{int(r.exact)}\n")
        return buf.getvalue()

    def summary_csv(self, per_hour: bool = False) -> str:
        buf = io.StringIO()
        buf.write(CSV_HEADER + " summary\n")
        buf.write("hour,algo,queries,mean_time_ns,mean_pops,mean_resettles,speedup,pop_ratio,mismatches\n")
        groups = self.by_hour() if per_hour else {"all": self.aggregates()}
        for h, aggs in groups.items():
            for a in aggs:
                buf.write(f"{h},{a.algo},{a.queries},{a.mean_time_ns:.0f},{a.mean_pops:.1f},"
                          f"{a.mean_resettles:.3f},{a.speedup:.3f},{a.pop_ratio:.3f},{a.mismatches}\n")
        for k, v in self.phase_ns.items():
            buf.write(f"# phase {k} {v} ns\n")
        return buf.getvalue()


def _run_one(router: Router, algos, qi: int, q: Query) -> list[Row]:
    rows = []
    truth = None
    for a in ["dijkstra"] + [x for x in algos if x != "dijkstra"]:
        t0 = time.perf_counter_ns()
        res = router.query(a, q.source, q.target, q.tau_dep)
        dt = time.perf_counter_ns() - t0
        if truth is None:
            truth = res.distance
        if a in algos:
            rows.append(Row(qi, q.source, q.target, q.tau_dep, q.rank, a, res.distance, res.pops,
                            res.relaxed, res.resettles, dt, res.distance == truth, res.path))
    return rows


def run_suite(router_factory, algos, queries: list[Query], parallel: int = 1) -> RunReport:
    """Run every query under every algorithm. Dijkstra always runs as the
    reference even when it is not listed.

    ``router_factory()`` builds an independent router; one is made per worker
    so parallel queries do not share search state. The first query runs once
    untimed per router so compilation does not land in the figures.
    """
    algos = list(dict.fromkeys(algos))
    if parallel <= 1:
        router = router_factory()
        if queries:
            _run_one(router, algos, 0, queries[0])
        rows = [r for i, q in enumerate(queries) for r in _run_one(router, algos, i, q)]
    else:
        routers = [router_factory() for _ in range(parallel)]
        if queries:
            for r in routers:
                _run_one(r, algos, 0, queries[0])

        def work(k):
            return [r for i in range(k, len(queries), parallel)
                    for r in _run_one(routers[k], algos, i, queries[i])]

        with ThreadPoolExecutor(parallel) as pool:
            parts = list(pool.map(work, range(parallel)))
        rows = sorted((r for p in parts for r in p), key=lambda r: (r.query, algos.index(r.algo)))
    return RunReport(algos, rows)


def counterexample(router: Router, row: Row) -> dict:
    """Self-contained record of a mismatch: the query, both paths, and the
    prediction breakpoints and live entries of every edge they use."""
    g, w = router.g, router.weights
    truth = router.query("dijkstra", row.source, row.target, row.tau_dep)
    got = router.query(row.algo, row.source, row.target, row.tau_dep)
    edges = set()
    for path in (truth.path, got.path):
        for u, v in zip(path, path[1:]):
            edges.add(g.find_edge(u, v))
    ov = w.overlay
    live = {int(e): (int(lv), int(end)) for e, lv, end in zip(ov.edges, ov.live, ov.end)}
    tails = g.tails()
    return {
        "query": {"source": row.source, "target": row.target, "tau_dep_ms": row.tau_dep},
        "algo": row.algo,
        "expected_ms": truth.distance,
        "got_ms": got.distance,
        "expected_path": truth.path,
        "got_path": got.path,
        "tau_now_ms": int(ov.tau_now),
        "edges": {str(e): {"tail": int(tails[e]), "head": int(g.head[e]),
                           "breakpoints": w.ttf.breakpoints(e),
                           "live": live.get(e)} for e in sorted(edges)},
    }


def dump_counterexamples(path, router: Router, report: RunReport, limit: int = 5) -> int:
    bad = report.mismatches[:limit]
    with open(path, "w") as f:
        json.dump([counterexample(router, r) for r in bad], f, indent=1)
    return len(bad)
