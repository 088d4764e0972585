"""``tdroute`` command line: generate, preprocess, update, compress, query,
bench and verify over one artifact directory."""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time

from . import store as st
from .bench import dump_counterexamples, run_suite
from .engine import ALGORITHMS, Preprocessed, Router, compress_imp, compress_mmp, preprocess, update
from .generator import GenConfig, generate
from .graph import INF
from .queries import KINDS, QuerySpec, gen_queries, write_queries
from .traffic import LiveOverlay, TrafficWeights, read_snapshot

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE = 0, 1, 2


def _timed(fn, *args, **kw):
    t0 = time.perf_counter_ns()
    out = fn(*args, **kw)
    return out, time.perf_counter_ns() - t0


def cmd_generate(a) -> int:
    cfg = GenConfig(seed=a.seed, rows=a.rows, cols=a.cols, incidents=a.incidents)
    (g, free, ttf, live), ns = _timed(generate, cfg)
    s = st.Store(a.out)
    os.makedirs(s.root, exist_ok=True)
    st.save_instance(s, cfg, g, free, ttf, live)
    print(f"generated n={g.n} m={g.m} incidents={len(live)} in {ns / 1e9:.1f}s -> {s.root}")
    return EXIT_OK


def cmd_preprocess(a) -> int:
    s = st.Store(a.out)
    g, ttf, _ = st.load_instance(s)
    pre, ns = _timed(preprocess, g, ttf, threads=a.threads)
    rec = st.save_preprocess(s, pre, a.threads)
    print(f"preprocessed arcs={rec['arcs']} triangles={rec['triangles']} "
          f"intervals={rec['intervals']} buckets={rec['buckets']} in {ns / 1e9:.1f}s")
    s.annotate(elapsed_ns=ns)
    return EXIT_OK


def cmd_update(a) -> int:
    s = st.Store(a.out)
    g, ttf, _ = st.load_instance(s)
    pre = st.load_preprocess(s, g)
    snap = a.snapshot or st.default_snapshot(s)
    overlay = read_snapshot(snap, ttf)
    upd, ns = _timed(update, pre, ttf, overlay)
    st.save_update(s, upd, os.path.abspath(snap))
    s.annotate(elapsed_ns=ns)
    print(f"updated with {len(overlay)} live entries at tau_now={overlay.tau_now} in {ns / 1e6:.0f}ms")
    return EXIT_OK


def cmd_compress(a) -> int:
    if a.compress_k is None:
        raise SystemExit("compress needs --compress-k K")
    s = st.Store(a.out)
    g, _, _ = st.load_instance(s)
    pre = st.load_preprocess(s, g)
    k = a.compress_k
    t0 = time.perf_counter_ns()
    mmp = imp = None
    if k <= len(pre.mmp.intervals):
        data, mmp = compress_mmp(pre.mmp, k, a.threads)
        pre = Preprocessed(pre.h, pre.lower, data, pre.imp)
    if k <= pre.imp.K:
        prof, imp = compress_imp(pre.imp, k, a.threads)
        pre = Preprocessed(pre.h, pre.lower, pre.mmp, prof)
    ns = time.perf_counter_ns() - t0
    st.save_compressed(s, k, pre, mmp, imp, a.threads)
    s.annotate(elapsed_ns=ns)
    print(f"compressed to k={k} in {ns / 1e9:.1f}s")
    return EXIT_OK


def _session(a):
    """Instance, preprocessing (optionally compressed) and the latest update."""
    s = st.Store(a.out)
    g, ttf, cfg = st.load_instance(s)
    pre = st.load_preprocess(s, g, a.compress_k)
    if s.latest("update") is not None:
        upd = st.load_update(s, pre, ttf)
    elif cfg.incidents > 0:
        raise st.PhaseOrderError("live traffic is configured; run `update` before querying")
    else:
        upd = update(pre, ttf, LiveOverlay.empty(cfg.tau_now))
    return s, g, ttf, pre, upd


def cmd_query(a) -> int:
    s, g, ttf, pre, upd = _session(a)
    tau = upd.overlay.tau_now if a.tau_dep is None else a.tau_dep
    router = Router(g, pre, upd)
    truth = None
    for algo in ["dijkstra"] + [x for x in (a.algo or ALGORITHMS) if x != "dijkstra"]:
        res = router.query(algo, a.source, a.target, tau)
        truth = res.distance if truth is None else truth
        d = "unreachable" if res.distance >= INF else f"{res.distance} ms"
        print(f"{algo:9s} {d:>14s} pops={res.pops} resettles={res.resettles}")
        if res.distance != truth:
            print(f"mismatch: {algo} disagrees with dijkstra", file=sys.stderr)
            return EXIT_MISMATCH
    return EXIT_OK


def _bench(a, algos) -> int:
    s, g, ttf, pre, upd = _session(a)
    weights = TrafficWeights(ttf, upd.overlay)
    spec = QuerySpec(a.kind, a.queries, a.seed if a.seed is not None else 1)
    qs = gen_queries(g, weights, spec)
    bench_dir = s.path("bench")
    os.makedirs(bench_dir, exist_ok=True)
    tag = f"{a.kind}_n{a.queries}" + (f"_k{a.compress_k}" if a.compress_k else "")
    write_queries(os.path.join(bench_dir, f"queries_{tag}.csv"), qs)
    report, ns = _timed(run_suite, lambda: Router(g, pre, upd), algos, qs.queries, a.parallel)
    for rec in s.manifest()["phases"]:
        if "elapsed_ns" in rec:
            report.phase_ns[rec["phase"]] = rec["elapsed_ns"]
    report.phase_ns["queries"] = ns
    report.write_csv(os.path.join(bench_dir, f"runs_{tag}.csv"))
    summary = report.summary_csv(per_hour=a.by_hour)
    with open(os.path.join(bench_dir, f"summary_{tag}.csv"), "w") as f:
        f.write(summary)
    print(summary, end="")
    if qs.resampled:
        print(f"# resampled one-hour sources: {qs.resampled}")
    if not report.passed:
        path = os.path.join(bench_dir, f"counterexamples_{tag}.json")
        n = dump_counterexamples(path, Router(g, pre, upd), report)
        print(f"exactness gate FAILED: {len(report.mismatches)} mismatches, {n} dumped to {path}",
              file=sys.stderr)
        return EXIT_MISMATCH
    print(f"exactness gate passed on {len(qs.queries)} queries")
    return EXIT_OK


def cmd_bench(a) -> int:
    return _bench(a, a.algo or list(ALGORITHMS))


def cmd_verify(a) -> int:
    s = st.Store(a.out)
    bad = []
    for phase in ("generate", "preprocess", "update", "compress"):
        if s.latest(phase) is not None:
            bad += s.changed_artifacts(phase)
    if bad:
        print(f"artifacts changed since their phase ran: {', '.join(bad)}", file=sys.stderr)
        return EXIT_MISMATCH
    return _bench(a, list(ALGORITHMS))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tdroute", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", required=True, metavar="DIR", help="artifact directory")
        sp.add_argument("--threads", type=int, default=1, metavar="T")
        return sp

    sp = common(sub.add_parser("generate", help="synthesize an instance"))
    sp.add_argument("--seed", type=int, default=1)
    sp.add_argument("--rows", type=int, default=GenConfig.rows)
    sp.add_argument("--cols", type=int, default=GenConfig.cols)
    sp.add_argument("--incidents", type=int, default=GenConfig.incidents)
    sp.set_defaults(fn=cmd_generate)

    sp = common(sub.add_parser("preprocess", help="order, contract and customize"))
    sp.set_defaults(fn=cmd_preprocess)

    sp = common(sub.add_parser("update", help="apply a live traffic snapshot"))
    sp.add_argument("--snapshot", metavar="FILE", help="defaults to the generated snapshot")
    sp.set_defaults(fn=cmd_update)

    sp = common(sub.add_parser("compress", help="merge interval metrics and bucket slices"))
    sp.add_argument("--compress-k", type=int, metavar="K")
    sp.set_defaults(fn=cmd_compress)

    def querying(sp):
        sp.add_argument("--compress-k", type=int, metavar="K",
                        help="use the artifacts of a previous `compress --compress-k K`")
        return sp

    sp = querying(common(sub.add_parser("query", help="answer one query with each algorithm")))
    sp.add_argument("source", type=int)
    sp.add_argument("target", type=int)
    sp.add_argument("--tau-dep", type=int, metavar="MS", help="departure; defaults to tau_now")
    sp.add_argument("--algo", action="append", choices=ALGORITHMS)
    sp.set_defaults(fn=cmd_query)

    for name, fn, helptext in (("bench", cmd_bench, "timed query batch with exactness gate"),
                               ("verify", cmd_verify, "artifact hashes plus exactness gate")):
        sp = querying(common(sub.add_parser(name, help=helptext)))
        sp.add_argument("--seed", type=int)
        sp.add_argument("--queries", type=int, default=1000, metavar="N")
        sp.add_argument("--kind", choices=KINDS, default="random")
        sp.add_argument("--parallel", type=int, default=1, metavar="P",
                        help="independent query workers")
        sp.add_argument("--by-hour", action="store_true", help="group summary by departure hour")
        if name == "bench":
            sp.add_argument("--algo", action="append", choices=ALGORITHMS)
        sp.set_defaults(fn=fn)
    return p


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return a.fn(a)
    except st.PhaseOrderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
