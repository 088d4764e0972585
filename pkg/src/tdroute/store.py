"""Artifact directory layout and the phase manifest.

::

    DIR/manifest.json          phase records with sha256 of every written file
    DIR/instance/              graph, predictions, free flow, config, snapshot
    DIR/preprocess/            order, hierarchy, lower metric, MMP metrics, IMP profile
    DIR/compress/k<K>/         compressed MMP metrics and IMP profile
    DIR/update/                live metric and upper-bound metric of the last snapshot
"""
from __future__ import annotations

import hashlib
import json
import os
import time

import numpy as np

from .cch import Metric, load_hierarchy, save_hierarchy
from .engine import Preprocessed, Updated, assemble_update
from .generator import GenConfig
from .graph import Graph, TravelTimeFunctions, load_graph, read_u32, save_graph, write_u32
from .imp import load_profile, save_profile
from .mmp import IntervalGrid, MmpData
from .traffic import LiveOverlay, read_snapshot, write_snapshot

MANIFEST = "manifest.json"
FORMAT = 1


class PhaseOrderError(RuntimeError):
    """A phase ran before the phases it depends on."""


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Store:
    def __init__(self, root):
        self.root = os.fspath(root)

    def path(self, *parts) -> str:
        return os.path.join(self.root, *parts)

    def manifest(self) -> dict:
        p = self.path(MANIFEST)
        if not os.path.exists(p):
            return {"format": FORMAT, "phases": []}
        with open(p) as f:
            return json.load(f)

    def record(self, phase: str, files, **info) -> dict:
        m = self.manifest()
        rec = {"phase": phase, "time": time.strftime("%Y-%m-%dT%H:%M:%S"),
               "artifacts": {os.path.relpath(p, self.root): sha256(p) for p in sorted(files)}}
        rec.update(info)
        m["phases"].append(rec)
        self._write(m)
        return rec

    def annotate(self, **info) -> None:
        """Add fields to the most recent phase record."""
        m = self.manifest()
        m["phases"][-1].update(info)
        self._write(m)

    def _write(self, m: dict) -> None:
        os.makedirs(self.root, exist_ok=True)
        tmp = self.path(MANIFEST + ".tmp")
        with open(tmp, "w") as f:
            json.dump(m, f, indent=1)
        os.replace(tmp, self.path(MANIFEST))

    def latest(self, phase: str) -> dict | None:
        recs = [r for r in self.manifest()["phases"] if r["phase"] == phase]
        return recs[-1] if recs else None

    def require(self, phase: str) -> dict:
        rec = self.latest(phase)
        if rec is None:
            raise PhaseOrderError(f"phase {phase!r} has not run in {self.root}")
        return rec

    def changed_artifacts(self, phase: str) -> list[str]:
        """Files of the latest ``phase`` record whose content no longer matches."""
        rec = self.require(phase)
        out = []
        for rel, digest in rec["artifacts"].items():
            p = self.path(rel)
            if not os.path.exists(p) or sha256(p) != digest:
                out.append(rel)
        return out


def _save(path, arr) -> str:
    np.save(path, np.ascontiguousarray(arr), allow_pickle=False)
    return path if path.endswith(".npy") else path + ".npy"


def _load(path) -> np.ndarray:
    return np.load(path, allow_pickle=False)


# -- instance ----------------------------------------------------------------

def save_instance(store: Store, cfg: GenConfig, g: Graph, free: np.ndarray,
                  ttf: TravelTimeFunctions, overlay: LiveOverlay) -> dict:
    d = store.path("instance")
    save_graph(d, g, ttf)
    write_u32(os.path.join(d, "free_flow"), free)
    with open(os.path.join(d, "config.json"), "w") as f:
        json.dump(cfg.to_dict(), f, indent=1)
    write_snapshot(os.path.join(d, "snapshot.txt"), overlay)
    files = [os.path.join(d, x) for x in sorted(os.listdir(d))]
    return store.record("generate", files, seed=cfg.seed, config=cfg.to_dict(),
                        n=g.n, m=g.m, incidents=len(overlay))


def load_instance(store: Store):
    store.require("generate")
    d = store.path("instance")
    g, ttf = load_graph(d)
    with open(os.path.join(d, "config.json")) as f:
        cfg = GenConfig.from_dict(json.load(f))
    return g, ttf, cfg


def default_snapshot(store: Store) -> str:
    return store.path("instance", "snapshot.txt")


# -- preprocessing -----------------------------------------------------------

def save_preprocess(store: Store, pre: Preprocessed, threads: int = 1) -> dict:
    d = store.path("preprocess")
    os.makedirs(d, exist_ok=True)
    save_hierarchy(d, pre.h)
    files = [os.path.join(d, x) for x in ("order", "cch_first_out", "cch_head")]
    files.append(_save(os.path.join(d, "lower_up.npy"), pre.lower.w_up))
    files.append(_save(os.path.join(d, "lower_down.npy"), pre.lower.w_down))
    grid_path = os.path.join(d, "mmp_intervals.cfg")
    with open(grid_path, "w") as f:
        f.write(pre.mmp.grid.dump())
    files.append(grid_path)
    files.append(_save(os.path.join(d, "mmp_up.npy"), pre.mmp.func_up))
    files.append(_save(os.path.join(d, "mmp_down.npy"), pre.mmp.func_down))
    prof = os.path.join(d, "imp_profile.bin")
    save_profile(prof, pre.imp)
    files.append(prof)
    return store.record("preprocess", files, threads=threads, arcs=pre.h.num_arcs,
                        triangles=pre.h.num_triangles, intervals=len(pre.mmp.intervals),
                        buckets=pre.imp.K)


def load_preprocess(store: Store, g: Graph, compress_k: int | None = None) -> Preprocessed:
    store.require("preprocess")
    d = store.path("preprocess")
    h = load_hierarchy(d, g)
    lower = Metric(_load(os.path.join(d, "lower_up.npy")), _load(os.path.join(d, "lower_down.npy")))
    with open(os.path.join(d, "mmp_intervals.cfg")) as f:
        grid = IntervalGrid.parse(f.read())
    up = _load(os.path.join(d, "mmp_up.npy"))
    down = _load(os.path.join(d, "mmp_down.npy"))
    intervals = grid.intervals()
    mmp = MmpData(h, grid, intervals, up, down, np.arange(len(intervals), dtype=np.int32),
                  up[0].copy(), down[0].copy())
    prof = load_profile(os.path.join(d, "imp_profile.bin"))
    pre = Preprocessed(h, lower, mmp, prof)
    if compress_k is not None:
        pre = load_compressed(store, pre, compress_k)
    return pre


def compressed_dir(store: Store, k: int) -> str:
    return store.path("compress", f"k{k}")


def save_compressed(store: Store, k: int, pre: Preprocessed, mmp_res=None, imp_res=None,
                    threads: int = 1) -> dict:
    d = compressed_dir(store, k)
    os.makedirs(d, exist_ok=True)
    files = []
    info = {"k": k, "threads": threads}
    if mmp_res is not None:
        files.append(_save(os.path.join(d, "mmp_up.npy"), pre.mmp.func_up))
        files.append(_save(os.path.join(d, "mmp_down.npy"), pre.mmp.func_down))
        write_u32(os.path.join(d, "mmp_table"), pre.mmp.table)
        files.append(os.path.join(d, "mmp_table"))
        info["mmp_merges"] = [list(m) for m in mmp_res.merges]
    if imp_res is not None:
        p = os.path.join(d, "imp_profile.bin")
        save_profile(p, pre.imp)
        files.append(p)
        info["imp_merges"] = [list(m) for m in imp_res.merges]
    return store.record("compress", files, **info)


def load_compressed(store: Store, pre: Preprocessed, k: int) -> Preprocessed:
    d = compressed_dir(store, k)
    if not os.path.isdir(d):
        raise PhaseOrderError(f"no compressed artifacts for k={k}; run `compress --compress-k {k}`")
    mmp, prof = pre.mmp, pre.imp
    if os.path.exists(os.path.join(d, "mmp_table")):
        mmp = mmp.with_compression(_load(os.path.join(d, "mmp_up.npy")),
                                   _load(os.path.join(d, "mmp_down.npy")),
                                   read_u32(os.path.join(d, "mmp_table")).astype(np.int32))
    p = os.path.join(d, "imp_profile.bin")
    if os.path.exists(p):
        prof = load_profile(p)
    return Preprocessed(pre.h, pre.lower, mmp, prof)


# -- update ------------------------------------------------------------------

_UPDATE_ARRAYS = ("live_up", "live_down", "cmax_up", "cmax_down", "cmax_up_star", "cmax_down_star")


def save_update(store: Store, upd: Updated, snapshot_source: str | None = None) -> dict:
    store.require("preprocess")
    d = store.path("update")
    os.makedirs(d, exist_ok=True)
    snap = os.path.join(d, "snapshot.txt")
    write_snapshot(snap, upd.overlay)
    arrays = (upd.live.w_up, upd.live.w_down, upd.cmax.w_up, upd.cmax.w_down,
              upd.cmax.w_up_star, upd.cmax.w_down_star)
    files = [snap] + [_save(os.path.join(d, name + ".npy"), a) for name, a in zip(_UPDATE_ARRAYS, arrays)]
    return store.record("update", files, snapshot=snapshot_source, tau_now=upd.overlay.tau_now,
                        incidents=len(upd.overlay))


def load_update(store: Store, pre: Preprocessed, ttf: TravelTimeFunctions) -> Updated:
    store.require("update")
    d = store.path("update")
    overlay = read_snapshot(os.path.join(d, "snapshot.txt"), ttf)
    a = {name: _load(os.path.join(d, name + ".npy")) for name in _UPDATE_ARRAYS}
    live = Metric(a["live_up"], a["live_down"])
    cmax = Metric(a["cmax_up"], a["cmax_down"], w_up_star=a["cmax_up_star"],
                  w_down_star=a["cmax_down_star"], alive_up=a["cmax_up"] <= a["cmax_up_star"],
                  alive_down=a["cmax_down"] <= a["cmax_down_star"])
    return assemble_update(pre, ttf, overlay, live, cmax)
