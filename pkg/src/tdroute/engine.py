"""In-memory phase pipeline: preprocess once, update per snapshot, query."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cch import AugmentedHierarchy, Metric, basic_customize, contract
from .compression import CompressionResult, compress
from .graph import Graph, TravelTimeFunctions
from .imp import BucketProfile, IMPotential, ScalarBounds, bucket_customize, imp_bounds
from .mmp import IntervalGrid, MmpData, MMPotential, mmp_assemble, mmp_preprocess, update_metrics
from .ordering import compute_order
from .rphast import CCHPotential
from .search import Potential, SearchResult, SearchWorkspace, ZeroPotential, astar
from .traffic import LiveOverlay, TrafficWeights

ALGORITHMS = ("dijkstra", "cchpot", "mmp", "imp")


class PhaseError(RuntimeError):
    pass


@dataclass
class Preprocessed:
    h: AugmentedHierarchy
    lower: Metric  # customization of the per-edge global minima
    mmp: MmpData
    imp: BucketProfile


@dataclass
class Updated:
    overlay: LiveOverlay
    weights: TrafficWeights
    live: Metric
    cmax: Metric
    mmp: MmpData
    imp: ScalarBounds


def preprocess(g: Graph, ttf: TravelTimeFunctions, rank: np.ndarray | None = None,
               grid: IntervalGrid | None = None, buckets: int = 96,
               threads: int = 1) -> Preprocessed:
    if rank is None:
        rank = compute_order(g)
    h = contract(g, rank)
    lower = basic_customize(h, ttf.global_min())
    return Preprocessed(h, lower, mmp_preprocess(h, ttf, grid, threads),
                        bucket_customize(h, ttf, buckets))


def update(pre: Preprocessed, ttf: TravelTimeFunctions, overlay: LiveOverlay) -> Updated:
    live, cmax = update_metrics(pre.h, ttf, overlay, pre.mmp.grid.live_window)
    return assemble_update(pre, ttf, overlay, live, cmax)


def assemble_update(pre: Preprocessed, ttf, overlay, live: Metric, cmax: Metric) -> Updated:
    return Updated(overlay, TrafficWeights(ttf, overlay), live, cmax,
                   mmp_assemble(pre.mmp, live, cmax, overlay.tau_now),
                   imp_bounds(pre.imp, cmax, overlay.tau_now))


def compress_mmp(data: MmpData, k: int, threads: int = 1) -> tuple[MmpData, CompressionResult]:
    """Merge interval metrics (both directions as one vector) down to ``k``."""
    a = data.func_up.shape[1]
    res = compress(np.concatenate([data.func_up, data.func_down], axis=1), k, threads)
    return data.with_compression(res.functions[:, :a], res.functions[:, a:], res.table), res


def compress_imp(prof: BucketProfile, k: int, threads: int = 1) -> tuple[BucketProfile, CompressionResult]:
    """Merge bucket slices down to ``k``."""
    a = prof.num_arcs
    res = compress(np.concatenate([prof.func_up, prof.func_down], axis=1), k, threads)
    return prof.with_compression(res.functions[:, :a], res.functions[:, a:], res.table), res


class Router:
    """Query front end over one preprocessed instance and one update."""

    def __init__(self, g: Graph, pre: Preprocessed, upd: Updated, switching: bool = True,
                 chain_opt: bool = False):
        self.g = g
        self.pre = pre
        self.upd = upd
        self.chain_opt = chain_opt
        self.workspace = SearchWorkspace(g.n)
        self.potentials: dict[str, Potential] = {
            "dijkstra": ZeroPotential(),
            "cchpot": CCHPotential(pre.h, pre.lower),
            "mmp": MMPotential(upd.mmp, switching=switching),
            "imp": IMPotential(pre.h, pre.imp, upd.imp),
        }

    @property
    def weights(self) -> TrafficWeights:
        return self.upd.weights

    def query(self, algo: str, s: int, t: int, tau_dep: int) -> SearchResult:
        if algo not in self.potentials:
            raise ValueError(f"unknown algorithm {algo!r}")
        return astar(self.g, self.weights, s, t, tau_dep, self.potentials[algo],
                     self.workspace, chain_opt=self.chain_opt and algo != "dijkstra")
