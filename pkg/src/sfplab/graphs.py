"""Clusters, graph distances, diameter experiments and degree tails."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import _kernels
from .errors import DomainError, PreconditionError, SizeError
from .model import BoxGeometry, ModelParams
from .rng import StreamKind, uniforms
from .sampler import Configuration, sample_configuration

INF = math.inf
EXACT_DIAMETER_MAX = 10**4


@dataclass(frozen=True, eq=False)
class ClusterLabeling:
    """``label[v]`` is the cluster id of ``v`` (-1 for vertices outside the graph).

    Ids are canonical: clusters are numbered by their smallest vertex.
    """

    label: np.ndarray
    sizes: np.ndarray

    @property
    def n_clusters(self) -> int:
        return self.sizes.shape[0]

    @property
    def largest_id(self) -> int:
        return int(np.argmax(self.sizes)) if self.sizes.size else -1

    def members(self, cid: int) -> np.ndarray:
        return np.flatnonzero(self.label == cid)


def adjacency_matrix(config: Configuration) -> csr_matrix:
    n = config.n_vertices
    data = np.ones(config.indices.shape[0], dtype=np.int8)
    return csr_matrix((data, config.indices, config.indptr), shape=(n, n))


def clusters(config: Configuration) -> ClusterLabeling:
    """Connected components; when restricted to green, non-green vertices get -1."""
    n = config.n_vertices
    _, raw = connected_components(adjacency_matrix(config), directed=False)
    keep = config.green if config.restricted_to_green else np.ones(n, dtype=bool)
    label = np.full(n, -1, dtype=np.int64)
    # relabel by first appearance in vertex order
    _, first = np.unique(raw[keep], return_index=True)
    order = np.argsort(first)
    remap = np.full(raw.max() + 1 if n else 0, -1, dtype=np.int64)
    remap[np.unique(raw[keep])[order]] = np.arange(order.shape[0])
    label[keep] = remap[raw[keep]]
    sizes = np.bincount(label[keep], minlength=order.shape[0]).astype(np.int64)
    label.setflags(write=False)
    sizes.setflags(write=False)
    return ClusterLabeling(label, sizes)


def bfs_distances(config: Configuration, source: int) -> np.ndarray:
    """Hop distances from ``source`` with -1 for unreachable vertices."""
    if not 0 <= source < config.n_vertices:
        raise DomainError(f"vertex {source} outside the box")
    return _kernels.bfs(config.indptr, config.indices, source, config.n_vertices)


def graph_distance(config: Configuration, u: int, v: int):
    """BFS hop count, or ``math.inf`` when ``u`` and ``v`` are disconnected."""
    if not 0 <= v < config.n_vertices:
        raise DomainError(f"vertex {v} outside the box")
    dist = bfs_distances(config, u)
    return INF if dist[v] < 0 else int(dist[v])


@dataclass
class DistanceReport:
    """Histogram of sampled graph distances; the key ``math.inf`` counts disconnected pairs."""

    description: dict
    histogram: dict = field(default_factory=dict)
    empty: bool = False
    diameter_lower: int | None = None
    diameter_exact: int | None = None

    @property
    def n_pairs(self) -> int:
        return int(sum(self.histogram.values()))

    def fraction_within(self, k) -> float:
        if self.n_pairs == 0:
            return math.nan
        hit = sum(c for dist, c in self.histogram.items() if dist <= k)
        return hit / self.n_pairs

    def merge(self, other: "DistanceReport") -> None:
        for k, c in other.histogram.items():
            self.histogram[k] = self.histogram.get(k, 0) + c

    def rows(self):
        """``(k, count)`` rows sorted by k, infinity last as the string ``inf``."""
        keys = sorted(self.histogram)
        return [("inf" if k == INF else k, self.histogram[k]) for k in keys]


def theorem_distance_bound(params: ModelParams):
    """Constant diameter bound for the infinite-degree regimes (None outside them)."""
    bounds = []
    if params.gamma <= 1:
        bounds.append(2)
    if params.alpha < params.d:
        bounds.append(math.ceil(params.d / (params.d - params.alpha)))
    return min(bounds) if bounds else None


def sample_pair_distances(config: Configuration, vertices: np.ndarray, n_pairs: int,
                          master_seed: int) -> DistanceReport:
    """Distances between ``n_pairs`` uniform pairs of distinct vertices from ``vertices``."""
    vertices = np.asarray(vertices, dtype=np.int64)
    rep = DistanceReport({"n_candidates": int(vertices.shape[0]), "n_pairs": int(n_pairs)})
    k = vertices.shape[0]
    if k < 2:
        rep.empty = True
        return rep
    u = uniforms(master_seed, StreamKind.PAIRS, np.arange(2 * n_pairs)).reshape(n_pairs, 2)
    a = np.minimum((u[:, 0] * k).astype(np.int64), k - 1)
    # second index uniform over the other k-1 candidates
    b = np.minimum((u[:, 1] * (k - 1)).astype(np.int64), k - 2)
    b = b + (b >= a)
    src, dst = vertices[a], vertices[b]
    order = np.argsort(src, kind="stable")
    hist: dict = {}
    cur, dist = -1, None
    for idx in order:
        if src[idx] != cur:
            cur = src[idx]
            dist = bfs_distances(config, int(cur))
        dv = dist[dst[idx]]
        key = INF if dv < 0 else int(dv)
        hist[key] = hist.get(key, 0) + 1
    rep.histogram = hist
    return rep


def double_sweep(config: Configuration, start: int) -> int:
    """Lower bound on the eccentricity-diameter of ``start``'s cluster."""
    d0 = bfs_distances(config, start)
    far = int(np.argmax(d0))
    return int(bfs_distances(config, far).max())


def exact_diameter(config: Configuration, vertices: np.ndarray) -> int:
    best = 0
    for v in vertices:
        best = max(best, int(bfs_distances(config, int(v)).max()))
    return best


def diameter_experiment(geometry: BoxGeometry, params: ModelParams, k_max: int, n_pairs: int,
                        n_seeds: int, seed_base: int = 0, exploratory: bool = False,
                        threads: int = 1) -> DistanceReport:
    """Pooled distance histogram of uniform pairs in the largest cluster over several seeds.

    ``description`` records the theorem bound, the seeds, and the per-seed
    fractions within 2 and within the bound.  Distances above ``k_max`` are
    still counted exactly; ``k_max`` only limits the reported fractions.
    """
    bound = theorem_distance_bound(params)
    if bound is None and not exploratory:
        raise PreconditionError("theorem mode needs gamma <= 1 or alpha < d")
    pooled = DistanceReport({"side": geometry.side, "d": geometry.d, "bound": bound,
                             "k_max": int(k_max), "seeds": [], "per_seed": []})
    lowers = []
    for s in range(seed_base, seed_base + n_seeds):
        cfg = sample_configuration(geometry, params, s, threads=threads)
        lab = clusters(cfg)
        members = lab.members(lab.largest_id)
        rep = sample_pair_distances(cfg, members, n_pairs, s)
        pooled.description["seeds"].append(s)
        if rep.empty:
            pooled.description["per_seed"].append({"seed": s, "empty": True})
            continue
        pooled.merge(rep)
        lowers.append(double_sweep(cfg, int(members[0])))
        entry = {"seed": s, "cluster_size": int(members.shape[0]),
                 "within_2": rep.fraction_within(2)}
        if bound is not None:
            entry["within_bound"] = rep.fraction_within(bound)
        if members.shape[0] <= EXACT_DIAMETER_MAX and members.shape[0] * cfg.indices.shape[0] <= 2 * 10**8:
            entry["diameter"] = exact_diameter(cfg, members)
        pooled.description["per_seed"].append(entry)
    pooled.empty = pooled.n_pairs == 0
    pooled.diameter_lower = max(lowers) if lowers else None
    exact = [e["diameter"] for e in pooled.description["per_seed"] if "diameter" in e]
    if exact and len(exact) == len(lowers):
        pooled.diameter_exact = max(exact)
    pooled.description["fractions"] = {k: pooled.fraction_within(k) for k in range(1, k_max + 1)}
    return pooled


def diameter_trend(d: int, sides, params: ModelParams, k_max: int, n_pairs: int, n_seeds: int,
                   seed_base: int = 0, exploratory: bool = False) -> list:
    """One pooled report per box side, e.g. along a doubling schedule."""
    return [diameter_experiment(BoxGeometry.cube(d, m), params, k_max, n_pairs, n_seeds,
                                seed_base, exploratory) for m in sides]


@dataclass
class DegreeTail:
    s: np.ndarray
    ccdf: np.ndarray
    gamma_hat: float
    window: tuple
    undefined: bool = False

    def rows(self):
        return list(zip(self.s.tolist(), self.ccdf.tolist()))


def ccdf_table(values) -> tuple[np.ndarray, np.ndarray]:
    """Distinct values ``s`` and the empirical ``P(X >= s)``."""
    x = np.sort(np.asarray(values))
    s, first = np.unique(x, return_index=True)
    return s, 1.0 - first / x.shape[0]


def fit_tail_exponent(s: np.ndarray, ccdf: np.ndarray, lo: float, hi: float) -> float:
    """Negative least-squares slope of log ccdf on log s over ``lo <= s <= hi``."""
    sel = (s >= lo) & (s <= hi) & (s > 0)
    if sel.sum() < 2:
        return math.nan
    slope = np.polyfit(np.log(s[sel]), np.log(ccdf[sel]), 1)[0]
    return float(-slope)


def degree_tail(config: Configuration, min_vertices: int = 1000, anchor_rank: int = 10) -> DegreeTail:
    """Empirical degree ccdf and a log-log slope fit over its top decade.

    The window is ``[s_top / 10, s_top]`` with ``s_top`` the
    ``anchor_rank``-th largest degree.  Anchoring at the very maximum makes
    the fit hostage to one order statistic; the window is reported.
    """
    deg = config.degrees()
    if config.restricted_to_green:
        deg = deg[config.green]
    if deg.shape[0] < min_vertices:
        raise SizeError(f"degree_tail needs >= {min_vertices} vertices, got {deg.shape[0]}")
    s, cc = ccdf_table(deg)
    if s.shape[0] < 2:
        return DegreeTail(s, cc, math.nan, (math.nan, math.nan), undefined=True)
    hi = float(np.sort(deg)[-min(anchor_rank, deg.shape[0])])
    lo = hi / 10.0
    g = fit_tail_exponent(s, cc, lo, hi)
    return DegreeTail(s, cc, g, (lo, hi), undefined=bool(math.isnan(g)))
