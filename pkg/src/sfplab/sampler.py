"""Exact O(n^2) configuration sampler with shared-uniform coupling."""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import DomainError, PreconditionError, ResourceError
from .model import (BoxGeometry, Boundary, Constant, ModelParams, Norm,
                    check_positive_weights, law_dominated)
from .rng import StreamKind, stream_key, uniforms

DEFAULT_MAX_PAIRS = 10**9


def max_pairs_budget() -> int:
    """Pair budget for one sweep; the ``SFP_MAX_PAIRS`` env var overrides it."""
    raw = os.environ.get("SFP_MAX_PAIRS")
    return int(float(raw)) if raw else DEFAULT_MAX_PAIRS


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Configuration:
    """A sampled instance.  Adjacency is CSR with sorted neighbour lists."""

    geometry: BoxGeometry
    params: ModelParams
    weights: np.ndarray
    green: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    master_seed: int
    restricted_to_green: bool = False

    @property
    def n_vertices(self) -> int:
        return self.weights.shape[0]

    @property
    def n_edges(self) -> int:
        return self.indices.shape[0] // 2

    def coords(self) -> np.ndarray:
        return self.geometry.coords()

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def has_edge(self, u: int, v: int) -> bool:
        nb = self.neighbors(u)
        k = np.searchsorted(nb, v)
        return bool(k < nb.shape[0] and nb[k] == v)

    def edges(self):
        """Arrays ``(u, v)`` with ``u < v``, sorted lexicographically."""
        src = np.repeat(np.arange(self.n_vertices, dtype=np.int64), self.degrees())
        keep = src < self.indices
        return src[keep], self.indices[keep]

    def edge_keys(self) -> np.ndarray:
        """Sorted ``u * n + v`` keys of the edges, handy for subset checks."""
        u, v = self.edges()
        return u * self.n_vertices + v

    def edge_set(self) -> set:
        u, v = self.edges()
        return set(zip(u.tolist(), v.tolist()))

    def same_as(self, other: "Configuration") -> bool:
        return (self.geometry == other.geometry and self.params == other.params
                and np.array_equal(self.weights, other.weights)
                and np.array_equal(self.green, other.green)
                and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices))

    def write_csv(self, directory) -> tuple[Path, Path]:
        """Write ``vertices.csv`` and ``edges.csv`` into ``directory``."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        coords = self.coords()
        vpath, epath = out / "vertices.csv", out / "edges.csv"
        with open(vpath, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index"] + [f"x{a}" for a in range(self.geometry.d)] + ["weight", "green"])
            for i in range(self.n_vertices):
                w.writerow([i, *coords[i].tolist(), repr(float(self.weights[i])), int(self.green[i])])
        u, v = self.edges()
        with open(epath, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["u", "v"])
            w.writerows(zip(u.tolist(), v.tolist()))
        return vpath, epath


def to_csr(n: int, us: np.ndarray, vs: np.ndarray):
    """Symmetric CSR from an undirected edge list (no duplicates assumed)."""
    src = np.concatenate([us, vs]).astype(np.int64)
    dst = np.concatenate([vs, us]).astype(np.int64)
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    return indptr, dst


def _tables(geometry: BoxGeometry, params: ModelParams):
    side = geometry.side
    delta = np.arange(side, dtype=np.int64)
    if geometry.boundary == Boundary.TORUS:
        axis = np.minimum(delta, side - delta)
    else:
        axis = delta
    rmax = int(axis.max()) * (geometry.d if params.norm == Norm.L1 else 1)
    r = np.arange(rmax + 1, dtype=float)
    kernel = np.zeros(rmax + 1)
    kernel[1:] = params.lam / r[1:] ** params.alpha
    return np.ascontiguousarray(axis), kernel


def _row_blocks(n: int, n_blocks: int):
    """Split rows into blocks of roughly equal pair counts."""
    if n_blocks <= 1 or n < 2:
        return [(0, n)]
    # rows i contribute n-1-i pairs; cumulative is quadratic
    cum = np.cumsum(np.arange(n - 1, -1, -1, dtype=float))
    cuts = np.searchsorted(cum, np.linspace(0, cum[-1], n_blocks + 1)[1:-1])
    bounds = [0, *sorted(set(int(c) for c in cuts)), n]
    return [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _sweep(geometry, params, weights, active, master_seed, threads=1):
    n = geometry.n_vertices
    if n < 2 or params.lam == 0:
        # nothing to sweep, so the pair budget does not apply
        return np.empty(0, np.int64), np.empty(0, np.int64)
    pairs = n * (n - 1) // 2
    budget = max_pairs_budget()
    if pairs > budget:
        raise ResourceError(f"pair sweep needs {pairs} pairs, budget max_pairs={budget}")
    axis, kernel = _tables(geometry, params)
    local = geometry.coords() - np.asarray(geometry.origin, dtype=np.int64)
    key = np.uint64(stream_key(master_seed, StreamKind.EDGE))
    linf = params.norm == Norm.LINF
    check = active is not None
    act = active if check else np.ones(1, dtype=np.bool_)
    w = np.ascontiguousarray(weights, dtype=float)
    d = geometry.d
    if d == 1:
        cx = np.ascontiguousarray(local[:, 0])

        def job(lo, hi):
            return _kernels.sweep_rows_d1(cx, w, act, check, key, kernel, axis, lo, hi)
    elif d == 2:
        cx = np.ascontiguousarray(local[:, 0])
        cy = np.ascontiguousarray(local[:, 1])

        def job(lo, hi):
            return _kernels.sweep_rows_d2(cx, cy, w, act, check, linf, key, kernel, axis, lo, hi)
    else:
        def job(lo, hi):
            return _kernels.sweep_rows(local, w, act, check, linf, key, kernel, axis, lo, hi)

    threads = max(1, int(threads))
    blocks = _row_blocks(n, threads * 4 if threads > 1 else 1)
    if threads == 1:
        parts = [job(lo, hi) for lo, hi in blocks]
    else:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda b: job(*b), blocks))
    # blocks are in row order, and each block emits rows in order, so the
    # concatenation is already canonical whatever the thread count
    us = np.concatenate([p[0] for p in parts])
    vs = np.concatenate([p[1] for p in parts])
    return us, vs


def _weights(geometry, params, master_seed):
    n = geometry.n_vertices
    u = uniforms(master_seed, StreamKind.WEIGHTS, np.arange(n))
    law = params.weight_law
    if isinstance(law, Constant):
        return np.full(n, law.w0)
    return law.quantile(u, params.tau)


def _green(geometry, params, master_seed):
    n = geometry.n_vertices
    if params.mu >= 1.0:
        return np.ones(n, dtype=bool)
    return uniforms(master_seed, StreamKind.GREEN, np.arange(n)) <= params.mu


def _build(geometry, params, weights, green, master_seed, restrict, threads):
    us, vs = _sweep(geometry, params, weights, green if restrict else None, master_seed, threads)
    indptr, indices = to_csr(geometry.n_vertices, us, vs)
    return Configuration(geometry=geometry, params=params, weights=_frozen(weights, float),
                         green=_frozen(green, bool), indptr=_frozen(indptr, np.int64),
                         indices=_frozen(indices, np.int64), master_seed=int(master_seed),
                         restricted_to_green=bool(restrict))


def sample_configuration(geometry: BoxGeometry, params: ModelParams, master_seed: int,
                         restrict_to_green: bool = False, threads: int = 1) -> Configuration:
    """Sample weights, the green overlay and every pair of the box exactly."""
    if geometry.d != params.d:
        raise DomainError(f"geometry has d={geometry.d}, params have d={params.d}")
    weights = _weights(geometry, params, master_seed)
    green = _green(geometry, params, master_seed)
    return _build(geometry, params, weights, green, master_seed, restrict_to_green, threads)


def check_comparable(params_lo: ModelParams, params_hi: ModelParams) -> None:
    same = ("d", "alpha", "tau", "mu", "norm")
    diff = [k for k in same if getattr(params_lo, k) != getattr(params_hi, k)]
    if diff:
        raise PreconditionError(f"coupled parameters may differ only in lambda and weight law, not {diff}")
    if params_lo.lam > params_hi.lam:
        raise PreconditionError(f"need lambda_lo <= lambda_hi, got {params_lo.lam} > {params_hi.lam}")
    if not law_dominated(params_lo.weight_law, params_hi.weight_law, params_lo.tau):
        raise PreconditionError(
            f"weight law {params_lo.weight_law} is not dominated by {params_hi.weight_law}")


def coupled_pair(geometry: BoxGeometry, params_lo: ModelParams, params_hi: ModelParams,
                 master_seed: int, restrict_to_green: bool = False, threads: int = 1):
    """Two configurations from the same weight and edge uniforms, lo below hi."""
    check_comparable(params_lo, params_hi)
    lo = sample_configuration(geometry, params_lo, master_seed, restrict_to_green, threads)
    hi = sample_configuration(geometry, params_hi, master_seed, restrict_to_green, threads)
    return lo, hi


def conditional_edges(weights, geometry: BoxGeometry, params: ModelParams, master_seed: int,
                      threads: int = 1):
    """Edges ``(u, v)``, ``u < v``, sampled given externally supplied weights."""
    w = check_positive_weights(weights)
    if w.shape != (geometry.n_vertices,):
        raise DomainError(f"need {geometry.n_vertices} weights, got shape {w.shape}")
    if geometry.d != params.d:
        raise DomainError(f"geometry has d={geometry.d}, params have d={params.d}")
    return _sweep(geometry, params, w, None, master_seed, threads)


def configuration_from_weights(weights, geometry: BoxGeometry, params: ModelParams,
                               master_seed: int, threads: int = 1) -> Configuration:
    w = check_positive_weights(weights)
    us, vs = conditional_edges(w, geometry, params, master_seed, threads)
    indptr, indices = to_csr(geometry.n_vertices, us, vs)
    return Configuration(geometry=geometry, params=params, weights=_frozen(w, float),
                         green=_frozen(np.ones(w.shape[0], bool), bool),
                         indptr=_frozen(indptr, np.int64), indices=_frozen(indices, np.int64),
                         master_seed=int(master_seed))
