"""Simple random walks and effective resistance on sampled configurations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix, diags
from scipy.sparse.linalg import LinearOperator, cg

from . import _kernels
from .errors import DomainError, NumericError, PreconditionError
from .graphs import bfs_distances, clusters
from .model import BoxGeometry, Boundary, ModelParams
from .rng import StreamKind, stream_key
from .sampler import Configuration, sample_configuration


@dataclass
class EscapeEstimate:
    p: float
    standard_error: float
    n_walks: int
    escaped: int
    truncated: int
    isolated: bool = False

    @property
    def half_width(self) -> float:
        return 1.96 * self.standard_error


def _torus_side(config: Configuration) -> int:
    return config.geometry.side if config.geometry.boundary == Boundary.TORUS else 0


def l1_from(config: Configuration, start: int) -> np.ndarray:
    c = config.coords()
    delta = np.abs(c - c[start])
    side = _torus_side(config)
    if side:
        delta = np.minimum(delta, side - delta)
    return delta.sum(axis=1)


def srw_escape_probability(config: Configuration, start: int, R: int, n_walks: int,
                           max_steps: int, master_seed: int, walk_offset: int = 0) -> EscapeEstimate:
    """Fraction of walks from ``start`` that reach l1 distance ``R`` before returning.

    Walk ``k`` uses the walk substreams ``(walk_offset + k, step)``.
    Truncated walks count as non-escapes.
    """
    if R < 1:
        raise DomainError(f"R must be >= 1, got {R}")
    if not 0 <= start < config.n_vertices:
        raise DomainError(f"vertex {start} outside the box")
    if config.indptr[start + 1] == config.indptr[start]:
        return EscapeEstimate(0.0, 0.0, n_walks, 0, 0, isolated=True)
    key = np.uint64(stream_key(master_seed, StreamKind.WALK))
    esc, trunc = _kernels.escape_walks(config.indptr, config.indices, config.coords(), start, R,
                                       n_walks, max_steps, key, _torus_side(config), walk_offset)
    p = esc / n_walks
    return EscapeEstimate(p, math.sqrt(p * (1 - p) / n_walks), n_walks, int(esc), int(trunc))


def walk_trajectory(config: Configuration, start: int, n_steps: int, master_seed: int,
                    walk_id: int = 0) -> np.ndarray:
    if config.indptr[start + 1] == config.indptr[start]:
        raise DomainError("cannot walk from an isolated vertex")
    key = np.uint64(stream_key(master_seed, StreamKind.WALK))
    return _kernels.walk_steps(config.indptr, config.indices, start, n_steps, key, walk_id)


def effective_resistance(config: Configuration, start: int, R: int, tolerance: float = 1e-8) -> float:
    """Resistance between ``start`` and ``{v : |v - start| >= R}`` within its cluster.

    Unit conductance per edge.  The potential is 1 at ``start`` and 0 on the
    far set; the interior system is solved by Jacobi-preconditioned conjugate
    gradients and the relative residual is checked against ``tolerance``.
    Returns ``math.inf`` when the cluster never reaches distance ``R``.
    """
    if R < 1:
        raise DomainError(f"R must be >= 1, got {R}")
    hop = bfs_distances(config, start)
    dist = l1_from(config, start)
    in_cluster = hop >= 0
    far = in_cluster & (dist >= R)
    if not far.any():
        return math.inf
    interior = in_cluster & ~far
    interior[start] = False
    idx = np.flatnonzero(interior)
    deg = np.diff(config.indptr).astype(float)
    nb_start = config.neighbors(start)
    if idx.size == 0:
        return 1.0 / nb_start.size
    pos = np.full(config.n_vertices, -1, dtype=np.int64)
    pos[idx] = np.arange(idx.size)
    # rows of the graph Laplacian restricted to interior vertices
    rows = np.repeat(idx, np.diff(config.indptr)[idx])
    cols = np.concatenate([config.neighbors(v) for v in idx]) if idx.size else np.empty(0, np.int64)
    keep = pos[cols] >= 0
    A = csr_matrix((-np.ones(keep.sum()), (pos[rows[keep]], pos[cols[keep]])), shape=(idx.size, idx.size))
    A = A + diags(deg[idx])
    b = np.zeros(idx.size)
    np.add.at(b, pos[rows[cols == start]], 1.0)
    inv_d = 1.0 / deg[idx]
    M = LinearOperator(A.shape, matvec=lambda x: inv_d * x)
    phi, info = cg(A, b, rtol=tolerance, atol=0.0, M=M, maxiter=max(1000, 10 * idx.size))
    bnorm = np.linalg.norm(b)
    resid = np.linalg.norm(A @ phi - b) / (bnorm if bnorm > 0 else 1.0)
    if resid > tolerance * 10:
        est = _resistance_from(phi, pos, nb_start)
        raise NumericError(f"effective-resistance solve stalled at relative residual {resid:.3e}",
                           estimate=est)
    return _resistance_from(phi, pos, nb_start)


def _resistance_from(phi, pos, nb_start):
    p = pos[nb_start]
    val = np.where(p >= 0, phi[np.maximum(p, 0)], 0.0)
    current = float(np.sum(1.0 - val))
    return math.inf if current <= 0 else 1.0 / current


def escape_from_resistance(config: Configuration, start: int, r_eff: float) -> float:
    """The escape identity ``1 / (deg(start) R_eff)``."""
    deg = config.indptr[start + 1] - config.indptr[start]
    if deg == 0 or math.isinf(r_eff):
        return 0.0
    return 1.0 / (deg * r_eff)


@dataclass
class WalkDiagnostics:
    start: int
    radii: list
    escape: list = field(default_factory=list)
    ci: list = field(default_factory=list)
    r_eff: list = field(default_factory=list)
    truncated_fraction: list = field(default_factory=list)
    n_walks: int = 0
    max_steps: int = 0

    def rows(self):
        return list(zip(self.radii, self.escape, self.ci, self.r_eff, self.truncated_fraction))


def walk_diagnostics(config: Configuration, start: int, radii, n_walks: int, max_steps: int,
                     master_seed: int, tolerance: float = 1e-8) -> WalkDiagnostics:
    radii = sorted(int(r) for r in radii)
    out = WalkDiagnostics(start, radii, n_walks=n_walks, max_steps=max_steps)
    for i, R in enumerate(radii):
        est = srw_escape_probability(config, start, R, n_walks, max_steps, master_seed,
                                     walk_offset=i * n_walks)
        out.escape.append(est.p)
        out.ci.append(est.half_width)
        out.truncated_fraction.append(est.truncated / n_walks)
        out.r_eff.append(effective_resistance(config, start, R, tolerance))
    return out


def central_start(config: Configuration) -> int:
    """Vertex of the largest cluster closest (l1) to the box centre, ties to the smallest index."""
    lab = clusters(config)
    members = lab.members(lab.largest_id)
    c = config.coords()[members]
    centre = np.asarray(config.geometry.origin) + (config.geometry.side - 1) / 2
    return int(members[np.argmin(np.abs(c - centre).sum(axis=1))])


def _transient_regime(p: ModelParams) -> bool:
    return 1 < p.gamma < 2 or p.d < p.alpha < 2 * p.d


def _recurrent_regime(p: ModelParams) -> bool:
    return p.d == 2 and p.alpha > 4 and (p.tau > 2 or p.gamma > 2)


def regime_contrast(params_transient: ModelParams, params_recurrent: ModelParams, side: int,
                    radii, master_seed: int, tolerance: float = 1e-8,
                    min_cluster: int = 16, check_regimes: bool = True) -> dict:
    """Effective-resistance curves for a transient and a recurrent parameter set.

    Both use the same seed and box; the start is the largest-cluster vertex
    nearest the centre.  The report labels each curve by whether its last
    increment is below half its first one (slowing) and emits the raw
    values; it is a trend diagnostic, not a verdict.  ``check_regimes=False``
    skips the regime preconditions (exploratory runs, symmetry checks).
    """
    if check_regimes and not _transient_regime(params_transient):
        raise PreconditionError("transient slot needs 1 < gamma < 2 or d < alpha < 2d")
    if check_regimes and not _recurrent_regime(params_recurrent):
        raise PreconditionError("recurrent slot needs d = 2, alpha > 4 and (tau > 2 or gamma > 2)")
    out = {"radii": [int(r) for r in radii], "side": side, "seed": master_seed}
    for name, p in (("transient", params_transient), ("recurrent", params_recurrent)):
        cfg = sample_configuration(BoxGeometry.cube(p.d, side), p, master_seed)
        lab = clusters(cfg)
        if lab.sizes.max() < min_cluster:
            out[name] = {"insufficient_cluster": True, "largest": int(lab.sizes.max())}
            continue
        s = central_start(cfg)
        curve = [effective_resistance(cfg, s, int(r), tolerance) for r in radii]
        finite = [c for c in curve if math.isfinite(c)]
        inc = np.diff(finite).tolist()
        out[name] = {"start": s, "r_eff": curve, "increments": inc,
                     "ratio": finite[-1] / finite[0] if len(finite) >= 2 else math.nan,
                     "slowing": bool(len(inc) >= 2 and inc[-1] < 0.5 * inc[0])}
    return out
