"""Build configurations from explicit edge lists."""

import numpy as np

from sfplab.model import BoxGeometry, ModelParams
from sfplab.sampler import Configuration, to_csr


def from_edges(n, edges, d=1, side=None, weights=None, geometry=None):
    geometry = geometry or BoxGeometry.cube(d, side or n)
    n = geometry.n_vertices
    e = np.asarray(sorted(tuple(sorted(x)) for x in edges), dtype=np.int64).reshape(-1, 2)
    indptr, indices = to_csr(n, e[:, 0], e[:, 1])
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    return Configuration(geometry, ModelParams(geometry.d, 1.0, 2.0, 1.0), w, np.ones(n, bool),
                         indptr, indices, 0)
