"""Independent brute-force checker for hierarchically clustered trees.

Written directly from the four tree conditions with networkx doing the
graph work: every split is tried against every box ``Q_{m'}(x')`` with
``x'`` in ``Q_m(x)`` and ``1 <= m' <= m``, no pruning.
"""

import itertools
import math
from functools import lru_cache

import networkx as nx


def _loglog(m):
    return max(1.0, math.log(math.log(m))) if m > 1 else 1.0


def make_checker(coords, weights, edges, rho, K):
    coords = [tuple(c) for c in coords]
    d = len(coords[0])
    full = nx.Graph()
    full.add_nodes_from(range(len(coords)))
    full.add_edges_from(edges)

    def in_box(v, x, m):
        return all(x[a] <= coords[v][a] <= x[a] + m - 1 for a in range(d))

    @lru_cache(maxsize=None)
    def hct(verts, x, m):
        if not all(in_box(v, x, m) for v in verts):
            return False
        if m == 1:
            return len(verts) == 1
        t = full.subgraph(verts)
        if len(verts) <= rho * m ** d:
            return False
        if (nx.diameter(t) if len(verts) > 1 else 0) > K * _loglog(m):
            return False
        root = max(verts, key=lambda v: weights[v])
        for parent, child in nx.bfs_edges(t, root):
            if not weights[child] < weights[parent]:
                return False
        for e in t.edges():
            cut = t.copy()
            cut.remove_edge(*e)
            a, b = (frozenset(c) for c in nx.connected_components(cut))
            if not any(split(one, two, x, m) for one, two in ((a, b), (b, a))):
                return False
        return True

    def split(one, two, x, m):
        for ms in range(1, m + 1):
            for xs in itertools.product(*[range(x[a], x[a] + m) for a in range(d)]):
                if any(in_box(v, xs, ms) for v in two):
                    continue
                if hct(one, xs, ms):
                    return True
        return False

    return hct
