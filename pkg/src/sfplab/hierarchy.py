"""Hierarchically clustered trees: multiscale construction and validation.

Stage boxes are nested: a stage-n box of side ``m_n = D_1 ... D_n`` splits
into ``D_n**d`` stage-(n-1) boxes.  Stage-0 boxes are single vertices, good
when green.  A stage-n box is good when enough of its children are good,
its heaviest good-child dominant is heavy enough, and every other good-child
dominant is joined to it by an open edge.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, PreconditionError, ResourceError, SizeError
from .model import ModelParams, StandardPareto
from .sampler import Configuration

EXHAUSTIVE_CAP = 64


# ---------------------------------------------------------------- sequences

def xi_upper_bound(params: ModelParams) -> float:
    """Upper end of the admissible range of the exponent xi (needs 1 < gamma < 2)."""
    g, d, tau = params.gamma, params.d, params.tau
    if not 1 < g < 2:
        raise PreconditionError(f"xi range needs 1 < gamma < 2, got gamma={g}")
    first = d * (2 - g) / (tau + 1)
    second = 0.5 * d * (tau + 2 - math.sqrt((tau + 2) ** 2 - 4 * (2 - g)))
    return min(first, second)


def default_xi_prime(params: ModelParams, xi: float) -> float:
    """Midpoint between ``xi`` and the admissible upper bound."""
    top = xi_upper_bound(params)
    if not 0 < xi < top:
        raise DomainError(f"xi must lie in (0, {top}), got {xi}")
    return 0.5 * (xi + top)


def zeta(params: ModelParams, xi_prime: float) -> float:
    d, a, tau = params.d, params.alpha, params.tau
    den = (a + xi_prime) * (tau - 1) - (d - xi_prime)
    if not den > 0:
        raise PreconditionError(f"zeta denominator must be positive, got {den}")
    return (d - xi_prime) / den


def d_sequence(d1: int, z: float, n: int) -> list:
    out = [int(d1)]
    while len(out) < n:
        out.append(int(math.ceil(out[-1] ** z)))
    return out


def default_a_schedule(params: ModelParams, xi_prime: float, D: list) -> list:
    """``a_n = P_{n-1} (1 - sqrt(2) D_n^{-d/2} prod_{k<=n} D_k^{xi'/2})``.

    ``P_0 = mu`` exactly (a stage-0 box is good iff green); for n >= 2 the
    surrogate ``P_{n-1} = 1 - n**-1.5`` stands in for the unknown stage
    probability.
    """
    d = params.d
    out, log_prod = [], 0.0
    for i, dn in enumerate(D, start=1):
        log_prod += math.log(dn)
        p_prev = params.mu if i == 1 else 1.0 - i ** -1.5
        out.append(p_prev * (1.0 - math.sqrt(2.0) * dn ** (-d / 2) * math.exp(0.5 * xi_prime * log_prod)))
    return out


def loglog(m: float) -> float:
    return max(1.0, math.log(math.log(m))) if m > math.e else 1.0


# ---------------------------------------------------------- stage hierarchy

@dataclass
class StageLevel:
    """Per-box flags of one stage; arrays have shape ``(boxes_per_axis,) * d``."""

    side: int
    good: np.ndarray
    dominant: np.ndarray      # vertex index, -1 where the box is not good
    n_good_children: np.ndarray | None = None


@dataclass
class StageHierarchy:
    params: ModelParams
    xi_prime: float
    zeta: float
    D: list
    u: list
    C: list
    a: list
    m: list
    a_next: float = 1.0
    levels: list = field(default_factory=list)
    origin: tuple = ()
    warnings: list = field(default_factory=list)

    @property
    def n_stages(self) -> int:
        return len(self.D)

    def rho(self, n: int | None = None) -> float:
        """Density constant for stage-``n`` trees.

        The product runs one factor past ``n`` so the density inequality
        holds strictly for every nested sub-tree.
        """
        n = self.n_stages if n is None else n
        a = list(self.a) + [self.a_next]
        return float(np.prod(a[:n + 1]))

    def K(self, n: int | None = None) -> float:
        """Diameter constant: a stage-j tree has diameter <= 2j, plus 2 for a merge."""
        n = self.n_stages if n is None else n
        return max((2 * j + 2) / loglog(self.m[j - 1]) for j in range(1, n + 1))


def stage_sequences(params: ModelParams, xi_prime: float, D1: int, n: int, a_schedule=None):
    """``zeta, D, u, C, a, m`` for stages 1..n, plus ``a_{n+1}`` as the last item."""
    if D1 < 2:
        raise DomainError(f"D1 must be >= 2, got {D1}")
    z = zeta(params, xi_prime)
    D = d_sequence(D1, z, n + 1)
    expo = (params.d - xi_prime) / (params.tau - 1)
    m = list(itertools.accumulate(D, lambda x, y: x * y))
    u = [mm ** expo for mm in m]
    if a_schedule is None:
        a = default_a_schedule(params, xi_prime, D)
        if any(x <= 0 for x in a):
            raise PreconditionError(f"default a_n schedule is not positive for D1={D1}: {a}")
    else:
        a = list(a_schedule(i) for i in range(1, n + 2)) if callable(a_schedule) else list(a_schedule)[:n + 1]
        if len(a) < n + 1 or any(not 0 < x < 1 for x in a):
            raise DomainError("a_schedule needs n + 1 values in (0, 1)")
    C = [ai * dn ** params.d for ai, dn in zip(a, D)]
    return z, D[:n], u[:n], C[:n], a[:n], m[:n], a[n]


def _group(arr: np.ndarray, block: int, d: int) -> np.ndarray:
    """Reshape a ``(G,)*d`` grid to ``(G/block,)*d + (block**d,)``."""
    g = arr.shape[0] // block
    shaped = arr.reshape(sum(((g, block) for _ in range(d)), ()))
    perm = list(range(0, 2 * d, 2)) + list(range(1, 2 * d, 2))
    return shaped.transpose(perm).reshape((g,) * d + (block ** d,))


def _expand(arr: np.ndarray, block: int) -> np.ndarray:
    out = arr
    for ax in range(arr.ndim):
        out = np.repeat(out, block, axis=ax)
    return out


def has_edges(config: Configuration, us: np.ndarray, vs: np.ndarray) -> np.ndarray:
    """Vectorised edge membership for vertex pairs."""
    keys = config.edge_keys()
    n = config.n_vertices
    q = np.minimum(us, vs) * n + np.maximum(us, vs)
    pos = np.searchsorted(keys, q)
    pos = np.minimum(pos, max(keys.shape[0] - 1, 0))
    return (keys.shape[0] > 0) & (keys[pos] == q) if keys.shape[0] else np.zeros(q.shape, bool)


def classify_stages(config: Configuration, D: list, u: list, C: list) -> list:
    """Good flags and dominant vertices for stages 0..len(D)."""
    geo = config.geometry
    d = geo.d
    shape = (geo.side,) * d
    levels = [StageLevel(1, config.green.reshape(shape).copy(),
                         np.where(config.green, np.arange(config.n_vertices), -1).reshape(shape))]
    side = 1
    w = config.weights
    for dn, un, cn in zip(D, u, C):
        prev = levels[-1]
        side *= dn
        good_c = _group(prev.good, dn, d)
        dom_c = _group(prev.dominant, dn, d)
        wc = np.where(good_c, w[np.maximum(dom_c, 0)], -np.inf)
        count = good_c.sum(axis=-1)
        wmax = wc.max(axis=-1)
        # heaviest good child; ties go to the smallest (row-major = lexicographic) vertex
        big = np.iinfo(np.int64).max
        tied = np.where(good_c & (wc == wmax[..., None]), dom_c, big)
        dom = tied.min(axis=-1)
        e_ok = count >= cn
        f_ok = (count > 0) & (wmax >= un)
        need = good_c & (dom_c != dom[..., None])
        linked = np.ones(need.shape, dtype=bool)
        if need.any():
            src = np.broadcast_to(dom[..., None], need.shape)[need]
            linked[need] = has_edges(config, dom_c[need], src)
        g_ok = linked.all(axis=-1)
        good = e_ok & f_ok & g_ok
        levels.append(StageLevel(side, good, np.where(good, dom, -1), count))
    return levels


def build_stage_hierarchy(params: ModelParams, xi_prime: float, D1: int, a_schedule=None,
                          config: Configuration | None = None, n_stages: int | None = None) -> StageHierarchy:
    """Sequences and, given a configuration on a box of side ``m_n``, stage classification."""
    if config is None:
        if n_stages is None:
            raise DomainError("need a configuration or n_stages")
        n = n_stages
    else:
        side = config.geometry.side
        z = zeta(params, xi_prime)
        ms, dn = [D1], D1
        while ms[-1] < side:
            dn = int(math.ceil(dn ** z))
            ms.append(ms[-1] * dn)
        if ms[-1] != side:
            raise SizeError(f"box side {side} is not a stage side m_n (sides {ms})")
        n = len(ms)
    z, D, u, C, a, m, a_next = stage_sequences(params, xi_prime, D1, n, a_schedule)
    h = StageHierarchy(params, xi_prime, z, D, u, C, a, m, a_next)
    if config is not None:
        h.origin = config.geometry.origin
        if not isinstance(params.weight_law, StandardPareto):
            h.warnings.append("weight law is not StandardPareto")
        h.levels = classify_stages(config, D, u, C)
    return h


# -------------------------------------------------------------- trees

@dataclass
class WeightedTree:
    """A tree on box vertices; ``edges`` index into ``coords``/``weights``."""

    coords: np.ndarray
    weights: np.ndarray
    edges: list
    origin: tuple
    m: int
    ids: np.ndarray | None = None

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.int64).reshape(len(self.weights), -1)
        self.weights = np.asarray(self.weights, dtype=float)
        self.edges = [tuple(sorted((int(a), int(b)))) for a, b in self.edges]
        self.origin = tuple(int(c) for c in self.origin)

    @property
    def n_vertices(self) -> int:
        return self.weights.shape[0]

    def check_well_formed(self):
        k = self.n_vertices
        if k == 0:
            raise DomainError("empty tree")
        if len(self.edges) != k - 1:
            raise DomainError(f"tree on {k} vertices needs {k - 1} edges, got {len(self.edges)}")
        if len({tuple(c) for c in self.coords.tolist()}) != k:
            raise DomainError("repeated vertex coordinates")
        lo = np.asarray(self.origin)
        if np.any(self.coords < lo) or np.any(self.coords > lo + self.m - 1):
            raise DomainError("tree vertices leave the box")
        seen = _component(_adjacency(k, self.edges), 0, None)
        if len(seen) != k:
            raise DomainError("tree is not connected")

    def to_dict(self):
        return {"origin": list(self.origin), "m": self.m,
                "vertices": [{"coords": c, "weight": w}
                             for c, w in zip(self.coords.tolist(), self.weights.tolist())],
                "edges": [list(e) for e in self.edges]}


@dataclass
class HctCertificate:
    """For each tree edge, the sub-box ``(x', m')`` holding the side of ``child``."""

    assignments: dict
    rho: float
    K: float
    D: list = field(default_factory=list)
    u: list = field(default_factory=list)
    C: list = field(default_factory=list)
    dominant_chain: list = field(default_factory=list)
    xi_prime: float | None = None

    def to_dict(self):
        return {"rho": self.rho, "K": self.K, "D": self.D, "u": self.u, "C": self.C,
                "xi_prime": self.xi_prime, "dominant_chain": self.dominant_chain,
                "assignments": [{"edge": list(e), "x": list(x), "m": mm, "child": c}
                                for e, (x, mm, c) in sorted(self.assignments.items())]}


def tree_to_json(tree: WeightedTree, cert: HctCertificate | None = None) -> str:
    obj = {"tree": tree.to_dict()}
    if cert is not None:
        obj["certificate"] = cert.to_dict()
    return json.dumps(obj)


def _adjacency(k, edges):
    adj = [[] for _ in range(k)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    return adj


def _component(adj, start, cut, within=None):
    """Vertices reachable from ``start`` without using edge ``cut``."""
    seen = {start}
    queue = deque([start])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if w in seen or (within is not None and w not in within):
                continue
            if cut is not None and {v, w} == set(cut):
                continue
            seen.add(w)
            queue.append(w)
    return seen


def _tree_diameter(adj, verts) -> int:
    if len(verts) <= 1:
        return 0

    def far(src):
        dist = {src: 0}
        queue = deque([src])
        while queue:
            v = queue.popleft()
            for w in adj[v]:
                if w in verts and w not in dist:
                    dist[w] = dist[v] + 1
                    queue.append(w)
        best = max(dist, key=dist.get)
        return best, dist[best]

    a, _ = far(next(iter(verts)))
    return far(a)[1]


def _root(weights, coords, verts):
    """Maximum-weight vertex, ties to the lexicographically smallest coordinate."""
    return min(verts, key=lambda v: (-weights[v], tuple(coords[v])))


def _ordered(adj, weights, coords, verts) -> bool:
    r = _root(weights, coords, verts)
    seen = {r}
    queue = deque([r])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if w in verts and w not in seen:
                if not weights[w] < weights[v]:
                    return False
                seen.add(w)
                queue.append(w)
    return True


# -------------------------------------------------------------- validator

@dataclass
class HctReport:
    density: bool
    diameter: bool
    ordered: bool
    clustering: bool
    details: dict = field(default_factory=dict)

    @property
    def valid(self) -> bool:
        return self.density and self.diameter and self.ordered and self.clustering


class _Checker:
    """Recursive test of the four tree conditions, memoised on (vertex set, box)."""

    def __init__(self, tree, rho, K, cert=None):
        self.adj = _adjacency(tree.n_vertices, tree.edges)
        self.coords = tree.coords
        self.weights = tree.weights
        self.rho, self.K = rho, K
        self.d = tree.coords.shape[1]
        self.cert = cert
        self.memo = {}
        self.calls = 0

    def inside(self, verts, x, m):
        c = self.coords[list(verts)]
        lo = np.asarray(x)
        return bool(np.all(c >= lo) and np.all(c <= lo + m - 1))

    def disjoint(self, verts, x, m):
        c = self.coords[list(verts)]
        lo = np.asarray(x)
        return not bool(np.any(np.all((c >= lo) & (c <= lo + m - 1), axis=1)))

    def local(self, verts, x, m):
        """Conditions (1)-(3) for ``verts`` in the box ``Q_m(x)``."""
        if m == 1:
            return len(verts) == 1
        dens = len(verts) > self.rho * m ** self.d
        diam = _tree_diameter(self.adj, verts) <= self.K * loglog(m)
        return dens and diam and _ordered(self.adj, self.weights, self.coords, verts)

    def edges_in(self, verts):
        return [(a, b) for a in verts for b in self.adj[a] if a < b and b in verts]

    def is_hct(self, verts, x, m) -> bool:
        key = (verts, tuple(x), m)
        if key in self.memo:
            return self.memo[key]
        self.calls += 1
        ok = self.inside(verts, x, m) and self.local(verts, x, m)
        if ok and m > 1:
            ok = all(self.split_ok(verts, e, x, m) for e in self.edges_in(verts))
        self.memo[key] = ok
        return ok

    def split_ok(self, verts, e, x, m) -> bool:
        side_a = frozenset(_component(self.adj, e[0], e, verts))
        side_b = verts - side_a
        if self.cert is not None:
            if e not in self.cert.assignments:
                return False
            xs, ms, child = self.cert.assignments[e]
            one, two = (side_a, side_b) if child in side_a else (side_b, side_a)
            return self.box_ok(one, two, xs, ms, x, m)
        for one, two in ((side_a, side_b), (side_b, side_a)):
            for xs, ms in self.candidate_boxes(one, x, m):
                if self.box_ok(one, two, xs, ms, x, m):
                    return True
        return False

    def box_ok(self, one, two, xs, ms, x, m) -> bool:
        lo = np.asarray(x)
        xs_arr = np.asarray(xs)
        if not (1 <= ms <= m and np.all(xs_arr >= lo) and np.all(xs_arr <= lo + m - 1)):
            return False
        return self.disjoint(two, xs, ms) and self.is_hct(one, xs, ms)

    def candidate_boxes(self, verts, x, m):
        """Boxes ``Q_{m'}(x')`` with ``x'`` in ``Q_m(x)`` that contain ``verts``.

        ``m'`` runs from the bounding-box side of ``verts`` to ``m``.
        """
        c = self.coords[list(verts)]
        cmin, cmax = c.min(axis=0), c.max(axis=0)
        lo = np.asarray(x)
        for ms in range(int((cmax - cmin).max()) + 1, m + 1):
            ranges = [range(max(lo[a], cmax[a] - ms + 1), min(lo[a] + m - 1, cmin[a]) + 1)
                      for a in range(self.d)]
            for xs in itertools.product(*ranges):
                yield xs, ms


def validate_hct(tree: WeightedTree, rho: float, K: float, mode: str = "certificate",
                 certificate: HctCertificate | None = None, cap: int = EXHAUSTIVE_CAP) -> HctReport:
    """Verdicts for the density, diameter, ordering and clustering conditions."""
    tree.check_well_formed()
    if mode not in ("certificate", "exhaustive"):
        raise DomainError(f"unknown mode {mode!r}")
    if mode == "certificate" and certificate is None:
        raise DomainError("certificate mode needs a certificate")
    if mode == "exhaustive" and tree.n_vertices > cap:
        raise ResourceError(f"exhaustive validation capped at {cap} vertices, tree has {tree.n_vertices}")
    checker = _Checker(tree, rho, K, certificate if mode == "certificate" else None)
    verts = frozenset(range(tree.n_vertices))
    m, d = tree.m, tree.coords.shape[1]
    if m == 1:
        ok = tree.n_vertices == 1
        return HctReport(ok, ok, ok, ok, {"mode": mode, "m": 1})
    diam = _tree_diameter(checker.adj, verts)
    density = tree.n_vertices > rho * m ** d
    diameter = diam <= K * loglog(m)
    ordered = _ordered(checker.adj, tree.weights, tree.coords, verts)
    clustering = all(checker.split_ok(verts, e, tree.origin, m) for e in tree.edges)
    return HctReport(density, diameter, ordered, clustering,
                     {"mode": mode, "n_vertices": tree.n_vertices, "diameter": diam,
                      "bound": K * loglog(m), "rho": rho, "K": K, "cap": cap,
                      "subproblems": checker.calls})


# ------------------------------------------------------------ construction

def _box_tree(config, levels, D, top_mask):
    """Vertices and (child, parent, stage) links of the trees in boxes flagged by ``top_mask``."""
    d = config.geometry.d
    n = len(levels) - 1
    alive = [None] * (n + 1)
    alive[n] = top_mask
    for j in range(n, 0, -1):
        alive[j - 1] = levels[j - 1].good & _expand(alive[j], D[j - 1])
    links = []
    for j in range(n, 0, -1):
        par = np.where(alive[j], levels[j].dominant, -1)
        kid = _group(np.where(alive[j - 1], levels[j - 1].dominant, -1), D[j - 1], d)
        p = np.broadcast_to(par[..., None], kid.shape)
        sel = (kid >= 0) & (kid != p)
        links.extend((int(c), int(q), j - 1) for c, q in zip(kid[sel], p[sel]))
    verts = np.flatnonzero(alive[0].ravel())
    return verts, links


def _assemble(config, verts, links, hierarchy_sides, origin, m, extra=()):
    geo = config.geometry
    coords_all = geo.coords()
    pos = {int(v): i for i, v in enumerate(verts)}
    edges, assign = [], {}
    for child, parent, stage in list(links) + list(extra):
        side = hierarchy_sides[stage]
        local = coords_all[child] - np.asarray(geo.origin)
        x = tuple(int(c) for c in (local // side) * side + np.asarray(geo.origin))
        e = tuple(sorted((pos[child], pos[parent])))
        edges.append(e)
        assign[e] = (x, int(side), pos[child])
    tree = WeightedTree(coords_all[verts], config.weights[verts], edges, origin, m, ids=np.asarray(verts))
    return tree, assign


def construct_hct(hierarchy: StageHierarchy, config: Configuration):
    """The dominant-vertex tree of the top-stage box, or ``None`` when that box is bad."""
    geo = config.geometry
    if geo.side == 1:
        if not config.green[0]:
            return None
        tree = WeightedTree(geo.coords(), config.weights[:1], [], geo.origin, 1, ids=np.array([0]))
        return tree, HctCertificate({}, 1.0, 1.0)
    levels = hierarchy.levels
    n = hierarchy.n_stages
    top = levels[n]
    if not top.good.ravel()[0]:
        return None
    verts, links = _box_tree(config, levels, hierarchy.D, top.good)
    sides = [1] + hierarchy.m
    tree, assign = _assemble(config, verts, links, sides, geo.origin, geo.side)
    chain = [int(levels[j].dominant.ravel()[0]) for j in range(1, n + 1)]
    cert = HctCertificate(assign, hierarchy.rho(n), hierarchy.K(n), hierarchy.D, hierarchy.u,
                          hierarchy.C, chain, hierarchy.xi_prime)
    return tree, cert


@dataclass
class MergeResult:
    tree: WeightedTree
    certificate: HctCertificate
    n: int
    k: int
    v_star: int
    stage_diameters: list
    merged_diameter: int


def general_m_split(D1: int, params: ModelParams, xi_prime: float, m: int):
    """``n = sup{i : m_i <= m}`` and ``k = floor(m / m_n)``."""
    z = zeta(params, xi_prime)
    if m < D1:
        raise SizeError(f"m={m} is below m_1={D1}")
    ms = [D1]
    D = [D1]
    while True:
        nxt = int(math.ceil(D[-1] ** z))
        if ms[-1] * nxt > m:
            break
        D.append(nxt)
        ms.append(ms[-1] * nxt)
    n = len(ms)
    return n, m // ms[-1], ms


def extend_to_general_m(params: ModelParams, xi_prime: float, D1: int, m: int, config: Configuration,
                        a_schedule=None):
    """Merge the good ``n``-box trees of ``[0, k m_n)^d`` through the heaviest vertex.

    Returns a :class:`MergeResult` on the success event, else ``None``.
    """
    geo = config.geometry
    if geo.side != m:
        raise SizeError(f"configuration side {geo.side} does not match m={m}")
    n, k, ms = general_m_split(D1, params, xi_prime, m)
    mn = ms[-1]
    d = geo.d
    z, D, u, C, a, mseq, a_next = stage_sequences(params, xi_prime, D1, n, a_schedule)
    h = StageHierarchy(params, xi_prime, z, D, u, C, a, mseq, a_next, origin=geo.origin)
    span = k * mn
    # classify on the sub-box [0, k m_n)^d of the configuration
    sub = np.ravel_multi_index(np.indices((span,) * d).reshape(d, -1), (m,) * d)
    sub_cfg = _SubView(config, sub, span)
    levels = classify_stages(sub_cfg, D, u, C)
    h.levels = levels
    good_n = levels[n].good
    n_good = int(good_n.sum())
    w_sub = config.weights[sub]
    order = np.lexsort((np.arange(sub.shape[0]), -w_sub))
    star_local = int(order[0])
    v_star = int(sub[star_local])
    expo = (d - xi_prime) / (params.tau - 1)
    event_e = n_good >= 0.5 * k ** d
    event_f = w_sub[star_local] >= span ** expo
    roots = levels[n].dominant[good_n]
    others = roots[roots != star_local]
    event_g = bool(np.all(has_edges(sub_cfg, others, np.full(others.shape, star_local)))) if others.size else True
    if not (event_e and event_f and event_g) or n_good == 0:
        return None
    verts_l, links_l = _box_tree(sub_cfg, levels, D, good_n)
    alive_set = set(verts_l.tolist())
    star_cell = tuple(np.unravel_index(star_local, (span,) * d) // np.asarray(mn))
    if star_local not in alive_set and good_n[star_cell]:
        # v* sits inside a good n-box without belonging to its tree: that box
        # could not be cut off from v* by any sub-box
        return None
    verts_l = np.array(sorted(alive_set | {star_local}), dtype=np.int64)
    links_l = links_l + [(int(r), star_local, n) for r in others]
    verts = sub[verts_l]
    links = [(int(sub[c]), int(sub[p]), s) for c, p, s in links_l]
    sides = [1] + mseq
    tree, assign = _assemble(config, verts, links, sides, geo.origin, m)
    cert = HctCertificate(assign, h.rho(n) / 2 ** (d + 1), h.K(n), D, u, C,
                          [int(sub[r]) for r in roots], xi_prime)
    adj = _adjacency(tree.n_vertices, tree.edges)
    pos = {int(v): i for i, v in enumerate(verts)}
    stage_diams = [_tree_diameter(adj, frozenset(_box_members(tree, pos[int(sub[r])], mn, geo.origin)))
                   for r in roots]
    merged = _tree_diameter(adj, frozenset(range(tree.n_vertices)))
    return MergeResult(tree, cert, n, k, v_star, stage_diams, merged)


def _box_members(tree, root, side, origin):
    """Tree vertices sharing the ``side``-box of ``root``."""
    lo = np.asarray(origin)
    cell = (tree.coords - lo) // side
    return set(np.flatnonzero(np.all(cell == cell[root], axis=1)).tolist())


class _SubView:
    """The restriction of a configuration to a corner sub-box, for classification."""

    def __init__(self, config, sub, span):
        from .model import BoxGeometry
        self.geometry = BoxGeometry(config.geometry.origin, span, config.geometry.boundary)
        self.n_vertices = sub.shape[0]
        self.weights = config.weights[sub]
        self.green = config.green[sub]
        inv = np.full(config.n_vertices, -1, dtype=np.int64)
        inv[sub] = np.arange(sub.shape[0])
        u, v = config.edges()
        keep = (inv[u] >= 0) & (inv[v] >= 0)
        a, b = inv[u[keep]], inv[v[keep]]
        keys = np.minimum(a, b) * self.n_vertices + np.maximum(a, b)
        self._keys = np.sort(keys)

    def edge_keys(self):
        return self._keys
