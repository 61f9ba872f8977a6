"""Compiled inner loops (pair sweep, BFS, random walks)."""

import numba as nb
import numpy as np

from .rng import uniform_at

_WALK_SHIFT = np.uint64(32)


@nb.njit(inline="always", cache=True)
def _dist(coords, i, j, linf, torus_side):
    d = coords.shape[1]
    acc = 0
    for a in range(d):
        delta = abs(coords[i, a] - coords[j, a])
        if torus_side > 0 and torus_side - delta < delta:
            delta = torus_side - delta
        if linf:
            if delta > acc:
                acc = delta
        else:
            acc += delta
    return acc


@nb.njit(cache=True)
def _reserve(us, vs, count, extra):
    """Grow the edge buffers so ``extra`` more entries fit."""
    if count + extra <= us.shape[0]:
        return us, vs
    size = max(2 * us.shape[0], count + extra)
    us2 = np.empty(size, dtype=np.int64)
    vs2 = np.empty(size, dtype=np.int64)
    us2[:count] = us[:count]
    vs2[:count] = vs[:count]
    return us2, vs2


# The three sweeps below share one contract: open edges {i, j}, i < j, for
# rows row_lo <= i < row_hi.  kernel[r] = lam / r**alpha and axis[delta]
# folds a coordinate difference (identity, or torus wrap).  A pair opens when
# its uniform is below 1 - exp(-x); 1 - exp(-x) <= x, so the exponential is
# only evaluated when the uniform is already below x.  Buffers grow per row,
# never inside the pair loop, which keeps that loop free of array reassignment.


@nb.njit(cache=True, nogil=True)
def sweep_rows_d1(cx, weights, active, check, key, kernel, axis, row_lo, row_hi):
    n = cx.shape[0]
    nn = np.uint64(n)
    us = np.empty(1024, dtype=np.int64)
    vs = np.empty(1024, dtype=np.int64)
    count = 0
    for i in range(row_lo, row_hi):
        if check and not active[i]:
            continue
        xi = cx[i]
        wi = weights[i]
        base = np.uint64(i) * nn
        us, vs = _reserve(us, vs, count, n - 1 - i)
        for j in range(i + 1, n):
            if check and not active[j]:
                continue
            x = wi * weights[j] * kernel[axis[abs(cx[j] - xi)]]
            u = uniform_at(key, base + np.uint64(j))
            if u < x and u < -np.expm1(-x):
                us[count] = i
                vs[count] = j
                count += 1
    return us[:count].copy(), vs[:count].copy()


@nb.njit(cache=True, nogil=True)
def sweep_rows_d2(cx, cy, weights, active, check, linf, key, kernel, axis, row_lo, row_hi):
    n = cx.shape[0]
    nn = np.uint64(n)
    us = np.empty(1024, dtype=np.int64)
    vs = np.empty(1024, dtype=np.int64)
    count = 0
    for i in range(row_lo, row_hi):
        if check and not active[i]:
            continue
        xi = cx[i]
        yi = cy[i]
        wi = weights[i]
        base = np.uint64(i) * nn
        us, vs = _reserve(us, vs, count, n - 1 - i)
        for j in range(i + 1, n):
            if check and not active[j]:
                continue
            a = axis[abs(cx[j] - xi)]
            b = axis[abs(cy[j] - yi)]
            r = max(a, b) if linf else a + b
            x = wi * weights[j] * kernel[r]
            u = uniform_at(key, base + np.uint64(j))
            if u < x and u < -np.expm1(-x):
                us[count] = i
                vs[count] = j
                count += 1
    return us[:count].copy(), vs[:count].copy()


@nb.njit(cache=True, nogil=True)
def sweep_rows(coords, weights, active, check, linf, key, kernel, axis, row_lo, row_hi):
    n = coords.shape[0]
    d = coords.shape[1]
    nn = np.uint64(n)
    us = np.empty(1024, dtype=np.int64)
    vs = np.empty(1024, dtype=np.int64)
    count = 0
    for i in range(row_lo, row_hi):
        if check and not active[i]:
            continue
        wi = weights[i]
        base = np.uint64(i) * nn
        us, vs = _reserve(us, vs, count, n - 1 - i)
        for j in range(i + 1, n):
            if check and not active[j]:
                continue
            r = 0
            for a in range(d):
                t = axis[abs(coords[j, a] - coords[i, a])]
                if linf:
                    r = max(r, t)
                else:
                    r += t
            x = wi * weights[j] * kernel[r]
            u = uniform_at(key, base + np.uint64(j))
            if u < x and u < -np.expm1(-x):
                us[count] = i
                vs[count] = j
                count += 1
    return us[:count].copy(), vs[:count].copy()


@nb.njit(cache=True, nogil=True)
def bfs(indptr, indices, source, n):
    """Hop distances from ``source``; -1 marks unreachable vertices."""
    dist = np.full(n, -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    dist[source] = 0
    queue[0] = source
    head = 0
    tail = 1
    while head < tail:
        v = queue[head]
        head += 1
        dv = dist[v] + 1
        for p in range(indptr[v], indptr[v + 1]):
            w = indices[p]
            if dist[w] < 0:
                dist[w] = dv
                queue[tail] = w
                tail += 1
    return dist


@nb.njit(cache=True, nogil=True)
def escape_walks(indptr, indices, coords, start, radius, n_walks, max_steps, key,
                 torus_side, walk_offset):
    """Simple random walks from ``start``.

    Returns ``(escaped, truncated)`` counts: a walk escapes when it reaches
    l1 distance >= radius before returning to ``start``; walks that do
    neither within ``max_steps`` are truncated.
    """
    escaped = 0
    truncated = 0
    for k in range(n_walks):
        w = np.uint64(walk_offset + k) << _WALK_SHIFT
        pos = start
        done = False
        for t in range(max_steps):
            lo = indptr[pos]
            deg = indptr[pos + 1] - lo
            u = uniform_at(key, w | np.uint64(t))
            c = int(np.ceil(u * deg)) - 1
            if c < 0:
                c = 0
            pos = indices[lo + c]
            if pos == start:
                done = True
                break
            if _dist(coords, pos, start, False, torus_side) >= radius:
                escaped += 1
                done = True
                break
        if not done:
            truncated += 1
    return escaped, truncated


@nb.njit(cache=True, nogil=True)
def walk_steps(indptr, indices, start, n_steps, key, walk_id):
    """Trajectory of one walk, used to test the uniform step law."""
    out = np.empty(n_steps + 1, dtype=np.int64)
    out[0] = start
    w = np.uint64(walk_id) << _WALK_SHIFT
    pos = start
    for t in range(n_steps):
        lo = indptr[pos]
        deg = indptr[pos + 1] - lo
        u = uniform_at(key, w | np.uint64(t))
        c = int(np.ceil(u * deg)) - 1
        if c < 0:
            c = 0
        pos = indices[lo + c]
        out[t + 1] = pos
    return out
