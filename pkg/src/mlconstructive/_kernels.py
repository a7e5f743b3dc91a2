"""Compiled inner loops. Costs are evaluated from coordinates on the fly."""

import math

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def cost(xs, ys, i, j, metric):
    dx = xs[i] - xs[j]
    dy = ys[i] - ys[j]
    d = math.sqrt(dx * dx + dy * dy)
    if metric == 0:
        return d
    if metric == 1:
        return math.floor(d + 0.5)
    if metric == 2:
        return math.ceil(d)
    r = math.sqrt((dx * dx + dy * dy) / 10.0)
    t = math.floor(r + 0.5)
    return t + 1.0 if t < r else t


@njit(cache=True, inline="always")
def _is_fixed(fixnbr, a, b):
    return fixnbr[a, 0] == b or fixnbr[a, 1] == b


@njit(cache=True)
def two_opt(tour, xs, ys, metric, fixnbr, max_passes, tol):
    """First-improvement 2-opt over all edge pairs, in place.

    A move replacing (a,b),(c,d) by (a,c),(b,d) is skipped when either removed
    edge is fixed. Returns (passes, moves).
    """
    n = tour.shape[0]
    passes = 0
    moves = 0
    improved = True
    while improved and passes < max_passes:
        improved = False
        passes += 1
        for i in range(n - 2):
            a = tour[i]
            b = tour[i + 1]
            if _is_fixed(fixnbr, a, b):
                continue
            dab = cost(xs, ys, a, b, metric)
            jmax = n - 1 if i == 0 else n
            j = i + 2
            while j < jmax:
                c = tour[j]
                d = tour[(j + 1) % n]
                if not _is_fixed(fixnbr, c, d):
                    delta = (cost(xs, ys, a, c, metric) + cost(xs, ys, b, d, metric)
                             - dab - cost(xs, ys, c, d, metric))
                    if delta < tol:
                        lo = i + 1
                        hi = j
                        while lo < hi:
                            tmp = tour[lo]
                            tour[lo] = tour[hi]
                            tour[hi] = tmp
                            lo += 1
                            hi -= 1
                        moves += 1
                        improved = True
                        b = tour[i + 1]
                        if _is_fixed(fixnbr, a, b):
                            break
                        dab = cost(xs, ys, a, b, metric)
                j += 1
    return passes, moves


@njit(cache=True)
def is_two_opt_optimal(tour, xs, ys, metric, fixnbr, tol):
    n = tour.shape[0]
    for i in range(n - 2):
        a = tour[i]
        b = tour[i + 1]
        if _is_fixed(fixnbr, a, b):
            continue
        jmax = n - 1 if i == 0 else n
        for j in range(i + 2, jmax):
            c = tour[j]
            d = tour[(j + 1) % n]
            if _is_fixed(fixnbr, c, d):
                continue
            delta = (cost(xs, ys, a, c, metric) + cost(xs, ys, b, d, metric)
                     - cost(xs, ys, a, b, metric) - cost(xs, ys, c, d, metric))
            if delta < tol:
                return False
    return True


@njit(cache=True)
def nearest_neighbor_tour(start, xs, ys, metric):
    n = xs.shape[0]
    visited = np.zeros(n, dtype=np.bool_)
    tour = np.empty(n, dtype=np.int64)
    tour[0] = start
    visited[start] = True
    cur = start
    for step in range(1, n):
        best = -1
        best_c = np.inf
        for j in range(n):
            if not visited[j]:
                c = cost(xs, ys, cur, j, metric)
                if c < best_c:
                    best_c = c
                    best = j
        tour[step] = best
        visited[best] = True
        cur = best
    return tour


@njit(cache=True)
def held_karp(dist):
    """Exact DP over subsets of nodes 1..n-1 with node 0 as the depot."""
    n = dist.shape[0]
    m = n - 1
    full = (1 << m) - 1
    dp = np.full((1 << m, m), np.inf)
    parent = np.full((1 << m, m), -1, dtype=np.int8)
    for j in range(m):
        dp[1 << j, j] = dist[0, j + 1]
    for mask in range(1, full + 1):
        for j in range(m):
            if not (mask >> j) & 1:
                continue
            cur = dp[mask, j]
            if cur == np.inf:
                continue
            for nxt in range(m):
                if (mask >> nxt) & 1:
                    continue
                nm = mask | (1 << nxt)
                val = cur + dist[j + 1, nxt + 1]
                if val < dp[nm, nxt]:
                    dp[nm, nxt] = val
                    parent[nm, nxt] = j
    best = np.inf
    last = -1
    for j in range(m):
        val = dp[full, j] + dist[j + 1, 0]
        if val < best:
            best = val
            last = j
    tour = np.empty(n, dtype=np.int64)
    tour[0] = 0
    mask = full
    j = last
    for pos in range(n - 1, 0, -1):
        tour[pos] = j + 1
        pj = parent[mask, j]
        mask ^= 1 << j
        j = pj
    return tour, best


@njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit(cache=True)
def merge_pass(us, vs, degree, parent, nbr, n_edges, target):
    """Insert edges (us[k], vs[k]) in order when they keep a path forest.

    Mutates degree/parent/nbr; returns the new edge count. Stops at ``target``.
    """
    for k in range(us.shape[0]):
        if n_edges >= target:
            break
        u = us[k]
        v = vs[k]
        if degree[u] >= 2 or degree[v] >= 2:
            continue
        ru = _find(parent, u)
        rv = _find(parent, v)
        if ru == rv:
            continue
        parent[ru] = rv
        nbr[u, degree[u]] = v
        nbr[v, degree[v]] = u
        degree[u] += 1
        degree[v] += 1
        n_edges += 1
    return n_edges
