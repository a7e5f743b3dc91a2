"""Incremental Delaunay triangulation (Bowyer-Watson) with a super-triangle.

Points are normalised into the unit box before insertion. Exact duplicates are
nudged apart by ``1e-9`` of the bounding-box diagonal, and cocircular ties in
the in-circle predicate count as "outside" so the output is deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .instance import Instance

INCIRCLE_RTOL = 1e-12
DUPLICATE_EPS = 1e-9
_SUPER_RADIUS = 100.0
_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


class DegenerateGeometryError(ValueError):
    """Raised when the point set has no 2-D triangulation (all collinear)."""


@dataclass(frozen=True)
class Triangulation:
    triangles: frozenset[tuple[int, int, int]]
    adjacency: tuple[frozenset[int], ...]

    @property
    def n(self) -> int:
        return len(self.adjacency)

    def edges(self) -> list[tuple[int, int]]:
        return sorted((u, v) for u, nb in enumerate(self.adjacency) for v in nb if u < v)

    def dump_edges(self, path: str | Path) -> None:
        """Write the triangulation as one ``u v`` pair per line."""
        Path(path).write_text("".join(f"{u} {v}\n" for u, v in self.edges()))


def _separate_duplicates(pts: np.ndarray) -> np.ndarray:
    diag = math.hypot(*(pts.max(axis=0) - pts.min(axis=0)))
    eps = DUPLICATE_EPS * (diag if diag > 0 else 1.0)
    seen: dict[tuple[float, float], int] = {}
    out = pts.copy()
    for i, (x, y) in enumerate(pts):
        key = (float(x), float(y))
        k = seen.get(key, 0)
        if k:
            ang = k * _GOLDEN_ANGLE
            out[i, 0] += eps * k * math.cos(ang)
            out[i, 1] += eps * k * math.sin(ang)
        seen[key] = k + 1
    return out


def _orient(ax, ay, bx, by, cx, cy) -> float:
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


class _Builder:
    """Mutable triangle mesh with opposite-neighbour links.

    Triangle t has CCW vertices ``v[t]`` and ``nb[t][k]`` is the triangle
    across the edge opposite ``v[t][k]`` (-1 if none).
    """

    def __init__(self, xs: list[float], ys: list[float]):
        self.xs, self.ys = xs, ys
        self.v: list[list[int]] = []
        self.nb: list[list[int]] = []
        self.alive: list[bool] = []
        self.last = 0

    def add(self, a: int, b: int, c: int) -> int:
        self.v.append([a, b, c])
        self.nb.append([-1, -1, -1])
        self.alive.append(True)
        return len(self.v) - 1

    def in_circle(self, t: int, p: int) -> bool:
        xs, ys = self.xs, self.ys
        px, py = xs[p], ys[p]
        a, b, c = self.v[t]
        adx, ady = xs[a] - px, ys[a] - py
        bdx, bdy = xs[b] - px, ys[b] - py
        cdx, cdy = xs[c] - px, ys[c] - py
        ad = adx * adx + ady * ady
        bd = bdx * bdx + bdy * bdy
        cd = cdx * cdx + cdy * cdy
        t1 = ad * (bdx * cdy - bdy * cdx)
        t2 = bd * (cdx * ady - cdy * adx)
        t3 = cd * (adx * bdy - ady * bdx)
        det = t1 + t2 + t3
        perm = (ad * (abs(bdx * cdy) + abs(bdy * cdx)) + bd * (abs(cdx * ady) + abs(cdy * adx))
                + cd * (abs(adx * bdy) + abs(ady * bdx)))
        return det > INCIRCLE_RTOL * perm

    def orient(self, a: int, b: int, p: int) -> float:
        xs, ys = self.xs, self.ys
        return _orient(xs[a], ys[a], xs[b], ys[b], xs[p], ys[p])

    def locate(self, p: int) -> int:
        t = self.last if self.alive[self.last] else self.alive.index(True)
        for _ in range(4 * len(self.v) + 16):
            v = self.v[t]
            for k in range(3):
                if self.orient(v[(k + 1) % 3], v[(k + 2) % 3], p) < 0.0:
                    nxt = self.nb[t][k]
                    if nxt >= 0:
                        t = nxt
                        break
            else:
                return t
        # walk did not settle (degenerate cycling): fall back to a scan
        best, best_score = -1, -math.inf
        for t, alive in enumerate(self.alive):
            if not alive:
                continue
            v = self.v[t]
            score = min(self.orient(v[(k + 1) % 3], v[(k + 2) % 3], p) for k in range(3))
            if score > best_score:
                best, best_score = t, score
        return best

    def insert(self, p: int) -> None:
        t0 = self.locate(p)
        bad = {t0}
        stack = [t0]
        while stack:
            t = stack.pop()
            for o in self.nb[t]:
                if o >= 0 and o not in bad and self.in_circle(o, p):
                    bad.add(o)
                    stack.append(o)
        # grow the cavity until every boundary edge is strictly visible from p
        while True:
            boundary = []
            grow = None
            for t in bad:
                v = self.v[t]
                for k in range(3):
                    o = self.nb[t][k]
                    if o in bad:
                        continue
                    a, b = v[(k + 1) % 3], v[(k + 2) % 3]
                    if self.orient(a, b, p) <= 0.0:
                        if o < 0:
                            raise DegenerateGeometryError("point outside the super-triangle")
                        grow = o
                        break
                    boundary.append((a, b, o))
                if grow is not None:
                    break
            if grow is None:
                break
            bad.add(grow)

        for t in bad:
            self.alive[t] = False
        by_start: dict[int, int] = {}
        by_end: dict[int, int] = {}
        new = []
        for a, b, o in boundary:
            t = self.add(a, b, p)
            new.append((t, a, b, o))
            by_start[a] = t
            by_end[b] = t
            if o >= 0:
                ov = self.nb[o]
                for k in range(3):
                    if ov[k] in bad:
                        # o borders the cavity on the edge (b, a) only once
                        ob = self.v[o]
                        if {ob[(k + 1) % 3], ob[(k + 2) % 3]} == {a, b}:
                            ov[k] = t
                            break
        for t, a, b, o in new:
            self.nb[t][2] = o            # opposite p: edge a-b
            self.nb[t][0] = by_start[b]  # opposite a: edge b-p
            self.nb[t][1] = by_end[a]    # opposite b: edge p-a
        self.last = new[-1][0]


def delaunay_triangulate(inst: Instance) -> Triangulation:
    """Delaunay triangulation of the instance's points."""
    pts = np.asarray(inst.coords, dtype=np.float64)
    n = pts.shape[0]
    if n < 3:
        raise DegenerateGeometryError("need at least 3 points")
    lo = pts.min(axis=0)
    scale = float((pts.max(axis=0) - lo).max())
    if scale == 0.0:
        raise DegenerateGeometryError("all points coincide")
    norm = _separate_duplicates((pts - lo) / scale)

    # collinearity: every point on the line through the two farthest-apart extremes
    i0 = int(np.argmin(norm[:, 0] + norm[:, 1]))
    i1 = int(np.argmax(np.hypot(*(norm - norm[i0]).T)))
    d = norm[i1] - norm[i0]
    area = d[0] * (norm[:, 1] - norm[i0, 1]) - d[1] * (norm[:, 0] - norm[i0, 0])
    if np.all(np.abs(area) <= 1e-12 * max(np.hypot(*d), 1e-300)):
        raise DegenerateGeometryError("all points are collinear")

    xs = norm[:, 0].tolist()
    ys = norm[:, 1].tolist()
    for k in range(3):
        ang = math.pi / 2 + k * 2 * math.pi / 3
        xs.append(0.5 + _SUPER_RADIUS * math.cos(ang))
        ys.append(0.5 + _SUPER_RADIUS * math.sin(ang))
    mesh = _Builder(xs, ys)
    mesh.add(n, n + 1, n + 2)
    for p in range(n):
        mesh.insert(p)

    triangles = set()
    adjacency: list[set[int]] = [set() for _ in range(n)]
    for t, alive in enumerate(mesh.alive):
        if not alive:
            continue
        a, b, c = mesh.v[t]
        for u, w in ((a, b), (b, c), (c, a)):
            if u < n and w < n:
                adjacency[u].add(w)
                adjacency[w].add(u)
        if a < n and b < n and c < n:
            triangles.add(tuple(sorted((a, b, c))))
    return Triangulation(frozenset(triangles), tuple(frozenset(s) for s in adjacency))
