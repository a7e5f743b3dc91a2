"""Per-node candidate lists and the ordered list of promising edges."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .delaunay import Triangulation
from .instance import Instance, Metric

#: below this size k-NN lists come from a full sort of each cost row
KDTREE_THRESHOLD = 1000

DEFAULT_K = 5


@dataclass(frozen=True)
class CandidateLists:
    lists: tuple[tuple[int, ...], ...]
    k: int
    kind: str = "knn"

    @property
    def n(self) -> int:
        return len(self.lists)

    def __getitem__(self, i: int) -> tuple[int, ...]:
        return self.lists[i]

    def __iter__(self) -> Iterator[tuple[int, ...]]:
        return iter(self.lists)

    def mean_size(self) -> float:
        return sum(map(len, self.lists)) / self.n


def _sorted_by_cost(inst: Instance, i: int, nodes: Sequence[int]) -> tuple[int, ...]:
    nodes = np.fromiter(nodes, dtype=np.int64)
    if nodes.size == 0:
        return ()
    costs = inst.costs_from(i, nodes)
    order = np.lexsort((nodes, costs))
    return tuple(int(v) for v in nodes[order])


def _euclid_radius(metric: Metric, cost: float) -> float:
    """Euclidean radius containing every node whose metric cost is <= ``cost``."""
    if metric is Metric.EUC_2D:
        return cost + 0.5
    if metric is Metric.ATT:
        return math.sqrt(10.0) * cost
    return float(cost)


def knn_candidate_lists(inst: Instance, k: int = DEFAULT_K) -> CandidateLists:
    if not (1 <= k <= inst.n - 1):
        raise ValueError(f"k must be in 1..{inst.n - 1}, got {k}")
    n = inst.n
    lists = []
    if n <= KDTREE_THRESHOLD:
        for i in range(n):
            row = inst.costs_from(i).astype(np.float64)
            row[i] = np.inf
            order = np.argsort(row, kind="stable")[:k]
            lists.append(tuple(int(v) for v in order))
        return CandidateLists(tuple(lists), k, "knn")

    tree = cKDTree(inst.coords)
    _, idx = tree.query(inst.coords, k=k + 1)
    for i in range(n):
        near = [int(v) for v in idx[i] if v != i][:k]
        kth = inst.costs_from(i, near).max()
        # rounded metrics can tie with nodes just beyond the Euclidean k-th neighbour
        ball = tree.query_ball_point(inst.coords[i], _euclid_radius(inst.metric, kth) + 1e-9)
        ball = [v for v in ball if v != i]
        lists.append(_sorted_by_cost(inst, i, ball)[:k])
    return CandidateLists(tuple(lists), k, "knn")


def delaunay_candidate_lists(inst: Instance, tri: Triangulation, k: int = DEFAULT_K,
                             truncate: bool = False) -> CandidateLists:
    """Delaunay neighbours of each node, nearest first.

    Lists are kept whole unless ``truncate`` is set; ``k`` then bounds them and
    otherwise only sizes the feature patch. Nodes with fewer than two
    neighbours are padded with their nearest non-neighbours.
    """
    if tri.n != inst.n:
        raise ValueError("triangulation was built for a different instance")
    lists = []
    for i in range(inst.n):
        cl = _sorted_by_cost(inst, i, sorted(tri.adjacency[i]))
        if truncate:
            cl = cl[:k]
        if len(cl) < 2:
            others = [j for j in _sorted_by_cost(inst, i, [j for j in range(inst.n) if j != i])
                      if j not in cl]
            merged = set(cl) | set(others[:2 - len(cl)])
            cl = _sorted_by_cost(inst, i, sorted(merged))
        lists.append(cl)
    return CandidateLists(tuple(lists), k, "delaunay")


class PromisingEntry(NamedTuple):
    edge: tuple[int, int]
    rank: int
    owner: int
    cost: float


@dataclass(frozen=True)
class PromisingList:
    entries: tuple[PromisingEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[PromisingEntry]:
        return iter(self.entries)

    def __getitem__(self, idx: int) -> PromisingEntry:
        return self.entries[idx]

    def edges(self) -> list[tuple[int, int]]:
        return [e.edge for e in self.entries]


def build_promising_list(inst: Instance, cl: CandidateLists) -> PromisingList:
    """Each node's two closest candidates, rank-1 edges first, then by cost.

    An edge claimed more than once keeps its lowest rank and, within it, its
    cheapest occurrence (the owner with the lower id on a tie).
    """
    raw = []
    for i, members in enumerate(cl):
        if len(members) < 2:
            raise ValueError(f"candidate list of node {i} has {len(members)} members, need 2")
        for rank in (1, 2):
            j = members[rank - 1]
            edge = (i, j) if i < j else (j, i)
            raw.append((rank, inst.costs_from(i, [j])[0], edge, i))
    raw.sort()
    seen = set()
    entries = []
    for rank, cost, edge, owner in raw:
        if edge in seen:
            continue
        seen.add(edge)
        c = int(cost) if inst.metric.integral else float(cost)
        entries.append(PromisingEntry(edge, rank, owner, c))
    return PromisingList(tuple(entries))


def build_candidates(inst: Instance, kind: str = "knn", k: int = DEFAULT_K,
                     truncate: bool = False) -> CandidateLists:
    """Candidate lists by name; Delaunay falls back to k-NN on collinear input."""
    from .delaunay import DegenerateGeometryError, delaunay_triangulate

    def knn():
        # tiny instances get min(k, n-1) members but keep k for feature padding
        cl = knn_candidate_lists(inst, min(k, inst.n - 1))
        return CandidateLists(cl.lists, k, "knn")

    if kind == "knn":
        return knn()
    if kind == "delaunay":
        try:
            tri = delaunay_triangulate(inst)
        except DegenerateGeometryError:
            return knn()
        return delaunay_candidate_lists(inst, tri, k, truncate)
    raise ValueError(f"unknown candidate list kind {kind!r}")
