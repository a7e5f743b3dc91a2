"""Partial solutions: vertex-disjoint paths grown one edge at a time."""

from __future__ import annotations

from typing import Iterable

import numpy as np


class InvariantViolation(RuntimeError):
    pass


def canon(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


class PartialSolution:
    """Degree-bounded path forest with union-find fragment ids.

    ``nbr[i]`` holds up to two neighbours of ``i`` (-1 marks a free slot).
    Edges inserted with ``fixed=True`` are recorded in ``fixed_edges``.
    """

    def __init__(self, n: int):
        self.n = n
        self.degree = np.zeros(n, dtype=np.int64)
        self.parent = np.arange(n, dtype=np.int64)
        self.nbr = np.full((n, 2), -1, dtype=np.int64)
        self.n_edges = 0
        self.fixed_edges: set[tuple[int, int]] = set()

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]], fixed: bool = True):
        ps = cls(n)
        for u, v in edges:
            ps.insert(u, v, fixed=fixed)
        return ps

    def copy(self) -> "PartialSolution":
        other = PartialSolution.__new__(PartialSolution)
        other.n = self.n
        other.degree = self.degree.copy()
        other.parent = self.parent.copy()
        other.nbr = self.nbr.copy()
        other.n_edges = self.n_edges
        other.fixed_edges = set(self.fixed_edges)
        return other

    def find(self, x: int) -> int:
        parent = self.parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return int(root)

    def has_edge(self, u: int, v: int) -> bool:
        return v in (self.nbr[u, 0], self.nbr[u, 1])

    def feasible(self, u: int, v: int) -> bool:
        if u == v:
            raise ValueError("an edge needs two distinct endpoints")
        return (self.degree[u] < 2 and self.degree[v] < 2
                and self.find(u) != self.find(v))

    def insert(self, u: int, v: int, fixed: bool = False, check: bool = True) -> None:
        """Add edge (u, v). ``check=False`` skips the feasibility test."""
        if check and not self.feasible(u, v):
            raise InvariantViolation(f"inserting ({u}, {v}) breaks the path-forest invariant")
        if self.degree[u] >= 2 or self.degree[v] >= 2:
            raise InvariantViolation(f"edge ({u}, {v}) would exceed degree 2")
        ru, rv = self.find(u), self.find(v)
        if ru != rv:
            self.parent[ru] = rv
        self.nbr[u, self.degree[u]] = v
        self.nbr[v, self.degree[v]] = u
        self.degree[u] += 1
        self.degree[v] += 1
        self.n_edges += 1
        if fixed:
            self.fixed_edges.add(canon(u, v))

    def edges(self) -> set[tuple[int, int]]:
        out = set()
        for u in range(self.n):
            for v in self.nbr[u]:
                if v >= 0:
                    out.add(canon(u, int(v)))
        return out

    def endpoints(self) -> np.ndarray:
        """Nodes with residual degree (isolated nodes included)."""
        return np.flatnonzero(self.degree < 2)

    def fragments(self) -> list[list[int]]:
        """Each connected piece as a node sequence along the path."""
        seen = np.zeros(self.n, dtype=bool)
        out = []
        for start in range(self.n):
            if seen[start] or self.degree[start] == 2:
                continue
            path = [start]
            seen[start] = True
            prev, cur = -1, start
            while True:
                nxt = next((int(w) for w in self.nbr[cur] if w >= 0 and w != prev), -1)
                if nxt < 0 or seen[nxt]:
                    break
                path.append(nxt)
                seen[nxt] = True
                prev, cur = cur, nxt
            out.append(path)
        if not seen.all():
            raise InvariantViolation("partial solution contains a cycle")
        return out

    def validate(self) -> None:
        """Check degrees and acyclicity from the adjacency alone."""
        if np.any(self.degree > 2):
            raise InvariantViolation("a node has degree above 2")
        paths = self.fragments()
        if sum(len(p) - 1 for p in paths) != self.n_edges:
            raise InvariantViolation("partial solution contains a cycle")
        if not self.fixed_edges <= self.edges():
            raise InvariantViolation("a fixed edge is missing from the partial solution")


def insertion_feasible(partial: PartialSolution, edge: tuple[int, int]) -> bool:
    return partial.feasible(*edge)
