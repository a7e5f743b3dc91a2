"""Reference tours: exact Held-Karp for tiny instances, a 2-opt surrogate otherwise."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .instance import Instance, tour_edges, tour_length

HELD_KARP_LIMIT = 20
PSEUDO_STARTS = 10


class SizeLimitError(ValueError):
    pass


@dataclass(frozen=True)
class OptimalResult:
    tour: tuple[int, ...]
    length: int | float
    edge_set: frozenset[tuple[int, int]]
    #: False for surrogate (not certified) optima
    certified: bool = True
    meta: dict = field(default_factory=dict, compare=False)


def _result(inst: Instance, tour, certified: bool, **meta) -> OptimalResult:
    tour = tuple(int(v) for v in tour)
    return OptimalResult(tour, tour_length(inst, tour), frozenset(tour_edges(tour)),
                         certified, meta)


def held_karp(inst: Instance) -> OptimalResult:
    """Provably optimal tour by dynamic programming over subsets (n <= 20)."""
    if inst.n > HELD_KARP_LIMIT:
        raise SizeLimitError(f"held_karp supports up to {HELD_KARP_LIMIT} nodes, got {inst.n}")
    if inst.n == 3:
        return _result(inst, (0, 1, 2), True, solver="held_karp")
    dist = inst.cost_matrix().astype(np.float64)
    tour, _ = _kernels.held_karp(dist)
    return _result(inst, tour, True, solver="held_karp")


def two_opt_full(inst: Instance, tour, max_passes: int = 1_000_000) -> np.ndarray:
    """Unrestricted 2-opt to local optimality."""
    t = np.array(tour, dtype=np.int64)
    fixnbr = np.full((inst.n, 2), -1, dtype=np.int64)
    tol = 0.0 if inst.metric.integral else -1e-10
    _kernels.two_opt(t, inst.coords[:, 0].copy(), inst.coords[:, 1].copy(),
                     inst.metric.code, fixnbr, max_passes, tol)
    return t


def pseudo_optimal(inst: Instance, seed: int, starts: int = PSEUDO_STARTS) -> OptimalResult:
    """Best of ``starts`` nearest-neighbour tours, each polished by full 2-opt.

    Start nodes are drawn without replacement from ``seed``. The result is a
    local optimum only, so it is flagged ``certified=False``.
    """
    rng = np.random.default_rng(seed)
    picks = rng.choice(inst.n, size=min(starts, inst.n), replace=False)
    xs, ys = inst.coords[:, 0].copy(), inst.coords[:, 1].copy()
    best, best_len = None, None
    for s in picks:
        t = _kernels.nearest_neighbor_tour(int(s), xs, ys, inst.metric.code)
        t = two_opt_full(inst, t)
        length = tour_length(inst, t)
        if best_len is None or length < best_len:
            best, best_len = t, length
    return _result(inst, best, False, solver="pseudo_optimal", seed=seed, starts=len(picks))
