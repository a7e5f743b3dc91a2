"""The solver: policy-gated edge fixing, Clarke-Wright completion, restricted 2-opt."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import _kernels
from .candidates import DEFAULT_K, CandidateLists, PromisingList, build_candidates, \
    build_promising_list
from .instance import Instance, tour_edges, tour_length, validate_tour
from .models import BinaryClassifier, build_features, feature_dim
from .partial import InvariantViolation, PartialSolution, canon, insertion_feasible

__all__ = ["Policy", "SolveConfig", "SolveResult", "phase1", "clarke_wright_complete",
           "restricted_two_opt", "solve", "insertion_feasible", "ConfigurationError"]

DEFAULT_MAX_PASSES = 50
POLICY_KINDS = ("baseline", "nn", "model", "opt")


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class Policy:
    """Decision-taker consulted for every feasible promising edge."""

    kind: str
    models: tuple[BinaryClassifier, BinaryClassifier] | None = None
    thresholds: tuple[float, float] = (0.5, 0.5)
    rates: tuple[float, float] = (0.5, 0.5)
    optimal_edges: frozenset[tuple[int, int]] = frozenset()
    label: str = ""

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ConfigurationError(f"unknown policy kind {self.kind!r}")
        if self.kind == "model":
            if self.models is None or len(self.models) != 2:
                raise ConfigurationError("model policy needs a rank-1 and a rank-2 classifier")
            if self.models[0].dim != self.models[1].dim:
                raise ConfigurationError("rank-1 and rank-2 classifiers use different k")

    @property
    def name(self) -> str:
        return self.label or self.kind

    @classmethod
    def baseline(cls, rates=(0.5, 0.5), label="B"):
        return cls("baseline", rates=tuple(rates), label=label)

    @classmethod
    def nearest(cls, label="NN"):
        return cls("nn", label=label)

    @classmethod
    def model(cls, rank1: BinaryClassifier, rank2: BinaryClassifier, thresholds=(0.5, 0.5),
              label=""):
        return cls("model", models=(rank1, rank2), thresholds=tuple(thresholds),
                   label=label or rank1.kind)

    @classmethod
    def opt(cls, edges: Iterable[tuple[int, int]], label="OPT"):
        return cls("opt", optimal_edges=frozenset(canon(u, v) for u, v in edges), label=label)


def phase1(inst: Instance, cl: CandidateLists, lp: PromisingList, policy: Policy,
           seed: int = 0) -> PartialSolution:
    """Walk the promising list once, fixing every feasible edge the policy accepts."""
    if policy.kind == "model" and policy.models[0].dim != feature_dim(cl.k):
        raise ConfigurationError(
            f"classifiers expect dimension {policy.models[0].dim}, candidate lists give "
            f"{feature_dim(cl.k)} (k={cl.k})")
    rng = np.random.default_rng(seed)
    partial = PartialSolution(inst.n)
    for entry in lp:
        u, v = entry.edge
        if not partial.feasible(u, v):
            continue
        r = entry.rank - 1
        if policy.kind == "nn":
            accept = entry.rank == 1
        elif policy.kind == "opt":
            accept = entry.edge in policy.optimal_edges
        elif policy.kind == "baseline":
            accept = rng.random() < policy.rates[r]
        else:
            x = build_features(inst, cl, partial, entry.owner)
            accept = float(policy.models[r].predict_proba(x)[0]) > policy.thresholds[r]
        if accept:
            partial.insert(u, v, fixed=True)
    return partial


def _hub(inst: Instance) -> int:
    if inst.n <= 5000:
        totals = inst.cost_matrix().sum(axis=1, dtype=np.float64)
    else:
        totals = np.array([inst.costs_from(i).sum(dtype=np.float64) for i in range(inst.n)])
    return int(np.argmax(totals))


def _endpoint_pairs(inst: Instance, ends: np.ndarray):
    iu, ju = np.triu_indices(ends.size, 1)
    us, vs = ends[iu], ends[ju]
    if inst.n <= 5000:
        c = inst.cost_matrix()[us, vs]
    else:
        c = np.concatenate([inst.costs_from(int(e), ends[i + 1:]) for i, e in enumerate(ends)])
    return us, vs, c


def _walk(nbr: np.ndarray) -> np.ndarray:
    n = nbr.shape[0]
    tour = np.empty(n, dtype=np.int64)
    prev, cur = -1, 0
    for pos in range(n):
        tour[pos] = cur
        a, b = nbr[cur]
        prev, cur = cur, (a if a != prev else b)
    return tour


def clarke_wright_complete(inst: Instance, partial: PartialSolution) -> np.ndarray:
    """Complete the path forest into a tour with hub-based savings merges.

    The hub is the node farthest (in total) from all others. Savings
    ``c(i,h) + c(j,h) - c(i,j)`` are taken over pairs of nodes with residual
    degree and merged best-first; leftovers are joined by cheapest edge and
    the last path is closed. Existing edges are never removed.
    """
    ps = partial.copy()
    ps.validate()
    n = inst.n
    if ps.n_edges < n - 1:
        h = _hub(inst)
        ends = ps.endpoints()
        us, vs, c = _endpoint_pairs(inst, ends)
        ch = inst.costs_from(h, ends)
        pos = np.searchsorted(ends, us), np.searchsorted(ends, vs)
        savings = ch[pos[0]] + ch[pos[1]] - c
        order = np.lexsort((vs, us, -savings))
        ps.n_edges = _kernels.merge_pass(us[order], vs[order], ps.degree, ps.parent, ps.nbr,
                                         ps.n_edges, n - 1)
        if ps.n_edges < n - 1:
            ends = ps.endpoints()
            us, vs, c = _endpoint_pairs(inst, ends)
            order = np.lexsort((vs, us, c))
            ps.n_edges = _kernels.merge_pass(us[order], vs[order], ps.degree, ps.parent, ps.nbr,
                                             ps.n_edges, n - 1)
    if ps.n_edges != n - 1:
        raise InvariantViolation("completion did not reach a Hamiltonian path")
    a, b = ps.endpoints()
    ps.insert(int(a), int(b), check=False)
    return _walk(ps.nbr)


def _fixed_neighbours(n: int, fixed: Iterable[tuple[int, int]]) -> np.ndarray:
    fixnbr = np.full((n, 2), -1, dtype=np.int64)
    fill = np.zeros(n, dtype=np.int64)
    for u, v in fixed:
        for a, b in ((u, v), (v, u)):
            if fill[a] >= 2:
                raise ValueError(f"node {a} has more than two fixed edges")
            fixnbr[a, fill[a]] = b
            fill[a] += 1
    return fixnbr


def restricted_two_opt(inst: Instance, tour, fixed: Iterable[tuple[int, int]] = (),
                       max_passes: int = DEFAULT_MAX_PASSES) -> np.ndarray:
    """2-opt that never removes a fixed edge.

    First improvement: each improving move is applied as soon as it is found
    and the sweep carries on over the updated tour. A pass is one full sweep;
    stops after a pass without moves or after ``max_passes`` passes.
    """
    t = validate_tour(inst, tour).copy()
    fixed = {canon(u, v) for u, v in fixed}
    if not fixed <= tour_edges(t.tolist()):
        raise ValueError("fixed edges must all be tour edges")
    fixnbr = _fixed_neighbours(inst.n, fixed)
    tol = 0.0 if inst.metric.integral else -1e-10
    _kernels.two_opt(t, inst.coords[:, 0].copy(), inst.coords[:, 1].copy(), inst.metric.code,
                     fixnbr, max_passes, tol)
    return t


def is_two_opt_optimal(inst: Instance, tour, fixed: Iterable[tuple[int, int]] = ()) -> bool:
    t = validate_tour(inst, tour)
    fixnbr = _fixed_neighbours(inst.n, {canon(u, v) for u, v in fixed})
    tol = 0.0 if inst.metric.integral else -1e-10
    return bool(_kernels.is_two_opt_optimal(t, inst.coords[:, 0].copy(), inst.coords[:, 1].copy(),
                                            inst.metric.code, fixnbr, tol))


@dataclass(frozen=True)
class SolveConfig:
    policy: Policy = field(default_factory=Policy.nearest)
    cl_kind: str = "knn"
    k: int = DEFAULT_K
    enable_phase3: bool = True
    seed: int = 0
    max_passes: int = DEFAULT_MAX_PASSES
    truncate: bool = False


@dataclass
class SolveResult:
    tour: np.ndarray
    length: int | float
    phase2_length: int | float
    fixed_edges: frozenset[tuple[int, int]]
    promising_size: int
    timings: dict[str, float]

    @property
    def fixed_count(self) -> int:
        return len(self.fixed_edges)


def solve(inst: Instance, config: SolveConfig = SolveConfig()) -> SolveResult:
    timings = {}
    t0 = time.perf_counter()
    cl = build_candidates(inst, config.cl_kind, config.k, config.truncate)
    lp = build_promising_list(inst, cl)
    timings["candidates"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    partial = phase1(inst, cl, lp, config.policy, config.seed)
    timings["phase1"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    tour = clarke_wright_complete(inst, partial)
    timings["phase2"] = time.perf_counter() - t0
    phase2_length = tour_length(inst, tour)

    if config.enable_phase3:
        t0 = time.perf_counter()
        tour = restricted_two_opt(inst, tour, partial.fixed_edges, config.max_passes)
        timings["phase3"] = time.perf_counter() - t0
    return SolveResult(tour, tour_length(inst, tour), phase2_length,
                       frozenset(partial.fixed_edges), len(lp), timings)
