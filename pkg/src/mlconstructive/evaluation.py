"""Gap against known optima, per-policy aggregation and report output."""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .candidates import DEFAULT_K
from .constructive import DEFAULT_MAX_PASSES, Policy, SolveConfig, solve
from .instance import Instance, Metric, bundled_names, load_bundled, tour_edges
from .oracle import HELD_KARP_LIMIT, held_karp

log = logging.getLogger(__name__)

#: stands in for a per-instance OPT policy built from a known optimal tour
OPT_FROM_TOUR = "opt-from-tour"


def compute_gap(length: float, optimum: float) -> float:
    """Percentage excess of ``length`` over ``optimum``."""
    if not optimum > 0:
        raise ValueError(f"optimum must be positive, got {optimum}")
    return 100.0 * (length - optimum) / optimum


@dataclass(frozen=True)
class PolicySpec:
    """One column of a benchmark: a policy and whether phase 3 runs.

    ``policy`` may be :data:`OPT_FROM_TOUR`, resolved per instance from the
    optimal tours passed to :func:`run_benchmark`; instances without one are
    left out for that column.
    """

    label: str
    policy: Policy | str
    phase3: bool = False


@dataclass(frozen=True)
class BenchmarkConfig:
    cl_kind: str = "knn"
    k: int = DEFAULT_K
    seed: int = 0
    max_passes: int = DEFAULT_MAX_PASSES
    truncate: bool = False
    workers: int = 1


@dataclass(frozen=True)
class GapRow:
    instance: str
    policy: str
    length: float
    optimum: float
    gap: float
    time: float
    fixed: int


@dataclass(frozen=True)
class PolicySummary:
    policy: str
    count: int
    avg_gap: float
    std_gap: float
    best: int
    time: float


@dataclass
class GapReport:
    rows: list[GapRow]
    policies: list[str]
    config: dict = field(default_factory=dict)

    @property
    def instances(self) -> list[str]:
        seen = {}
        for r in self.rows:
            seen.setdefault(r.instance, None)
        return list(seen)

    def best_lengths(self) -> dict[str, float]:
        best = {}
        for r in self.rows:
            best[r.instance] = min(best.get(r.instance, math.inf), r.length)
        return best

    def summary(self) -> list[PolicySummary]:
        """Aggregates recomputed from the rows. Sample std (0 for a single row)."""
        best = self.best_lengths()
        out = []
        for name in self.policies:
            mine = [r for r in self.rows if r.policy == name]
            gaps = np.array([r.gap for r in mine], dtype=np.float64)
            wins = sum(math.isclose(r.length, best[r.instance], rel_tol=1e-12) for r in mine)
            out.append(PolicySummary(
                name, len(mine),
                float(gaps.mean()) if gaps.size else math.nan,
                float(gaps.std(ddof=1)) if gaps.size > 1 else 0.0,
                int(wins), float(sum(r.time for r in mine))))
        return out

    def by_policy(self) -> dict[str, PolicySummary]:
        return {s.policy: s for s in self.summary()}

    def gaps(self, policy: str) -> dict[str, float]:
        return {r.instance: r.gap for r in self.rows if r.policy == policy}

    # -- output --

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["instance", "policy", "length", "optimum", "gap", "time", "fixed"])
            for r in self.rows:
                w.writerow([r.instance, r.policy, r.length, r.optimum, f"{r.gap:.6f}",
                            f"{r.time:.6f}", r.fixed])

    def to_markdown(self) -> str:
        """Instances as rows, policies as columns, aggregates at the bottom."""
        cell = {(r.instance, r.policy): f"{r.gap:.2f}" for r in self.rows}
        opt = {r.instance: r.optimum for r in self.rows}
        head = ["instance", "optimum"] + self.policies
        body = [[name, f"{opt[name]:g}"] + [cell.get((name, p), "-") for p in self.policies]
                for name in self.instances]
        sums = self.summary()
        body.append(["avg", ""] + [f"{s.avg_gap:.2f}" for s in sums])
        body.append(["std", ""] + [f"{s.std_gap:.2f}" for s in sums])
        body.append(["best", ""] + [f"{s.best}/{s.count}" for s in sums])
        body.append(["time (s)", ""] + [f"{s.time:.2f}" for s in sums])
        widths = [max(len(row[c]) for row in [head] + body) for c in range(len(head))]

        def line(row):
            return "| " + " | ".join(v.ljust(w) for v, w in zip(row, widths)) + " |"

        sep = "|" + "|".join("-" * (w + 2) for w in widths) + "|"
        return "\n".join([line(head), sep] + [line(r) for r in body]) + "\n"

    def write_markdown(self, path: str | Path) -> None:
        Path(path).write_text(self.to_markdown())

    def write_manifest(self, path: str | Path, **extra) -> None:
        body = {"config": self.config, "policies": self.policies, "instances": self.instances,
                "summary": [asdict(s) for s in self.summary()], **extra}
        Path(path).write_text(json.dumps(body, indent=2, sort_keys=True, default=str) + "\n")


def tsplib_subset(metrics: Sequence[Metric] = (Metric.EUC_2D,), n_min: int = 100,
                  n_max: int = 1748) -> list[Instance]:
    """Bundled TSPLIB instances with a given metric and size range, smallest first."""
    out = []
    for name in bundled_names():
        inst = load_bundled(name)
        if inst.metric in metrics and n_min <= inst.n <= n_max:
            out.append(inst)
    return out


def instance_seed(seed: int, index: int) -> int:
    """Per-instance seed derived from the run seed."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1, dtype=np.uint32)[0])


def _run_one(args) -> list[GapRow]:
    index, inst, optimum, tour, specs, config = args
    rows = []
    for spec in specs:
        policy = spec.policy
        if isinstance(policy, str):
            if policy != OPT_FROM_TOUR:
                raise ValueError(f"unknown policy placeholder {policy!r}")
            if tour is None:
                continue
            policy = Policy.opt(tour_edges(list(tour)), label=spec.label)
        cfg = SolveConfig(policy=policy, cl_kind=config.cl_kind, k=config.k,
                          enable_phase3=spec.phase3, seed=instance_seed(config.seed, index),
                          max_passes=config.max_passes, truncate=config.truncate)
        res = solve(inst, cfg)
        rows.append(GapRow(inst.name, spec.label, res.length, optimum,
                           compute_gap(res.length, optimum), sum(res.timings.values()),
                           res.fixed_count))
    return rows


def run_benchmark(instances: Sequence[Instance], policies: Sequence[PolicySpec],
                  config: BenchmarkConfig = BenchmarkConfig(),
                  optima: Mapping[str, float] | None = None,
                  optimal_tours: Mapping[str, Sequence[int]] | None = None) -> GapReport:
    """Solve every instance with every policy and collect gaps.

    Optima come from ``optima`` by instance name, else from Held-Karp for
    small instances; instances with neither are skipped with a warning.
    """
    labels = [s.label for s in policies]
    if len(set(labels)) != len(labels):
        raise ValueError("policy labels must be unique")
    optima = dict(optima or {})
    optimal_tours = dict(optimal_tours or {})
    tasks = []
    for index, inst in enumerate(instances):
        optimum = optima.get(inst.name)
        tour = optimal_tours.get(inst.name)
        if optimum is None and inst.n <= HELD_KARP_LIMIT:
            exact = held_karp(inst)
            optimum, tour = exact.length, tour if tour is not None else exact.tour
        if optimum is None:
            log.warning("no optimum known for %s, skipped", inst.name)
            continue
        tasks.append((index, inst, optimum, tour, tuple(policies), config))

    if config.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            chunks = list(pool.map(_run_one, tasks))
    else:
        chunks = [_run_one(t) for t in tasks]
    rows = [r for chunk in chunks for r in chunk]
    meta = dict(asdict(config), policies=[{"label": s.label, "phase3": s.phase3,
                                           "kind": s.policy if isinstance(s.policy, str)
                                           else s.policy.kind} for s in policies])
    return GapReport(rows, labels, meta)
