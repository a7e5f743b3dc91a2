"""Training data for the edge classifiers.

Each instance gets candidate lists, its promising list and a reference tour.
The promising list is then walked once with a partial solution that only
ever receives reference edges; every feasible entry yields one example whose
features see the partial solution as it stood at that moment.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .candidates import DEFAULT_K, build_candidates, build_promising_list
from .instance import Instance, random_instance
from .models import build_features, feature_dim
from .oracle import HELD_KARP_LIMIT, held_karp, pseudo_optimal
from .partial import PartialSolution

log = logging.getLogger(__name__)

DATASET_FORMAT_VERSION = 1
LAYOUT = "dist-then-flags"
SPLITS = ("train", "validation", "test")
SPLIT_FRACTIONS = (0.8, 0.1, 0.1)


class DegenerateDataError(ValueError):
    pass


class TrainingExample(NamedTuple):
    features: np.ndarray
    label: int
    rank: int
    instance: int
    owner: int
    split: str


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    rank: np.ndarray
    instance: np.ndarray
    owner: np.ndarray
    split: np.ndarray
    k: int
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.y.shape[0]

    def __iter__(self) -> Iterator[TrainingExample]:
        for idx in range(len(self)):
            yield TrainingExample(self.X[idx], int(self.y[idx]), int(self.rank[idx]),
                                  int(self.instance[idx]), int(self.owner[idx]),
                                  SPLITS[self.split[idx]])

    def subset(self, mask: np.ndarray) -> "Dataset":
        return Dataset(self.X[mask], self.y[mask], self.rank[mask], self.instance[mask],
                       self.owner[mask], self.split[mask], self.k, dict(self.meta))

    def where(self, split: str | None = None, rank: int | None = None) -> "Dataset":
        mask = np.ones(len(self), dtype=bool)
        if split is not None:
            mask &= self.split == SPLITS.index(split)
        if rank is not None:
            mask &= self.rank == rank
        return self.subset(mask)

    def positive_rate(self, rank: int | None = None) -> float:
        y = self.y if rank is None else self.y[self.rank == rank]
        return float(y.mean()) if y.size else 0.0

    # -- files --

    def save_csv(self, path: str | Path) -> None:
        d = feature_dim(self.k)
        header = [f"# mlconstructive dataset v{DATASET_FORMAT_VERSION} k={self.k} layout={LAYOUT}",
                  ",".join(["label", "rank", "instance", "owner", "split"]
                           + [f"f{i}" for i in range(d)])]
        half = d // 2
        with open(path, "w") as fh:
            fh.write("\n".join(header) + "\n")
            for idx in range(len(self)):
                x = self.X[idx]
                vals = [f"{v:.6g}" for v in x[:half]] + ["1" if v else "0" for v in x[half:]]
                fh.write(f"{self.y[idx]},{self.rank[idx]},{self.instance[idx]},{self.owner[idx]},"
                         f"{SPLITS[self.split[idx]]}," + ",".join(vals) + "\n")

    @classmethod
    def load_csv(cls, path: str | Path) -> "Dataset":
        with open(path) as fh:
            first = fh.readline().strip()
            if f"v{DATASET_FORMAT_VERSION}" not in first or "k=" not in first:
                raise ValueError(f"{path}: not a version {DATASET_FORMAT_VERSION} dataset file")
            k = int(first.split("k=")[1].split()[0])
            fh.readline()
            rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
        d = feature_dim(k)
        if not rows:
            z = np.zeros(0, dtype=np.int64)
            return cls(np.zeros((0, d)), z, z, z, z, z, k)
        cols = list(zip(*rows))
        ints = lambda c: np.array(c, dtype=np.int64)  # noqa: E731
        split = np.array([SPLITS.index(s) for s in cols[4]], dtype=np.int64)
        X = np.array(cols[5:], dtype=np.float64).T
        if X.shape[1] != d:
            raise ValueError(f"{path}: expected {d} features per row, got {X.shape[1]}")
        return cls(X, ints(cols[0]), ints(cols[1]), ints(cols[2]), ints(cols[3]), split, k)


@dataclass
class PassRecord:
    """What one teacher-forced pass over a promising list did."""

    examples: list
    inserted: list
    partial: PartialSolution


def teacher_forced_pass(inst: Instance, cl, lp, optimal_edges, k: int) -> PassRecord:
    partial = PartialSolution(inst.n)
    examples, inserted = [], []
    for entry in lp:
        u, v = entry.edge
        if not partial.feasible(u, v):
            continue
        x = build_features(inst, cl, partial, entry.owner, k)
        label = int(entry.edge in optimal_edges)
        examples.append((x, label, entry.rank, entry.owner, entry.edge))
        if label:
            partial.insert(u, v, fixed=True)
            inserted.append(entry.edge)
    return PassRecord(examples, inserted, partial)


def assign_splits(count: int, seed: int) -> np.ndarray:
    """Split code per instance index, 80/10/10 over a seeded permutation."""
    order = np.random.default_rng([seed, 0x5EED]).permutation(count)
    n_train = int(round(SPLIT_FRACTIONS[0] * count))
    n_val = int(round(SPLIT_FRACTIONS[1] * count))
    codes = np.empty(count, dtype=np.int64)
    codes[order[:n_train]] = 0
    codes[order[n_train:n_train + n_val]] = 1
    codes[order[n_train + n_val:]] = 2
    return codes


def generate_dataset(count: int, n_range: tuple[int, int] = (100, 300), k: int = DEFAULT_K,
                     seed: int = 0, oracle: str = "pseudo", cl_kind: str = "knn") -> Dataset:
    if count < 1:
        raise ValueError("count must be >= 1")
    lo, hi = n_range
    if lo < 3 or hi < lo:
        raise ValueError(f"bad n_range {n_range}")
    if oracle == "exact" and hi > HELD_KARP_LIMIT:
        raise ValueError(f"exact labels need n <= {HELD_KARP_LIMIT}")
    if oracle not in ("exact", "pseudo"):
        raise ValueError(f"unknown oracle {oracle!r}")
    children = np.random.SeedSequence(seed).spawn(count)
    splits = assign_splits(count, seed)
    blocks = []
    skipped = 0
    for idx, child in enumerate(children):
        rng = np.random.default_rng(child)
        n = int(rng.integers(lo, hi + 1))
        inst_seed = int(rng.integers(0, 2**63 - 1))
        inst = random_instance(n, inst_seed, name=f"train{idx}")
        try:
            ref = held_karp(inst) if oracle == "exact" else pseudo_optimal(inst, inst_seed)
        except Exception as exc:  # pragma: no cover - depends on oracle internals
            log.warning("instance %d skipped: oracle failed (%s)", idx, exc)
            skipped += 1
            continue
        cl = build_candidates(inst, cl_kind, k)
        lp = build_promising_list(inst, cl)
        rec = teacher_forced_pass(inst, cl, lp, ref.edge_set, k)
        if rec.examples:
            blocks.append((idx, rec.examples))

    d = feature_dim(k)
    X = [x for _, ex in blocks for x, *_ in ex]
    rows = [(lab, rank, idx, owner) for idx, ex in blocks for _, lab, rank, owner, _ in ex]
    arr = np.array(rows, dtype=np.int64).reshape(-1, 4)
    meta = {"count": count, "n_range": [lo, hi], "k": k, "seed": seed, "oracle": oracle,
            "cl_kind": cl_kind, "labels_certified": oracle == "exact", "skipped": skipped,
            "examples": int(arr.shape[0])}
    return Dataset(np.array(X, dtype=np.float64).reshape(-1, d), arr[:, 0], arr[:, 1], arr[:, 2],
                   arr[:, 3], splits[arr[:, 2]], k, meta)


def under_sample(data: Dataset, ratio: float = 1.0, seed: int = 0) -> Dataset:
    """Drop random majority-class examples until majority <= ratio * minority."""
    if ratio <= 0:
        raise ValueError("ratio must be positive")
    pos = np.flatnonzero(data.y == 1)
    neg = np.flatnonzero(data.y == 0)
    if pos.size == 0 or neg.size == 0:
        raise DegenerateDataError("under-sampling needs both classes")
    major, minor = (pos, neg) if pos.size >= neg.size else (neg, pos)
    keep_n = min(major.size, int(np.floor(ratio * minor.size)))
    rng = np.random.default_rng(seed)
    kept = np.sort(rng.choice(major, size=keep_n, replace=False))
    mask = np.zeros(len(data), dtype=bool)
    mask[minor] = True
    mask[kept] = True
    out = data.subset(mask)
    out.meta["under_sampled"] = {"ratio": ratio, "seed": seed}
    return out


def write_manifest(data: Dataset, path: str | Path, **extra) -> None:
    counts = {}
    for name in SPLITS:
        part = data.where(split=name)
        counts[name] = {f"rank{r}": {"examples": int(np.sum(part.rank == r)),
                                     "positives": int(np.sum(part.y[part.rank == r]))}
                        for r in (1, 2)}
    body = dict(data.meta, counts=counts,
                rank_priors={str(r): data.where(split="train").positive_rate(r) for r in (1, 2)},
                **extra)
    Path(path).write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
