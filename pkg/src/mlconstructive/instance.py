"""Euclidean TSP instances: metrics, tours, TSPLIB I/O and random generation.

Node ids are dense and 0-based; TSPLIB's 1-based labels are mapped on read
and restored on write.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

#: above this size no full cost matrix is kept around
MATRIX_CACHE_LIMIT = 5000


class Metric(enum.Enum):
    EUC_2D = "EUC_2D"
    CEIL_2D = "CEIL_2D"
    ATT = "ATT"
    #: unrounded Euclidean distance, used for unit-square training instances
    EUCLIDEAN = "EUCLIDEAN"

    @property
    def integral(self) -> bool:
        return self is not Metric.EUCLIDEAN

    @property
    def code(self) -> int:
        """Small integer id used by the compiled kernels."""
        return _METRIC_CODES[self]


_METRIC_CODES = {Metric.EUCLIDEAN: 0, Metric.EUC_2D: 1, Metric.CEIL_2D: 2, Metric.ATT: 3}


class TSPLIBFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedFormatError(TSPLIBFormatError):
    pass


class InvalidTourError(ValueError):
    pass


def _apply_metric(d: np.ndarray | float, dx, dy, metric: Metric):
    """Map raw coordinate differences to TSPLIB costs. ``d`` is the Euclidean norm."""
    if metric is Metric.EUCLIDEAN:
        return d
    if metric is Metric.EUC_2D:
        return np.floor(d + 0.5)
    if metric is Metric.CEIL_2D:
        return np.ceil(d)
    # ATT pseudo-Euclidean rule
    r = np.sqrt((dx * dx + dy * dy) / 10.0)
    t = np.floor(r + 0.5)
    return np.where(t < r, t + 1.0, t)


@dataclass(frozen=True, eq=False)
class Instance:
    name: str
    coords: np.ndarray
    metric: Metric = Metric.EUC_2D
    comment: str = field(default="", compare=False)

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ValueError(f"coords must have shape (n, 2), got {coords.shape}")
        if coords.shape[0] < 3:
            raise ValueError(f"an instance needs at least 3 nodes, got {coords.shape[0]}")
        if not np.all(np.isfinite(coords)):
            raise ValueError("coordinates must be finite")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def dtype(self):
        return np.int64 if self.metric.integral else np.float64

    def _costs_from(self, i: int, js: np.ndarray) -> np.ndarray:
        dx = self.coords[js, 0] - self.coords[i, 0]
        dy = self.coords[js, 1] - self.coords[i, 1]
        return _apply_metric(np.sqrt(dx * dx + dy * dy), dx, dy, self.metric)

    def _full_matrix(self) -> np.ndarray:
        dx = self.coords[:, None, 0] - self.coords[None, :, 0]
        dy = self.coords[:, None, 1] - self.coords[None, :, 1]
        m = _apply_metric(np.sqrt(dx * dx + dy * dy), dx, dy, self.metric).astype(self.dtype)
        m.setflags(write=False)
        return m

    @cached_property
    def _matrix(self) -> np.ndarray:
        return self._full_matrix()

    def cost_matrix(self) -> np.ndarray:
        """Full n x n cost matrix; cached up to ``MATRIX_CACHE_LIMIT`` nodes."""
        if self.n <= MATRIX_CACHE_LIMIT:
            return self._matrix
        return self._full_matrix()

    def costs_from(self, i: int, js: Sequence[int] | np.ndarray | None = None) -> np.ndarray:
        """Costs from node ``i`` to ``js`` (all nodes by default)."""
        js = np.arange(self.n) if js is None else np.asarray(js, dtype=np.int64)
        if self.n <= MATRIX_CACHE_LIMIT:
            return self._matrix[i, js]
        return self._costs_from(i, js).astype(self.dtype)

    def with_coords(self, coords: np.ndarray) -> "Instance":
        return Instance(self.name, coords, self.metric, self.comment)


def _check_node(inst: Instance, i: int) -> None:
    if not (0 <= i < inst.n):
        raise ValueError(f"node id {i} out of range 0..{inst.n - 1}")


def distance(inst: Instance, i: int, j: int) -> int | float:
    """Cost of edge (i, j) under the instance metric."""
    _check_node(inst, i)
    _check_node(inst, j)
    if i == j:
        raise ValueError(f"distance needs two distinct nodes, got i = j = {i}")
    c = inst.costs_from(i, [j])[0]
    return int(c) if inst.metric.integral else float(c)


def validate_tour(inst: Instance, order: Iterable[int]) -> np.ndarray:
    t = np.asarray(list(order) if not isinstance(order, np.ndarray) else order, dtype=np.int64)
    if t.ndim != 1 or t.size != inst.n:
        raise InvalidTourError(f"tour must visit {inst.n} nodes, got {t.size}")
    seen = np.zeros(inst.n, dtype=bool)
    if t.min() < 0 or t.max() >= inst.n:
        raise InvalidTourError("tour contains out-of-range node ids")
    seen[t] = True
    if not seen.all():
        raise InvalidTourError("tour is not a permutation of the nodes")
    return t


def tour_length(inst: Instance, order: Iterable[int]) -> int | float:
    t = validate_tour(inst, order)
    a, b = t, np.roll(t, -1)
    if inst.n <= MATRIX_CACHE_LIMIT:
        total = inst.cost_matrix()[a, b].sum()
    else:
        dx = inst.coords[b, 0] - inst.coords[a, 0]
        dy = inst.coords[b, 1] - inst.coords[a, 1]
        total = _apply_metric(np.sqrt(dx * dx + dy * dy), dx, dy, inst.metric).sum()
    return int(total) if inst.metric.integral else float(total)


def tour_edges(order: Sequence[int]) -> set[tuple[int, int]]:
    """Canonical (u < v) edge set of a closed tour."""
    t = list(order)
    out = set()
    for a, b in zip(t, t[1:] + t[:1]):
        out.add((a, b) if a < b else (b, a))
    return out


def random_instance(n: int, seed: int, name: str | None = None) -> Instance:
    """``n`` points i.i.d. uniform in the unit square, unrounded Euclidean costs."""
    if n < 3:
        raise ValueError(f"n must be >= 3, got {n}")
    rng = np.random.default_rng(seed)
    return Instance(name or f"rand{n}_{seed}", rng.random((n, 2)), Metric.EUCLIDEAN)


# -- TSPLIB ---------------------------------------------------------------

_SUPPORTED = {m.value: m for m in (Metric.EUC_2D, Metric.CEIL_2D, Metric.ATT)}


def parse_tsplib(text: bytes | str) -> Instance:
    """Parse a symmetric TSPLIB .tsp file with coordinate-based weights."""
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    header: dict[str, str] = {}
    coords: list[tuple[float, float]] = []
    in_coords = False
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.strip()
        if not line:
            continue
        if line == "EOF":
            break
        if in_coords:
            parts = line.split()
            if not parts[0].lstrip("-").isdigit():
                # another section starts; nothing else is needed from the file
                break
            if len(parts) != 3:
                raise TSPLIBFormatError(f"expected 'id x y', got {line!r}", lineno)
            try:
                coords.append((float(parts[1]), float(parts[2])))
            except ValueError:
                raise TSPLIBFormatError(f"bad coordinate in {line!r}", lineno) from None
            continue
        if line.startswith("NODE_COORD_SECTION"):
            in_coords = True
            continue
        if ":" in line:
            key, _, value = line.partition(":")
            header[key.strip().upper()] = value.strip()
        elif line.endswith("_SECTION"):
            raise UnsupportedFormatError(f"unsupported section {line}", lineno)

    kind = header.get("TYPE", "").split()[0] if header.get("TYPE") else ""
    if kind != "TSP":
        raise UnsupportedFormatError(f"TYPE must be TSP, got {kind or 'nothing'}")
    ewt = header.get("EDGE_WEIGHT_TYPE", "")
    if ewt not in _SUPPORTED:
        raise UnsupportedFormatError(f"unsupported EDGE_WEIGHT_TYPE {ewt or '(missing)'}")
    if not in_coords:
        raise TSPLIBFormatError("missing NODE_COORD_SECTION")
    if "DIMENSION" in header:
        try:
            dim = int(header["DIMENSION"])
        except ValueError:
            raise TSPLIBFormatError(f"bad DIMENSION {header['DIMENSION']!r}") from None
        if dim != len(coords):
            raise TSPLIBFormatError(f"DIMENSION is {dim} but {len(coords)} coordinates were read")
    return Instance(header.get("NAME", "unnamed"), np.array(coords), _SUPPORTED[ewt],
                    header.get("COMMENT", ""))


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def to_tsplib(inst: Instance) -> str:
    if inst.metric is Metric.EUCLIDEAN:
        raise UnsupportedFormatError("unrounded Euclidean instances have no TSPLIB weight type")
    lines = [f"NAME : {inst.name}"]
    if inst.comment:
        lines.append(f"COMMENT : {inst.comment}")
    lines += ["TYPE : TSP", f"DIMENSION : {inst.n}",
              f"EDGE_WEIGHT_TYPE : {inst.metric.value}", "NODE_COORD_SECTION"]
    lines += [f"{i + 1} {_fmt(x)} {_fmt(y)}" for i, (x, y) in enumerate(inst.coords)]
    lines.append("EOF")
    return "\n".join(lines) + "\n"


def read_tsplib(path: str | Path) -> Instance:
    return parse_tsplib(Path(path).read_bytes())


def parse_tour(text: bytes | str) -> list[int]:
    """Read a TSPLIB .tour file into a 0-based visit order."""
    if isinstance(text, bytes):
        text = text.decode()
    order: list[int] = []
    in_tour = False
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("TOUR_SECTION"):
            in_tour = True
            continue
        if not in_tour:
            continue
        for tok in line.split():
            if tok in ("-1", "EOF"):
                return order
            try:
                order.append(int(tok) - 1)
            except ValueError:
                raise TSPLIBFormatError(f"bad node id {tok!r}", lineno) from None
    if not in_tour:
        raise TSPLIBFormatError("missing TOUR_SECTION")
    return order


def format_tour(name: str, order: Sequence[int], comment: str = "") -> str:
    lines = [f"NAME : {name}"]
    if comment:
        lines.append(f"COMMENT : {comment}")
    lines += ["TYPE : TOUR", f"DIMENSION : {len(order)}", "TOUR_SECTION"]
    lines += [str(int(v) + 1) for v in order]
    lines += ["-1", "EOF"]
    return "\n".join(lines) + "\n"


# -- bundled data ---------------------------------------------------------

def _data_dir():
    return resources.files("mlconstructive") / "data"


def bundled_names() -> list[str]:
    """Names of the bundled TSPLIB instances, sorted by size then name."""
    names = [p.name[:-4] for p in (_data_dir() / "tsplib").iterdir() if p.name.endswith(".tsp")]
    sizes = {nm: int("".join(ch for ch in nm if ch.isdigit())) for nm in names}
    return sorted(names, key=lambda nm: (sizes[nm], nm))


def load_bundled(name: str) -> Instance:
    return parse_tsplib((_data_dir() / "tsplib" / f"{name}.tsp").read_bytes())


def load_bundled_tour(name: str) -> list[int] | None:
    p = _data_dir() / "tsplib" / f"{name}.opt.tour"
    if not p.is_file():
        return None
    return parse_tour(p.read_bytes())


def read_optima_table(path: str | Path | None = None) -> dict[str, int]:
    """Map of TSPLIB instance name to published optimal tour length."""
    if path is None:
        text = (_data_dir() / "optima.csv").read_text()
    else:
        text = Path(path).read_text()
    table = {}
    for line in text.splitlines()[1:]:
        if line.strip():
            name, value = line.split(",")
            table[name.strip()] = int(value)
    return table


def bounding_box_diagonal(coords: np.ndarray) -> float:
    ext = coords.max(axis=0) - coords.min(axis=0)
    return math.hypot(ext[0], ext[1])
