"""Edge classifiers: feature patches, from-scratch trainers, metrics, model files.

Features for node ``i`` describe the patch ``[i, CL_i[0], ..., CL_i[k-1]]``.
For every ordered pair (a, b) of distinct patch slots, row-major, the vector
holds the pair's cost divided by the patch maximum, followed by the same
pairs' "edge already in the partial solution" flags. Missing slots (short
candidate lists) read as cost 1 and flag 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from .candidates import CandidateLists
from .instance import Instance
from .partial import PartialSolution

log = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
KINDS = ("baseline", "logistic", "svm", "stumps", "ensemble")


class DegenerateFeatureError(ValueError):
    pass


class DegenerateTrainingError(ValueError):
    pass


# -- features -------------------------------------------------------------

def feature_dim(k: int) -> int:
    return 2 * (k + 1) * k


def k_from_dim(dim: int) -> int | None:
    k = int((math.isqrt(2 * dim + 1) - 1) // 2)
    return k if feature_dim(k) == dim else None


@lru_cache(maxsize=None)
def _pair_slots(k: int) -> tuple[np.ndarray, np.ndarray]:
    a, b = np.meshgrid(np.arange(k + 1), np.arange(k + 1), indexing="ij")
    keep = a != b
    return a[keep], b[keep]


def pair_slot(k: int, a: int, b: int) -> int:
    """Position of ordered slot pair (a, b) inside either feature block."""
    if a == b:
        raise ValueError("self-pairs have no slot")
    return a * k + (b if b < a else b - 1)


def build_features(inst: Instance, cl: CandidateLists, partial: PartialSolution,
                   i: int, k: int | None = None) -> np.ndarray:
    k = cl.k if k is None else k
    members = cl[i]
    if len(members) < 2:
        raise ValueError(f"candidate list of node {i} has fewer than 2 members")
    nodes = np.full(k + 1, -1, dtype=np.int64)
    nodes[0] = i
    take = min(k, len(members))
    nodes[1:take + 1] = members[:take]
    sa, sb = _pair_slots(k)
    na, nb = nodes[sa], nodes[sb]
    valid = (na >= 0) & (nb >= 0)
    dist = np.ones(sa.size)
    va, vb = na[valid], nb[valid]
    if inst.n <= 5000:
        raw = inst.cost_matrix()[va, vb].astype(np.float64)
    else:
        raw = np.array([inst.costs_from(int(u), [int(w)])[0] for u, w in zip(va, vb)], float)
    top = raw.max()
    if top <= 0:
        raise DegenerateFeatureError(f"patch of node {i} has zero extent")
    dist[valid] = raw / top
    flags = np.zeros(sa.size)
    flags[valid] = ((partial.nbr[va, 0] == vb) | (partial.nbr[va, 1] == vb))
    return np.concatenate([dist, flags])


# -- classifiers ----------------------------------------------------------

def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True, eq=False)
class BinaryClassifier:
    """Common surface: ``rank`` is the L_P rank the model was trained for."""

    rank: int
    dim: int

    kind = "abstract"

    @property
    def k(self) -> int | None:
        return k_from_dim(self.dim)

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.dim:
            raise ValueError(f"{self.kind} model expects dimension {self.dim}, got {X.shape[1]}")
        return X

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return np.clip(self._proba(self._check(X)), 0.0, 1.0)

    def _proba(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Baseline(BinaryClassifier):
    rate: float = 0.5
    kind = "baseline"

    def _proba(self, X):
        return np.full(X.shape[0], self.rate)


@dataclass(frozen=True, eq=False)
class Logistic(BinaryClassifier):
    weights: np.ndarray = field(default=None, repr=False)
    bias: float = 0.0
    kind = "logistic"

    def decision(self, X):
        return X @ self.weights + self.bias

    def _proba(self, X):
        return sigmoid(self.decision(X))


@dataclass(frozen=True, eq=False)
class LinearSVM(BinaryClassifier):
    weights: np.ndarray = field(default=None, repr=False)
    bias: float = 0.0
    platt_a: float = 1.0
    platt_b: float = 0.0
    kind = "svm"

    def decision(self, X):
        return X @ self.weights + self.bias

    def _proba(self, X):
        return sigmoid(self.platt_a * self.decision(X) + self.platt_b)


@dataclass(frozen=True, eq=False)
class GBStumps(BinaryClassifier):
    init: float = 0.0
    features: np.ndarray = field(default=None, repr=False)
    thresholds: np.ndarray = field(default=None, repr=False)
    left: np.ndarray = field(default=None, repr=False)
    right: np.ndarray = field(default=None, repr=False)
    kind = "stumps"

    def raw_score(self, X):
        F = np.full(X.shape[0], self.init)
        for f, t, lv, rv in zip(self.features, self.thresholds, self.left, self.right):
            F += np.where(X[:, f] <= t, lv, rv)
        return F

    def _proba(self, X):
        return sigmoid(self.raw_score(X))


@dataclass(frozen=True, eq=False)
class Ensemble(BinaryClassifier):
    members: tuple[BinaryClassifier, ...] = ()
    kind = "ensemble"

    def _proba(self, X):
        return np.mean([m.predict_proba(X) for m in self.members], axis=0)


def predict_probability(model: BinaryClassifier, x: np.ndarray) -> float:
    return float(model.predict_proba(np.asarray(x, dtype=np.float64).reshape(1, -1))[0])


def make_ensemble(members: Sequence[BinaryClassifier]) -> Ensemble:
    """Soft vote: the mean of the members' probabilities."""
    members = tuple(members)
    if len(members) < 2:
        raise ValueError("an ensemble needs at least two members")
    if len({m.rank for m in members}) != 1:
        raise ValueError("ensemble members were trained for different ranks")
    if len({m.dim for m in members}) != 1:
        raise ValueError("ensemble members disagree on feature dimension")
    return Ensemble(members[0].rank, members[0].dim, members)


# -- training -------------------------------------------------------------

def _check_training_data(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DegenerateTrainingError("training data is empty")
    if X.shape[0] != y.shape[0]:
        raise ValueError("features and labels differ in length")
    if y.min() == y.max():
        raise DegenerateTrainingError("training data holds a single class")
    return X, y


def logistic_loss_grad(params: np.ndarray, X: np.ndarray, y: np.ndarray,
                       l2: float) -> tuple[float, np.ndarray]:
    """Mean cross-entropy plus ``l2/2 * |w|^2``; ``params = [w..., b]``."""
    w, b = params[:-1], params[-1]
    z = X @ w + b
    # log(1 + e^z) - y z, computed stably
    loss = np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (w @ w)
    r = (sigmoid(z) - y) / X.shape[0]
    grad = np.empty_like(params)
    grad[:-1] = X.T @ r + l2 * w
    grad[-1] = r.sum()
    return float(loss), grad


def _standardizer(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd < 1e-12] = 1.0
    return mu, sd


def _fold(params: np.ndarray, mu: np.ndarray, sd: np.ndarray) -> tuple[np.ndarray, float]:
    """Map weights learnt on standardised inputs back to raw feature space."""
    w = params[:-1] / sd
    return w, float(params[-1] - w @ mu)


def _sgd(grad_fn, Z, y, epochs, lr, batch_size, rng, schedule):
    """Mini-batch SGD with iterate averaging over the last half of training."""
    m, d = Z.shape
    params = np.zeros(d + 1)
    avg = np.zeros(d + 1)
    n_avg = 0
    step = 0
    for epoch in range(epochs):
        order = rng.permutation(m)
        for start in range(0, m, batch_size):
            idx = order[start:start + batch_size]
            _, g = grad_fn(params, Z[idx], y[idx])
            step += 1
            params -= schedule(step) * g
            if 2 * epoch >= epochs:
                n_avg += 1
                avg += (params - avg) / n_avg
    return avg if n_avg else params


def train_logistic(X, y, rank: int = 1, epochs: int = 30, lr: float = 0.5, l2: float = 1e-4,
                   batch_size: int = 256, seed: int = 0) -> Logistic:
    """L2-regularised logistic regression by mini-batch SGD.

    Inputs are standardised internally; the returned weights act on raw features.
    """
    X, y = _check_training_data(X, y)
    rng = np.random.default_rng(seed)
    mu, sd = _standardizer(X)
    params = _sgd(lambda p, Z, t: logistic_loss_grad(p, Z, t, l2), (X - mu) / sd, y, epochs,
                  lr, batch_size, rng, lambda step: lr / math.sqrt(1.0 + step / 100.0))
    w, b = _fold(params, mu, sd)
    return Logistic(rank, X.shape[1], w, b)


def svm_objective_grad(params: np.ndarray, X: np.ndarray, y: np.ndarray,
                       lam: float) -> tuple[float, np.ndarray]:
    """Mean hinge loss plus ``lam/2 * |w|^2`` and its subgradient; labels in {0, 1}."""
    s = 2.0 * y - 1.0
    w, b = params[:-1], params[-1]
    margin = s * (X @ w + b)
    active = margin < 1.0
    loss = np.mean(np.maximum(0.0, 1.0 - margin)) + 0.5 * lam * (w @ w)
    coef = -(s * active) / X.shape[0]
    grad = np.empty_like(params)
    grad[:-1] = X.T @ coef + lam * w
    grad[-1] = coef.sum()
    return float(loss), grad


def fit_platt(scores: np.ndarray, y: np.ndarray, iters: int = 100) -> tuple[float, float]:
    """Fit ``p = sigmoid(a s + b)`` by Newton's method on the log loss."""
    pos = y.sum()
    neg = y.size - pos
    # Platt's smoothed targets keep the fit finite on separable folds
    t = np.where(y > 0, (pos + 1.0) / (pos + 2.0), 1.0 / (neg + 2.0))
    a, b = 1.0, 0.0
    for _ in range(iters):
        p = sigmoid(a * scores + b)
        g = np.array([np.sum((p - t) * scores), np.sum(p - t)])
        w = p * (1.0 - p) + 1e-12
        H = np.array([[np.sum(w * scores * scores), np.sum(w * scores)],
                      [np.sum(w * scores), np.sum(w)]]) + 1e-9 * np.eye(2)
        delta = np.linalg.solve(H, g)
        a, b = a - delta[0], b - delta[1]
        if np.abs(delta).max() < 1e-10:
            break
    return float(a), float(b)


def train_linear_svm(X, y, rank: int = 1, epochs: int = 30, lr: float = 0.05, C: float = 1.0,
                     batch_size: int = 256, seed: int = 0,
                     holdout: float = 0.1) -> LinearSVM:
    """Linear SVM by mini-batch subgradient descent, Platt-calibrated on a held-out fold."""
    X, y = _check_training_data(X, y)
    rng = np.random.default_rng(seed)
    m, d = X.shape
    order = rng.permutation(m)
    n_hold = int(round(holdout * m))
    hold, fit = order[:n_hold], order[n_hold:]
    if n_hold < 2 or y[hold].min() == y[hold].max() or y[fit].min() == y[fit].max():
        hold = fit = np.arange(m)
    Xf, yf = X[fit], y[fit]
    mu, sd = _standardizer(Xf)
    # same trade-off as 0.5|w|^2 + C * sum(hinge)
    lam = 1.0 / (C * Xf.shape[0])
    params = _sgd(lambda p, Z, t: svm_objective_grad(p, Z, t, lam), (Xf - mu) / sd, yf, epochs,
                  lr, batch_size, rng, lambda step: lr / (1.0 + lr * lam * step))
    w, b = _fold(params, mu, sd)
    a, pb = fit_platt(X[hold] @ w + b, y[hold])
    return LinearSVM(rank, d, w, b, a, pb)


def boosting_loss(F: np.ndarray, y: np.ndarray) -> float:
    """Mean logistic loss of raw scores ``F``."""
    return float(np.mean(np.logaddexp(0.0, F) - y * F))


def boosting_gradient(F: np.ndarray, y: np.ndarray) -> np.ndarray:
    return (sigmoid(F) - y) / F.shape[0]


def _bin_edges(X: np.ndarray, n_bins: int) -> list[np.ndarray]:
    qs = np.linspace(0, 1, n_bins + 1)[1:-1]
    return [np.unique(np.quantile(col, qs)) for col in X.T]


def train_gb_stumps(X, y, rank: int = 1, rounds: int = 200, lr: float = 0.1, seed: int = 0,
                    n_bins: int = 32, subsample: float = 1.0, reg: float = 1.0,
                    loss_history: list | None = None) -> GBStumps:
    """Gradient boosting of depth-1 trees on the logistic loss.

    Leaves take a damped Newton step; a stump that would raise the training
    loss is halved until it does not, so the loss never increases.
    """
    X, y = _check_training_data(X, y)
    rng = np.random.default_rng(seed)
    m, d = X.shape
    edges = _bin_edges(X, n_bins)
    nb = max(len(e) for e in edges) + 1
    binned = np.empty((m, d), dtype=np.int64)
    for f in range(d):
        binned[:, f] = np.searchsorted(edges[f], X[:, f], side="left")
    flat = binned + np.arange(d) * nb

    prior = y.mean()
    init = math.log(prior / (1.0 - prior))
    F = np.full(m, init)
    loss = boosting_loss(F, y)
    if loss_history is not None:
        loss_history.append(loss)
    feats, thrs, lefts, rights = [], [], [], []
    for _ in range(rounds):
        p = sigmoid(F)
        g, h = p - y, p * (1.0 - p)
        rows = np.arange(m) if subsample >= 1.0 else rng.random(m) < subsample
        fr = flat[rows]
        G = np.bincount(fr.ravel(), np.repeat(g[rows], d), d * nb).reshape(d, nb)
        H = np.bincount(fr.ravel(), np.repeat(h[rows], d), d * nb).reshape(d, nb)
        GL, HL = np.cumsum(G, axis=1), np.cumsum(H, axis=1)
        Gt, Ht = GL[:, -1:], HL[:, -1:]
        GR, HR = Gt - GL, Ht - HL
        gain = GL ** 2 / (HL + reg) + GR ** 2 / (HR + reg)
        # a split after bin j is only meaningful if bin edge j exists
        for f in range(d):
            gain[f, len(edges[f]):] = -np.inf
        f, j = np.unravel_index(int(np.argmax(gain)), gain.shape)
        if not np.isfinite(gain[f, j]):
            f, j = 0, 0
            thr, lv, rv = np.inf, -lr * Gt[0, 0] / (Ht[0, 0] + reg), 0.0
        else:
            thr = float(edges[f][j])
            lv = -lr * GL[f, j] / (HL[f, j] + reg)
            rv = -lr * GR[f, j] / (HR[f, j] + reg)
        go_left = X[:, f] <= thr
        for _ in range(30):
            cand = F + np.where(go_left, lv, rv)
            new_loss = boosting_loss(cand, y)
            if new_loss <= loss:
                break
            lv, rv = lv / 2.0, rv / 2.0
        else:
            lv = rv = 0.0
            cand, new_loss = F, loss
        F, loss = cand, new_loss
        feats.append(int(f))
        thrs.append(thr)
        lefts.append(float(lv))
        rights.append(float(rv))
        if loss_history is not None:
            loss_history.append(loss)
    return GBStumps(rank, d, init, np.array(feats, dtype=np.int64), np.array(thrs),
                    np.array(lefts), np.array(rights))


# -- metrics --------------------------------------------------------------

@dataclass(frozen=True)
class ConfusionStats:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    balanced_accuracy: float
    precision: float
    tpr: float
    fpr: float
    stats: ConfusionStats

    def row(self) -> list[float]:
        return [self.accuracy, self.balanced_accuracy, self.precision, self.tpr, self.fpr]


METRIC_COLUMNS = ("accuracy", "balanced_accuracy", "precision", "tpr", "fpr")


def _ratio(num: int, den: int, what: str) -> float:
    if den == 0:
        log.debug("%s undefined (zero denominator), reported as 0", what)
        return 0.0
    return num / den


def metrics_from_counts(stats: ConfusionStats) -> Metrics:
    tp, fp, tn, fn = stats.tp, stats.fp, stats.tn, stats.fn
    tpr = _ratio(tp, tp + fn, "TPR")
    fpr = _ratio(fp, fp + tn, "FPR")
    return Metrics(
        accuracy=_ratio(tp + tn, stats.total, "accuracy"),
        balanced_accuracy=(tpr + 1.0 - fpr) / 2.0,
        precision=_ratio(tp, tp + fp, "precision"),
        tpr=tpr,
        fpr=fpr,
        stats=stats,
    )


def confusion(pred: np.ndarray, y: np.ndarray) -> ConfusionStats:
    pred = np.asarray(pred, dtype=bool)
    y = np.asarray(y, dtype=bool)
    return ConfusionStats(int(np.sum(pred & y)), int(np.sum(pred & ~y)),
                          int(np.sum(~pred & ~y)), int(np.sum(~pred & y)))


def evaluate_metrics(model: BinaryClassifier, X, y, threshold: float = 0.5) -> Metrics:
    """Classification metrics; a positive prediction means probability > threshold."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("no examples to evaluate")
    pred = model.predict_proba(X) > threshold
    return metrics_from_counts(confusion(pred, y))


DEFAULT_THRESHOLD = 0.5
DEFAULT_MAX_FPR = 0.10


def select_threshold(model: BinaryClassifier, X, y, max_fpr: float = DEFAULT_MAX_FPR,
                     floor: float = DEFAULT_THRESHOLD) -> float:
    """Lowest threshold >= ``floor`` whose false-positive rate on (X, y) is <= ``max_fpr``.

    Meant for a held-out split. A wrongly fixed edge cannot be undone later,
    so the operating point trades recall for a bounded FPR. Ties in the
    scores are respected: the returned value is always one of the scores
    (or ``floor``), and prediction stays ``proba > threshold``.
    """
    p = model.predict_proba(np.asarray(X, dtype=np.float64))
    neg = np.sort(p[np.asarray(y) == 0])[::-1]
    if neg.size == 0:
        return floor
    # at threshold t the false positives are the negatives scoring above t
    allowed = int(np.floor(max_fpr * neg.size))
    if allowed >= neg.size:
        return floor
    return max(floor, float(neg[allowed]))


# -- persistence ----------------------------------------------------------

def _floats(a) -> str:
    return ",".join(repr(float(v)) for v in np.ravel(a))


def _parse_floats(s: str) -> np.ndarray:
    return np.array([float(v) for v in s.split(",")]) if s else np.zeros(0)


def _to_pairs(model: BinaryClassifier, prefix: str = "") -> list[tuple[str, str]]:
    out = [(prefix + "kind", model.kind), (prefix + "rank", str(model.rank)),
           (prefix + "dim", str(model.dim))]
    if model.k is not None:
        out.append((prefix + "k", str(model.k)))
    if isinstance(model, Baseline):
        out.append((prefix + "rate", repr(float(model.rate))))
    elif isinstance(model, (Logistic, LinearSVM)):
        out += [(prefix + "bias", repr(model.bias)), (prefix + "weights", _floats(model.weights))]
        if isinstance(model, LinearSVM):
            out += [(prefix + "platt_a", repr(model.platt_a)),
                    (prefix + "platt_b", repr(model.platt_b))]
    elif isinstance(model, GBStumps):
        out += [(prefix + "init", repr(model.init)),
                (prefix + "features", ",".join(str(int(f)) for f in model.features)),
                (prefix + "thresholds", _floats(model.thresholds)),
                (prefix + "left", _floats(model.left)),
                (prefix + "right", _floats(model.right))]
    elif isinstance(model, Ensemble):
        out.append((prefix + "members", str(len(model.members))))
        for idx, member in enumerate(model.members):
            out += _to_pairs(member, f"{prefix}member.{idx}.")
    return out


def _from_pairs(kv: dict[str, str], prefix: str = "") -> BinaryClassifier:
    kind = kv[prefix + "kind"]
    rank, dim = int(kv[prefix + "rank"]), int(kv[prefix + "dim"])
    if kind == "baseline":
        return Baseline(rank, dim, float(kv[prefix + "rate"]))
    if kind == "logistic":
        return Logistic(rank, dim, _parse_floats(kv[prefix + "weights"]), float(kv[prefix + "bias"]))
    if kind == "svm":
        return LinearSVM(rank, dim, _parse_floats(kv[prefix + "weights"]), float(kv[prefix + "bias"]),
                         float(kv[prefix + "platt_a"]), float(kv[prefix + "platt_b"]))
    if kind == "stumps":
        feats = kv[prefix + "features"]
        return GBStumps(rank, dim, float(kv[prefix + "init"]),
                        np.array([int(v) for v in feats.split(",")] if feats else [], dtype=np.int64),
                        _parse_floats(kv[prefix + "thresholds"]),
                        _parse_floats(kv[prefix + "left"]), _parse_floats(kv[prefix + "right"]))
    if kind == "ensemble":
        count = int(kv[prefix + "members"])
        return make_ensemble([_from_pairs(kv, f"{prefix}member.{i}.") for i in range(count)])
    raise ValueError(f"unknown model kind {kind!r}")


def dumps_model(model: BinaryClassifier) -> str:
    lines = [f"# mlconstructive model v{MODEL_FORMAT_VERSION}", f"version = {MODEL_FORMAT_VERSION}"]
    lines += [f"{key} = {value}" for key, value in _to_pairs(model)]
    return "\n".join(lines) + "\n"


def loads_model(text: str) -> BinaryClassifier:
    kv = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        kv[key.strip()] = value.strip()
    version = int(kv.get("version", -1))
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model file version {version}")
    return _from_pairs(kv)


def save_model(model: BinaryClassifier, path: str | Path) -> None:
    Path(path).write_text(dumps_model(model))


def load_model(path: str | Path) -> BinaryClassifier:
    return loads_model(Path(path).read_text())
