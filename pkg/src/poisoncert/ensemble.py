"""Subsample-and-aggregate ensembles: datasets, simple learners, training and voting."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .certify import VoteRecord
from .schemes import SelectionScheme, WithoutReplacement, make_rng, sample_indices

DEFAULT_EXPAND = 2048


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    ids: list[str] | None = None
    n_classes: int | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D array")
        if len(self.features) != len(self.labels):
            raise ValueError("features and labels differ in length")
        if self.ids is None:
            self.ids = [str(i) for i in range(len(self.labels))]
        elif len(self.ids) != len(self.labels):
            raise ValueError("ids and labels differ in length")
        if len(self.labels) and self.labels.min() < 0:
            raise ValueError("labels must be non-negative")
        inferred = int(self.labels.max()) + 1 if len(self.labels) else 0
        if self.n_classes is None:
            self.n_classes = inferred
        elif inferred > self.n_classes:
            raise ValueError(f"label {inferred - 1} outside {self.n_classes} classes")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx],
                       [self.ids[i] for i in idx], self.n_classes)

    def where(self, mask) -> "Dataset":
        return self.take(np.flatnonzero(mask))


def empty_like(ds: Dataset) -> Dataset:
    return Dataset(np.empty((0, ds.dim)), np.empty(0, dtype=np.int64), [], ds.n_classes)


@dataclass(frozen=True)
class PriorKnowledge:
    """What is known to be clean.

    case 1: nothing; case 2: the samples in ``clean_indices``; case 3: every
    sample of the classes in ``clean_classes``.
    """

    case: int = 1
    clean_indices: tuple[int, ...] = ()
    clean_classes: tuple[int, ...] = ()

    def __post_init__(self):
        if self.case not in (1, 2, 3):
            raise ValueError(f"prior-knowledge case must be 1, 2 or 3, got {self.case}")
        if self.case == 3 and not self.clean_classes:
            raise ValueError("case 3 needs at least one clean class")

    def split(self, data: Dataset) -> tuple[Dataset, Dataset]:
        """Return ``(D_p, D_c)``."""
        if self.case == 1:
            return data, empty_like(data)
        if self.case == 2:
            idx = np.array(sorted(set(self.clean_indices)), dtype=np.int64)
            if len(idx) != len(self.clean_indices):
                raise ValueError("duplicate clean indices")
            if len(idx) and (idx.min() < 0 or idx.max() >= len(data)):
                raise ValueError("clean index out of range")
            mask = np.zeros(len(data), dtype=bool)
            mask[idx] = True
            return data.where(~mask), data.where(mask)
        clean = set(self.clean_classes)
        if not clean < set(range(data.n_classes)):
            raise ValueError("clean classes must be a strict subset of the classes")
        mask = np.isin(data.labels, sorted(clean))
        return data.where(~mask), data.where(mask)


# -- learners ----------------------------------------------------------------

class ConstantModel:
    def __init__(self, label: int):
        self.label = int(label)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.full(len(X), self.label, dtype=np.int64)


class CentroidModel:
    def __init__(self, centroids: np.ndarray, classes: np.ndarray):
        self.centroids = centroids
        self.classes = classes

    def predict(self, X: np.ndarray) -> np.ndarray:
        d2 = ((X[:, None, :] - self.centroids[None, :, :]) ** 2).sum(-1)
        return self.classes[np.argmin(d2, axis=1)]


class KNNModel:
    """k-nearest neighbours over the (possibly repeated) training points."""

    def __init__(self, X: np.ndarray, y: np.ndarray, k: int):
        self.X, self.y, self.k = X, y, min(k, len(X))
        self.sq = (X ** 2).sum(axis=1)

    def predict(self, Z: np.ndarray) -> np.ndarray:
        d2 = self.sq[None, :] - 2.0 * Z @ self.X.T
        nearest = np.argsort(d2, axis=1, kind="stable")[:, :self.k]
        votes = self.y[nearest]
        width = int(self.y.max()) + 1
        counts = np.stack([np.bincount(row, minlength=width) for row in votes])
        return counts.argmax(axis=1)


class LogisticModel:
    def __init__(self, W: np.ndarray, b: np.ndarray, classes: np.ndarray):
        self.W = W
        self.b = b
        self.classes = classes

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.classes[np.argmax(X @ self.W + self.b, axis=1)]


@dataclass(frozen=True)
class LearnerSpec:
    """Base learner: ``centroid`` (nearest centroid), ``logistic`` (softmax SGD)
    or ``knn`` (k-nearest neighbours)."""

    kind: str = "logistic"
    epochs: int = 3
    lr: float = 0.5
    l2: float = 1e-4
    batch_size: int = 64
    k: int = 5

    def __post_init__(self):
        if self.kind not in ("centroid", "logistic", "knn"):
            raise ValueError(f"unknown learner {self.kind!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.lr <= 0 or self.l2 < 0 or self.k < 1:
            raise ValueError("learner hyperparameters must be positive")

    def fit(self, X: np.ndarray, y: np.ndarray, classes: Sequence[int], rng: np.random.Generator):
        classes = np.asarray(classes, dtype=np.int64)
        if self.kind == "centroid":
            present = np.array([c for c in classes if np.any(y == c)], dtype=np.int64)
            cents = np.stack([X[y == c].mean(axis=0) for c in present])
            return CentroidModel(cents, present)
        if self.kind == "knn":
            return KNNModel(np.asarray(X, dtype=float), np.asarray(y, dtype=np.int64), self.k)
        return self._fit_logistic(X, y, classes, rng)

    def _fit_logistic(self, X, y, classes, rng):
        lookup = {int(c): i for i, c in enumerate(classes)}
        target = np.array([lookup[int(v)] for v in y])
        n, d = X.shape
        k = len(classes)
        W = np.zeros((d, k))
        b = np.zeros(k)
        onehot = np.eye(k)[target]
        for _ in range(self.epochs):
            order = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                batch = order[start:start + self.batch_size]
                z = X[batch] @ W + b
                z -= z.max(axis=1, keepdims=True)
                prob = np.exp(z)
                prob /= prob.sum(axis=1, keepdims=True)
                err = (prob - onehot[batch]) / len(batch)
                W -= self.lr * (X[batch].T @ err + self.l2 * W)
                b -= self.lr * err.sum(axis=0)
        return LogisticModel(W, b, classes)


def weighted_balance_expand(labels: np.ndarray, target_size: int,
                            seed) -> np.ndarray:
    """Positions (with repeats) of ``target_size`` class-balanced draws from ``labels``.

    Each element is drawn with weight ``1 / (count of its class)``.
    """
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ValueError("cannot expand an empty subset")
    if target_size < 1:
        raise ValueError(f"target_size must be positive, got {target_size}")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    _, inverse, counts = np.unique(labels, return_inverse=True, return_counts=True)
    weights = 1.0 / counts[inverse]
    return rng.choice(len(labels), size=target_size, replace=True, p=weights / weights.sum())


# -- ensembles ---------------------------------------------------------------

@dataclass
class Normalizer:
    lo: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Normalizer":
        lo = X.min(axis=0)
        span = X.max(axis=0) - lo
        return cls(lo, np.where(span > 0, span, 1.0))

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return (X - self.lo) / self.scale


@dataclass
class Ensemble:
    members: list
    n_classes: int
    normalizer: Normalizer
    dim: int

    @property
    def T(self) -> int:
        return len(self.members)

    def _prep(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim} features, got shape {X.shape}")
        return self.normalizer(X)

    def member_predictions(self, X: np.ndarray) -> np.ndarray:
        """``(T, len(X))`` array of member predictions."""
        Z = self._prep(X)
        return np.stack([m.predict(Z) for m in self.members])

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Majority vote; ties go to the smaller class id."""
        preds = self.member_predictions(X)
        counts = np.stack([np.bincount(col, minlength=self.n_classes) for col in preds.T])
        return counts.argmax(axis=1)


@dataclass
class TwoPhaseEnsemble(Ensemble):
    """Phase-1 members separate a virtual clean class from the poisoned classes;
    the shared phase-2 model resolves the clean classes."""

    phase2: object = None
    virtual: int = -1

    def member_predictions(self, X: np.ndarray) -> np.ndarray:
        Z = self._prep(X)
        first = np.stack([m.predict(Z) for m in self.members])
        second = self.phase2.predict(Z)
        return np.where(first == self.virtual, second[None, :], first)

    def member(self, i: int) -> "ComposedModel":
        return ComposedModel(self.members[i], self.phase2, self.virtual)


class ComposedModel:
    """A stand-alone base classifier over all classes: phase 2 after phase 1."""

    def __init__(self, phase1, phase2, virtual: int):
        self.phase1, self.phase2, self.virtual = phase1, phase2, virtual

    def predict(self, Z: np.ndarray) -> np.ndarray:
        out = self.phase1.predict(Z)
        hit = out == self.virtual
        if hit.any():
            out = out.copy()
            out[hit] = self.phase2.predict(Z[hit])
        return out


def _check_scheme(scheme: SelectionScheme, n_p: int) -> None:
    if n_p < 1:
        raise ValueError("the potentially poisoned part is empty")
    if isinstance(scheme, WithoutReplacement) and scheme.n_s > n_p:
        raise ValueError(f"n_s={scheme.n_s} exceeds the {n_p} poisonable samples")


def _majority_label(labels: np.ndarray) -> int:
    if len(labels) == 0:
        return 0
    return int(np.bincount(labels).argmax())


def _train_members(D_p: Dataset, D_c: Dataset, scheme: SelectionScheme, T: int,
                   learner: LearnerSpec, master_seed: int, norm: Normalizer,
                   classes: np.ndarray, clean_label: np.ndarray | None,
                   expand_size: int, workers: int) -> list:
    Xp, Xc = norm(D_p.features), norm(D_c.features)
    yc = D_c.labels if clean_label is None else clean_label
    fallback = _majority_label(yc)

    def one(i: int):
        rng = make_rng((master_seed, i))
        idx = sample_indices(scheme, len(D_p), rng)
        if len(idx) == 0:
            return ConstantModel(fallback)
        X = np.concatenate([Xp[idx], Xc])
        y = np.concatenate([D_p.labels[idx], yc])
        pos = weighted_balance_expand(y, expand_size, rng)
        return learner.fit(X[pos], y[pos], classes, rng)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, range(T)))
    return [one(i) for i in range(T)]


def _setup(D_p: Dataset, D_c: Dataset | None, T: int):
    if T < 1:
        raise ValueError(f"T must be positive, got {T}")
    D_c = empty_like(D_p) if D_c is None else D_c
    if D_c.dim != D_p.dim:
        raise ValueError("clean and poisoned parts differ in feature dimension")
    n_classes = max(D_p.n_classes, D_c.n_classes)
    norm = Normalizer.fit(np.concatenate([D_p.features, D_c.features]))
    return D_c, n_classes, norm


def train_ensemble_case12(D_p: Dataset, D_c: Dataset | None, scheme: SelectionScheme, T: int,
                          learner: LearnerSpec, master_seed: int,
                          expand_size: int = DEFAULT_EXPAND, workers: int = 1) -> Ensemble:
    """Train ``T`` members, member ``i`` on a balanced expansion of ``mu(D_p) + D_c``."""
    _check_scheme(scheme, len(D_p))
    D_c, n_classes, norm = _setup(D_p, D_c, T)
    classes = np.arange(n_classes)
    members = _train_members(D_p, D_c, scheme, T, learner, master_seed, norm, classes,
                             None, expand_size, workers)
    return Ensemble(members, n_classes, norm, D_p.dim)


def train_ensemble_case3(D_p: Dataset, D_c: Dataset, scheme: SelectionScheme, T: int,
                         learner: LearnerSpec, master_seed: int,
                         expand_size: int = DEFAULT_EXPAND, workers: int = 1) -> TwoPhaseEnsemble:
    """2-phase training: ``D_c`` holds every sample of the clean classes, ``D_p`` the rest."""
    _check_scheme(scheme, len(D_p))
    if len(D_c) == 0:
        raise ValueError("case 3 needs clean-class samples")
    D_c, n_classes, norm = _setup(D_p, D_c, T)
    clean = np.unique(D_c.labels)
    poisoned = np.unique(D_p.labels)
    if np.intersect1d(clean, poisoned).size:
        raise ValueError("clean and poisoned parts share classes")
    virtual = n_classes
    phase1_classes = np.append(poisoned, virtual)
    members = _train_members(D_p, D_c, scheme, T, learner, master_seed, norm, phase1_classes,
                             np.full(len(D_c), virtual), expand_size, workers)
    rng = make_rng((master_seed, T, 2))
    Xc = norm(D_c.features)
    pos = weighted_balance_expand(D_c.labels, max(expand_size, len(D_c)), rng)
    phase2 = learner.fit(Xc[pos], D_c.labels[pos], clean, rng)
    return TwoPhaseEnsemble(members, n_classes, norm, D_p.dim, phase2=phase2, virtual=virtual)


def predict_votes(ensemble: Ensemble, test: Dataset, labelled: bool = True) -> list[VoteRecord]:
    """One vote record per test example; counts over the ``T`` members."""
    preds = ensemble.member_predictions(test.features)
    out = []
    for j in range(len(test)):
        values, counts = np.unique(preds[:, j], return_counts=True)
        out.append(VoteRecord(
            example_id=test.ids[j],
            counts={int(v): int(c) for v, c in zip(values, counts)},
            trials=ensemble.T,
            true_label=int(test.labels[j]) if labelled else None,
        ))
    return out


def make_blobs(n: int, d: int, k: int, separation: float, seed: int,
               sigma: float = 1.0) -> Dataset:
    """Gaussian blobs with ``k`` balanced classes; class centres pairwise ``separation`` apart
    when ``k <= d``."""
    if k < 1 or n < 1 or d < 1:
        raise ValueError("need k, n and d all positive")
    if separation < 0 or sigma <= 0:
        raise ValueError("separation must be >= 0 and sigma > 0")
    rng = make_rng(seed)
    if k <= d:
        centres = np.eye(d)[:k] * (separation / np.sqrt(2.0))
    else:
        centres = rng.normal(size=(k, d))
        centres *= separation / np.sqrt(2.0) / np.linalg.norm(centres, axis=1, keepdims=True)
    labels = rng.permutation(np.arange(n) % k)
    X = centres[labels] + sigma * rng.normal(size=(n, d))
    return Dataset(X, labels, [f"s{i}" for i in range(n)], k)


def split(data: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    rng = make_rng(seed)
    order = rng.permutation(len(data))
    cut = int(round(len(data) * (1 - test_fraction)))
    return data.take(np.sort(order[:cut])), data.take(np.sort(order[cut:]))
