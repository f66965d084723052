"""Train/test partitioning and z-score normalisation."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np


class MLError(ValueError):
    pass


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise MLError("train_fraction must lie in (0, 1)")


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class Split:
    train: np.ndarray  # row indices, ascending
    test: np.ndarray

    @property
    def identity(self) -> str:
        """Digest of the partition, recorded so every model can be checked against it."""
        h = hashlib.sha256()
        h.update(np.asarray(self.train, dtype=np.int64).tobytes())
        h.update(b"|")
        h.update(np.asarray(self.test, dtype=np.int64).tobytes())
        return h.hexdigest()[:16]


def split_indices(labels, spec: SplitSpec = SplitSpec()) -> Split:
    """Seeded 70/30-style partition of row indices.

    Stratified: classes are visited in sorted label order, each shuffled with
    the shared generator, and the first round_half_up(f * n_c) rows (kept
    within [1, n_c - 1]) go to training.  Unstratified: the same rule over all
    rows at once.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(spec.seed)
    if spec.stratified:
        groups = [np.flatnonzero(labels == c) for c in sorted(set(labels.tolist()))]
    else:
        groups = [np.arange(len(labels))]
    train, test = [], []
    for g in groups:
        if g.size < 2:
            raise MLError(f"class {labels[g[0]]!r} has {g.size} row; need at least 2")
        perm = g[rng.permutation(g.size)]
        k = min(max(round_half_up(spec.train_fraction * g.size), 1), g.size - 1)
        train.append(perm[:k])
        test.append(perm[k:])
    return Split(np.sort(np.concatenate(train)), np.sort(np.concatenate(test)))


def stratified_split(table, spec: SplitSpec = SplitSpec()):
    """(train, test) sub-tables of a FeatureTable."""
    s = split_indices(table.labels, spec)
    return table.subset(s.train), table.subset(s.test)


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray
    zero_variance: np.ndarray  # bool per feature; those map to 0

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "zero_variance": self.zero_variance.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(np.array(d["mean"], float), np.array(d["std"], float), np.array(d["zero_variance"], bool))


def zscore_fit(rows) -> Normalizer:
    """Per-feature mean and sample standard deviation of the training rows."""
    X = np.atleast_2d(np.asarray(rows, dtype=float))
    if X.shape[0] < 2:
        raise MLError("need at least 2 training rows")
    if not np.all(np.isfinite(X)):
        raise MLError("training rows contain NaN or Inf")
    mean = X.mean(axis=0)
    std = X.std(axis=0, ddof=1)
    return Normalizer(mean, std, std == 0)


def zscore_apply(norm: Normalizer, rows) -> np.ndarray:
    X = np.atleast_2d(np.asarray(rows, dtype=float))
    if X.shape[1] != norm.mean.size:
        raise MLError(f"expected {norm.mean.size} features, got {X.shape[1]}")
    safe = np.where(norm.zero_variance, 1.0, norm.std)
    return np.where(norm.zero_variance, 0.0, (X - norm.mean) / safe)
