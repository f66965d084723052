"""Classifier bench on feature tables and the pairwise-feature search."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import MLError, Normalizer, Split, SplitSpec, split_indices, zscore_apply, zscore_fit
from .models import ConfusionMatrix, ModelSpec, TrainedModel, default_specs, evaluate, train


def class_order(labels) -> list[str]:
    """Healthy first, then the remaining labels sorted."""
    uniq = sorted(set(np.asarray(labels).tolist()))
    return (["Healthy"] if "Healthy" in uniq else []) + [u for u in uniq if u != "Healthy"]


@dataclass
class BenchResult:
    features: list[str]
    split: Split
    normalizer: Normalizer
    models: dict[str, TrainedModel]
    confusion: dict[str, ConfusionMatrix]
    n_dropped: int  # rows lacking one of the features

    @property
    def accuracies(self) -> dict[str, float]:
        return {k: cm.accuracy for k, cm in self.confusion.items()}


def run_bench(
    table,
    features: Sequence[str],
    specs: Sequence[ModelSpec] | None = None,
    split_spec: SplitSpec = SplitSpec(),
    split: Split | None = None,
    classes: Sequence[str] | None = None,
    threads: int = 1,
) -> BenchResult:
    """Normalise on the training rows, then train and test every model on one split.

    The split is drawn over the whole table so that every feature subset sees
    the same partition; rows missing a selected feature are then dropped from
    whichever side they fall on.
    """
    specs = list(specs) if specs is not None else default_specs(split_spec.seed)
    features = list(features)
    if not features:
        raise MLError("no features selected")
    split = split or split_indices(table.labels, split_spec)
    X = table.select(features)
    y = table.labels
    classes = list(classes) if classes is not None else class_order(y)
    ok = np.all(np.isfinite(X), axis=1)
    tr = split.train[ok[split.train]]
    te = split.test[ok[split.test]]
    norm = zscore_fit(X[tr])
    Xtr, Xte = zscore_apply(norm, X[tr]), zscore_apply(norm, X[te])
    models, confusion = {}, {}
    for spec in specs:
        name = spec.kind.value
        m = train(spec, Xtr, y[tr], classes=classes, threads=threads)
        models[name] = m
        confusion[name] = evaluate(m, Xte, y[te])
    return BenchResult(features, split, norm, models, confusion, int(np.sum(~ok)))


@dataclass(frozen=True)
class PairScore:
    pair: tuple[str, str]
    accuracies: dict
    rank_position: int  # order of the pair among the candidate combinations

    @property
    def best(self) -> float:
        return max(self.accuracies.values())

    @property
    def mean(self) -> float:
        return float(np.mean(list(self.accuracies.values())))


@dataclass
class PairSearchResult:
    scores: list[PairScore]  # ranked
    split: Split
    n_evaluations: int

    def top(self, n: int = 5) -> list[PairScore]:
        return self.scores[:n]


def pairwise_feature_search(
    table,
    features: Sequence[str],
    specs: Sequence[ModelSpec] | None = None,
    split_spec: SplitSpec = SplitSpec(),
    threads: int = 1,
) -> PairSearchResult:
    """Every unordered pair of ``features`` through every model on one shared split.

    Pairs rank by best-model accuracy, then mean accuracy over models, then
    by the order of ``features`` (pass them in ANOVA rank order).
    """
    features = list(features)
    if len(features) < 2:
        raise MLError("pair search needs at least 2 features")
    specs = list(specs) if specs is not None else default_specs(split_spec.seed)
    split = split_indices(table.labels, split_spec)
    classes = class_order(table.labels)
    scores = []
    for pos, pair in enumerate(itertools.combinations(features, 2)):
        res = run_bench(table, pair, specs, split=split, classes=classes, threads=threads)
        scores.append(PairScore(tuple(pair), res.accuracies, pos))
    scores.sort(key=lambda s: (-s.best, -s.mean, s.rank_position))
    return PairSearchResult(scores, split, len(scores) * len(specs))
