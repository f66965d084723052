"""The four classifiers behind one train / predict / evaluate interface."""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Sequence

import numpy as np

from . import forest, svm
from .data import MLError

MODEL_DEFAULTS: dict[str, dict[str, Any]] = {
    "SVM": {"kernel": "RBF", "c": 1.0, "gamma": None, "multiclass": "one-vs-one", "tol": 1e-3, "max_iter": 100_000},
    "KNN": {"k": 5, "metric": "Euclidean"},
    "NB": {"variance_floor": 1e-9},
    "RF": {"n_trees": 100, "max_features": None, "criterion": "Gini", "bootstrap": True, "seed": 0, "oob": False},
}


class ModelKind(str, Enum):
    SVM = "SVM"
    KNN = "KNN"
    NB = "NB"
    RF = "RF"


@dataclass(frozen=True)
class ModelSpec:
    kind: ModelKind
    hyperparams: tuple = ()  # sorted (name, value) pairs; use .params for a dict

    def __post_init__(self):
        kind = ModelKind(self.kind)
        object.__setattr__(self, "kind", kind)
        merged = dict(MODEL_DEFAULTS[kind.value])
        given = dict(self.hyperparams)
        unknown = set(given) - set(merged)
        if unknown:
            raise MLError(f"{kind.value}: unknown hyperparameters {sorted(unknown)}")
        merged.update(given)
        object.__setattr__(self, "hyperparams", tuple(sorted(merged.items())))
        p = merged
        if kind is ModelKind.SVM:
            if p["kernel"] != "RBF" or p["multiclass"] != "one-vs-one":
                raise MLError("SVM supports the RBF kernel with one-vs-one voting only")
            if not p["c"] > 0 or (p["gamma"] is not None and not p["gamma"] > 0) or not p["tol"] > 0:
                raise MLError("SVM c, gamma and tol must be positive")
        elif kind is ModelKind.KNN:
            if int(p["k"]) < 1 or p["metric"] != "Euclidean":
                raise MLError("KNN needs k >= 1 and the Euclidean metric")
        elif kind is ModelKind.NB:
            if not p["variance_floor"] > 0:
                raise MLError("NB variance_floor must be positive")
        elif kind is ModelKind.RF:
            if int(p["n_trees"]) < 1 or p["criterion"] != "Gini":
                raise MLError("RF needs n_trees >= 1 and the Gini criterion")
            if p["max_features"] is not None and int(p["max_features"]) < 1:
                raise MLError("RF max_features must be >= 1")

    @classmethod
    def of(cls, kind, **hyperparams) -> "ModelSpec":
        return cls(ModelKind(kind), tuple(sorted(hyperparams.items())))

    @property
    def params(self) -> dict:
        return dict(self.hyperparams)


def default_specs(seed: int = 0) -> list[ModelSpec]:
    """RF, SVM, KNN and NB with their default hyperparameters."""
    return [
        ModelSpec.of("RF", seed=seed),
        ModelSpec.of("SVM"),
        ModelSpec.of("KNN"),
        ModelSpec.of("NB"),
    ]


@dataclass
class TrainedModel:
    spec: ModelSpec
    classes: list[str]
    n_features: int
    state: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        st = {}
        for k, v in self.state.items():
            if k == "machines":
                st[k] = [[i, j, m.to_dict()] for (i, j), m in v.items()]
            elif k == "trees":
                st[k] = [t.to_dict() for t in v]
            elif isinstance(v, np.ndarray):
                st[k] = v.tolist()
            else:
                st[k] = v
        return {
            "kind": self.spec.kind.value,
            "hyperparams": self.spec.params,
            "classes": list(self.classes),
            "n_features": self.n_features,
            "state": st,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedModel":
        spec = ModelSpec.of(d["kind"], **d["hyperparams"])
        st = dict(d["state"])
        if "machines" in st:
            st["machines"] = {(int(i), int(j)): svm.BinarySVM.from_dict(m) for i, j, m in st["machines"]}
        if "trees" in st:
            st["trees"] = [forest.Tree.from_dict(t) for t in st["trees"]]
        for k in ("X", "means", "variances", "log_priors"):
            if k in st:
                st[k] = np.array(st[k], float)
        if "y" in st:
            st["y"] = np.array(st["y"], np.int64)
        return cls(spec, list(d["classes"]), int(d["n_features"]), st)


def _encode(y, classes: Sequence[str] | None) -> tuple[list[str], np.ndarray]:
    y = np.asarray(y)
    if classes is None:
        classes = list(dict.fromkeys(y.tolist()))
    classes = list(classes)
    lookup = {c: i for i, c in enumerate(classes)}
    try:
        codes = np.array([lookup[v] for v in y.tolist()], dtype=np.int64)
    except KeyError as exc:
        raise MLError(f"label {exc.args[0]!r} not among the classes") from None
    return classes, codes


def train(
    spec: ModelSpec, X, y, classes: Sequence[str] | None = None, threads: int = 1
) -> TrainedModel:
    """Fit one classifier on normalised rows ``X`` with labels ``y``.

    ``classes`` fixes the class-index order used for tie-breaking and for
    confusion matrices; by default it is the order of first appearance.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    classes, codes = _encode(y, classes)
    if len(X) != len(codes):
        raise MLError("row and label counts differ")
    if not np.all(np.isfinite(X)):
        raise MLError("training rows contain NaN or Inf")
    if len(np.unique(codes)) < 2:
        raise MLError("training data holds a single class")
    p = spec.params
    n_classes = len(classes)
    d = X.shape[1]
    state: dict[str, Any] = {}
    if spec.kind is ModelKind.KNN:
        state = {"X": X.copy(), "y": codes}
    elif spec.kind is ModelKind.NB:
        means = np.zeros((n_classes, d))
        variances = np.ones((n_classes, d))
        counts = np.bincount(codes, minlength=n_classes)
        floor = p["variance_floor"] * X.var(axis=0)
        floor = np.where(floor > 0, floor, p["variance_floor"])
        for c in range(n_classes):
            if counts[c]:
                rows = X[codes == c]
                means[c] = rows.mean(axis=0)
                variances[c] = rows.var(axis=0)
        with np.errstate(divide="ignore"):
            log_priors = np.log(counts / counts.sum())
        state = {"means": means, "variances": variances + floor, "log_priors": log_priors}
    elif spec.kind is ModelKind.SVM:
        gamma = p["gamma"] if p["gamma"] is not None else 1.0 / d
        present = [c for c in range(n_classes) if np.any(codes == c)]
        pairs = list(itertools.combinations(present, 2))

        def fit_pair(pair):
            i, j = pair
            rows = (codes == i) | (codes == j)
            yy = np.where(codes[rows] == i, 1.0, -1.0)
            machine, _ = svm.train_binary(X[rows], yy, p["c"], gamma, p["tol"], int(p["max_iter"]))
            return machine

        machines = _map(fit_pair, pairs, threads)
        state = {"gamma": gamma, "machines": dict(zip(pairs, machines))}
    elif spec.kind is ModelKind.RF:
        mf = int(p["max_features"]) if p["max_features"] is not None else forest.default_max_features(d)
        seeds = forest.tree_seeds(int(p["seed"]), int(p["n_trees"]))
        grown = _map(
            lambda s: forest.grow_forest_tree(X, codes, n_classes, min(mf, d), s, bool(p["bootstrap"])),
            seeds, threads,
        )
        trees = [g[0] for g in grown]
        state = {"trees": trees, "max_features": min(mf, d)}
        if p["oob"] and p["bootstrap"]:
            state["oob_accuracy"] = forest.oob_accuracy(trees, [g[1] for g in grown], X, codes, n_classes)
    return TrainedModel(spec, classes, d, state)


def _map(fn, items, threads):
    items = list(items)
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def _first_max(scores: np.ndarray) -> np.ndarray:
    return np.argmax(scores, axis=1)  # ties resolve to the smallest class index


def predict_codes(model: TrainedModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_features:
        raise MLError(f"model expects {model.n_features} features, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise MLError("rows contain NaN or Inf")
    n_classes = len(model.classes)
    st = model.state
    kind = model.spec.kind
    if kind is ModelKind.KNN:
        k = min(int(model.spec.params["k"]), len(st["y"]))
        out = np.empty(len(X), dtype=np.int64)
        for start in range(0, len(X), 512):
            chunk = X[start:start + 512]
            dist = np.sum((chunk[:, None, :] - st["X"][None, :, :]) ** 2, axis=2)
            # order by distance, then class index, then training row
            order = np.lexsort((np.broadcast_to(np.arange(dist.shape[1]), dist.shape),
                                np.broadcast_to(st["y"], dist.shape), dist), axis=1)
            near = st["y"][order[:, :k]]
            votes = np.zeros((len(chunk), n_classes), dtype=np.int64)
            for col in range(k):
                votes[np.arange(len(chunk)), near[:, col]] += 1
            out[start:start + 512] = _first_max(votes)
        return out
    if kind is ModelKind.NB:
        m, v, lp = st["means"], st["variances"], st["log_priors"]
        ll = -0.5 * np.sum(np.log(2 * np.pi * v)[None] + (X[:, None, :] - m[None]) ** 2 / v[None], axis=2)
        return _first_max(ll + lp[None])
    if kind is ModelKind.SVM:
        votes = np.zeros((len(X), n_classes), dtype=np.int64)
        for (i, j), machine in st["machines"].items():
            win_i = machine.decision(X) > 0
            votes[win_i, i] += 1
            votes[~win_i, j] += 1
        return _first_max(votes)
    if kind is ModelKind.RF:
        return _first_max(forest.forest_votes(st["trees"], X, n_classes))
    raise MLError(f"unknown model kind {kind}")


def predict(model: TrainedModel, X) -> np.ndarray:
    return np.array(model.classes, dtype=object)[predict_codes(model, X)]


@dataclass(frozen=True)
class ConfusionMatrix:
    classes: list[str]
    counts: np.ndarray  # rows actual, columns predicted

    @property
    def accuracy(self) -> float:
        total = int(self.counts.sum())
        return float(np.trace(self.counts) / total) if total else float("nan")

    @property
    def row_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @classmethod
    def from_labels(cls, actual, predicted, classes: Sequence[str]) -> "ConfusionMatrix":
        _, a = _encode(actual, classes)
        _, p = _encode(predicted, classes)
        counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
        np.add.at(counts, (a, p), 1)
        return cls(list(classes), counts)


def evaluate(model: TrainedModel, X, y) -> ConfusionMatrix:
    return ConfusionMatrix.from_labels(y, predict(model, X), model.classes)
