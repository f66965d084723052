"""CART classification trees with Gini splits, bagged into a random forest."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import MLError


@dataclass
class Tree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    label: np.ndarray  # class index predicted at each node

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf class index for each row."""
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            n = node[idx]
            go_left = X[idx, self.feature[n]] <= self.threshold[n]
            node[idx] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] >= 0
        return self.label[node]

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("feature", "threshold", "left", "right", "label")}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            np.array(d["feature"], np.int64),
            np.array(d["threshold"], float),
            np.array(d["left"], np.int64),
            np.array(d["right"], np.int64),
            np.array(d["label"], np.int64),
        )


def _majority(counts: np.ndarray) -> int:
    return int(np.argmax(counts))  # first maximum = smallest class index


def _best_split(x: np.ndarray, y: np.ndarray, n_classes: int):
    """Lowest weighted Gini over thresholds of one feature, or None if x is constant."""
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    n = len(xs)
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), ys] = 1.0
    left = np.cumsum(onehot, axis=0)[:-1]
    total = left[-1] + onehot[-1]
    right = total - left
    nl = np.arange(1, n, dtype=float)
    nr = n - nl
    valid = xs[1:] > xs[:-1]
    if not valid.any():
        return None
    gini_l = 1.0 - np.sum(left ** 2, axis=1) / nl ** 2
    gini_r = 1.0 - np.sum(right ** 2, axis=1) / nr ** 2
    score = (nl * gini_l + nr * gini_r) / n
    score = np.where(valid, score, np.inf)
    k = int(np.argmin(score))
    return float(score[k]), 0.5 * (xs[k] + xs[k + 1])


def grow_tree(X: np.ndarray, y: np.ndarray, n_classes: int, max_features: int, rng: np.random.Generator,
              min_split: int = 3) -> Tree:
    """Unpruned tree; a node becomes a leaf when pure or holding fewer than ``min_split`` rows.

    At each node ``max_features`` features are drawn without replacement; if
    none of them is splittable the remaining ones are tried in random order.
    """
    d = X.shape[1]
    feature, threshold, left, right, label = [], [], [], [], []

    def new_node(rows):
        counts = np.bincount(y[rows], minlength=n_classes)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        label.append(_majority(counts))
        return len(feature) - 1, counts

    root, counts = new_node(np.arange(len(y)))
    stack = [(root, np.arange(len(y)), counts)]
    while stack:
        node, rows, counts = stack.pop()
        if rows.size < min_split or np.count_nonzero(counts) <= 1:
            continue
        perm = rng.permutation(d)
        best = None
        for pos, f in enumerate(perm):
            if pos >= max_features and best is not None:
                break
            res = _best_split(X[rows, f], y[rows], n_classes)
            if res is not None and (best is None or res[0] < best[0]):
                best = (res[0], res[1], int(f))
        if best is None:
            continue
        _, thr, f = best
        mask = X[rows, f] <= thr
        lrows, rrows = rows[mask], rows[~mask]
        ln, lc = new_node(lrows)
        rn, rc = new_node(rrows)
        feature[node], threshold[node], left[node], right[node] = f, thr, ln, rn
        stack.append((rn, rrows, rc))
        stack.append((ln, lrows, lc))
    return Tree(
        np.array(feature, np.int64), np.array(threshold, float),
        np.array(left, np.int64), np.array(right, np.int64), np.array(label, np.int64),
    )


def default_max_features(d: int) -> int:
    return max(1, math.ceil(math.sqrt(d)))


def tree_seeds(seed: int, n_trees: int) -> list[np.random.SeedSequence]:
    """Independent per-tree streams, so trees can be grown in any order or in parallel."""
    return np.random.SeedSequence(seed).spawn(n_trees)


def grow_forest_tree(X, y, n_classes, max_features, seed_seq, bootstrap=True):
    """One bagged tree; returns (tree, in-bag mask)."""
    rng = np.random.default_rng(seed_seq)
    n = len(y)
    if bootstrap:
        rows = rng.integers(0, n, size=n)
    else:
        rows = np.arange(n)
    in_bag = np.zeros(n, bool)
    in_bag[rows] = True
    return grow_tree(X[rows], y[rows], n_classes, max_features, rng), in_bag


def forest_votes(trees: list[Tree], X: np.ndarray, n_classes: int) -> np.ndarray:
    votes = np.zeros((len(X), n_classes), dtype=np.int64)
    for t in trees:
        votes[np.arange(len(X)), t.apply(X)] += 1
    return votes


def oob_accuracy(trees: list[Tree], in_bag: list[np.ndarray], X: np.ndarray, y: np.ndarray, n_classes: int) -> float:
    """Accuracy of the vote over trees that did not see each row."""
    votes = np.zeros((len(X), n_classes), dtype=np.int64)
    for t, bag in zip(trees, in_bag):
        out = np.flatnonzero(~bag)
        if out.size:
            votes[out, t.apply(X[out])] += 1
    seen = votes.sum(axis=1) > 0
    if not seen.any():
        raise MLError("no out-of-bag rows")
    pred = np.argmax(votes[seen], axis=1)
    return float(np.mean(pred == y[seen]))
