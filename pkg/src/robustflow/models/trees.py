"""Flat-array binary trees and the greedy gini decision-tree builder.

Trees are stored as parallel arrays (feature, threshold, children,
leaf payload) so batch prediction is a handful of vectorized routing
steps per depth level. The split convention everywhere is
``value <= threshold`` goes left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DataError

LEAF = -1


@dataclass
class Tree:
    """One binary tree. ``feature[i] == -1`` marks node i as a leaf.

    ``leaf_counts`` holds per-class training counts for classification
    trees; ``leaf_value`` holds the additive output of boosting and
    isolation trees. Exactly one of the two is populated.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_counts: np.ndarray | None = None
    leaf_value: np.ndarray | None = None

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Route every row to its leaf; returns leaf node indices."""
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.int32)
        while True:
            active = np.flatnonzero(self.feature[node] >= 0)
            if active.size == 0:
                return node
            cur = node[active]
            go_left = X[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])

    def values(self, X: np.ndarray) -> np.ndarray:
        return self.leaf_value[self.apply(X)]

    def counts(self, X: np.ndarray) -> np.ndarray:
        return self.leaf_counts[self.apply(X)]

    def max_depth(self) -> int:
        depth = np.zeros(self.feature.shape[0], dtype=np.int32)
        out = 0
        for i in range(self.feature.shape[0]):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[i] + 1
                depth[self.right[i]] = depth[i] + 1
            else:
                out = max(out, int(depth[i]))
        return out

    def to_json(self) -> dict:
        doc = {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
        }
        if self.leaf_counts is not None:
            doc["leaf_counts"] = self.leaf_counts.tolist()
        if self.leaf_value is not None:
            doc["leaf_value"] = self.leaf_value.tolist()
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "Tree":
        return cls(
            feature=np.array(doc["feature"], dtype=np.int32),
            threshold=np.array(doc["threshold"], dtype=np.float64),
            left=np.array(doc["left"], dtype=np.int32),
            right=np.array(doc["right"], dtype=np.int32),
            leaf_counts=(
                np.array(doc["leaf_counts"], dtype=np.float64)
                if "leaf_counts" in doc
                else None
            ),
            leaf_value=(
                np.array(doc["leaf_value"], dtype=np.float64) if "leaf_value" in doc else None
            ),
        )


class _TreeBuffer:
    """Append-only node storage while a tree is being grown."""

    def __init__(self, n_classes: int | None):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.payload: list = []
        self.n_classes = n_classes

    def add(self) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(0)
        self.right.append(0)
        self.payload.append(None)
        return len(self.feature) - 1

    def finish(self) -> Tree:
        n = len(self.feature)
        tree = Tree(
            feature=np.array(self.feature, dtype=np.int32),
            threshold=np.array(self.threshold, dtype=np.float64),
            left=np.array(self.left, dtype=np.int32),
            right=np.array(self.right, dtype=np.int32),
        )
        if self.n_classes is None:
            tree.leaf_value = np.array(
                [0.0 if p is None else p for p in self.payload], dtype=np.float64
            )
        else:
            counts = np.zeros((n, self.n_classes), dtype=np.float64)
            for i, p in enumerate(self.payload):
                if p is not None:
                    counts[i] = p
            tree.leaf_counts = counts
        return tree


def gini_impurity(counts: np.ndarray) -> float:
    """1 - sum(p^2) from raw class counts."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(1.0 - np.sum(p * p))


def gini_gain(parent: np.ndarray, left: np.ndarray, right: np.ndarray) -> float:
    """Impurity decrease of splitting ``parent`` into ``left``/``right``."""
    n = parent.sum()
    nl = left.sum()
    nr = right.sum()
    if n == 0:
        return 0.0
    return gini_impurity(parent) - (
        nl / n * gini_impurity(left) + nr / n * gini_impurity(right)
    )


def _best_split_for_feature(x, one_hot, parent_counts, min_samples_leaf):
    """Best (gain, threshold) over midpoints of sorted unique values."""
    order = np.argsort(x, kind="stable")
    xs = x[order]
    cum = np.cumsum(one_hot[order], axis=0)
    n = xs.shape[0]
    pos = np.flatnonzero(xs[:-1] < xs[1:])
    if pos.size == 0:
        return None
    n_left = pos + 1
    ok = (n_left >= min_samples_leaf) & ((n - n_left) >= min_samples_leaf)
    pos = pos[ok]
    if pos.size == 0:
        return None
    left = cum[pos]
    right = parent_counts[None, :] - left
    total = float(n)
    nl = left.sum(axis=1)
    nr = total - nl
    def imp(c, size):
        p = c / size[:, None]
        return 1.0 - np.sum(p * p, axis=1)
    gains = gini_impurity(parent_counts) - (
        nl / total * imp(left, nl) + nr / total * imp(right, nr)
    )
    # zero-gain splits are allowed: deeper levels may still separate
    # (the XOR case); stopping is handled by purity/depth/leaf-size
    best = int(np.argmax(gains))
    threshold = 0.5 * (xs[pos[best]] + xs[pos[best] + 1])
    return float(gains[best]), threshold


@dataclass(frozen=True)
class TreeParams:
    """Classification-tree knobs (gini criterion throughout)."""

    max_depth: int = 16
    min_samples_leaf: int = 1
    max_features: int | str | None = None  # int, "sqrt", or None for all

    def __post_init__(self):
        if self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1")
        if self.min_samples_leaf < 1:
            raise ConfigError("min_samples_leaf must be >= 1")


def resolve_max_features(max_features, n_features: int) -> int:
    if max_features is None:
        return n_features
    if max_features == "sqrt":
        return max(1, int(math.sqrt(n_features)))
    k = int(max_features)
    if not 1 <= k <= n_features:
        raise ConfigError(f"max_features {k} outside [1, {n_features}]")
    return k


def grow_classification_tree(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    params: TreeParams,
    rng: np.random.Generator,
) -> Tree:
    """Greedy best-gini-gain growth with a fresh random feature subset
    per node; leaves store class counts."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.intp)
    if X.shape[0] == 0:
        raise DataError("cannot grow a tree on zero rows")
    one_hot = np.zeros((X.shape[0], n_classes), dtype=np.float64)
    one_hot[np.arange(X.shape[0]), y] = 1.0
    k_features = resolve_max_features(params.max_features, X.shape[1])

    buf = _TreeBuffer(n_classes)
    root = buf.add()
    stack = [(root, np.arange(X.shape[0], dtype=np.intp), 0)]
    while stack:
        node, rows, depth = stack.pop()
        counts = one_hot[rows].sum(axis=0)
        buf.payload[node] = counts
        if (
            depth >= params.max_depth
            or rows.size < 2 * params.min_samples_leaf
            or np.count_nonzero(counts) <= 1
        ):
            continue
        subset = np.sort(rng.choice(X.shape[1], size=k_features, replace=False))
        best = None
        for j in subset:
            found = _best_split_for_feature(
                X[rows, j], one_hot[rows], counts, params.min_samples_leaf
            )
            if found is None:
                continue
            gain, threshold = found
            if best is None or gain > best[0]:
                best = (gain, int(j), threshold)
        if best is None:
            continue
        _, j, threshold = best
        go_left = X[rows, j] <= threshold
        left_node = buf.add()
        right_node = buf.add()
        buf.feature[node] = j
        buf.threshold[node] = threshold
        buf.left[node] = left_node
        buf.right[node] = right_node
        stack.append((right_node, rows[~go_left], depth + 1))
        stack.append((left_node, rows[go_left], depth + 1))
    return buf.finish()


class DecisionTreeModel:
    """Single gini decision tree exposing the uniform predictor API."""

    kind = "decision_tree"

    def __init__(self, tree: Tree, classes: tuple[str, ...], params: TreeParams):
        self.tree = tree
        self.classes = tuple(classes)
        self.params = params

    def predict_batch(self, X: np.ndarray) -> list[str]:
        counts = self.tree.counts(np.atleast_2d(X))
        return [self.classes[i] for i in np.argmax(counts, axis=1)]

    def predict(self, row: np.ndarray) -> str:
        return self.predict_batch(np.asarray(row)[None, :])[0]


def train_decision_tree(dataset, params: TreeParams, seed: int) -> DecisionTreeModel:
    """Fit one tree on an :class:`~robustflow.flowdata.EncodedDataset`."""
    classes = dataset.classes
    index = {c: i for i, c in enumerate(classes)}
    y = np.array([index[l] for l in dataset.labels.astype(str)], dtype=np.intp)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF]))
    tree = grow_classification_tree(dataset.rows, y, len(classes), params, rng)
    return DecisionTreeModel(tree, classes, params)
