"""Isolation forest anomaly detection.

Trees are grown on random subsamples with uniformly random
(feature, split value) choices; anomaly scores follow the standard
normalization by the expected search-path length, and the decision
threshold is the contamination quantile of the training scores.
Labels play no part in tree building.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DataError
from ..rng import derive_rng
from .trees import Tree, _TreeBuffer

EULER_GAMMA = 0.5772156649015329


@dataclass(frozen=True)
class IsolationParams:
    n_estimators: int = 100
    contamination: float = 0.4
    max_features: float = 0.9
    max_samples: int = 256

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ConfigError("n_estimators must be >= 1")
        if not 0.0 < self.contamination <= 0.5:
            raise ConfigError("contamination must be in (0, 0.5]")
        if not 0.0 < self.max_features <= 1.0:
            raise ConfigError("max_features must be in (0, 1]")
        if self.max_samples < 1:
            raise ConfigError("max_samples must be >= 1")


def average_path_length(n: int) -> float:
    """Expected unsuccessful-search path length in a tree of n points."""
    if n <= 1:
        return 0.0
    if n == 2:
        return 1.0
    return 2.0 * (math.log(n - 1.0) + EULER_GAMMA) - 2.0 * (n - 1.0) / n


def _grow_isolation_tree(X, features, height_limit, rng) -> Tree:
    """Random splits until isolation or the height limit.

    Leaf payload is depth + c(n), i.e. the adjusted path length every
    sample landing there is assigned.
    """
    buf = _TreeBuffer(None)
    root = buf.add()
    stack = [(root, np.arange(X.shape[0], dtype=np.intp), 0)]
    while stack:
        node, rows, depth = stack.pop()
        if depth >= height_limit or rows.size <= 1:
            buf.payload[node] = depth + average_path_length(rows.size)
            continue
        sub = X[rows]
        lo = sub[:, features].min(axis=0)
        hi = sub[:, features].max(axis=0)
        usable = np.flatnonzero(hi > lo)
        if usable.size == 0:
            buf.payload[node] = depth + average_path_length(rows.size)
            continue
        pick = usable[int(rng.integers(usable.size))]
        j = int(features[pick])
        threshold = float(rng.uniform(lo[pick], hi[pick]))
        go_left = sub[:, j] <= threshold
        if not go_left.any() or go_left.all():
            # threshold landed on the max; nudge to a guaranteed split
            threshold = float(lo[pick])
            go_left = sub[:, j] <= threshold
        left = buf.add()
        right = buf.add()
        buf.feature[node] = j
        buf.threshold[node] = threshold
        buf.left[node] = left
        buf.right[node] = right
        stack.append((right, rows[~go_left], depth + 1))
        stack.append((left, rows[go_left], depth + 1))
    return buf.finish()


class IsolationForestModel:
    """Anomaly detector exposing the uniform two-class predictor API.

    predict returns ``malicious_label`` iff the anomaly score is at or
    above the fitted threshold.
    """

    kind = "isolation_forest"

    def __init__(
        self,
        trees: list[Tree],
        sample_size: int,
        threshold: float,
        benign_label: str,
        malicious_label: str,
        params: IsolationParams,
    ):
        self.trees = trees
        self.sample_size = int(sample_size)
        self.threshold = float(threshold)
        self.benign_label = benign_label
        self.malicious_label = malicious_label
        self.params = params
        self.classes = tuple(sorted((benign_label, malicious_label)))

    def anomaly_scores(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        depths = np.zeros(X.shape[0], dtype=np.float64)
        for tree in self.trees:
            depths += tree.values(X)
        mean_depth = depths / len(self.trees)
        c = average_path_length(self.sample_size)
        if c <= 0.0:
            c = 1.0
        return np.power(2.0, -mean_depth / c)

    def predict_batch(self, X: np.ndarray) -> list[str]:
        scores = self.anomaly_scores(X)
        return [
            self.malicious_label if s >= self.threshold else self.benign_label
            for s in scores
        ]

    def predict(self, row: np.ndarray) -> str:
        return self.predict_batch(np.asarray(row)[None, :])[0]


def train_isolation_forest(
    dataset,
    params: IsolationParams,
    seed: int,
    benign_label: str,
    malicious_label: str = "malicious",
) -> IsolationForestModel:
    """Fit the unsupervised ensemble; labels are ignored entirely.

    The threshold is set so the ``contamination`` fraction of training
    rows scores at or above it (up to quantile rounding).
    """
    X = dataset.rows
    n = X.shape[0]
    if n == 0:
        raise DataError("cannot fit an isolation forest on zero rows")
    sample_size = min(params.max_samples, n)
    height_limit = max(1, math.ceil(math.log2(max(sample_size, 2))))
    n_features = max(1, int(round(params.max_features * X.shape[1])))

    # subsample in content order so scores do not depend on row order
    canonical = np.lexsort(X.T[::-1])
    trees = []
    for t in range(params.n_estimators):
        rng = derive_rng(seed, t)
        rows = canonical[rng.choice(n, size=sample_size, replace=False)]
        features = np.sort(rng.choice(X.shape[1], size=n_features, replace=False))
        trees.append(_grow_isolation_tree(X[rows], features, height_limit, rng))

    model = IsolationForestModel(
        trees, sample_size, 0.0, benign_label, malicious_label, params
    )
    scores = model.anomaly_scores(X)
    k = min(n, max(1, int(round(params.contamination * n))))
    model.threshold = float(np.sort(scores)[n - k])
    return model
