"""Random forest: bagged gini trees with per-split feature subsampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..rng import derive_rng
from .trees import DecisionTreeModel, Tree, TreeParams, grow_classification_tree


@dataclass(frozen=True)
class ForestParams:
    n_estimators: int = 100
    max_depth: int = 16
    min_samples_leaf: int = 2
    max_features: int | str | None = "sqrt"

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ConfigError("n_estimators must be >= 1")


class RandomForestModel:
    """Majority vote over bootstrapped trees; ties break toward the
    lowest class index."""

    kind = "random_forest"

    def __init__(self, trees: list[Tree], classes: tuple[str, ...], params: ForestParams):
        if len(trees) != params.n_estimators:
            raise ConfigError("tree count must equal the configured estimators")
        self.trees = trees
        self.classes = tuple(classes)
        self.params = params

    def predict_per_tree(self, X: np.ndarray) -> np.ndarray:
        """Debug view: (n_trees, n_rows) class indices."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        votes = np.empty((len(self.trees), X.shape[0]), dtype=np.intp)
        for t, tree in enumerate(self.trees):
            votes[t] = np.argmax(tree.counts(X), axis=1)
        return votes

    def predict_batch(self, X: np.ndarray) -> list[str]:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        votes = self.predict_per_tree(X)
        tallies = np.zeros((X.shape[0], len(self.classes)), dtype=np.int64)
        rows = np.arange(X.shape[0])
        for t in range(votes.shape[0]):
            tallies[rows, votes[t]] += 1
        return [self.classes[i] for i in np.argmax(tallies, axis=1)]

    def predict(self, row: np.ndarray) -> str:
        return self.predict_batch(np.asarray(row)[None, :])[0]


def train_random_forest(dataset, params: ForestParams, seed: int) -> RandomForestModel:
    """Each tree sees a bootstrap resample and subsamples features at
    every split; per-tree streams derive from the master seed."""
    classes = dataset.classes
    index = {c: i for i, c in enumerate(classes)}
    y = np.array([index[l] for l in dataset.labels.astype(str)], dtype=np.intp)
    tree_params = TreeParams(
        max_depth=params.max_depth,
        min_samples_leaf=params.min_samples_leaf,
        max_features=params.max_features,
    )
    n = dataset.n_rows
    trees = []
    for t in range(params.n_estimators):
        rng = derive_rng(seed, t)
        boot = rng.integers(0, n, size=n)
        trees.append(
            grow_classification_tree(
                dataset.rows[boot], y[boot], len(classes), tree_params, rng
            )
        )
    return RandomForestModel(trees, classes, params)
