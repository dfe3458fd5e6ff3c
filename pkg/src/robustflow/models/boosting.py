"""Gradient-boosted trees with cross-entropy objectives.

Two growth strategies share the histogram split machinery: a
level-wise grower (nodes split level by level up to a depth cap) and a
leaf-wise best-first grower (the leaf with the maximum loss reduction
splits next, capped by leaf count and depth) with optional
gradient-based one-side row sampling per boosting round.

Split thresholds sit on bin edges, which are actual observed values,
so binned training and unbinned prediction agree exactly under the
``value <= threshold`` convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DataError
from ..rng import derive_rng
from .trees import LEAF, Tree, _TreeBuffer

GROWTH_LEVEL = "level"
GROWTH_LEAF = "leaf"


@dataclass(frozen=True)
class HistBoostParams:
    """Level-wise histogram boosting knobs."""

    n_estimators: int = 100
    learning_rate: float = 0.1
    max_depth: int = 8
    gamma: float = 0.01
    colsample: float = 0.8
    min_samples_leaf: int = 1
    reg_lambda: float = 1.0
    n_bins: int = 256

    def __post_init__(self):
        _check_boost_params(self)


@dataclass(frozen=True)
class GossBoostParams:
    """Leaf-wise boosting knobs with one-side sampling rates."""

    n_estimators: int = 100
    learning_rate: float = 0.1
    max_depth: int = 16
    max_leaves: int = 32
    gamma: float = 0.01
    colsample: float = 0.8
    min_samples_leaf: int = 16
    reg_lambda: float = 1.0
    n_bins: int = 256
    top_rate: float = 0.2
    other_rate: float = 0.1
    sampling: bool = True

    def __post_init__(self):
        _check_boost_params(self)
        if self.max_leaves < 2:
            raise ConfigError("max_leaves must be >= 2")
        if not 0.0 < self.top_rate <= 1.0:
            raise ConfigError("top_rate must be in (0, 1]")
        if not 0.0 < self.other_rate <= 1.0:
            raise ConfigError("other_rate must be in (0, 1]")


def _check_boost_params(p):
    if p.n_estimators < 0:
        raise ConfigError("n_estimators must be >= 0")
    if p.learning_rate <= 0.0:
        raise ConfigError("learning rate must be > 0")
    if p.max_depth < 1:
        raise ConfigError("max_depth must be >= 1")
    if p.gamma < 0.0:
        raise ConfigError("gamma must be >= 0")
    if not 0.0 < p.colsample <= 1.0:
        raise ConfigError("colsample must be in (0, 1]")
    if p.n_bins < 2:
        raise ConfigError("n_bins must be >= 2")


class ColumnBinner:
    """Equal-frequency bins per column, built once on the training set.

    Edges are observed values (lower-quantile), so a split at bin b
    means exactly ``x <= edges[b]``.
    """

    def __init__(self, X: np.ndarray, n_bins: int):
        X = np.asarray(X, dtype=np.float64)
        self.edges: list[np.ndarray] = []
        qs = np.arange(1, n_bins) / n_bins
        for j in range(X.shape[1]):
            col = X[:, j]
            edges = np.unique(np.quantile(col, qs, method="lower"))
            edges = edges[edges < col.max()]
            self.edges.append(edges)

    @property
    def n_columns(self) -> int:
        return len(self.edges)

    def n_bins(self, j: int) -> int:
        return len(self.edges[j]) + 1

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.empty(X.shape, dtype=np.int32)
        for j in range(X.shape[1]):
            out[:, j] = np.searchsorted(self.edges[j], X[:, j], side="left")
        return out


def _node_stats(g, h, w, rows):
    wg = w[rows] * g[rows]
    wh = w[rows] * h[rows]
    return float(wg.sum()), float(wh.sum())


def _best_split(Xb, rows, g, h, w, cols, binner, lam, gamma, min_leaf, G, H):
    """Best (gain, column, bin, threshold) for one node, or None."""
    parent_score = G * G / (H + lam)
    wg = w[rows] * g[rows]
    wh = w[rows] * h[rows]
    best = None
    for j in cols:
        nb = binner.n_bins(j)
        if nb <= 1:
            continue
        b = Xb[rows, j]
        hist_g = np.bincount(b, weights=wg, minlength=nb)
        hist_h = np.bincount(b, weights=wh, minlength=nb)
        hist_c = np.bincount(b, minlength=nb)
        GL = np.cumsum(hist_g)[:-1]
        HL = np.cumsum(hist_h)[:-1]
        CL = np.cumsum(hist_c)[:-1]
        GR = G - GL
        HR = H - HL
        CR = rows.size - CL
        gains = 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - parent_score)
        gains[(CL < min_leaf) | (CR < min_leaf)] = -np.inf
        k = int(np.argmax(gains))
        if gains[k] == -np.inf or gains[k] < gamma:
            continue
        if best is None or gains[k] > best[0]:
            best = (float(gains[k]), j, k, float(binner.edges[j][k]))
    return best


def grow_level_wise(Xb, g, h, w, cols, binner, params) -> Tree:
    """Split every splittable node of a level before descending."""
    buf = _TreeBuffer(None)
    lam = params.reg_lambda
    root = buf.add()
    all_rows = np.arange(Xb.shape[0], dtype=np.intp)
    frontier = [(root, all_rows)]
    depth = 0
    while frontier:
        next_frontier = []
        for node, rows in frontier:
            G, H = _node_stats(g, h, w, rows)
            buf.payload[node] = -G / (H + lam)
            if depth >= params.max_depth or rows.size < 2 * params.min_samples_leaf:
                continue
            best = _best_split(
                Xb, rows, g, h, w, cols, binner, lam, params.gamma,
                params.min_samples_leaf, G, H,
            )
            if best is None:
                continue
            _, j, k, threshold = best
            go_left = Xb[rows, j] <= k
            left = buf.add()
            right = buf.add()
            buf.feature[node] = j
            buf.threshold[node] = threshold
            buf.left[node] = left
            buf.right[node] = right
            next_frontier.append((left, rows[go_left]))
            next_frontier.append((right, rows[~go_left]))
        frontier = next_frontier
        depth += 1
    return buf.finish()


def grow_leaf_wise(Xb, g, h, w, cols, binner, params) -> Tree:
    """Best-first growth: always split the leaf with the largest gain."""
    buf = _TreeBuffer(None)
    lam = params.reg_lambda
    root = buf.add()
    all_rows = np.arange(Xb.shape[0], dtype=np.intp)

    depth_of = {root: 0}
    rows_of = {root: all_rows}
    candidates: dict[int, tuple] = {}

    def admit(node):
        rows = rows_of[node]
        G, H = _node_stats(g, h, w, rows)
        buf.payload[node] = -G / (H + lam)
        if depth_of[node] >= params.max_depth or rows.size < 2 * params.min_samples_leaf:
            return
        best = _best_split(
            Xb, rows, g, h, w, cols, binner, lam, params.gamma,
            params.min_samples_leaf, G, H,
        )
        if best is not None:
            candidates[node] = best

    admit(root)
    n_leaves = 1
    while n_leaves < params.max_leaves and candidates:
        node = max(candidates, key=lambda nd: (candidates[nd][0], -nd))
        _, j, k, threshold = candidates.pop(node)
        rows = rows_of.pop(node)
        go_left = Xb[rows, j] <= k
        left = buf.add()
        right = buf.add()
        buf.feature[node] = j
        buf.threshold[node] = threshold
        buf.left[node] = left
        buf.right[node] = right
        depth_of[left] = depth_of[right] = depth_of[node] + 1
        rows_of[left] = rows[go_left]
        rows_of[right] = rows[~go_left]
        admit(left)
        admit(right)
        n_leaves += 1
    return buf.finish()


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _softmax(m):
    z = m - m.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _log_loss_binary(margin, y1):
    p = np.clip(_sigmoid(margin), 1e-12, 1.0 - 1e-12)
    return float(-np.mean(y1 * np.log(p) + (1.0 - y1) * np.log(1.0 - p)))


def _log_loss_multi(margins, y):
    P = np.clip(_softmax(margins), 1e-12, None)
    return float(-np.mean(np.log(P[np.arange(len(y)), y])))


def _goss_select(scores, params, rng):
    """Row subset and weights for one round of one-side sampling.

    Keeps the top ``top_rate`` fraction by gradient magnitude and a
    random ``other_rate`` fraction of the rest, reweighted by
    (1 - top_rate) / other_rate; disabled or keep-all configurations
    consume no randomness and return every row at weight one.
    """
    n = scores.shape[0]
    n_top = int(round(params.top_rate * n))
    if not params.sampling or n_top >= n:
        return np.arange(n, dtype=np.intp), np.ones(n, dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    top = order[:n_top]
    rest = order[n_top:]
    n_other = min(int(round(params.other_rate * n)), rest.size)
    if n_other > 0:
        sampled = rest[np.sort(rng.choice(rest.size, size=n_other, replace=False))]
    else:
        sampled = np.empty(0, dtype=np.intp)
    rows = np.sort(np.concatenate([top, sampled]))
    weights = np.ones(n, dtype=np.float64)
    weights[sampled] = (1.0 - params.top_rate) / params.other_rate
    return rows, weights


class BoostModel:
    """Additive tree ensemble under a cross-entropy objective.

    prediction = sigmoid/softmax(base_score + learning_rate * sum of
    stage outputs); binary problems boost the log-odds of the second
    class, multi-class problems grow one tree per class per round.
    """

    kind = "boosting"

    def __init__(self, classes, base_score, learning_rate, growth, trees, train_losses=()):
        self.classes = tuple(classes)
        self.base_score = np.asarray(base_score, dtype=np.float64)
        self.learning_rate = float(learning_rate)
        self.growth = growth
        self.trees = trees  # list of rounds; each round is a list of trees
        self.train_losses = list(train_losses)

    @property
    def is_binary(self) -> bool:
        return len(self.classes) == 2

    def predict_margin(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.is_binary:
            margin = np.full(X.shape[0], float(self.base_score))
            for round_trees in self.trees:
                margin += self.learning_rate * round_trees[0].values(X)
            return margin
        margins = np.tile(self.base_score, (X.shape[0], 1))
        for round_trees in self.trees:
            for k, tree in enumerate(round_trees):
                margins[:, k] += self.learning_rate * tree.values(X)
        return margins

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        m = self.predict_margin(X)
        if self.is_binary:
            p1 = _sigmoid(m)
            return np.stack([1.0 - p1, p1], axis=1)
        return _softmax(m)

    def predict_batch(self, X: np.ndarray) -> list[str]:
        proba = self.predict_proba(X)
        return [self.classes[i] for i in np.argmax(proba, axis=1)]

    def predict(self, row: np.ndarray) -> str:
        return self.predict_batch(np.asarray(row)[None, :])[0]


def _train_boosting(dataset, params, seed, growth) -> BoostModel:
    classes = dataset.classes
    if len(classes) < 2:
        raise DataError("boosting needs at least two classes")
    index = {c: i for i, c in enumerate(classes)}
    y = np.array([index[l] for l in dataset.labels.astype(str)], dtype=np.intp)
    X = dataset.rows
    n, d = X.shape
    K = len(classes)
    binary = K == 2

    binner = ColumnBinner(X, params.n_bins)
    Xb = binner.transform(X)
    rng = derive_rng(seed)
    n_cols = max(1, int(round(params.colsample * d)))

    counts = np.bincount(y, minlength=K).astype(np.float64)
    if binary:
        base = np.array(np.log(counts[1] / counts[0]))
        margin = np.full(n, float(base))
        y1 = (y == 1).astype(np.float64)
    else:
        base = np.log(counts / n)
        margins = np.tile(base, (n, 1))
        Y = np.zeros((n, K), dtype=np.float64)
        Y[np.arange(n), y] = 1.0

    goss = isinstance(params, GossBoostParams)
    grower = grow_leaf_wise if growth == GROWTH_LEAF else grow_level_wise

    losses = []
    losses.append(_log_loss_binary(margin, y1) if binary else _log_loss_multi(margins, y))

    all_rounds = []
    for _ in range(params.n_estimators):
        if binary:
            p = _sigmoid(margin)
            g = (p - y1)[:, None]
            h = (p * (1.0 - p))[:, None]
        else:
            P = _softmax(margins)
            g = P - Y
            h = P * (1.0 - P)

        if goss:
            rows, weights = _goss_select(np.abs(g).sum(axis=1), params, rng)
        else:
            rows, weights = np.arange(n, dtype=np.intp), np.ones(n, dtype=np.float64)

        Xb_round = Xb[rows]
        round_trees = []
        for k in range(1 if binary else K):
            cols = np.sort(rng.choice(d, size=n_cols, replace=False))
            tree = grower(Xb_round, g[rows, k], h[rows, k], weights[rows], cols, binner, params)
            round_trees.append(tree)
            if binary:
                margin += params.learning_rate * tree.values(X)
            else:
                margins[:, k] += params.learning_rate * tree.values(X)
        all_rounds.append(round_trees)
        losses.append(_log_loss_binary(margin, y1) if binary else _log_loss_multi(margins, y))

    return BoostModel(
        classes=classes,
        base_score=base,
        learning_rate=params.learning_rate,
        growth=growth,
        trees=all_rounds,
        train_losses=losses,
    )


def train_hist_gbdt(dataset, params: HistBoostParams, seed: int) -> BoostModel:
    """Level-wise histogram gradient boosting."""
    return _train_boosting(dataset, params, seed, GROWTH_LEVEL)


def train_goss_gbdt(dataset, params: GossBoostParams, seed: int) -> BoostModel:
    """Leaf-wise boosting with gradient-based one-side sampling."""
    return _train_boosting(dataset, params, seed, GROWTH_LEAF)
