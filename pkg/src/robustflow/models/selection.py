"""Stratified cross-validation, grid search, and contamination control."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from ..errors import ConfigError, DataError
from ..flowdata import EncodedDataset
from ..metrics import confusion, macro_f1
from ..rng import derive_rng, derive_seed


def stratified_kfold(dataset: EncodedDataset, folds: int, seed: int) -> np.ndarray:
    """Assign every row to one of ``folds`` folds, class-balanced.

    Per class the fold sizes differ by at most one row; assignment
    within a class comes from a seeded shuffle.
    """
    if folds < 2:
        raise ConfigError("folds must be >= 2")
    labels = dataset.labels.astype(str)
    for cls, count in dataset.class_counts.items():
        if count < folds:
            raise DataError(f"class {cls!r} has {count} rows, fewer than {folds} folds")
    rng = derive_rng(seed)
    assignment = np.empty(dataset.n_rows, dtype=np.int32)
    for cls in dataset.classes:
        members = np.flatnonzero(labels == cls)
        perm = members[rng.permutation(members.size)]
        assignment[perm] = np.arange(perm.size) % folds
    return assignment


@dataclass(frozen=True)
class GridSearchResult:
    best_params: Mapping
    best_index: int
    best_score: float
    fold_scores: tuple[tuple[float, ...], ...]  # [combination][fold]
    mean_scores: tuple[float, ...]
    model: object


def grid_search_cv(
    train_fn: Callable[[EncodedDataset, Mapping, int], object],
    grid: Sequence[Mapping],
    train: EncodedDataset,
    folds: int = 5,
    seed: int = 0,
    view: Mapping[str, str] | None = None,
) -> GridSearchResult:
    """Pick the grid combination with the best mean macro-F1.

    Every combination trains on folds-1 parts and validates on the
    held-out part; ties break toward the earliest grid entry, and the
    winner retrains on the complete training set. ``view`` optionally
    maps true labels into the model's prediction space before scoring
    (anomaly detectors are scored on collapsed binary labels).
    """
    if not grid:
        raise ConfigError("grid must hold at least one parameter combination")
    assignment = stratified_kfold(train, folds, seed)
    view = dict(view) if view else {}
    labels = train.labels.astype(str)

    fold_scores = []
    for ci, params in enumerate(grid):
        scores = []
        for fold in range(folds):
            val_idx = np.flatnonzero(assignment == fold)
            fit_idx = np.flatnonzero(assignment != fold)
            model = train_fn(train.take(fit_idx), params, derive_seed(seed, ci, fold))
            predicted = model.predict_batch(train.rows[val_idx])
            truths = [view.get(l, l) for l in labels[val_idx]]
            cm = confusion(truths, predicted, sorted(set(truths) | set(predicted)))
            scores.append(macro_f1(cm))
        fold_scores.append(tuple(scores))
    means = tuple(float(np.mean(s)) for s in fold_scores)
    best_index = int(np.argmax(means))
    best_params = grid[best_index]
    model = train_fn(train, best_params, derive_seed(seed, best_index))
    return GridSearchResult(
        best_params=best_params,
        best_index=best_index,
        best_score=means[best_index],
        fold_scores=tuple(fold_scores),
        mean_scores=means,
        model=model,
    )


def subsample_for_contamination(
    train: EncodedDataset, target: float, seed: int, benign_label: str
) -> EncodedDataset:
    """Downsample malicious classes so their fraction is about ``target``.

    Benign rows are untouched and per-class proportions are preserved
    by largest-remainder quotas. Already at or below the target, the
    set is returned unchanged with a warning.
    """
    if not 0.0 < target < 1.0:
        raise ConfigError("target contamination must be in (0, 1)")
    labels = train.labels.astype(str)
    benign_count = int(np.sum(labels == benign_label))
    if benign_count == 0:
        raise DataError("cannot rebalance a dataset without benign rows")
    malicious = [c for c in train.classes if c != benign_label]
    m_total = train.n_rows - benign_count
    if m_total == 0 or m_total / train.n_rows <= target:
        warnings.warn(
            "malicious fraction already at or below the target; returning data unchanged",
            stacklevel=2,
        )
        return train

    want = int(round(target * benign_count / (1.0 - target)))
    want = max(1, min(want, m_total))
    quotas = {c: train.class_counts[c] * want / m_total for c in malicious}
    base = {c: int(np.floor(quotas[c])) for c in malicious}
    leftover = want - sum(base.values())
    for c in sorted(malicious, key=lambda c: (-(quotas[c] - base[c]), c))[: max(leftover, 0)]:
        base[c] += 1

    rng = derive_rng(seed)
    keep = np.flatnonzero(labels == benign_label).tolist()
    for c in malicious:
        members = np.flatnonzero(labels == c)
        perm = members[rng.permutation(members.size)]
        keep.extend(perm[: base[c]].tolist())
    keep.sort()
    return train.take(keep)
