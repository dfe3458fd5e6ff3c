"""Per-class adaptive perturbation patterns.

Each non-benign class gets an independent sequence of patterns fitted
to its observed samples: interval patterns record per-feature value
ranges over numeric column subsets, combination patterns record the
observed joint category assignments over categorical feature subsets.
Perturbing a sample applies every pattern in the sequence once and
repairs declared order constraints, so the output stays valid and
class-coherent by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .constraints import ClassConstraintTable, DomainConstraint, OrderPair
from .errors import ConfigError, DataError
from .flowdata import EncodedColumn, EncodedDataset, FeatureSchema

DEFAULT_EPSILON = 0.3


@dataclass(frozen=True)
class IntervalPattern:
    """Bounded numeric steps over a subset of numeric columns."""

    features: tuple[str, ...]
    low: tuple[float, ...]
    high: tuple[float, ...]
    decimals: tuple[int, ...]
    epsilon: float

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 1.0:
            raise ConfigError("epsilon must be in (0, 1]")
        for name, lo, hi in zip(self.features, self.low, self.high):
            if lo > hi:
                raise DataError(f"interval for {name!r} has min > max")


@dataclass(frozen=True)
class CombinationPattern:
    """Observed joint category assignments over categorical features."""

    sources: tuple[str, ...]
    combinations: frozenset

    def __post_init__(self):
        if not self.combinations:
            raise DataError("combination pattern must hold at least one combination")
        for combo in self.combinations:
            if len(combo) != len(self.sources):
                raise DataError("every combination must assign one category per feature")


Pattern = IntervalPattern | CombinationPattern


@dataclass(frozen=True)
class ClassPatternSequence:
    """Ordered patterns fitted to one non-benign class."""

    class_name: str
    patterns: tuple[Pattern, ...]
    columns: tuple[EncodedColumn, ...]
    fitted_on: str
    seed: int = 0

    def __post_init__(self):
        seen: set[str] = set()
        for p in self.patterns:
            names = p.features if isinstance(p, IntervalPattern) else p.sources
            overlap = seen.intersection(names)
            if overlap:
                raise ConfigError(f"pattern subsets overlap on {sorted(overlap)}")
            seen.update(names)

    @property
    def has_freedom(self) -> bool:
        """True when at least one pattern can actually move a sample."""
        for p in self.patterns:
            if isinstance(p, IntervalPattern):
                if any(hi > lo for lo, hi in zip(p.low, p.high)):
                    return True
            elif len(p.combinations) >= 2:
                return True
        return False


@dataclass(frozen=True)
class PatternConfig:
    """Which feature subsets get independent patterns."""

    numeric_subsets: tuple[tuple[str, ...], ...] = ()
    categorical_subsets: tuple[tuple[str, ...], ...] = ()

    def __post_init__(self):
        flat_num = [f for s in self.numeric_subsets for f in s]
        if len(set(flat_num)) != len(flat_num):
            raise ConfigError("numeric subsets must be pairwise disjoint")
        flat_cat = [f for s in self.categorical_subsets for f in s]
        if len(set(flat_cat)) != len(flat_cat):
            raise ConfigError("categorical subsets must be pairwise disjoint")

    @classmethod
    def from_json(cls, doc: Mapping) -> "PatternConfig":
        return cls(
            numeric_subsets=tuple(tuple(s) for s in doc.get("numeric_subsets", ())),
            categorical_subsets=tuple(tuple(s) for s in doc.get("categorical_subsets", ())),
        )

    def to_json(self) -> dict:
        return {
            "numeric_subsets": [list(s) for s in self.numeric_subsets],
            "categorical_subsets": [list(s) for s in self.categorical_subsets],
        }


def fit_patterns(
    dataset: EncodedDataset,
    schema: FeatureSchema,
    config: PatternConfig,
    epsilon: float = DEFAULT_EPSILON,
    seed: int = 0,
) -> dict[str, ClassPatternSequence]:
    """Fit one independent pattern sequence per non-benign class.

    The benign class gets no sequence: perturbation applies only to
    attack-class samples.
    """
    groups = dataset.one_hot_groups
    numeric_names = {dataset.columns[i].name for i in dataset.numeric_indices}
    for subset in config.numeric_subsets:
        for name in subset:
            if name not in numeric_names:
                raise ConfigError(f"numeric subset references unknown column {name!r}")
    for subset in config.categorical_subsets:
        for src in subset:
            if src not in groups:
                raise ConfigError(f"categorical subset references unknown feature {src!r}")

    labels = dataset.labels.astype(str)
    sequences: dict[str, ClassPatternSequence] = {}
    for cls in dataset.classes:
        if cls == schema.benign_label:
            continue
        rows = dataset.rows[labels == cls]
        if rows.shape[0] == 0:
            raise DataError(f"class {cls!r} has no rows to fit on")
        patterns: list[Pattern] = []
        for subset in config.numeric_subsets:
            idx = [dataset.column_index(n) for n in subset]
            patterns.append(
                IntervalPattern(
                    features=tuple(subset),
                    low=tuple(float(rows[:, i].min()) for i in idx),
                    high=tuple(float(rows[:, i].max()) for i in idx),
                    decimals=tuple(schema.feature(n).decimals for n in subset),
                    epsilon=epsilon,
                )
            )
        for subset in config.categorical_subsets:
            parts = []
            for src in subset:
                idx = np.asarray(groups[src], dtype=np.intp)
                active = idx[np.argmax(rows[:, idx], axis=1)]
                parts.append([dataset.columns[a].category for a in active])
            combos = frozenset(zip(*parts)) if parts else frozenset()
            patterns.append(CombinationPattern(sources=tuple(subset), combinations=combos))
        sequences[cls] = ClassPatternSequence(
            class_name=cls,
            patterns=tuple(patterns),
            columns=dataset.columns,
            fitted_on=dataset.fingerprint(),
            seed=int(seed),
        )
    return sequences


def update_patterns(
    sequence: ClassPatternSequence, rows: np.ndarray, labels: Sequence[str]
) -> ClassPatternSequence:
    """Widen a sequence to cover newly observed rows of its class.

    Intervals only grow and combination sets only gain members, so an
    update with already-covered rows returns an equal sequence.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.ndim == 1:
        rows = rows[None, :]
    if rows.shape[1] != len(sequence.columns):
        raise DataError("rows do not match the sequence's column layout")
    for lab in labels:
        if str(lab) != sequence.class_name:
            raise DataError(
                f"row labeled {lab!r} cannot update patterns of class "
                f"{sequence.class_name!r}"
            )

    col_index = {c.name: i for i, c in enumerate(sequence.columns)}
    groups: dict[str, list[int]] = {}
    for i, c in enumerate(sequence.columns):
        if c.category is not None:
            groups.setdefault(c.source, []).append(i)

    updated: list[Pattern] = []
    for p in sequence.patterns:
        if isinstance(p, IntervalPattern):
            idx = [col_index[n] for n in p.features]
            updated.append(
                replace(
                    p,
                    low=tuple(
                        min(lo, float(rows[:, i].min())) for lo, i in zip(p.low, idx)
                    ),
                    high=tuple(
                        max(hi, float(rows[:, i].max())) for hi, i in zip(p.high, idx)
                    ),
                )
            )
        else:
            parts = []
            for src in p.sources:
                idx = np.asarray(groups[src], dtype=np.intp)
                active = idx[np.argmax(rows[:, idx], axis=1)]
                parts.append([sequence.columns[a].category for a in active])
            updated.append(
                replace(p, combinations=p.combinations | frozenset(zip(*parts)))
            )
    return replace(sequence, patterns=tuple(updated))


class _ResolvedSequence:
    """Index-level view of a sequence, cached because perturb runs hot."""

    def __init__(self, sequence: ClassPatternSequence):
        self.col_index = {c.name: i for i, c in enumerate(sequence.columns)}
        groups: dict[str, list[int]] = {}
        for i, c in enumerate(sequence.columns):
            if c.category is not None:
                groups.setdefault(c.source, []).append(i)
        self.groups = {s: np.array(ix, dtype=np.intp) for s, ix in groups.items()}

        self.intervals = []
        self.combos = []
        for p in sequence.patterns:
            if isinstance(p, IntervalPattern):
                idx = np.array([self.col_index[n] for n in p.features], dtype=np.intp)
                lo = np.array(p.low, dtype=float)
                hi = np.array(p.high, dtype=float)
                scale = 10.0 ** np.array(p.decimals, dtype=float)
                self.intervals.append((p, idx, lo, hi, p.epsilon * (hi - lo), scale))
                self.combos.append(None)
            else:
                members = sorted(p.combinations)
                writes = []
                for combo in members:
                    cols = tuple(
                        self.col_index[f"{src}={cat}"] for src, cat in zip(p.sources, combo)
                    )
                    writes.append((combo, cols))
                group_cols = np.concatenate([self.groups[src] for src in p.sources])
                self.combos.append((p, members, writes, group_cols))
                self.intervals.append(None)
        self.order = len(sequence.patterns)


@lru_cache(maxsize=128)
def _resolve(sequence: ClassPatternSequence) -> _ResolvedSequence:
    return _ResolvedSequence(sequence)


def _repair_order_pairs(
    row: np.ndarray, domain: Sequence[DomainConstraint], col_index: Mapping[str, int]
) -> None:
    """Project order-pair features onto the feasible region, in place."""
    for c in domain:
        if isinstance(c, OrderPair):
            li, gi = col_index[c.lesser], col_index[c.greater]
            if row[li] > row[gi]:
                row[li] = row[gi]


def perturb(
    sample: np.ndarray,
    sequence: ClassPatternSequence,
    domain: Sequence[DomainConstraint],
    table: ClassConstraintTable,
    rng: np.random.Generator,
) -> np.ndarray:
    """Apply the full pattern sequence once to a valid in-class sample.

    Numeric features take a uniform step of at most epsilon times the
    interval width, clamped to the interval and rounded to the
    feature's granularity; categorical subsets swap to a different
    observed combination when one exists. Declared order pairs are
    repaired by projection afterwards, so the output validates against
    the same domain and class constraints as the input.
    """
    sample = np.asarray(sample, dtype=float)
    if sample.shape != (len(sequence.columns),):
        raise DataError("sample does not match the sequence's column layout")
    if tuple(table.columns) != tuple(sequence.columns):
        raise DataError("constraint table fitted on a different column layout")

    res = _resolve(sequence)
    out = sample.copy()
    for k in range(res.order):
        interval = res.intervals[k]
        if interval is not None:
            _, idx, lo, hi, reach, scale = interval
            u = rng.uniform(-1.0, 1.0, size=idx.size)
            cand = np.clip(out[idx] + u * reach, lo, hi)
            out[idx] = np.round(cand * scale) / scale
        else:
            p, members, writes, group_cols = res.combos[k]
            current = tuple(
                sequence.columns[res.groups[src][int(np.argmax(out[res.groups[src]]))]].category
                for src in p.sources
            )
            candidates = [w for w in writes if w[0] != current]
            if candidates:
                _, cols = candidates[int(rng.integers(len(candidates)))]
                out[group_cols] = 0.0
                for c in cols:
                    out[c] = 1.0
    _repair_order_pairs(out, domain, res.col_index)

    if np.array_equal(out, sample) and sequence.has_freedom:
        out = _force_minimal_step(out, sample, sequence, domain, res.col_index)
    return out


def _force_minimal_step(
    out: np.ndarray,
    original: np.ndarray,
    sequence: ClassPatternSequence,
    domain: Sequence[DomainConstraint],
    col_index: Mapping[str, int],
) -> np.ndarray:
    """Move one granularity step when rounding cancelled every change.

    Keeps the perturbation non-degenerate without leaving the feasible
    region; if no single step survives the order-pair projection the
    sample is returned unchanged.
    """
    for p in sequence.patterns:
        if not isinstance(p, IntervalPattern):
            continue
        for name, lo, hi, dec in zip(p.features, p.low, p.high, p.decimals):
            if hi <= lo:
                continue
            i = col_index[name]
            step = 10.0 ** (-dec)
            for cand in (original[i] + step, original[i] - step):
                if lo - 1e-12 <= cand <= hi + 1e-12:
                    trial = out.copy()
                    trial[i] = round(float(cand), dec)
                    _repair_order_pairs(trial, domain, col_index)
                    if not np.array_equal(trial, original):
                        return trial
    return out


def sequences_to_json(sequences: Mapping[str, ClassPatternSequence]) -> dict:
    doc: dict = {"classes": {}}
    first = next(iter(sequences.values()), None)
    if first is not None:
        doc["columns"] = [
            {"name": c.name, "source": c.source, "category": c.category}
            for c in first.columns
        ]
    for cls in sorted(sequences):
        seq = sequences[cls]
        patterns = []
        for p in seq.patterns:
            if isinstance(p, IntervalPattern):
                patterns.append(
                    {
                        "type": "interval",
                        "features": list(p.features),
                        "low": list(p.low),
                        "high": list(p.high),
                        "decimals": list(p.decimals),
                        "epsilon": p.epsilon,
                    }
                )
            else:
                patterns.append(
                    {
                        "type": "combination",
                        "sources": list(p.sources),
                        "combinations": sorted(list(c) for c in p.combinations),
                    }
                )
        doc["classes"][cls] = {
            "fitted_on": seq.fitted_on,
            "seed": seq.seed,
            "patterns": patterns,
        }
    return doc


def sequences_from_json(doc: Mapping) -> dict[str, ClassPatternSequence]:
    columns = tuple(
        EncodedColumn(name=c["name"], source=c["source"], category=c["category"])
        for c in doc.get("columns", ())
    )
    out: dict[str, ClassPatternSequence] = {}
    for cls, body in doc["classes"].items():
        patterns: list[Pattern] = []
        for p in body["patterns"]:
            if p["type"] == "interval":
                patterns.append(
                    IntervalPattern(
                        features=tuple(p["features"]),
                        low=tuple(float(v) for v in p["low"]),
                        high=tuple(float(v) for v in p["high"]),
                        decimals=tuple(int(v) for v in p["decimals"]),
                        epsilon=float(p["epsilon"]),
                    )
                )
            else:
                patterns.append(
                    CombinationPattern(
                        sources=tuple(p["sources"]),
                        combinations=frozenset(tuple(c) for c in p["combinations"]),
                    )
                )
        out[cls] = ClassPatternSequence(
            class_name=cls,
            patterns=tuple(patterns),
            columns=columns,
            fitted_on=body["fitted_on"],
            seed=int(body.get("seed", 0)),
        )
    return out


def save_sequences(path, sequences: Mapping[str, ClassPatternSequence]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(sequences_to_json(sequences), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_sequences(path) -> dict[str, ClassPatternSequence]:
    with open(path, encoding="utf-8") as fh:
        return sequences_from_json(json.load(fh))
