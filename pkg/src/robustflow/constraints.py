"""Executable realism constraints for encoded flow samples.

Two layers are enforced: domain validity (structural conditions any
real flow satisfies, e.g. the min inter-arrival time can never exceed
the max) and class coherence (per-class feature bounds and category
combinations derived from observed data). A sample is realistic only
when every check of both layers passes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .flowdata import EncodedColumn, EncodedDataset, FeatureSchema

DEFAULT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class OrderPair:
    """lesser <= greater must hold between two numeric columns."""

    lesser: str
    greater: str

    def __post_init__(self):
        if self.lesser == self.greater:
            raise ConfigError("order pair must reference two distinct features")


@dataclass(frozen=True)
class ValueRange:
    """A numeric column must stay inside [min, max]."""

    feature: str
    min: float
    max: float

    def __post_init__(self):
        if self.min > self.max:
            raise ConfigError(f"value range for {self.feature!r} has min > max")


@dataclass(frozen=True)
class OneHotExclusive:
    """Exactly one active indicator within a one-hot group."""

    source: str


DomainConstraint = OrderPair | ValueRange | OneHotExclusive


def domain_constraints_from_json(items: Sequence[Mapping]) -> list[DomainConstraint]:
    out: list[DomainConstraint] = []
    for item in items:
        kind = item.get("type")
        if kind == "order_pair":
            out.append(OrderPair(item["lesser"], item["greater"]))
        elif kind == "value_range":
            out.append(ValueRange(item["feature"], float(item["min"]), float(item["max"])))
        elif kind == "one_hot_exclusive":
            out.append(OneHotExclusive(item["source"]))
        else:
            raise ConfigError(f"unknown domain constraint type {kind!r}")
    return out


def domain_constraints_to_json(constraints: Sequence[DomainConstraint]) -> list[dict]:
    out = []
    for c in constraints:
        if isinstance(c, OrderPair):
            out.append({"type": "order_pair", "lesser": c.lesser, "greater": c.greater})
        elif isinstance(c, ValueRange):
            out.append({"type": "value_range", "feature": c.feature, "min": c.min, "max": c.max})
        elif isinstance(c, OneHotExclusive):
            out.append({"type": "one_hot_exclusive", "source": c.source})
        else:
            raise ConfigError(f"unknown constraint object {c!r}")
    return out


@dataclass(frozen=True)
class Violation:
    """One failed check: which constraint, which feature(s), what value(s)."""

    constraint: str
    features: tuple[str, ...]
    values: tuple

    def as_json(self) -> dict:
        return {
            "constraint": self.constraint,
            "features": list(self.features),
            "values": list(self.values),
        }


@dataclass(frozen=True)
class ValidationResult:
    valid: bool
    violations: tuple[Violation, ...]

    def __post_init__(self):
        if self.valid != (len(self.violations) == 0):
            raise ValueError("valid flag must match emptiness of violations")


class ClassConstraintTable:
    """Per-class coherence bounds derived from observed samples.

    Numeric bounds are exact per-class min/max over the source data;
    categorical constraints are the exact observed joint assignments
    over each configured feature subset. Immutable once built.
    """

    def __init__(
        self,
        columns: Sequence[EncodedColumn],
        benign_label: str,
        categorical_subsets: Sequence[Sequence[str]],
        numeric_bounds: Mapping[str, Mapping[str, tuple[float, float]]],
        combinations: Mapping[str, Mapping[tuple[str, ...], frozenset]],
    ):
        self.columns = tuple(columns)
        self.benign_label = benign_label
        self.categorical_subsets = tuple(tuple(s) for s in categorical_subsets)
        self.numeric_bounds = {
            cls: dict(bounds) for cls, bounds in numeric_bounds.items()
        }
        self.combinations = {
            cls: {tuple(k): frozenset(v) for k, v in combos.items()}
            for cls, combos in combinations.items()
        }
        for cls, bounds in self.numeric_bounds.items():
            for name, (lo, hi) in bounds.items():
                if lo > hi:
                    raise DataError(f"class {cls!r} bounds for {name!r} have lower > upper")

        self._col_index = {c.name: i for i, c in enumerate(self.columns)}
        groups: dict[str, list[int]] = {}
        for i, c in enumerate(self.columns):
            if c.category is not None:
                groups.setdefault(c.source, []).append(i)
        self._groups = {s: np.array(ix, dtype=np.intp) for s, ix in groups.items()}
        self._subset_groups = {
            subset: [self._groups[src] for src in subset] for subset in self.categorical_subsets
        }
        self._bound_arrays = {}
        for cls, bounds in self.numeric_bounds.items():
            names = sorted(bounds)
            idx = np.array([self._col_index[n] for n in names], dtype=np.intp)
            lo = np.array([bounds[n][0] for n in names], dtype=float)
            hi = np.array([bounds[n][1] for n in names], dtype=float)
            self._bound_arrays[cls] = (names, idx, lo, hi)

    @property
    def classes(self) -> tuple[str, ...]:
        return tuple(sorted(self.numeric_bounds))

    def active_categories(self, sample: np.ndarray, subset: Sequence[str]) -> tuple[str, ...]:
        cats = []
        for src in subset:
            idx = self._groups[src]
            active = idx[int(np.argmax(sample[idx]))]
            cats.append(self.columns[active].category)
        return tuple(cats)

    def to_json(self) -> dict:
        return {
            "benign_label": self.benign_label,
            "columns": [
                {"name": c.name, "source": c.source, "category": c.category}
                for c in self.columns
            ],
            "categorical_subsets": [list(s) for s in self.categorical_subsets],
            "classes": {
                cls: {
                    "numeric_bounds": {
                        n: [lo, hi] for n, (lo, hi) in sorted(self.numeric_bounds[cls].items())
                    },
                    "combinations": {
                        "+".join(subset): sorted(list(c) for c in combos)
                        for subset, combos in sorted(self.combinations[cls].items())
                    },
                }
                for cls in self.classes
            },
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, doc: Mapping) -> "ClassConstraintTable":
        columns = [
            EncodedColumn(name=c["name"], source=c["source"], category=c["category"])
            for c in doc["columns"]
        ]
        subsets = [tuple(s) for s in doc["categorical_subsets"]]
        numeric_bounds = {}
        combinations = {}
        for cname, body in doc["classes"].items():
            numeric_bounds[cname] = {
                n: (float(v[0]), float(v[1])) for n, v in body["numeric_bounds"].items()
            }
            combos = {}
            for key, members in body["combinations"].items():
                combos[tuple(key.split("+"))] = frozenset(tuple(m) for m in members)
            combinations[cname] = combos
        return cls(columns, doc["benign_label"], subsets, numeric_bounds, combinations)

    @classmethod
    def load(cls, path) -> "ClassConstraintTable":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def derive_class_constraints(
    dataset: EncodedDataset,
    schema: FeatureSchema,
    categorical_subsets: Sequence[Sequence[str]] = (),
    expected_classes: Sequence[str] | None = None,
) -> ClassConstraintTable:
    """Build the per-class coherence table from observed data.

    Bounds and combination sets are exact observations, so every row
    of ``dataset`` validates against the derived table by
    construction.
    """
    benign = schema.benign_label
    observed = [c for c in dataset.classes if c != benign]
    if expected_classes is not None:
        for cls in expected_classes:
            if cls != benign and cls not in observed:
                raise DataError(f"class {cls!r} has zero rows; cannot derive its constraints")
    if not observed:
        raise DataError("dataset holds no non-benign rows")

    groups = dataset.one_hot_groups
    for subset in categorical_subsets:
        for src in subset:
            if src not in groups:
                raise ConfigError(f"categorical subset references unknown feature {src!r}")

    numeric_cols = [(i, c.name) for i, c in enumerate(dataset.columns) if c.is_numeric]
    labels = dataset.labels.astype(str)
    numeric_bounds: dict[str, dict[str, tuple[float, float]]] = {}
    combinations: dict[str, dict[tuple[str, ...], frozenset]] = {}
    for cls in observed:
        rows = dataset.rows[labels == cls]
        numeric_bounds[cls] = {
            name: (float(rows[:, i].min()), float(rows[:, i].max())) for i, name in numeric_cols
        }
        combos: dict[tuple[str, ...], frozenset] = {}
        for subset in categorical_subsets:
            seen = set()
            parts = []
            for src in subset:
                idx = np.asarray(groups[src], dtype=np.intp)
                active = idx[np.argmax(rows[:, idx], axis=1)]
                parts.append([dataset.columns[a].category for a in active])
            for joint in zip(*parts):
                seen.add(tuple(joint))
            combos[tuple(subset)] = frozenset(seen)
        combinations[cls] = combos
    return ClassConstraintTable(
        dataset.columns, benign, categorical_subsets, numeric_bounds, combinations
    )


def validate(
    sample: np.ndarray,
    class_name: str,
    domain: Sequence[DomainConstraint],
    table: ClassConstraintTable,
    tolerance: float = DEFAULT_TOLERANCE,
) -> ValidationResult:
    """Check one encoded row against domain and class constraints.

    All violations are reported, not just the first. Benign rows are
    never validated against the class table; passing the benign class
    is a caller error.
    """
    sample = np.asarray(sample, dtype=float)
    if sample.shape != (len(table.columns),):
        raise DataError(
            f"sample has {sample.shape} values, layout expects {len(table.columns)}"
        )
    if class_name == table.benign_label:
        raise DataError("benign rows are not subject to class-coherence validation")
    if class_name not in table.numeric_bounds:
        raise DataError(f"unknown class {class_name!r}")

    violations: list[Violation] = []

    for source, idx in table._groups.items():
        block = sample[idx]
        if not (np.all((block == 0.0) | (block == 1.0)) and block.sum() == 1.0):
            violations.append(
                Violation(f"one_hot_exclusive:{source}", (source,), tuple(block.tolist()))
            )

    for c in domain:
        if isinstance(c, ValueRange):
            v = float(sample[table._col_index[c.feature]])
            if not (c.min - tolerance <= v <= c.max + tolerance):
                violations.append(
                    Violation(f"value_range:{c.feature}", (c.feature,), (v,))
                )

    for c in domain:
        if isinstance(c, OrderPair):
            lo = float(sample[table._col_index[c.lesser]])
            hi = float(sample[table._col_index[c.greater]])
            if not lo <= hi + tolerance:
                violations.append(
                    Violation(
                        f"order_pair:{c.lesser}<={c.greater}",
                        (c.lesser, c.greater),
                        (lo, hi),
                    )
                )

    names, idx, lo, hi = table._bound_arrays[class_name]
    values = sample[idx]
    bad = np.flatnonzero((values < lo - tolerance) | (values > hi + tolerance))
    for b in bad:
        violations.append(
            Violation(
                f"class_bound:{class_name}:{names[b]}",
                (names[b],),
                (float(values[b]),),
            )
        )

    for subset in table.categorical_subsets:
        combo = table.active_categories(sample, subset)
        if combo not in table.combinations[class_name][subset]:
            violations.append(
                Violation(
                    f"class_combination:{class_name}:" + "+".join(subset),
                    tuple(subset),
                    combo,
                )
            )

    return ValidationResult(valid=not violations, violations=tuple(violations))
