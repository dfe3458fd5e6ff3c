"""Tabular flow-dataset handling: schema, CSV ingestion, one-hot
encoding, stratified splitting, and seeded synthetic generation.

Raw rows are plain ``dict``s keyed by column name (the shape
``csv.DictReader`` produces). Encoded data lives in
:class:`EncodedDataset`, a dense float matrix with per-column
descriptors, which is what every downstream module consumes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError, ParseError, SchemaMismatchError

OTHER_CATEGORY = "other"

KIND_NUMERIC = "numeric"
KIND_CATEGORICAL = "categorical"
KIND_DROP = "drop"
_KINDS = (KIND_NUMERIC, KIND_CATEGORICAL, KIND_DROP)


@dataclass(frozen=True)
class FeatureSpec:
    """One raw flow feature and how it is encoded.

    ``decimals`` is the observed decimal granularity of a numeric
    feature; ``categories`` is the post-aggregation category list of a
    categorical feature and always ends with the reserved
    ``"other"`` bucket.
    """

    name: str
    kind: str
    categories: tuple[str, ...] = ()
    decimals: int = 0

    def __post_init__(self):
        if not self.name:
            raise ConfigError("feature name must be non-empty")
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown feature kind {self.kind!r} for {self.name!r}")
        if self.kind == KIND_CATEGORICAL:
            if not self.categories:
                raise ConfigError(f"categorical feature {self.name!r} has no categories")
            if len(set(self.categories)) != len(self.categories):
                raise ConfigError(f"duplicate categories in feature {self.name!r}")
            if OTHER_CATEGORY not in self.categories:
                raise ConfigError(
                    f"categorical feature {self.name!r} must reserve the "
                    f"{OTHER_CATEGORY!r} category"
                )
        if self.kind == KIND_NUMERIC and self.decimals < 0:
            raise ConfigError(f"negative decimals for feature {self.name!r}")


@dataclass(frozen=True)
class FeatureSchema:
    """Declarative description of a raw flow table."""

    features: tuple[FeatureSpec, ...]
    label_column: str
    benign_label: str

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ConfigError("feature names must be unique")
        if not self.label_column:
            raise ConfigError("label column name must be non-empty")
        if self.label_column in names:
            raise ConfigError("label column must not be listed among features")
        if not self.benign_label:
            raise ConfigError("benign label must be non-empty")

    @property
    def kept_features(self) -> tuple[FeatureSpec, ...]:
        return tuple(f for f in self.features if f.kind != KIND_DROP)

    def feature(self, name: str) -> FeatureSpec:
        for f in self.features:
            if f.name == name:
                return f
        raise KeyError(name)

    def to_json(self) -> dict:
        return {
            "label_column": self.label_column,
            "benign_label": self.benign_label,
            "features": [
                {
                    "name": f.name,
                    "kind": f.kind,
                    **({"categories": list(f.categories)} if f.kind == KIND_CATEGORICAL else {}),
                    **({"decimals": f.decimals} if f.kind == KIND_NUMERIC else {}),
                }
                for f in self.features
            ],
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "FeatureSchema":
        try:
            feats = tuple(
                FeatureSpec(
                    name=item["name"],
                    kind=item["kind"],
                    categories=tuple(item.get("categories", ())),
                    decimals=int(item.get("decimals", 0)),
                )
                for item in doc["features"]
            )
            return cls(feats, doc["label_column"], doc["benign_label"])
        except KeyError as exc:
            raise ConfigError(f"schema document missing field {exc}") from exc


@dataclass(frozen=True)
class EncodedColumn:
    """Descriptor of one encoded matrix column.

    ``category`` is None for numeric columns; one-hot columns carry the
    source feature and the category they indicate.
    """

    name: str
    source: str
    category: str | None = None

    @property
    def is_numeric(self) -> bool:
        return self.category is None


class EncodedDataset:
    """Dense numeric matrix of encoded flow samples plus labels.

    Immutable after construction; all mutating-style operations return
    new datasets.
    """

    def __init__(self, columns: Sequence[EncodedColumn], rows: np.ndarray, labels: Sequence[str]):
        self.columns = tuple(columns)
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2:
            raise DataError("rows must be a 2-D matrix")
        if rows.shape[1] != len(self.columns):
            raise DataError(
                f"row width {rows.shape[1]} does not match {len(self.columns)} columns"
            )
        labels = np.asarray(labels, dtype=object)
        if labels.shape != (rows.shape[0],):
            raise DataError("labels must align one-to-one with rows")
        if rows.size and not np.all(np.isfinite(rows)):
            raise DataError("encoded values must all be finite")
        self.rows = rows
        self.rows.setflags(write=False)
        self.labels = labels
        self.labels.setflags(write=False)
        self._check_one_hot()
        unique, counts = np.unique(labels.astype(str), return_counts=True)
        self.class_counts = dict(zip(unique.tolist(), counts.tolist()))

    def _check_one_hot(self):
        for source, idx in self.one_hot_groups.items():
            block = self.rows[:, idx]
            if block.size == 0:
                continue
            if not np.all((block == 0.0) | (block == 1.0)):
                raise DataError(f"one-hot values for {source!r} must be 0.0 or 1.0")
            if not np.all(block.sum(axis=1) == 1.0):
                raise DataError(f"one-hot group {source!r} must have exactly one active column")

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    @property
    def classes(self) -> tuple[str, ...]:
        """All class names present, in sorted order (the tie-break order)."""
        return tuple(sorted(self.class_counts))

    @property
    def numeric_indices(self) -> tuple[int, ...]:
        return tuple(i for i, c in enumerate(self.columns) if c.is_numeric)

    @property
    def one_hot_groups(self) -> dict[str, tuple[int, ...]]:
        groups: dict[str, list[int]] = {}
        for i, c in enumerate(self.columns):
            if not c.is_numeric:
                groups.setdefault(c.source, []).append(i)
        return {s: tuple(ix) for s, ix in groups.items()}

    def column_index(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise KeyError(name)

    def take(self, indices: Sequence[int]) -> "EncodedDataset":
        idx = np.asarray(indices, dtype=np.intp)
        return EncodedDataset(self.columns, self.rows[idx], self.labels[idx])

    def class_rows(self, label: str) -> np.ndarray:
        return np.flatnonzero(self.labels.astype(str) == label)

    def fingerprint(self) -> str:
        """Content hash used to pin fitted artifacts to their source data."""
        h = hashlib.sha256()
        h.update(repr(self.columns).encode())
        h.update(np.ascontiguousarray(self.rows).tobytes())
        h.update("\x1f".join(self.labels.astype(str).tolist()).encode())
        return h.hexdigest()


@dataclass(frozen=True)
class SplitPair:
    """A stratified train/holdout division of one encoded dataset."""

    train: EncodedDataset
    holdout: EncodedDataset
    ratio: float
    seed: int


def _token_decimals(token: str) -> int:
    token = token.strip()
    if "e" in token.lower():
        token = repr(float(token))
        if "e" in token.lower():
            return 0
    if "." not in token:
        return 0
    frac = token.split(".", 1)[1].rstrip("0")
    return len(frac)


def _is_numeric_token(token: str) -> bool:
    try:
        value = float(token)
    except ValueError:
        return False
    return math.isfinite(value)


def read_csv_rows(path) -> list[dict[str, str]]:
    """Read a UTF-8, comma-separated, headered CSV into string rows."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file, no header row")
        if None in reader.fieldnames or "" in reader.fieldnames:
            raise DataError(f"{path}: malformed header row")
        rows = []
        for row in reader:
            if None in row or any(v is None for v in row.values()):
                raise DataError(f"{path}: ragged row at data index {len(rows)}")
            rows.append(row)
    return rows


def load_csv(path, schema: FeatureSchema) -> list[dict[str, float | str]]:
    """Load and type-check a CSV against ``schema``.

    Returns rows with typed values (floats for numeric features) and
    drop-kind columns removed; row order is preserved. Row indices in
    error messages are 0-based data-row positions.
    """
    rows = read_csv_rows(path)
    expected = {f.name for f in schema.features} | {schema.label_column}
    header = set(rows[0].keys()) if rows else set(_read_header(path))
    for missing in sorted(expected - header):
        raise SchemaMismatchError(f"{path}: missing column {missing!r}")
    for extra in sorted(header - expected):
        raise SchemaMismatchError(f"{path}: unexpected column {extra!r}")

    kept = schema.kept_features
    bad: list[tuple[int, str, str]] = []
    out: list[dict[str, float | str]] = []
    for i, row in enumerate(rows):
        typed: dict[str, float | str] = {}
        ok = True
        for f in kept:
            token = row[f.name].strip()
            if token == "":
                bad.append((i, f.name, token))
                ok = False
                continue
            if f.kind == KIND_NUMERIC:
                if not _is_numeric_token(token):
                    bad.append((i, f.name, token))
                    ok = False
                    continue
                typed[f.name] = float(token)
            else:
                typed[f.name] = token
        label = row[schema.label_column].strip()
        if label == "":
            bad.append((i, schema.label_column, label))
            ok = False
        else:
            typed[schema.label_column] = label
        if ok:
            out.append(typed)
    if bad:
        shown = ", ".join(f"row {r} column {c!r} value {v!r}" for r, c, v in bad[:10])
        raise ParseError(
            f"{path}: {len(bad)} unparseable cell(s); first 10: {shown}", bad_rows=bad
        )
    return out


def _read_header(path) -> list[str]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            return next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, no header row") from None


def infer_schema(
    rows: Sequence[Mapping[str, str]],
    label_column: str,
    min_category_freq: float = 0.01,
    *,
    benign_label: str,
    drop: Iterable[str] = (),
) -> FeatureSchema:
    """Derive a :class:`FeatureSchema` from raw string rows.

    Columns where every value parses as a finite number become numeric
    with ``decimals`` set to the largest observed decimal count; the
    rest become categorical, keeping categories whose relative
    frequency is at least ``min_category_freq`` (order: descending
    frequency, ties lexicographic) plus the reserved ``"other"``
    bucket. Mixed numeric/text columns are rejected. The result is
    independent of row order.
    """
    if not rows:
        raise DataError("cannot infer a schema from zero rows")
    if not 0.0 <= min_category_freq < 1.0:
        raise ConfigError("min_category_freq must be in [0, 1)")
    drop = set(drop)
    names = [c for c in rows[0].keys() if c != label_column]
    if label_column not in rows[0]:
        raise SchemaMismatchError(f"label column {label_column!r} not present in rows")

    features = []
    n = len(rows)
    for name in names:
        if name in drop:
            features.append(FeatureSpec(name=name, kind=KIND_DROP))
            continue
        values = [str(row[name]).strip() for row in rows]
        numeric_flags = [_is_numeric_token(v) for v in values]
        if all(numeric_flags):
            decimals = max(_token_decimals(v) for v in values)
            features.append(FeatureSpec(name=name, kind=KIND_NUMERIC, decimals=decimals))
        elif not any(numeric_flags):
            freq: dict[str, int] = {}
            for v in values:
                freq[v] = freq.get(v, 0) + 1
            kept = [v for v in freq if freq[v] / n >= min_category_freq and v != OTHER_CATEGORY]
            kept.sort(key=lambda v: (-freq[v], v))
            features.append(
                FeatureSpec(
                    name=name,
                    kind=KIND_CATEGORICAL,
                    categories=tuple(kept) + (OTHER_CATEGORY,),
                )
            )
        else:
            n_num = sum(numeric_flags)
            raise DataError(
                f"column {name!r} mixes numeric and text content "
                f"({n_num}/{n} numeric); declare it explicitly"
            )
    return FeatureSchema(tuple(features), label_column, benign_label)


def encode(rows: Sequence[Mapping[str, float | str]], schema: FeatureSchema) -> EncodedDataset:
    """One-hot encode raw rows into an :class:`EncodedDataset`.

    Categorical values missing from the schema map to ``"other"``;
    column order is schema order, then category order.
    """
    columns: list[EncodedColumn] = []
    for f in schema.kept_features:
        if f.kind == KIND_NUMERIC:
            columns.append(EncodedColumn(name=f.name, source=f.name))
        else:
            for cat in f.categories:
                columns.append(EncodedColumn(name=f"{f.name}={cat}", source=f.name, category=cat))

    n = len(rows)
    matrix = np.zeros((n, len(columns)), dtype=np.float64)
    labels = []
    col_of = {c.name: i for i, c in enumerate(columns)}
    known = {
        f.name: set(f.categories) for f in schema.kept_features if f.kind == KIND_CATEGORICAL
    }
    for r, row in enumerate(rows):
        for f in schema.kept_features:
            value = row[f.name]
            if f.kind == KIND_NUMERIC:
                matrix[r, col_of[f.name]] = float(value)
            else:
                cat = str(value)
                if cat not in known[f.name]:
                    cat = OTHER_CATEGORY
                matrix[r, col_of[f"{f.name}={cat}"]] = 1.0
        labels.append(str(row[schema.label_column]))
    return EncodedDataset(columns, matrix, labels)


def decode(dataset: EncodedDataset, schema: FeatureSchema) -> list[dict[str, float | str]]:
    """Invert :func:`encode` (rare categories stay aggregated as "other")."""
    out = []
    groups = dataset.one_hot_groups
    for r in range(dataset.n_rows):
        row: dict[str, float | str] = {}
        for f in schema.kept_features:
            if f.kind == KIND_NUMERIC:
                row[f.name] = float(dataset.rows[r, dataset.column_index(f.name)])
            else:
                idx = groups[f.name]
                active = idx[int(np.argmax(dataset.rows[r, idx]))]
                row[f.name] = dataset.columns[active].category
        row[schema.label_column] = str(dataset.labels[r])
        out.append(row)
    return out


def write_csv(path, rows: Sequence[Mapping[str, float | str]], schema: FeatureSchema) -> None:
    """Write raw rows back out under the standard CSV contract."""
    fieldnames = [f.name for f in schema.kept_features] + [schema.label_column]
    decimals = {f.name: f.decimals for f in schema.kept_features if f.kind == KIND_NUMERIC}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            rendered = {}
            for name in fieldnames:
                value = row[name]
                if name in decimals and not isinstance(value, str):
                    rendered[name] = f"{float(value):.{decimals[name]}f}"
                else:
                    rendered[name] = str(value)
            writer.writerow(rendered)


def stratified_split(dataset: EncodedDataset, ratio: float, seed: int) -> SplitPair:
    """Split into train/holdout with per-class largest-remainder quotas.

    Within each class membership comes from a seeded shuffle, so the
    same seed always reproduces the same assignment.
    """
    if not 0.0 < ratio < 1.0:
        raise ConfigError("split ratio must be strictly between 0 and 1")
    if dataset.n_rows == 0:
        raise DataError("cannot split an empty dataset")

    labels = dataset.labels.astype(str)
    classes = dataset.classes
    quotas = {c: dataset.class_counts[c] * ratio for c in classes}
    base = {c: int(math.floor(quotas[c])) for c in classes}
    total_train = int(round(dataset.n_rows * ratio))
    leftover = total_train - sum(base.values())
    by_remainder = sorted(classes, key=lambda c: (-(quotas[c] - base[c]), c))
    for c in by_remainder[: max(leftover, 0)]:
        base[c] += 1

    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF]))
    train_idx: list[int] = []
    holdout_idx: list[int] = []
    for c in classes:
        members = np.flatnonzero(labels == c)
        perm = members[rng.permutation(members.size)]
        k = min(base[c], members.size)
        train_idx.extend(perm[:k].tolist())
        holdout_idx.extend(perm[k:].tolist())
    train_idx.sort()
    holdout_idx.sort()
    return SplitPair(
        train=dataset.take(train_idx),
        holdout=dataset.take(holdout_idx),
        ratio=ratio,
        seed=int(seed),
    )


@dataclass(frozen=True)
class ClusterSpec:
    """One weighted numeric cluster: per-feature [low, high] ranges."""

    numeric: Mapping[str, tuple[float, float]]
    weight: float = 1.0


@dataclass(frozen=True)
class CombinationSpec:
    """One weighted joint assignment of every categorical feature."""

    values: Mapping[str, str]
    weight: float = 1.0


@dataclass(frozen=True)
class ClassSpec:
    count: int
    clusters: tuple[ClusterSpec, ...]
    combinations: tuple[CombinationSpec, ...] = ()


@dataclass(frozen=True)
class SyntheticSpec:
    """Declarative generator for a desk-scale flow dataset.

    ``order_pairs`` lists (lesser, greater) numeric feature pairs that
    every generated row honors by construction; the paired features
    must share the same decimal granularity.
    """

    label_column: str
    benign_class: str
    numeric_features: Mapping[str, int] = field(default_factory=dict)
    categorical_features: tuple[str, ...] = ()
    order_pairs: tuple[tuple[str, str], ...] = ()
    classes: Mapping[str, ClassSpec] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.classes) < 2:
            raise ConfigError("synthetic spec needs at least two classes")
        if self.benign_class not in self.classes:
            raise ConfigError(f"benign class {self.benign_class!r} missing from classes")
        for name, dec in self.numeric_features.items():
            if dec < 0:
                raise ConfigError(f"negative decimals for {name!r}")
        for lesser, greater in self.order_pairs:
            for side in (lesser, greater):
                if side not in self.numeric_features:
                    raise ConfigError(f"order pair references unknown feature {side!r}")
            if lesser == greater:
                raise ConfigError("order pair must reference two distinct features")
            if self.numeric_features[lesser] != self.numeric_features[greater]:
                raise ConfigError(
                    f"order pair ({lesser!r}, {greater!r}) must share decimal granularity"
                )
        for cname, cls in self.classes.items():
            if cls.count < 1:
                raise ConfigError(f"class {cname!r} count must be >= 1")
            if not cls.clusters and self.numeric_features:
                raise ConfigError(f"class {cname!r} declares no numeric clusters")
            if self.categorical_features and not cls.combinations:
                raise ConfigError(f"class {cname!r} declares no categorical combinations")
            for cluster in cls.clusters:
                for fname in self.numeric_features:
                    if fname not in cluster.numeric:
                        raise ConfigError(f"class {cname!r} cluster misses feature {fname!r}")
                    lo, hi = cluster.numeric[fname]
                    if lo > hi:
                        raise ConfigError(f"class {cname!r} feature {fname!r} has low > high")
                for lesser, greater in self.order_pairs:
                    lo_l, _ = cluster.numeric[lesser]
                    _, hi_g = cluster.numeric[greater]
                    if lo_l > hi_g:
                        raise ConfigError(
                            f"class {cname!r}: cluster cannot satisfy "
                            f"{lesser!r} <= {greater!r}"
                        )
            for combo in cls.combinations:
                if set(combo.values.keys()) != set(self.categorical_features):
                    raise ConfigError(
                        f"class {cname!r} combination must assign every categorical feature"
                    )

    @classmethod
    def from_json(cls, doc: Mapping) -> "SyntheticSpec":
        try:
            classes = {
                name: ClassSpec(
                    count=int(spec["count"]),
                    clusters=tuple(
                        ClusterSpec(
                            numeric={k: (float(v[0]), float(v[1])) for k, v in c["numeric"].items()},
                            weight=float(c.get("weight", 1.0)),
                        )
                        for c in spec.get("clusters", [])
                    ),
                    combinations=tuple(
                        CombinationSpec(
                            values={k: str(v) for k, v in c["values"].items()},
                            weight=float(c.get("weight", 1.0)),
                        )
                        for c in spec.get("combinations", [])
                    ),
                )
                for name, spec in doc["classes"].items()
            }
            return cls(
                label_column=doc["label_column"],
                benign_class=doc["benign_class"],
                numeric_features={k: int(v) for k, v in doc.get("numeric_features", {}).items()},
                categorical_features=tuple(doc.get("categorical_features", ())),
                order_pairs=tuple((p[0], p[1]) for p in doc.get("order_pairs", ())),
                classes=classes,
            )
        except KeyError as exc:
            raise ConfigError(f"synthetic spec missing field {exc}") from exc

    @classmethod
    def from_json_file(cls, path) -> "SyntheticSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def _pick_weighted(rng: np.random.Generator, weights: np.ndarray) -> int:
    p = weights / weights.sum()
    return int(rng.choice(len(weights), p=p))


def generate_synthetic(spec: SyntheticSpec, seed: int) -> tuple[list[dict[str, str]], FeatureSchema]:
    """Generate raw rows plus their inferred schema, deterministically.

    Numeric values are uniform within the chosen cluster's per-feature
    range, with order-pair features sampled jointly so the declared
    order holds before and after rounding.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF]))
    in_pair = {f for pair in spec.order_pairs for f in pair}
    rows: list[dict[str, str]] = []
    for cname, cls in spec.classes.items():
        cluster_w = np.array([c.weight for c in cls.clusters], dtype=float)
        combo_w = np.array([c.weight for c in cls.combinations], dtype=float)
        for _ in range(cls.count):
            row: dict[str, str] = {}
            cluster = cls.clusters[_pick_weighted(rng, cluster_w)] if cls.clusters else None
            values: dict[str, float] = {}
            if cluster is not None:
                for fname, dec in spec.numeric_features.items():
                    if fname in in_pair:
                        continue
                    lo, hi = cluster.numeric[fname]
                    values[fname] = round(rng.uniform(lo, hi), dec)
                for lesser, greater in spec.order_pairs:
                    dec = spec.numeric_features[lesser]
                    lo_l, hi_l = cluster.numeric[lesser]
                    lo_g, hi_g = cluster.numeric[greater]
                    v_l = rng.uniform(lo_l, min(hi_l, hi_g))
                    v_g = rng.uniform(max(lo_g, v_l), hi_g)
                    values[lesser] = round(v_l, dec)
                    values[greater] = round(v_g, dec)
            for fname, dec in spec.numeric_features.items():
                row[fname] = f"{values[fname]:.{dec}f}"
            if cls.combinations:
                combo = cls.combinations[_pick_weighted(rng, combo_w)]
                for fname in spec.categorical_features:
                    row[fname] = combo.values[fname]
            row[spec.label_column] = cname
            rows.append(row)
    schema = infer_schema(
        rows, spec.label_column, min_category_freq=0.0, benign_label=spec.benign_class
    )
    return rows, schema


def save_encoded(path, dataset: EncodedDataset) -> None:
    """Persist an encoded dataset as a single .npz file."""
    header = json.dumps(
        [
            {"name": c.name, "source": c.source, "category": c.category}
            for c in dataset.columns
        ],
        sort_keys=True,
    )
    np.savez(
        path,
        header=np.array(header),
        rows=dataset.rows,
        labels=dataset.labels.astype(str),
    )


def load_encoded(path) -> EncodedDataset:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        columns = [
            EncodedColumn(name=c["name"], source=c["source"], category=c["category"])
            for c in header
        ]
        return EncodedDataset(columns, data["rows"], data["labels"].tolist())
