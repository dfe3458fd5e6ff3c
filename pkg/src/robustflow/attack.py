"""Adversarial training augmentation and budgeted black-box evasion.

The evasion engine perturbs every malicious holdout row until the
model misclassifies it or the attempt budget runs out, querying only
class predictions. Rows are attacked on independent random streams
derived from (master seed, row index), so batched, threaded, and
serial executions produce identical results.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .constraints import ClassConstraintTable, DomainConstraint
from .errors import ConfigError, DataError, PredictorError
from .flowdata import EncodedDataset, FeatureSchema, decode, write_csv
from .patterns import ClassPatternSequence, perturb
from .rng import derive_rng

GOAL_UNTARGETED = "untargeted"
GOAL_TARGETED = "targeted"
MODE_SIMPLE = "simple"
MODE_FULL = "full"


@dataclass(frozen=True)
class AttackConfig:
    """Evasion budget and goal; binary problems normalize the goal."""

    goal: str = GOAL_UNTARGETED
    max_attempts: int = 30
    seed: int = 0
    mode: str = MODE_FULL
    keep_failed: bool = True  # keep the final attempt when the budget runs out

    def __post_init__(self):
        if self.goal not in (GOAL_UNTARGETED, GOAL_TARGETED):
            raise ConfigError(f"unknown attack goal {self.goal!r}")
        if self.mode not in (MODE_SIMPLE, MODE_FULL):
            raise ConfigError(f"unknown attack mode {self.mode!r}")
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")

    def effective_goal(self, n_classes: int) -> str:
        """With two classes both goals coincide; normalize to targeted."""
        return GOAL_TARGETED if n_classes == 2 else self.goal


def evasion_success(
    true_class: str, predicted_class: str, goal: str, benign_label: str
) -> bool:
    """Did this prediction satisfy the attack goal for a malicious row?"""
    if true_class == benign_label:
        raise DataError("evasion success is defined for non-benign rows only")
    if goal == GOAL_UNTARGETED:
        return predicted_class != true_class
    if goal == GOAL_TARGETED:
        return predicted_class == benign_label
    raise ConfigError(f"unknown attack goal {goal!r}")


@dataclass(frozen=True)
class RowProvenance:
    kind: str  # "original" | "perturbed"
    attempts: int = 0
    evaded: bool = False


@dataclass(frozen=True)
class AdversarialSet:
    """Mirror of a source dataset with malicious rows replaced."""

    dataset: EncodedDataset
    provenance: tuple[RowProvenance, ...]

    def __post_init__(self):
        if len(self.provenance) != self.dataset.n_rows:
            raise DataError("provenance must align one-to-one with rows")

    def provenance_json(self) -> list[dict]:
        return [
            {
                "row": i,
                "kind": p.kind,
                "attempts": p.attempts,
                "evaded": p.evaded,
                "label": str(self.dataset.labels[i]),
            }
            for i, p in enumerate(self.provenance)
        ]

    def export(self, csv_path, sidecar_path, schema: FeatureSchema) -> None:
        """CSV under the standard contract plus a provenance sidecar."""
        write_csv(csv_path, decode(self.dataset, schema), schema)
        with open(sidecar_path, "w", encoding="utf-8") as fh:
            json.dump(self.provenance_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass(frozen=True)
class AttackTrace:
    """Accuracy trajectory of one evasion run.

    ``accuracy[k]`` is malicious-only accuracy after attempt k over the
    evolving set (index 0 is the unattacked baseline, which does not
    count against the query budget); rows that evade keep their evading
    prediction. The trace ends early once every row has evaded.
    """

    goal: str
    max_attempts: int
    n_malicious: int
    accuracy: tuple[float, ...]
    cumulative_evasions: tuple[int, ...]
    queries: int
    evasions_by_class: Mapping[str, int]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["attempt", "accuracy", "cumulative_evasions"])
            for i, (acc, ev) in enumerate(zip(self.accuracy, self.cumulative_evasions)):
                writer.writerow([i, f"{acc:.10f}", ev])

    def to_json(self) -> dict:
        return {
            "goal": self.goal,
            "max_attempts": self.max_attempts,
            "n_malicious": self.n_malicious,
            "accuracy": list(self.accuracy),
            "cumulative_evasions": list(self.cumulative_evasions),
            "queries": self.queries,
            "evasions_by_class": dict(sorted(self.evasions_by_class.items())),
        }


def _check_sequences(sequences, dataset, classes_needed):
    for cls in classes_needed:
        seq = sequences.get(cls)
        if seq is None:
            raise DataError(f"no pattern sequence for class {cls!r}")
        if seq.fitted_on != dataset.fingerprint():
            raise DataError(
                f"sequence for class {cls!r} was fitted on a different dataset"
            )


def augment_training_set(
    train: EncodedDataset,
    sequences: Mapping[str, ClassPatternSequence],
    domain: Sequence[DomainConstraint],
    table: ClassConstraintTable,
    seed: int,
) -> EncodedDataset:
    """Append one perturbed copy of every malicious training row.

    Benign rows are untouched, so the result holds exactly twice as
    many malicious rows as the input. The sequences must have been
    fitted on this training set.
    """
    benign = table.benign_label
    labels = train.labels.astype(str)
    mal_idx = np.flatnonzero(labels != benign)
    _check_sequences(sequences, train, sorted(set(labels[mal_idx])))

    extra_rows = np.empty((mal_idx.size, train.rows.shape[1]), dtype=np.float64)
    for pos, i in enumerate(mal_idx):
        rng = derive_rng(seed, int(i))
        extra_rows[pos] = perturb(train.rows[i], sequences[labels[i]], domain, table, rng)
    rows = np.vstack([train.rows, extra_rows]) if mal_idx.size else train.rows.copy()
    new_labels = labels.tolist() + labels[mal_idx].tolist()
    return EncodedDataset(train.columns, rows, new_labels)


def run_evasion_attack(
    holdout: EncodedDataset,
    predictor,
    sequences: Mapping[str, ClassPatternSequence],
    domain: Sequence[DomainConstraint],
    table: ClassConstraintTable,
    config: AttackConfig,
    view: Mapping[str, str] | None = None,
    n_threads: int = 1,
) -> tuple[AdversarialSet, AttackTrace]:
    """Attack every malicious row of the holdout against one predictor.

    Attempts chain: attempt k perturbs the output of attempt k-1. A row
    is replaced by its first successful example, or by the final
    attempt when the budget is exhausted; benign rows are copied
    untouched. ``view`` optionally maps true labels into the
    predictor's label space (anomaly detectors see a collapsed binary
    view) and is applied to success checks and trace accuracy only.
    """
    benign = table.benign_label
    labels = holdout.labels.astype(str)
    mal_idx = np.flatnonzero(labels != benign)
    _check_sequences(sequences, holdout, sorted(set(labels[mal_idx])))

    view = dict(view) if view is not None else {}
    true_view = np.array([view.get(l, l) for l in labels[mal_idx]], dtype=object)
    goal = config.effective_goal(len(set(labels.tolist())))

    current = holdout.rows[mal_idx].copy()
    streams = [derive_rng(config.seed, int(i)) for i in mal_idx]
    seq_of = [sequences[labels[i]] for i in mal_idx]
    n_mal = mal_idx.size
    evaded = np.zeros(n_mal, dtype=bool)
    attempts_used = np.zeros(n_mal, dtype=np.int64)
    queries = 0

    def query(rows_subset, positions):
        try:
            predicted = predictor.predict_batch(rows_subset)
        except PredictorError:
            raise
        except Exception as exc:
            raise PredictorError(
                f"predictor failed on row {int(mal_idx[positions[0]])}: {exc}",
                row_index=int(mal_idx[positions[0]]),
            ) from exc
        if len(predicted) != len(positions):
            raise PredictorError(
                "predictor returned a mismatched number of labels",
                row_index=int(mal_idx[positions[0]]),
            )
        return predicted

    last_pred = np.array(query(current, np.arange(n_mal)), dtype=object)
    accuracy = [float(np.mean(last_pred == true_view)) if n_mal else 1.0]
    cumulative = [0]

    def perturb_range(span):
        lo, hi = span
        for pos in active[lo:hi]:
            current[pos] = perturb(
                current[pos], seq_of[pos], domain, table, streams[pos]
            )

    for _ in range(config.max_attempts):
        active = np.flatnonzero(~evaded)
        if active.size == 0:
            break
        if n_threads > 1 and active.size > 1:
            bounds = np.linspace(0, active.size, n_threads + 1, dtype=int)
            spans = list(zip(bounds[:-1], bounds[1:]))
            with ThreadPoolExecutor(max_workers=n_threads) as pool:
                list(pool.map(perturb_range, spans))
        else:
            perturb_range((0, active.size))

        predicted = query(current[active], active)
        queries += active.size
        attempts_used[active] += 1
        last_pred[active] = predicted
        for pos, pred in zip(active, predicted):
            if evasion_success(str(true_view[pos]), pred, goal, benign):
                evaded[pos] = True
        accuracy.append(float(np.mean(last_pred == true_view)))
        cumulative.append(int(evaded.sum()))

    adv_rows = holdout.rows.copy()
    provenance: list[RowProvenance] = [RowProvenance("original")] * holdout.n_rows
    for pos, i in enumerate(mal_idx):
        if evaded[pos] or config.keep_failed:
            adv_rows[i] = current[pos]
            provenance[i] = RowProvenance(
                "perturbed", int(attempts_used[pos]), bool(evaded[pos])
            )
    adv = AdversarialSet(
        EncodedDataset(holdout.columns, adv_rows, labels.tolist()),
        tuple(provenance),
    )

    by_class: dict[str, int] = {}
    for pos, i in enumerate(mal_idx):
        if evaded[pos]:
            cls = labels[i]
            by_class[cls] = by_class.get(cls, 0) + 1
    trace = AttackTrace(
        goal=config.goal,
        max_attempts=config.max_attempts,
        n_malicious=int(n_mal),
        accuracy=tuple(accuracy),
        cumulative_evasions=tuple(cumulative),
        queries=int(queries),
        evasions_by_class=by_class,
    )
    return adv, trace
