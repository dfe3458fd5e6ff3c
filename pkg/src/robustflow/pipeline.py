"""End-to-end robustness study orchestration.

The five-step loop: preprocess and split, fit train-side patterns and
augment the training set, train one model per family on the regular
and augmented sets, attack every model on the holdout with targeted
and untargeted goals, then evaluate all models on the regular and
adversarial holdouts and pick the most adversarially robust one.

Every artifact written under the output directory is a pure function
of (config, seeds): reruns produce byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from . import flowdata
from .adapter import ExternalPredictor
from .attack import AttackConfig, AttackTrace, run_evasion_attack, augment_training_set
from .constraints import (
    ClassConstraintTable,
    DomainConstraint,
    derive_class_constraints,
    domain_constraints_from_json,
    domain_constraints_to_json,
)
from .errors import ConfigError, DataError
from .flowdata import EncodedDataset, FeatureSchema, SyntheticSpec, encode, stratified_split
from .metrics import MetricsReport, build_report
from .models import (
    ForestParams,
    GossBoostParams,
    HistBoostParams,
    IsolationParams,
    grid_search_cv,
    save_model,
    subsample_for_contamination,
    train_goss_gbdt,
    train_hist_gbdt,
    train_isolation_forest,
    train_random_forest,
)
from .patterns import PatternConfig, fit_patterns, save_sequences
from .rng import derive_seed

# fixed stage keys under the master seed
_K_SPLIT, _K_AUGMENT, _K_MODELS, _K_ATTACK, _K_SYNTH = 1, 2, 3, 4, 5

MALICIOUS_VIEW_LABEL = "malicious"

CELL_CLEAN = "clean"
TRAIN_REGULAR = "regular"
TRAIN_ADVERSARIAL = "adversarial"

SUPERVISED_FAMILIES = ("random_forest", "hist_gbdt", "goss_gbdt")
ALL_FAMILIES = SUPERVISED_FAMILIES + ("isolation_forest",)


@dataclass
class RunConfig:
    """Parsed pipeline configuration (one JSON document)."""

    seed: int
    dataset_csv: str | None
    schema_path: str | None
    synthetic: SyntheticSpec | None
    benign_label: str | None
    label_column: str
    min_category_freq: float
    drop_features: tuple[str, ...]
    split_ratio: float
    domain: list[DomainConstraint]
    tolerance: float
    patterns: PatternConfig
    epsilon: float
    families: dict[str, list[dict]]
    external_command: tuple[str, ...] | None
    cv_folds: int
    adversarial_training: bool
    attack: AttackConfig
    goals: tuple[str, ...]
    threads: int
    export_adversarial: bool
    export_models: bool
    raw: dict = field(repr=False, default_factory=dict)

    @classmethod
    def from_json(cls, doc: Mapping, base_dir: Path | None = None) -> "RunConfig":
        base = Path(base_dir) if base_dir else Path.cwd()

        def resolve(p):
            return str(p) if Path(p).is_absolute() else str(base / p)

        dataset = doc.get("dataset", {})
        csv_path = dataset.get("csv")
        schema_path = dataset.get("schema")
        synthetic = dataset.get("synthetic")
        if csv_path is None and synthetic is None:
            raise ConfigError("dataset needs either a csv path or a synthetic spec")
        if csv_path is not None and synthetic is not None:
            raise ConfigError("dataset cannot have both a csv path and a synthetic spec")
        if csv_path is not None:
            csv_path = resolve(csv_path)
            if not Path(csv_path).exists():
                raise ConfigError(f"dataset csv {csv_path!r} does not exist")
        if schema_path is not None:
            schema_path = resolve(schema_path)
            if not Path(schema_path).exists():
                raise ConfigError(f"schema file {schema_path!r} does not exist")

        models = doc.get("models", {})
        families: dict[str, list[dict]] = {}
        for family in ALL_FAMILIES:
            body = models.get(family)
            if body is None or body.get("enabled", True) is False:
                continue
            grid = body.get("grid", [{}])
            if not isinstance(grid, list) or not grid:
                raise ConfigError(f"family {family!r} grid must be a non-empty list")
            families[family] = grid
        external = models.get("external", {}).get("command")

        attack_doc = doc.get("attack", {})
        goals = tuple(attack_doc.get("goals", ("untargeted", "targeted")))
        for goal in goals:
            if goal not in ("untargeted", "targeted"):
                raise ConfigError(f"unknown attack goal {goal!r}")

        seed = doc.get("seed")
        if seed is None:
            raise ConfigError("config must pin an explicit seed")

        patterns_doc = doc.get("patterns", {})
        export = doc.get("export", {})
        return cls(
            seed=int(seed),
            dataset_csv=csv_path,
            schema_path=schema_path,
            synthetic=SyntheticSpec.from_json(synthetic) if synthetic else None,
            benign_label=dataset.get("benign_label"),
            label_column=dataset.get("label_column", "label"),
            min_category_freq=float(dataset.get("min_category_freq", 0.01)),
            drop_features=tuple(dataset.get("drop", ())),
            split_ratio=float(doc.get("split", {}).get("ratio", 0.7)),
            domain=domain_constraints_from_json(doc.get("constraints", {}).get("domain", [])),
            tolerance=float(doc.get("constraints", {}).get("tolerance", 1e-9)),
            patterns=PatternConfig.from_json(patterns_doc),
            epsilon=float(patterns_doc.get("epsilon", 0.3)),
            families=families,
            external_command=tuple(external) if external else None,
            cv_folds=int(doc.get("cv_folds", 5)),
            adversarial_training=bool(doc.get("adversarial_training", True)),
            attack=AttackConfig(
                goal="untargeted",
                max_attempts=int(attack_doc.get("max_attempts", 30)),
                seed=derive_seed(int(seed), _K_ATTACK),
                keep_failed=bool(attack_doc.get("keep_failed", True)),
            ),
            goals=goals,
            threads=int(doc.get("threads", 1)),
            export_adversarial=bool(export.get("adversarial_sets", False)),
            export_models=bool(export.get("models", False)),
            raw=dict(doc),
        )

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh), base_dir=path.parent)


def _write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


@dataclass
class TrainedModel:
    family: str
    training: str  # regular | adversarial | external
    model: object
    view: dict[str, str]  # true-label mapping for evaluation, may be empty
    best_params: Mapping | None = None

    @property
    def name(self) -> str:
        return f"{self.family}__{self.training}"


def _family_trainer(family: str, benign_label: str):
    if family == "random_forest":
        return lambda ds, params, seed: train_random_forest(ds, ForestParams(**params), seed)
    if family == "hist_gbdt":
        return lambda ds, params, seed: train_hist_gbdt(ds, HistBoostParams(**params), seed)
    if family == "goss_gbdt":
        return lambda ds, params, seed: train_goss_gbdt(ds, GossBoostParams(**params), seed)
    if family == "isolation_forest":

        def train(ds, params, seed):
            iso = IsolationParams(**params)
            rebalanced = subsample_for_contamination(
                ds, iso.contamination, seed, benign_label
            )
            return train_isolation_forest(
                rebalanced, iso, seed, benign_label, MALICIOUS_VIEW_LABEL
            )

        return train
    raise ConfigError(f"unknown model family {family!r}")


def _family_view(family: str, classes, benign_label: str) -> dict[str, str]:
    """Anomaly detectors are scored in a collapsed binary label space."""
    if family == "isolation_forest":
        return {c: MALICIOUS_VIEW_LABEL for c in classes if c != benign_label}
    return {}


def _evaluate(model: TrainedModel, dataset: EncodedDataset, benign_label: str) -> MetricsReport:
    truths = [model.view.get(l, l) for l in dataset.labels.astype(str)]
    predicted = model.model.predict_batch(dataset.rows)
    classes = sorted(set(truths) | set(predicted) | {benign_label})
    return build_report(truths, predicted, classes, benign_label)


@dataclass
class PipelineResult:
    schema: FeatureSchema
    split: flowdata.SplitPair
    models: list[TrainedModel]
    reports: dict[tuple[str, str], MetricsReport]  # (model name, cell)
    traces: dict[tuple[str, str], AttackTrace]  # (model name, goal)
    summary: dict


class _StageStatus:
    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.done: list[str] = []

    def begin(self, stage: str):
        _write_json(
            self.out_dir / "run_status.json",
            {"status": "incomplete", "stage": stage, "completed": self.done},
        )

    def finish(self, stage: str):
        self.done.append(stage)

    def complete(self):
        _write_json(
            self.out_dir / "run_status.json",
            {"status": "complete", "stage": None, "completed": self.done},
        )


def run_pipeline(config: RunConfig, out_dir) -> PipelineResult:
    """Execute the full study and write all artifacts under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    status = _StageStatus(out)
    stage = "preprocess"
    try:
        status.begin(stage)
        schema, dataset = _stage_data(config)
        split = stratified_split(dataset, config.split_ratio, derive_seed(config.seed, _K_SPLIT))
        _write_json(out / "schema.json", schema.to_json())
        _write_json(out / "config.resolved.json", config.raw | {"seed": config.seed})
        status.finish(stage)

        stage = "augment"
        status.begin(stage)
        cat_subsets = config.patterns.categorical_subsets
        train_table = derive_class_constraints(split.train, schema, cat_subsets)
        train_sequences = fit_patterns(
            split.train, schema, config.patterns, config.epsilon, config.seed
        )
        train_table.save(out / "constraints_train.json")
        save_sequences(out / "patterns_train.json", train_sequences)
        augmented = None
        if config.adversarial_training:
            augmented = augment_training_set(
                split.train,
                train_sequences,
                config.domain,
                train_table,
                derive_seed(config.seed, _K_AUGMENT),
            )
        status.finish(stage)

        stage = "train"
        status.begin(stage)
        models = _stage_train(config, split.train, augmented, schema)
        if config.export_models:
            for m in models:
                if m.training != "external":
                    save_model(out / "models" / f"{m.name}.json", m.model)
        status.finish(stage)

        stage = "attack"
        status.begin(stage)
        holdout_table = derive_class_constraints(split.holdout, schema, cat_subsets)
        holdout_sequences = fit_patterns(
            split.holdout, schema, config.patterns, config.epsilon, config.seed
        )
        holdout_table.save(out / "constraints_holdout.json")
        save_sequences(out / "patterns_holdout.json", holdout_sequences)
        adversarial, traces = _stage_attack(
            config, models, split.holdout, holdout_sequences, holdout_table
        )
        for (name, goal), trace in sorted(traces.items()):
            trace.to_csv(out / "traces" / f"{name}__{goal}.csv")
        if config.export_adversarial:
            for (name, goal), adv in sorted(adversarial.items()):
                adv.export(
                    out / "adversarial" / f"{name}__{goal}.csv",
                    out / "adversarial" / f"{name}__{goal}.provenance.json",
                    schema,
                )
        status.finish(stage)

        stage = "evaluate"
        status.begin(stage)
        reports, summary = _stage_evaluate(
            config, models, split.holdout, adversarial, schema
        )
        for (name, cell), report in sorted(reports.items()):
            _write_json(out / "metrics" / f"{name}__{cell}.json", report.to_json())
            _write_text(out / "metrics" / f"{name}__{cell}.txt", report.to_text())
        _write_json(out / "summary.json", summary)
        _write_text(out / "summary.txt", _render_summary(summary))
        status.finish(stage)
        status.complete()
    except Exception as exc:
        _write_json(
            out / "run_status.json",
            {
                "status": "incomplete",
                "stage": stage,
                "completed": status.done,
                "error": f"{type(exc).__name__}: {exc}",
            },
        )
        raise
    return PipelineResult(
        schema=schema,
        split=split,
        models=models,
        reports=reports,
        traces=traces,
        summary=summary,
    )


def _stage_data(config: RunConfig) -> tuple[FeatureSchema, EncodedDataset]:
    if config.synthetic is not None:
        rows, schema = flowdata.generate_synthetic(
            config.synthetic, derive_seed(config.seed, _K_SYNTH)
        )
        return schema, encode(rows, schema)
    if config.schema_path:
        with open(config.schema_path, encoding="utf-8") as fh:
            schema = FeatureSchema.from_json(json.load(fh))
        rows = flowdata.load_csv(config.dataset_csv, schema)
        return schema, encode(rows, schema)
    if not config.benign_label:
        raise ConfigError("dataset.benign_label is required when inferring a schema")
    raw = flowdata.read_csv_rows(config.dataset_csv)
    schema = flowdata.infer_schema(
        raw,
        config.label_column,
        config.min_category_freq,
        benign_label=config.benign_label,
        drop=config.drop_features,
    )
    rows = flowdata.load_csv(config.dataset_csv, schema)
    return schema, encode(rows, schema)


def _stage_train(config, train, augmented, schema) -> list[TrainedModel]:
    models: list[TrainedModel] = []
    sets = [(TRAIN_REGULAR, train)]
    if augmented is not None:
        sets.append((TRAIN_ADVERSARIAL, augmented))
    for fi, (family, grid) in enumerate(sorted(config.families.items())):
        trainer = _family_trainer(family, schema.benign_label)
        view = _family_view(family, train.classes, schema.benign_label)
        for ti, (training, dataset) in enumerate(sets):
            seed = derive_seed(config.seed, _K_MODELS, fi, ti)
            if len(grid) == 1:
                # single-point grids skip fold scoring; the winner is known
                model = trainer(dataset, grid[0], derive_seed(seed, 0))
                best_params = grid[0]
            else:
                result = grid_search_cv(
                    trainer, grid, dataset, folds=config.cv_folds, seed=seed, view=view
                )
                model = result.model
                best_params = result.best_params
            models.append(TrainedModel(family, training, model, view, best_params))
    if config.external_command:
        predictor = ExternalPredictor(config.external_command)
        models.append(TrainedModel("external", "external", predictor, {}))
    return models


def _stage_attack(config, models, holdout, sequences, table):
    adversarial = {}
    traces = {}
    for m in models:
        for goal in config.goals:
            attack_config = AttackConfig(
                goal=goal,
                max_attempts=config.attack.max_attempts,
                seed=config.attack.seed,
                keep_failed=config.attack.keep_failed,
            )
            adv, trace = run_evasion_attack(
                holdout,
                m.model,
                sequences,
                config.domain,
                table,
                attack_config,
                view=m.view,
                n_threads=config.threads,
            )
            adversarial[(m.name, goal)] = adv
            traces[(m.name, goal)] = trace
    return adversarial, traces


def _stage_evaluate(config, models, holdout, adversarial, schema):
    benign = schema.benign_label
    reports: dict[tuple[str, str], MetricsReport] = {}
    for m in models:
        reports[(m.name, CELL_CLEAN)] = _evaluate(m, holdout, benign)
        for goal in config.goals:
            adv = adversarial[(m.name, goal)]
            reports[(m.name, goal)] = _evaluate(m, adv.dataset, benign)

    cells = {}
    for (name, cell), report in reports.items():
        cells.setdefault(name, {})[cell] = {
            "overall_accuracy": report.overall_accuracy,
            "malicious_accuracy": report.malicious_accuracy,
            "macro_f1": report.macro_f1,
            "false_positive_rate": report.false_positive_rate,
        }

    # most robust: best malicious-only accuracy under the untargeted
    # attack (the harsher goal), ties broken by clean macro-F1
    robust_goal = "untargeted" if "untargeted" in config.goals else config.goals[0]
    ranking = []
    for m in models:
        under_attack = reports[(m.name, robust_goal)].malicious_accuracy
        clean = reports[(m.name, CELL_CLEAN)].macro_f1
        ranking.append(
            {
                "model": m.name,
                "family": m.family,
                "training": m.training,
                "attack_malicious_accuracy": under_attack,
                "clean_macro_f1": clean,
            }
        )
    ranking.sort(
        key=lambda r: (
            -(r["attack_malicious_accuracy"] if r["attack_malicious_accuracy"] is not None else -1.0),
            -(r["clean_macro_f1"] if r["clean_macro_f1"] is not None else -1.0),
            r["model"],
        )
    )
    summary = {
        "benign_label": benign,
        "goals": list(config.goals),
        "robustness_goal": robust_goal,
        "cells": {name: dict(sorted(c.items())) for name, c in sorted(cells.items())},
        "ranking": ranking,
        "most_robust": ranking[0]["model"] if ranking else None,
    }
    return reports, summary


def _render_summary(summary: dict) -> str:
    lines = [
        f"most adversarially robust model: {summary['most_robust']}",
        f"(ranked by malicious-only accuracy under the {summary['robustness_goal']} attack,"
        " ties by clean macro-F1)",
        "",
        f"{'model':<36}{'cell':<14}{'mal.acc':>9}{'acc':>9}{'macroF1':>9}{'fpr':>9}",
    ]

    def fmt(v):
        return "n/a" if v is None else f"{v:.4f}"

    for name, cells in summary["cells"].items():
        for cell, values in cells.items():
            lines.append(
                f"{name:<36}{cell:<14}"
                f"{fmt(values['malicious_accuracy']):>9}"
                f"{fmt(values['overall_accuracy']):>9}"
                f"{fmt(values['macro_f1']):>9}"
                f"{fmt(values['false_positive_rate']):>9}"
            )
    return "\n".join(lines) + "\n"
