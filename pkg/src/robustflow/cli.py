"""Command-line front end.

Subcommands mirror the pipeline stages and exchange artifacts through
well-known filenames inside the output directory, so a full study can
run as one `run` invocation or step by step:

    robustflow synth        --config cfg.json --out out/
    robustflow preprocess   --config cfg.json --out out/
    robustflow fit-patterns --config cfg.json --out out/
    robustflow augment      --config cfg.json --out out/
    robustflow train        --config cfg.json --out out/
    robustflow attack       --config cfg.json --out out/
    robustflow evaluate     --config cfg.json --out out/
    robustflow run          --config cfg.json --out out/

Exit codes: 0 success, 1 configuration error, 2 data error, 3 runtime
failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import flowdata, pipeline
from .attack import augment_training_set
from .constraints import ClassConstraintTable, derive_class_constraints
from .errors import ConfigError, DataError
from .flowdata import load_encoded, save_encoded, stratified_split, write_csv
from .models import load_model, save_model
from .patterns import fit_patterns, load_sequences, save_sequences
from .pipeline import RunConfig, run_pipeline
from .rng import derive_seed

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3


def _load_config(args) -> RunConfig:
    config = RunConfig.from_file(args.config)
    if args.seed is not None:
        config = RunConfig.from_json(
            config.raw | {"seed": int(args.seed)}, base_dir=Path(args.config).parent
        )
    if args.threads is not None:
        config.threads = int(args.threads)
    return config


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args) -> int:
    config = _load_config(args)
    if config.synthetic is None:
        raise ConfigError("synth needs a dataset.synthetic block in the config")
    out = _out(args)
    rows, schema = flowdata.generate_synthetic(
        config.synthetic, derive_seed(config.seed, pipeline._K_SYNTH)
    )
    write_csv(out / "data.csv", rows, schema)
    pipeline._write_json(out / "schema.json", schema.to_json())
    print(f"wrote {out / 'data.csv'} ({len(rows)} rows) and {out / 'schema.json'}")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    config = _load_config(args)
    out = _out(args)
    schema, dataset = pipeline._stage_data(config)
    split = stratified_split(
        dataset, config.split_ratio, derive_seed(config.seed, pipeline._K_SPLIT)
    )
    pipeline._write_json(out / "schema.json", schema.to_json())
    save_encoded(out / "train.npz", split.train)
    save_encoded(out / "holdout.npz", split.holdout)
    print(
        f"wrote train ({split.train.n_rows} rows) and holdout "
        f"({split.holdout.n_rows} rows) under {out}"
    )
    return EXIT_OK


def _read_side(out: Path, side: str):
    path = out / f"{side}.npz"
    if not path.exists():
        raise DataError(f"{path} missing; run `preprocess` first")
    return load_encoded(path)


def _read_schema(out: Path):
    import json

    path = out / "schema.json"
    if not path.exists():
        raise DataError(f"{path} missing; run `preprocess` first")
    with open(path, encoding="utf-8") as fh:
        return flowdata.FeatureSchema.from_json(json.load(fh))


def cmd_fit_patterns(args) -> int:
    config = _load_config(args)
    out = _out(args)
    schema = _read_schema(out)
    for side in ("train", "holdout"):
        dataset = _read_side(out, side)
        sequences = fit_patterns(
            dataset, schema, config.patterns, config.epsilon, config.seed
        )
        table = derive_class_constraints(
            dataset, schema, config.patterns.categorical_subsets
        )
        save_sequences(out / f"patterns_{side}.json", sequences)
        table.save(out / f"constraints_{side}.json")
    print(f"wrote pattern sequences and constraint tables under {out}")
    return EXIT_OK


def cmd_augment(args) -> int:
    config = _load_config(args)
    out = _out(args)
    train = _read_side(out, "train")
    sequences = load_sequences(out / "patterns_train.json")
    table = ClassConstraintTable.load(out / "constraints_train.json")
    augmented = augment_training_set(
        train, sequences, config.domain, table, derive_seed(config.seed, pipeline._K_AUGMENT)
    )
    save_encoded(out / "train_augmented.npz", augmented)
    print(f"wrote {out / 'train_augmented.npz'} ({augmented.n_rows} rows)")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _load_config(args)
    out = _out(args)
    schema = _read_schema(out)
    train = _read_side(out, "train")
    augmented = None
    if config.adversarial_training:
        path = out / "train_augmented.npz"
        if not path.exists():
            raise DataError(f"{path} missing; run `augment` first")
        augmented = load_encoded(path)
    models = pipeline._stage_train(config, train, augmented, schema)
    for m in models:
        if m.training != "external":
            save_model(out / "models" / f"{m.name}.json", m.model)
    print(f"trained {len(models)} models under {out / 'models'}")
    return EXIT_OK


def _load_models(config, out: Path, schema):
    models = []
    model_dir = out / "models"
    if not model_dir.exists():
        raise DataError(f"{model_dir} missing; run `train` first")
    trainings = ["regular"] + (["adversarial"] if config.adversarial_training else [])
    for family in sorted(config.families):
        view = pipeline._family_view(family, (), schema.benign_label)
        for training in trainings:
            path = model_dir / f"{family}__{training}.json"
            if not path.exists():
                raise DataError(f"{path} missing; run `train` first")
            models.append(pipeline.TrainedModel(family, training, load_model(path), view))
    if config.external_command:
        from .adapter import ExternalPredictor

        models.append(
            pipeline.TrainedModel(
                "external", "external", ExternalPredictor(config.external_command), {}
            )
        )
    return models


def cmd_attack(args) -> int:
    config = _load_config(args)
    out = _out(args)
    schema = _read_schema(out)
    holdout = _read_side(out, "holdout")
    models = _load_models(config, out, schema)
    # the family view needs the holdout's class list
    for m in models:
        m.view = pipeline._family_view(m.family, holdout.classes, schema.benign_label)
    sequences = load_sequences(out / "patterns_holdout.json")
    table = ClassConstraintTable.load(out / "constraints_holdout.json")
    adversarial, traces = pipeline._stage_attack(config, models, holdout, sequences, table)
    for (name, goal), trace in sorted(traces.items()):
        trace.to_csv(out / "traces" / f"{name}__{goal}.csv")
    for (name, goal), adv in sorted(adversarial.items()):
        adv.export(
            out / "adversarial" / f"{name}__{goal}.csv",
            out / "adversarial" / f"{name}__{goal}.provenance.json",
            schema,
        )
    print(f"ran {len(traces)} attacks; traces and adversarial sets under {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    import numpy as np

    config = _load_config(args)
    out = _out(args)
    schema = _read_schema(out)
    holdout = _read_side(out, "holdout")
    models = _load_models(config, out, schema)
    for m in models:
        m.view = pipeline._family_view(m.family, holdout.classes, schema.benign_label)
    adversarial = {}
    for m in models:
        for goal in config.goals:
            path = out / "adversarial" / f"{m.name}__{goal}.csv"
            if not path.exists():
                raise DataError(f"{path} missing; run `attack` first")
            rows = flowdata.load_csv(path, schema)
            from .attack import AdversarialSet, RowProvenance

            dataset = flowdata.encode(rows, schema)
            adversarial[(m.name, goal)] = AdversarialSet(
                dataset, tuple(RowProvenance("original") for _ in range(dataset.n_rows))
            )
    reports, summary = pipeline._stage_evaluate(config, models, holdout, adversarial, schema)
    for (name, cell), report in sorted(reports.items()):
        pipeline._write_json(out / "metrics" / f"{name}__{cell}.json", report.to_json())
        pipeline._write_text(out / "metrics" / f"{name}__{cell}.txt", report.to_text())
    pipeline._write_json(out / "summary.json", summary)
    pipeline._write_text(out / "summary.txt", pipeline._render_summary(summary))
    print((out / "summary.txt").read_text(), end="")
    return EXIT_OK


def cmd_run(args) -> int:
    config = _load_config(args)
    out = _out(args)
    result = run_pipeline(config, out)
    print((out / "summary.txt").read_text(), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robustflow",
        description="Adversarial robustness workbench for flow classifiers",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "synth": cmd_synth,
        "preprocess": cmd_preprocess,
        "fit-patterns": cmd_fit_patterns,
        "augment": cmd_augment,
        "train": cmd_train,
        "attack": cmd_attack,
        "evaluate": cmd_evaluate,
        "run": cmd_run,
    }
    for name, handler in commands.items():
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="RunConfig JSON document")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=None, help="worker threads")
        p.set_defaults(handler=handler)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
