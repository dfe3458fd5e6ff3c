"""Versioned JSON serialization for every model kind."""

from __future__ import annotations

import json
from dataclasses import asdict

import numpy as np

from ..errors import ConfigError
from .boosting import BoostModel, GossBoostParams, HistBoostParams
from .forest import ForestParams, RandomForestModel
from .isolation import IsolationForestModel, IsolationParams
from .trees import DecisionTreeModel, Tree, TreeParams

FORMAT_VERSION = 1


def model_to_json(model) -> dict:
    doc = {"format": FORMAT_VERSION, "kind": model.kind}
    if isinstance(model, DecisionTreeModel):
        doc |= {
            "classes": list(model.classes),
            "params": asdict(model.params),
            "tree": model.tree.to_json(),
        }
    elif isinstance(model, RandomForestModel):
        doc |= {
            "classes": list(model.classes),
            "params": asdict(model.params),
            "trees": [t.to_json() for t in model.trees],
        }
    elif isinstance(model, BoostModel):
        doc |= {
            "classes": list(model.classes),
            "growth": model.growth,
            "learning_rate": model.learning_rate,
            "base_score": model.base_score.tolist(),
            "train_losses": model.train_losses,
            "rounds": [[t.to_json() for t in r] for r in model.trees],
        }
    elif isinstance(model, IsolationForestModel):
        doc |= {
            "params": asdict(model.params),
            "sample_size": model.sample_size,
            "threshold": model.threshold,
            "benign_label": model.benign_label,
            "malicious_label": model.malicious_label,
            "trees": [t.to_json() for t in model.trees],
        }
    else:
        raise ConfigError(f"cannot serialize model of type {type(model).__name__}")
    return doc


def model_from_json(doc: dict):
    if doc.get("format") != FORMAT_VERSION:
        raise ConfigError(f"unsupported model format {doc.get('format')!r}")
    kind = doc.get("kind")
    if kind == "decision_tree":
        return DecisionTreeModel(
            Tree.from_json(doc["tree"]), tuple(doc["classes"]), TreeParams(**doc["params"])
        )
    if kind == "random_forest":
        return RandomForestModel(
            [Tree.from_json(t) for t in doc["trees"]],
            tuple(doc["classes"]),
            ForestParams(**doc["params"]),
        )
    if kind == "boosting":
        return BoostModel(
            classes=tuple(doc["classes"]),
            base_score=np.array(doc["base_score"], dtype=np.float64),
            learning_rate=doc["learning_rate"],
            growth=doc["growth"],
            trees=[[Tree.from_json(t) for t in r] for r in doc["rounds"]],
            train_losses=doc.get("train_losses", ()),
        )
    if kind == "isolation_forest":
        return IsolationForestModel(
            trees=[Tree.from_json(t) for t in doc["trees"]],
            sample_size=doc["sample_size"],
            threshold=doc["threshold"],
            benign_label=doc["benign_label"],
            malicious_label=doc["malicious_label"],
            params=IsolationParams(**doc["params"]),
        )
    raise ConfigError(f"unknown model kind {kind!r}")


def save_model(path, model) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_json(model), fh, sort_keys=True)
        fh.write("\n")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_json(json.load(fh))
