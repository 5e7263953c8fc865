"""Versioned JSON artifacts for both model families.

Floats go through ``repr`` (Python's json default), which round-trips
binary64 exactly, so a reloaded model predicts bit-identically.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .gbdt import Tree, TreeEnsemble
from .logistic import LogisticModel

SCHEMA = "ecgpd-model/v1"


def model_to_dict(model, meta: dict | None = None) -> dict:
    d = {"schema": SCHEMA, "family": model.family, "feature_codes": list(model.feature_codes)}
    if isinstance(model, LogisticModel):
        d["hyperparameters"] = {"l2_lambda": model.l2_lambda}
        d["weights"] = model.weights.tolist()
        d["bias"] = model.bias
        d["fit"] = {"n_iter": model.n_iter, "grad_norm": model.grad_norm}
    elif isinstance(model, TreeEnsemble):
        d["hyperparameters"] = {
            "learning_rate": model.learning_rate,
            "max_depth": model.max_depth,
            "reg_lambda": model.reg_lambda,
            "min_child_weight": model.min_child_weight,
        }
        d["base_score_logodds"] = model.base_score
        d["n_trees_used"] = model.n_trees_used
        d["n_rounds_run"] = model.n_rounds_run
        d["trees"] = [t.to_dict() for t in model.trees]
    else:
        raise TypeError(f"unsupported model type {type(model).__name__}")
    d["meta"] = dict(meta or {})
    return d


def model_from_dict(d: dict):
    if d.get("schema") != SCHEMA:
        raise ValueError(f"unsupported model schema {d.get('schema')!r}")
    codes = tuple(d["feature_codes"])
    hp = d["hyperparameters"]
    if d["family"] == "logistic":
        fit = d.get("fit", {})
        return LogisticModel(
            weights=np.array(d["weights"], dtype=np.float64),
            bias=float(d["bias"]),
            l2_lambda=float(hp["l2_lambda"]),
            feature_codes=codes,
            n_iter=int(fit.get("n_iter", 0)),
            grad_norm=float(fit.get("grad_norm", 0.0)),
        )
    if d["family"] == "gbdt":
        return TreeEnsemble(
            trees=tuple(Tree.from_dict(t) for t in d["trees"]),
            base_score=float(d["base_score_logodds"]),
            learning_rate=float(hp["learning_rate"]),
            max_depth=int(hp["max_depth"]),
            feature_codes=codes,
            reg_lambda=float(hp.get("reg_lambda", 1.0)),
            min_child_weight=float(hp.get("min_child_weight", 1.0)),
            n_rounds_run=int(d.get("n_rounds_run", 0)),
        )
    raise ValueError(f"unknown model family {d['family']!r}")


def dumps(model, meta: dict | None = None) -> str:
    return json.dumps(model_to_dict(model, meta), indent=1)


def save_model(model, path: str | Path, meta: dict | None = None) -> str:
    text = dumps(model, meta)
    Path(path).write_text(text)
    return hashlib.sha256(text.encode()).hexdigest()


def load_model(path: str | Path):
    return model_from_dict(json.loads(Path(path).read_text()))


def load_model_meta(path: str | Path) -> dict:
    return json.loads(Path(path).read_text()).get("meta", {})
