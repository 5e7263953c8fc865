"""Grid search, decision thresholds and the predictor-count sweep."""
from __future__ import annotations

import csv
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import DimensionMismatch, InvalidSpec
from ..metrics import MetricReport, Resampler, auprc, auroc, bootstrap_ci
from ..single import ThresholdChoice, select_threshold_f1
from .gbdt import TreeEnsemble, logloss, train_gbdt
from .logistic import LogisticModel, sigmoid, train_logistic

LOGISTIC_LAMBDAS = (0.001, 0.01, 0.1, 1.0, 10.0)
GBDT_LEARNING_RATES = (0.05, 0.1, 0.2)
GBDT_DEPTHS = (3, 5, 7)
SELECTION_METRICS = ("auroc", "auprc", "logloss")
FAMILIES = ("logistic", "gbdt")


@dataclass(frozen=True)
class TrainConfig:
    model_family: str = "gbdt"
    l2_lambdas: tuple[float, ...] = LOGISTIC_LAMBDAS
    learning_rates: tuple[float, ...] = GBDT_LEARNING_RATES
    max_depths: tuple[int, ...] = GBDT_DEPTHS
    n_estimators: int = 1000
    early_stopping_rounds: int = 30
    leaf_lambda: float = 1.0
    min_child_weight: float = 1.0
    selection_metric: str = "auroc"
    seed: int = 0

    def __post_init__(self):
        if self.model_family not in FAMILIES:
            raise InvalidSpec(f"model_family must be one of {FAMILIES}")
        if self.selection_metric not in SELECTION_METRICS:
            raise InvalidSpec(f"selection_metric must be one of {SELECTION_METRICS}")
        if self.early_stopping_rounds < 1:
            raise InvalidSpec("early_stopping_rounds must be >= 1")
        if self.n_estimators < 1:
            raise InvalidSpec("n_estimators must be >= 1")
        if self.model_family == "logistic" and not self.l2_lambdas:
            raise InvalidSpec("empty lambda grid")
        if self.model_family == "gbdt" and not (self.learning_rates and self.max_depths):
            raise InvalidSpec("empty learning-rate or depth grid")

    def cells(self) -> list[dict]:
        """Concrete hyperparameter settings in grid order."""
        if self.model_family == "logistic":
            return [{"l2_lambda": float(lam)} for lam in self.l2_lambdas]
        return [
            {"learning_rate": float(lr), "max_depth": int(d)}
            for lr, d in itertools.product(self.learning_rates, self.max_depths)
        ]

    def fixed(self, cell: dict) -> "TrainConfig":
        """Single-cell config pinned to ``cell``."""
        if self.model_family == "logistic":
            return replace(self, l2_lambdas=(cell["l2_lambda"],))
        return replace(self, learning_rates=(cell["learning_rate"],), max_depths=(cell["max_depth"],))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        for k in ("l2_lambdas", "learning_rates", "max_depths"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


def fit_cell(config: TrainConfig, cell: dict, X, y, val_X, val_y, feature_codes=None):
    if config.model_family == "logistic":
        return train_logistic(X, y, cell["l2_lambda"], feature_codes=feature_codes)
    return train_gbdt(
        X,
        y,
        val_X,
        val_y,
        learning_rate=cell["learning_rate"],
        max_depth=cell["max_depth"],
        n_estimators=config.n_estimators,
        early_stopping_rounds=config.early_stopping_rounds,
        reg_lambda=config.leaf_lambda,
        min_child_weight=config.min_child_weight,
        feature_codes=feature_codes,
    )


def predict_margin(model, X):
    if not isinstance(model, (LogisticModel, TreeEnsemble)):
        raise TypeError(f"unsupported model type {type(model).__name__}")
    return model.predict_margin(X)


def predict_proba(model, X):
    return model.predict_proba(X)


def _score(metric: str, y, margin) -> float:
    if metric == "auroc":
        return auroc(margin, y)
    if metric == "auprc":
        return auprc(margin, y)
    return -logloss(np.asarray(y, dtype=np.float64), margin)  # larger is better


@dataclass(frozen=True)
class GridResult:
    config: TrainConfig
    best_cell: dict
    model: object
    table: list[dict] = field(default_factory=list)

    def selection_meta(self) -> dict:
        return {
            "selection_metric": self.config.selection_metric,
            "best_cell": self.best_cell,
            "grid": self.table,
            "config": self.config.to_dict(),
        }


def grid_search(config: TrainConfig, train, validation, feature_codes=None, jobs: int = 1) -> GridResult:
    """Fit every cell and keep the best validation score; earlier cells win ties.

    ``train`` and ``validation`` are ``(X, y)`` pairs.
    """
    X, y = train
    vX, vy = validation
    X = np.ascontiguousarray(X, dtype=np.float64)
    vX = np.ascontiguousarray(vX, dtype=np.float64)
    if X.shape[1] != vX.shape[1]:
        raise DimensionMismatch("train and validation feature counts differ")
    cells = config.cells()

    def one(cell):
        model = fit_cell(config, cell, X, y, vX, vy, feature_codes)
        return model, _score(config.selection_metric, vy, model.predict_margin(vX))

    if jobs > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            fits = list(ex.map(one, cells))
    else:
        fits = [one(c) for c in cells]
    best = 0
    for i, (_, s) in enumerate(fits):
        if s > fits[best][1]:
            best = i
    table = []
    for cell, (model, s) in zip(cells, fits):
        row = dict(cell)
        row["validation_" + config.selection_metric] = -s if config.selection_metric == "logloss" else s
        if isinstance(model, TreeEnsemble):
            row["n_trees_used"] = model.n_trees_used
        table.append(row)
    return GridResult(config, cells[best], fits[best][0], table)


def choose_decision_threshold(model, val_X, val_y, selected_on: str = "validation") -> ThresholdChoice:
    """F1-max cut on validation probabilities; the threshold lives in [0, 1]."""
    p = np.atleast_1d(model.predict_proba(val_X))
    return select_threshold_f1(p, val_y, code=None, selected_on=selected_on)


# ------------------------------------------------------------------ sweep

SWEEP_COLUMNS = (
    "k",
    "auroc",
    "auprc",
    "f1",
    "ci_lo",
    "ci_hi",
    "auprc_ci_lo",
    "auprc_ci_hi",
    "f1_ci_lo",
    "f1_ci_hi",
    "threshold",
    "added_code",
)


@dataclass(frozen=True)
class SweepPoint:
    k: int
    codes: tuple[str, ...]
    added_code: str
    model: object
    best_cell: dict
    threshold: ThresholdChoice
    auroc: MetricReport
    auprc: MetricReport
    f1: MetricReport

    def row(self) -> dict:
        return {
            "k": self.k,
            "auroc": self.auroc.point,
            "auprc": self.auprc.point,
            "f1": self.f1.point,
            "ci_lo": self.auroc.ci_low,
            "ci_hi": self.auroc.ci_high,
            "auprc_ci_lo": self.auprc.ci_low,
            "auprc_ci_hi": self.auprc.ci_high,
            "f1_ci_lo": self.f1.ci_low,
            "f1_ci_hi": self.f1.ci_high,
            "threshold": self.threshold.threshold,
            "added_code": self.added_code,
        }


def sweep_codes(ranking: Sequence[str], catalog_codes: Sequence[str], k: int) -> tuple[str, ...]:
    """Top-k ranked codes, laid out in catalog column order.

    Keeping catalog order means k = len(catalog) reproduces the full model's
    design matrix exactly.
    """
    chosen = set(ranking[:k])
    return tuple(c for c in catalog_codes if c in chosen)


def predictor_count_sweep(
    ranking: Sequence[str],
    ks: Sequence[int],
    config: TrainConfig,
    splits: dict,
    catalog_codes: Sequence[str],
    eval_split: str = "internal_test",
    n_resamples: int = 1000,
    seed: int = 0,
    jobs: int = 1,
) -> list[SweepPoint]:
    """Train on growing top-k predictor sets and score each on ``eval_split``.

    ``splits`` maps split name to ``(X, y)`` with columns in ``catalog_codes``
    order; it must hold ``train``, ``validation`` and ``eval_split``.
    """
    catalog_codes = list(catalog_codes)
    if sorted(ranking) != sorted(catalog_codes):
        raise InvalidSpec("ranking must be a permutation of the catalog codes")
    for k in ks:
        if not 1 <= k <= len(catalog_codes):
            raise InvalidSpec(f"k={k} outside 1..{len(catalog_codes)}")
    col = {c: i for i, c in enumerate(catalog_codes)}
    (tX, ty), (vX, vy), (eX, ey) = splits["train"], splits["validation"], splits[eval_split]
    resampler = Resampler(ey, n_resamples, seed, jobs)

    def one(k):
        codes = sweep_codes(ranking, catalog_codes, k)
        cols = [col[c] for c in codes]
        res = grid_search(config, (tX[:, cols], ty), (vX[:, cols], vy), feature_codes=codes)
        choice = choose_decision_threshold(res.model, vX[:, cols], vy)
        p = np.atleast_1d(res.model.predict_proba(eX[:, cols]))
        return SweepPoint(
            k=k,
            codes=codes,
            added_code=ranking[k - 1],
            model=res.model,
            best_cell=res.best_cell,
            threshold=choice,
            auroc=bootstrap_ci(p, ey, "auroc", resampler=resampler),
            auprc=bootstrap_ci(p, ey, "auprc", resampler=resampler),
            f1=bootstrap_ci(p, ey, "f1", threshold=choice.threshold, resampler=resampler),
        )

    if jobs > 1 and len(ks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(one, ks))
    return [one(k) for k in ks]


def write_sweep_csv(points: Sequence[SweepPoint], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        w.writeheader()
        for p in points:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in p.row().items()})
