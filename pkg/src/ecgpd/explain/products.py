"""Plot-ready tables built from per-record attributions.

Nothing here renders; every product is a table or a small JSON document.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import DimensionMismatch, EmptyInput, EmptyTotal, NonPositiveValue, UnknownCode
from ..predictors import PredictorCatalog, PredictorMatrix
from ..tabular.gbdt import TreeEnsemble
from ..tabular.logistic import LogisticModel, sigmoid
from .treeshap import shap_values

LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class ShapAttribution:
    record_id: str
    phi: np.ndarray
    base_value: float
    margin: float
    feature_codes: tuple[str, ...] = ()

    def residual(self) -> float:
        return self.base_value + float(np.sum(self.phi)) - self.margin


@dataclass(frozen=True)
class ShapBatch:
    """Attributions for many records sharing one model and base value."""

    record_ids: tuple[str, ...]
    feature_codes: tuple[str, ...]
    phi: np.ndarray  # (n, F)
    base_value: float
    margin: np.ndarray
    values: np.ndarray | None = field(default=None, repr=False)  # raw inputs, (n, F)

    def __len__(self) -> int:
        return len(self.record_ids)

    def __getitem__(self, i: int) -> ShapAttribution:
        return ShapAttribution(
            self.record_ids[i], self.phi[i].copy(), self.base_value, float(self.margin[i]), self.feature_codes
        )

    def attributions(self) -> list[ShapAttribution]:
        return [self[i] for i in range(len(self))]

    @classmethod
    def from_attributions(cls, attrs: Sequence[ShapAttribution]) -> "ShapBatch":
        if not attrs:
            raise EmptyInput("no attributions")
        return cls(
            tuple(a.record_id for a in attrs),
            attrs[0].feature_codes,
            np.vstack([a.phi for a in attrs]),
            attrs[0].base_value,
            np.array([a.margin for a in attrs]),
        )


def explain(model, X, record_ids=None, background_mean=None) -> ShapBatch:
    """Attributions in margin space for every row of ``X``.

    Tree ensembles get exact path-dependent Tree SHAP. Logistic models get
    ``w * (x - mean)`` with the margin at the mean as base, which needs the
    training feature means in ``background_mean``.
    """
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
    ids = tuple(record_ids) if record_ids is not None else tuple(str(i) for i in range(X.shape[0]))
    if len(ids) != X.shape[0]:
        raise DimensionMismatch("one record id per row required")
    if isinstance(model, TreeEnsemble):
        phi, base = shap_values(model, X)
    elif isinstance(model, LogisticModel):
        if background_mean is None:
            raise ValueError("logistic explanations need the training feature means")
        mu = np.asarray(background_mean, dtype=np.float64)
        if X.shape[1] != len(model.weights) or len(mu) != len(model.weights):
            raise DimensionMismatch("feature count does not match the model")
        phi = (X - mu) * model.weights
        base = float(mu @ model.weights + model.bias)
    else:
        raise TypeError(f"unsupported model type {type(model).__name__}")
    margin = np.atleast_1d(model.predict_margin(X))
    return ShapBatch(ids, tuple(model.feature_codes), phi, float(base), margin, X)


def tree_shap(model: TreeEnsemble, x, record_id: str = "") -> ShapAttribution:
    return explain(model, x, [record_id])[0]


def _as_batch(attrs) -> ShapBatch:
    if isinstance(attrs, ShapBatch):
        if len(attrs) == 0:
            raise EmptyInput("no attributions")
        return attrs
    return ShapBatch.from_attributions(list(attrs))


# ------------------------------------------------------------------ global


@dataclass(frozen=True)
class ImportanceRow:
    code: str
    mean_abs_phi: float
    rank: int
    cumulative_pct: float


def global_importance(attrs) -> list[ImportanceRow]:
    """Mean |phi| per code, ranked descending; equal means keep column order."""
    b = _as_batch(attrs)
    mean_abs = np.mean(np.abs(b.phi), axis=0)
    order = np.argsort(-mean_abs, kind="stable")
    cum = np.cumsum(mean_abs[order])
    total = cum[-1]
    if not total > 0:
        raise EmptyTotal("all attributions are zero; cumulative share undefined")
    pct = 100.0 * cum / total
    return [
        ImportanceRow(b.feature_codes[j], float(mean_abs[j]), r + 1, float(pct[r]))
        for r, j in enumerate(order)
    ]


def write_global_csv(rows: Sequence[ImportanceRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "code", "mean_abs_phi", "cumulative_pct"])
        for r in rows:
            w.writerow([r.rank, r.code, repr(r.mean_abs_phi), repr(r.cumulative_pct)])


# ------------------------------------------------------------------ beeswarm

BEESWARM_COLUMNS = ("code", "record_id", "phi", "predictor_value")


def beeswarm_data(attrs, matrix: PredictorMatrix | None = None, top_n: int = 10, order=None) -> list[dict]:
    """Long-form (code, record_id, phi, predictor_value) rows for the top codes.

    ``order`` is a full code ranking (for instance by single-predictor F1);
    without one, codes are ranked by mean |phi|.
    """
    b = _as_batch(attrs)
    F = len(b.feature_codes)
    if not 1 <= top_n <= F:
        raise ValueError(f"top_n must lie in 1..{F}")
    if order is None:
        order = [r.code for r in global_importance(b)]
    col = {c: i for i, c in enumerate(b.feature_codes)}
    for c in order[:top_n]:
        if c not in col:
            raise UnknownCode(c)
    codes = list(order[:top_n])
    if matrix is not None:
        vals = matrix.rows(list(b.record_ids))
        vcol = {c: matrix.catalog.index(c) for c in codes}
    elif b.values is not None:
        vals, vcol = b.values, col
    else:
        raise ValueError("predictor values unavailable")
    rows = []
    for c in codes:
        j = col[c]
        for i, rid in enumerate(b.record_ids):
            rows.append({"code": c, "record_id": rid, "phi": float(b.phi[i, j]), "predictor_value": float(vals[i, vcol[c]])})
    return rows


def write_rows_csv(rows: Sequence[dict], columns: Sequence[str], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns))
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items() if k in columns})


def read_rows_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ------------------------------------------------------------------ dependence


def silverman_bandwidth(z) -> float:
    z = np.asarray(z, dtype=np.float64)
    n = len(z)
    sd = float(np.std(z, ddof=1)) if n > 1 else 0.0
    q75, q25 = np.percentile(z, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    if spread <= 0:
        return 1.0  # all points coincide; any positive width keeps the density proper
    return 0.9 * spread * n ** (-0.2)


def gaussian_kde(points, grid, bandwidth: float) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    grid = np.asarray(grid, dtype=np.float64)
    u = (grid[:, None] - points[None, :]) / bandwidth
    return np.exp(-0.5 * u * u).sum(axis=1) / (len(points) * bandwidth * math.sqrt(2 * math.pi))


@dataclass(frozen=True)
class DependenceTable:
    code: str
    record_ids: tuple[str, ...]
    values: np.ndarray
    phi: np.ndarray
    log_values: np.ndarray
    density: np.ndarray
    bandwidth: float
    lef_threshold: float | None
    diagnosis_threshold: float | None
    n_clamped: int = 0

    def density_at(self, log_grid) -> np.ndarray:
        return gaussian_kde(self.log_values, log_grid, self.bandwidth)

    def rows(self) -> list[dict]:
        return [
            {"record_id": r, "predictor_value": float(v), "log10_value": float(lv), "phi": float(p), "density": float(d)}
            for r, v, lv, p, d in zip(self.record_ids, self.values, self.log_values, self.phi, self.density)
        ]

    def meta(self) -> dict:
        return {
            "code": self.code,
            "bandwidth": self.bandwidth,
            "lef_threshold": self.lef_threshold,
            "diagnosis_threshold": self.diagnosis_threshold,
            "n_clamped": self.n_clamped,
            "log_floor": LOG_FLOOR,
        }


DEPENDENCE_COLUMNS = ("record_id", "predictor_value", "log10_value", "phi", "density")


def dependence_data(
    attrs,
    matrix: PredictorMatrix | None,
    code: str,
    lef_threshold: float | None = None,
    diagnosis_threshold: float | None = None,
    catalog: PredictorCatalog | None = None,
    on_nonpositive: str = "clamp",
) -> DependenceTable:
    """Per-record (value, phi) pairs with a Gaussian KDE over log10(value).

    Values below ``LOG_FLOOR`` are clamped before the log unless
    ``on_nonpositive='error'``. Reference lines default to the catalog's
    published LEF cut and diagnosis cut for the code.
    """
    b = _as_batch(attrs)
    if code not in b.feature_codes:
        raise UnknownCode(code)
    j = b.feature_codes.index(code)
    if matrix is not None:
        v = matrix.column(code, list(b.record_ids))
        catalog = catalog or matrix.catalog
    elif b.values is not None:
        v = b.values[:, j]
    else:
        raise ValueError("predictor values unavailable")
    low = v < LOG_FLOOR
    if np.any(low) and on_nonpositive == "error":
        k = int(np.flatnonzero(low)[0])
        raise NonPositiveValue(b.record_ids[k], float(v[k]))
    z = np.log10(np.maximum(v, LOG_FLOOR))
    bw = silverman_bandwidth(z)
    if catalog is not None:
        if lef_threshold is None:
            lef_threshold = catalog.reference_lef_thresholds.get(code)
        if diagnosis_threshold is None:
            diagnosis_threshold = catalog.diagnosis_thresholds.get(code)
    return DependenceTable(
        code=code,
        record_ids=b.record_ids,
        values=np.asarray(v, dtype=np.float64),
        phi=b.phi[:, j].copy(),
        log_values=z,
        density=gaussian_kde(z, z, bw),
        bandwidth=bw,
        lef_threshold=lef_threshold,
        diagnosis_threshold=diagnosis_threshold,
        n_clamped=int(low.sum()),
    )


# ------------------------------------------------------------------ local


@dataclass(frozen=True)
class Waterfall:
    record_id: str
    base_value: float
    margin: float
    probability: float
    rows: list[dict]  # top codes then one aggregate row

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "base_value": self.base_value,
            "margin": self.margin,
            "probability": self.probability,
            "rows": self.rows,
        }


def waterfall_local(
    attr: ShapAttribution,
    top_n: int = 10,
    values=None,
    catalog: PredictorCatalog | None = None,
    lef_thresholds: dict | None = None,
) -> Waterfall:
    """Top codes by |phi| plus one row aggregating the rest."""
    F = len(attr.phi)
    if not 1 <= top_n < F:
        raise ValueError(f"top_n must lie in 1..{F - 1}")
    order = np.argsort(-np.abs(attr.phi), kind="stable")
    top = order[:top_n]
    if lef_thresholds is None and catalog is not None:
        lef_thresholds = dict(catalog.reference_lef_thresholds)
    rows = []
    for j in top:
        code = attr.feature_codes[j]
        row = {"code": code, "phi": float(attr.phi[j])}
        if values is not None:
            row["predictor_value"] = float(values[j])
        if catalog is not None or lef_thresholds is not None:
            row["lef_threshold"] = (lef_thresholds or {}).get(code)
            row["diagnosis_threshold"] = catalog.diagnosis_thresholds.get(code) if catalog else None
        rows.append(row)
    rest = float(np.sum(attr.phi) - np.sum(attr.phi[top]))
    rows.append({"code": f"{F - top_n} other features", "phi": rest, "aggregate": True})
    return Waterfall(
        record_id=attr.record_id,
        base_value=attr.base_value,
        margin=attr.margin,
        probability=float(sigmoid(np.array([attr.margin]))[0]),
        rows=rows,
    )


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=1))
