"""Zero-shot LEF scoring from a single oriented predictor.

The decision rule is always ``oriented score >= threshold``. Candidate
thresholds are the distinct observed scores plus ``+inf`` (predict none).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .cohort import CohortTable
from .errors import DegenerateLabels, MissingCode
from .metrics import SCORE_GE, SCORE_LE, MetricReport, Resampler, bootstrap_ci
from .predictors import PredictorCatalog, PredictorMatrix

F1_MAX = "f1_max"
RECALL_FLOOR = "recall_floor"


@dataclass(frozen=True)
class ThresholdChoice:
    code: str | None
    threshold: float
    direction: str
    objective: str
    achieved_f1: float
    achieved_recall: float
    achieved_precision: float
    selected_on: str | None
    # same cut expressed on the raw probability scale
    raw_threshold: float | None = None
    raw_direction: str | None = None
    feasible: bool = True

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("threshold", "raw_threshold"):
            if isinstance(d[k], float) and math.isinf(d[k]):
                d[k] = "inf" if d[k] > 0 else "-inf"
        return d


def cut_table(scores, labels):
    """Confusion counts at every candidate cut, largest threshold first.

    Returns ``(thresholds, tp, fp, n_pos)``; ``thresholds[0]`` is ``+inf``.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(np.int64)
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        raise DegenerateLabels("threshold selection needs both classes")
    order = np.argsort(-s, kind="stable")
    s_desc = s[order]
    y_desc = y[order]
    last = np.flatnonzero(np.diff(s_desc) != 0)
    ends = np.concatenate((last, [len(s_desc) - 1]))
    ctp = np.cumsum(y_desc)[ends]
    cfp = (ends + 1) - ctp
    thr = np.concatenate(([np.inf], s_desc[ends]))
    tp = np.concatenate(([0], ctp))
    fp = np.concatenate(([0], cfp))
    return thr, tp, fp, n_pos


def _f1_from_counts(tp, fp, n_pos):
    tp = np.asarray(tp, dtype=np.float64)
    return np.where(tp > 0, 2.0 * tp / (tp + fp + n_pos), 0.0)


def _raw_cut(threshold: float, inverted: bool):
    if not inverted:
        return threshold, SCORE_GE
    return 1.0 - threshold, SCORE_LE


def select_threshold_f1(scores, labels, code=None, selected_on=None, inverted=False) -> ThresholdChoice:
    """Cut maximizing F1; ties go to the larger threshold."""
    thr, tp, fp, n_pos = cut_table(scores, labels)
    f1 = _f1_from_counts(tp, fp, n_pos)
    # thresholds are descending, so the first maximum is the largest threshold
    k = int(np.argmax(f1))
    raw, raw_dir = _raw_cut(float(thr[k]), inverted)
    return ThresholdChoice(
        code=code,
        threshold=float(thr[k]),
        direction=SCORE_GE,
        objective=F1_MAX,
        achieved_f1=float(f1[k]),
        achieved_recall=float(tp[k] / n_pos),
        achieved_precision=float(tp[k] / (tp[k] + fp[k])) if tp[k] + fp[k] else 0.0,
        selected_on=selected_on,
        raw_threshold=raw,
        raw_direction=raw_dir,
    )


def select_threshold_recall(
    scores, labels, min_recall: float = 0.90, code=None, selected_on=None, inverted=False
) -> ThresholdChoice:
    """Largest cut whose recall reaches ``min_recall``."""
    if not 0.0 < min_recall <= 1.0:
        raise ValueError(f"min_recall must lie in (0, 1], got {min_recall}")
    thr, tp, fp, n_pos = cut_table(scores, labels)
    recall = tp / n_pos
    ok = np.flatnonzero(recall >= min_recall)
    feasible = len(ok) > 0
    if feasible:
        k = int(ok[0])
        t = float(thr[k])
        tpk, fpk = tp[k], fp[k]
    else:  # pragma: no cover - the lowest cut always has recall 1
        t, tpk, fpk = -np.inf, tp[-1], fp[-1]
    f1 = float(_f1_from_counts(tpk, fpk, n_pos))
    raw, raw_dir = _raw_cut(t, inverted)
    return ThresholdChoice(
        code=code,
        threshold=t,
        direction=SCORE_GE,
        objective=RECALL_FLOOR,
        achieved_f1=f1,
        achieved_recall=float(tpk / n_pos),
        achieved_precision=float(tpk / (tpk + fpk)) if tpk + fpk else 0.0,
        selected_on=selected_on,
        raw_threshold=raw,
        raw_direction=raw_dir,
        feasible=feasible,
    )


@dataclass(frozen=True)
class SinglePredictorReport:
    code: str
    auroc: MetricReport
    auprc: MetricReport
    f1: MetricReport
    threshold: ThresholdChoice
    recall_threshold: ThresholdChoice
    eval_split: str

    def to_dict(self) -> dict:
        return {
            "code": self.code,
            "eval_split": self.eval_split,
            "auroc": self.auroc.to_dict(),
            "auprc": self.auprc.to_dict(),
            "f1": self.f1.to_dict(),
            "threshold": self.threshold.to_dict(),
            "recall_threshold": self.recall_threshold.to_dict(),
        }


def split_ids(cohort: CohortTable, split: str) -> tuple[list[str], np.ndarray]:
    rows = cohort.split(split)
    return [r.record_id for r in rows], np.array([r.label for r in rows], dtype=np.int64)


def evaluate_single(
    code: str,
    matrix: PredictorMatrix,
    cohort: CohortTable,
    selection_split: str = "validation",
    eval_split: str = "internal_test",
    n_resamples: int = 1000,
    seed: int = 0,
    min_recall: float = 0.90,
    resampler: Resampler | None = None,
) -> SinglePredictorReport:
    inverted = matrix.catalog.is_inverted(code)
    sel_ids, sel_y = split_ids(cohort, selection_split)
    ev_ids, ev_y = split_ids(cohort, eval_split)
    sel_s = matrix.oriented_column(code, sel_ids)
    ev_s = matrix.oriented_column(code, ev_ids)
    choice = select_threshold_f1(sel_s, sel_y, code, selection_split, inverted)
    rchoice = select_threshold_recall(sel_s, sel_y, min_recall, code, selection_split, inverted)
    resampler = resampler or Resampler(ev_y, n_resamples, seed)
    return SinglePredictorReport(
        code=code,
        auroc=bootstrap_ci(ev_s, ev_y, "auroc", resampler=resampler),
        auprc=bootstrap_ci(ev_s, ev_y, "auprc", resampler=resampler),
        f1=bootstrap_ci(ev_s, ev_y, "f1", threshold=choice.threshold, resampler=resampler),
        threshold=choice,
        recall_threshold=rchoice,
        eval_split=eval_split,
    )


def evaluate_all_single(
    matrix: PredictorMatrix,
    cohort: CohortTable,
    selection_split: str = "validation",
    eval_split: str = "internal_test",
    n_resamples: int = 1000,
    seed: int = 0,
    jobs: int = 1,
    codes: Sequence[str] | None = None,
    min_recall: float = 0.90,
) -> list[SinglePredictorReport]:
    codes = list(codes or matrix.catalog.codes)
    _, ev_y = split_ids(cohort, eval_split)
    resampler = Resampler(ev_y, n_resamples, seed, jobs)

    def one(code):
        return evaluate_single(
            code, matrix, cohort, selection_split, eval_split, min_recall=min_recall, resampler=resampler
        )

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(one, codes))
    return [one(c) for c in codes]


def rank_predictors(reports: Sequence[SinglePredictorReport], catalog: PredictorCatalog) -> list[str]:
    """Codes by descending single-predictor F1; equal F1 keeps catalog order."""
    by_code = {r.code: r for r in reports}
    for code in catalog.codes:
        if code not in by_code:
            raise MissingCode(f"no single-predictor report for {code}")
    return sorted(catalog.codes, key=lambda c: (-by_code[c].f1.point, catalog.index(c)))


def thresholds_ledger(reports: Sequence[SinglePredictorReport], catalog: PredictorCatalog) -> dict:
    """Per-code view of the three operating points (diagnosis, F1-max, recall floor)."""
    out = {}
    for r in reports:
        out[r.code] = {
            "diagnosis_threshold": catalog.diagnosis_thresholds.get(r.code),
            "inverted": r.code in catalog.inverted,
            "f1_max": r.threshold.to_dict(),
            "recall_floor": r.recall_threshold.to_dict(),
            "eval": {"auroc": r.auroc.point, "auprc": r.auprc.point, "f1": r.f1.point},
        }
    return {"decision_rule": "oriented_score >= threshold", "codes": out}
