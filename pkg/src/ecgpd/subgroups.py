"""Stratified evaluation by age, sex, race/ethnicity, care setting and echo composites."""
from __future__ import annotations

import csv
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .cohort import EchoFindings, LabeledRecord
from .errors import AlignmentMismatch, TooManyDegenerateResamples, UnderAge
from .metrics import SCORE_GE, MetricReport, bootstrap_ci

log = logging.getLogger(__name__)

DIMENSIONS = ("shd", "vhd", "age", "sex", "race", "context")
DEMOGRAPHIC_DIMENSIONS = ("age", "sex", "race", "context")

AGE_BINS = ("18–59", "60–69", "70–79", "80+")
SEX_BINS = ("Female", "Male")
RACE_GROUPS = ("Hispanic", "White", "Black", "Asian", "Other", "Unknown")
INTERNAL_CONTEXTS = ("Emergency", "Inpatient", "Outpatient", "Procedural")
EXTERNAL_CONTEXTS = ("Emergency", "Urgent", "Observation", "Surgical Same Day", "Elective")
CONTEXT_SETS = {"internal": INTERNAL_CONTEXTS, "external": EXTERNAL_CONTEXTS}
UNKNOWN = "Unknown"
OTHER = "Other"

RACE_TABLE = {
    "Asian": (
        "ASIAN",
        "ASIAN - ASIAN INDIAN",
        "ASIAN - CHINESE",
        "ASIAN - KOREAN",
        "ASIAN - SOUTH EAST ASIAN",
    ),
    "Black": (
        "BLACK/AFRICAN",
        "BLACK/AFRICAN AMERICAN",
        "BLACK/CAPE VERDEAN",
        "BLACK/CARIBBEAN ISLAND",
    ),
    "Hispanic": (
        "HISPANIC OR LATINO",
        "CENTRAL AMERICAN",
        "COLUMBIAN",
        "CUBAN",
        "DOMINICAN",
        "GUATEMALAN",
        "HONDURAN",
        "MEXICAN",
        "PUERTO RICAN",
        "SALVADORAN",
        "SOUTH AMERICAN",
    ),
    "White": (
        "WHITE",
        "WHITE - BRAZILIAN",
        "EASTERN EUROPEAN",
        "OTHER EUROPEAN",
        "RUSSIAN",
        "PORTUGUESE",
    ),
    "Other": (
        "OTHER",
        "AMERICAN INDIAN/ALASKA NATIVE",
        "MULTIPLE RACE/ETHNICITY",
        "PACIFIC ISLANDER",
    ),
    "Unknown": ("UNKNOWN", "UNABLE TO OBTAIN", "DECLINED"),
}
_RACE_LOOKUP = {raw.casefold(): group for group, raws in RACE_TABLE.items() for raw in raws}
# grouped labels map to themselves so already-grouped files pass through
_RACE_LOOKUP.update({g.casefold(): g for g in RACE_GROUPS})

# raw admission / encounter types seen in source systems, beyond the labels themselves
_CONTEXT_ALIASES = {
    "ew emer.": "Emergency",
    "direct emer.": "Emergency",
    "emergency department": "Emergency",
    "ed": "Emergency",
    "surgical same day admission": "Surgical Same Day",
    "eu observation": "Observation",
    "direct observation": "Observation",
    "ambulatory observation": "Observation",
    "observation admit": "Observation",
}

unmatched_race = Counter()


def age_bin(age_years: float) -> str:
    if age_years < 18:
        raise UnderAge(age_years)
    if age_years < 60:
        return AGE_BINS[0]
    if age_years < 70:
        return AGE_BINS[1]
    if age_years < 80:
        return AGE_BINS[2]
    return AGE_BINS[3]


def map_race(raw: str | None, counter: Counter | None = None) -> str:
    """Grouped race/ethnicity for a raw category; anything unlisted is Unknown."""
    key = (raw or "").strip().casefold()
    group = _RACE_LOOKUP.get(key)
    if group is None:
        c = unmatched_race if counter is None else counter
        c[raw] += 1
        log.debug("unmapped race category %r", raw)
        return UNKNOWN
    return group


def map_context(raw: str | None, context_set: str = "internal") -> str:
    bins = CONTEXT_SETS[context_set]
    key = (raw or "").strip().casefold()
    if not key or key == "unknown":
        return UNKNOWN
    for b in bins:
        if key == b.casefold():
            return b
    alias = _CONTEXT_ALIASES.get(key)
    if alias in bins:
        return alias
    return OTHER


VALVE_FIELDS = (
    "aortic_stenosis",
    "aortic_regurgitation",
    "mitral_regurgitation",
    "tricuspid_regurgitation",
    "pulmonary_regurgitation",
)


def vhd_flag(f: EchoFindings) -> bool:
    return any(getattr(f, name) for name in VALVE_FIELDS)


def shd_flag(f: EchoFindings) -> bool:
    return (
        f.lvwt_ge_13mm
        or vhd_flag(f)
        or f.rv_systolic_dysfunction
        or f.pericardial_effusion
        or f.pasp_ge_45
        or f.tr_vmax_ge_32
    )


def _sex_bin(sex: str | None) -> str:
    s = (sex or "").strip().lower()
    if s in ("female", "f"):
        return "Female"
    if s in ("male", "m"):
        return "Male"
    return UNKNOWN


def stratum_labels(
    records: Sequence[LabeledRecord],
    dimension: str,
    findings: Mapping[str, EchoFindings] | None = None,
    context_set: str = "internal",
    race_counter: Counter | None = None,
) -> list[str]:
    """One stratum label per record for ``dimension``."""
    if dimension == "age":
        return [UNKNOWN if r.age_years is None else age_bin(r.age_years) for r in records]
    if dimension == "sex":
        return [_sex_bin(r.sex) for r in records]
    if dimension == "race":
        return [map_race(r.race_raw, race_counter) for r in records]
    if dimension == "context":
        return [map_context(r.context_raw, context_set) for r in records]
    if dimension in ("shd", "vhd"):
        flag = shd_flag if dimension == "shd" else vhd_flag
        findings = findings or {}
        out = []
        for r in records:
            f = findings.get(r.record_id)
            out.append(UNKNOWN if f is None else ("Yes" if flag(f) else "No"))
        return out
    raise ValueError(f"unknown subgroup dimension {dimension!r}")


def bin_order(dimension: str, context_set: str = "internal") -> tuple[str, ...]:
    return {
        "age": AGE_BINS + (UNKNOWN,),
        "sex": SEX_BINS + (UNKNOWN,),
        "race": RACE_GROUPS,
        "context": CONTEXT_SETS[context_set] + (OTHER, UNKNOWN),
        "shd": ("Yes", "No", UNKNOWN),
        "vhd": ("Yes", "No", UNKNOWN),
    }[dimension]


@dataclass(frozen=True)
class StratumResult:
    dimension: str
    stratum: str
    n: int
    n_pos: int
    available: bool
    metrics: dict[str, MetricReport] | None

    @property
    def prevalence(self) -> float:
        return self.n_pos / self.n if self.n else float("nan")

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "stratum": self.stratum,
            "n": self.n,
            "n_pos": self.n_pos,
            "prevalence": self.prevalence,
            "available": self.available,
            "metrics": {k: v.to_dict() for k, v in (self.metrics or {}).items()},
        }


def evaluate_stratum(scores, labels, threshold, direction=SCORE_GE, n_resamples=1000, seed=0):
    """Metrics on one already-filtered subset.

    ``None`` when a class is missing, or when the stratum is so unbalanced
    that most bootstrap resamples lose a class.
    """
    y = np.asarray(labels).astype(np.int64)
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        return None
    try:
        out = {
            "auroc": bootstrap_ci(scores, y, "auroc", n_resamples, seed),
            "auprc": bootstrap_ci(scores, y, "auprc", n_resamples, seed),
        }
        if threshold is not None:
            out["f1"] = bootstrap_ci(scores, y, "f1", n_resamples, seed, threshold=threshold, direction=direction)
    except TooManyDegenerateResamples:
        return None
    return out


def subgroup_report(
    records: Sequence[LabeledRecord],
    scores,
    threshold: float | None,
    dimensions: Sequence[str] = DEMOGRAPHIC_DIMENSIONS,
    findings: Mapping[str, EchoFindings] | None = None,
    context_set: str = "internal",
    direction: str = SCORE_GE,
    n_resamples: int = 1000,
    seed: int = 0,
    jobs: int = 1,
    record_ids: Sequence[str] | None = None,
) -> list[StratumResult]:
    """Per-stratum n, prevalence and bootstrap metrics.

    ``threshold`` is the globally selected cut; it is reused unchanged in
    every stratum. Empty strata are omitted; single-class strata are kept
    and marked unavailable.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    if len(s) != len(records):
        raise AlignmentMismatch(f"{len(s)} scores for {len(records)} records")
    if record_ids is not None and list(record_ids) != [r.record_id for r in records]:
        raise AlignmentMismatch("score record ids differ from cohort order")
    y = np.array([r.label for r in records], dtype=np.int64)
    tasks = []
    for dim in dimensions:
        labels = np.array(stratum_labels(records, dim, findings, context_set), dtype=object)
        for b in bin_order(dim, context_set):
            idx = np.flatnonzero(labels == b)
            if len(idx):
                tasks.append((dim, b, idx))

    def one(task):
        dim, b, idx = task
        m = evaluate_stratum(s[idx], y[idx], threshold, direction, n_resamples, seed)
        return StratumResult(dim, b, len(idx), int(y[idx].sum()), m is not None, m)

    if jobs > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(one, tasks))
    return [one(t) for t in tasks]


SUBGROUP_COLUMNS = ("dimension", "stratum", "n", "prevalence", "metric", "point", "ci_lo", "ci_hi")


def write_subgroups_csv(results: Sequence[StratumResult], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUBGROUP_COLUMNS)
        for r in results:
            for metric in ("auroc", "auprc", "f1"):
                m = (r.metrics or {}).get(metric)
                if r.metrics is not None and m is None:
                    continue
                cells = (repr(m.point), repr(m.ci_low), repr(m.ci_high)) if m else ("", "", "")
                w.writerow([r.dimension, r.stratum, r.n, repr(r.prevalence), metric, *cells])
