"""Baseline tabular features from machine interval measurements (ms, bpm)."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .errors import MalformedRow, NonPositiveRR, OrderingViolation

FEATURE_COLUMNS = ("record_id", "age", "sex", "pr_ms", "qrs_ms", "qtc_ms", "atrial_rate", "ventricular_rate")
MEASUREMENT_COLUMNS = ("record_id", "age", "sex", "t_p_onset", "t_qrs_onset", "t_qrs_end", "t_t_end", "rr")


@dataclass(frozen=True)
class MachineMeasurements:
    t_p_onset: float
    t_qrs_onset: float
    t_qrs_end: float
    t_t_end: float
    rr: float


@dataclass(frozen=True)
class BaselineFeatures:
    pr_interval_ms: float
    qrs_duration_ms: float
    qtc_ms: float
    ventricular_rate_bpm: float
    atrial_rate_bpm: float
    age_years: int | None = None
    sex: str | None = None


def bazett_qtc(qt_ms: float, rr_ms: float) -> float:
    if not rr_ms > 0:
        raise NonPositiveRR(f"RR must be positive, got {rr_ms}")
    return qt_ms / math.sqrt(rr_ms / 1000.0)


def ventricular_rate(rr_ms: float) -> float:
    if not rr_ms > 0:
        raise NonPositiveRR(f"RR must be positive, got {rr_ms}")
    return 60000.0 / rr_ms


def derive_baseline_features(m: MachineMeasurements, age=None, sex=None) -> BaselineFeatures:
    if not m.rr > 0:
        raise NonPositiveRR(f"RR must be positive, got {m.rr}")
    if not (m.t_p_onset <= m.t_qrs_onset <= m.t_qrs_end <= m.t_t_end):
        raise OrderingViolation(
            f"expected P onset <= QRS onset <= QRS end <= T end, got "
            f"{m.t_p_onset}, {m.t_qrs_onset}, {m.t_qrs_end}, {m.t_t_end}"
        )
    vrate = ventricular_rate(m.rr)
    return BaselineFeatures(
        pr_interval_ms=m.t_qrs_onset - m.t_p_onset,
        qrs_duration_ms=m.t_qrs_end - m.t_qrs_onset,
        qtc_ms=bazett_qtc(m.t_t_end - m.t_qrs_onset, m.rr),
        ventricular_rate_bpm=vrate,
        atrial_rate_bpm=vrate,  # no atrial timing available; ventricular rate stands in
        age_years=age,
        sex=sex,
    )


def read_measurements(path: str | Path) -> list[tuple[str, MachineMeasurements, int | None, str | None]]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(MEASUREMENT_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise MalformedRow(1, f"missing columns {sorted(missing)}")
        for line, row in enumerate(reader, start=2):
            try:
                m = MachineMeasurements(*(float(row[c]) for c in MEASUREMENT_COLUMNS[3:]))
                age = int(row["age"]) if row["age"] else None
            except ValueError as exc:
                raise MalformedRow(line, str(exc)) from None
            out.append((row["record_id"], m, age, row["sex"] or None))
    return out


def write_features(rows: Iterable[tuple[str, BaselineFeatures]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FEATURE_COLUMNS)
        for rid, f in rows:
            w.writerow([
                rid,
                "" if f.age_years is None else f.age_years,
                f.sex or "",
                repr(f.pr_interval_ms),
                repr(f.qrs_duration_ms),
                repr(f.qtc_ms),
                repr(f.atrial_rate_bpm),
                repr(f.ventricular_rate_bpm),
            ])
