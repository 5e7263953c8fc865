"""Cohort records, CSV ingestion, and outcome labeling.

A record is labeled positive (low EF) when its ECG was taken at most one
window (365 days by default) before an echo showing EF <= 45%. For
patients whose every echo shows EF > 45%, every ECG up to the latest echo
is negative. Anything else stays unlabeled.
"""
from __future__ import annotations

import csv
from collections import Counter, defaultdict
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import (
    DuplicateRecordId,
    EmptyCohort,
    EmptyInput,
    LabelEfMismatch,
    MalformedRow,
    NegativeWindow,
)

EF_CUTOFF = 45.0
DAY_SECONDS = 86400
SPLITS = ("train", "validation", "internal_test", "external_test")
SEXES = ("female", "male")

COHORT_HEADER = (
    "record_id",
    "patient_id",
    "label",
    "ef_percent",
    "ecg_time",
    "ref_time",
    "age_years",
    "sex",
    "race_raw",
    "context_raw",
    "split",
)


def is_low_ef(ef_percent: float) -> bool:
    return ef_percent <= EF_CUTOFF


@dataclass(frozen=True)
class LabeledRecord:
    record_id: str
    patient_id: str
    label: int
    ef_percent: float | None
    ecg_time: int
    ref_time: int | None
    age_years: int
    sex: str
    race_raw: str
    context_raw: str
    split: str


@dataclass(frozen=True)
class EchoFindings:
    lvwt_ge_13mm: bool = False
    aortic_stenosis: bool = False
    aortic_regurgitation: bool = False
    mitral_regurgitation: bool = False
    tricuspid_regurgitation: bool = False
    pulmonary_regurgitation: bool = False
    rv_systolic_dysfunction: bool = False
    pericardial_effusion: bool = False
    pasp_ge_45: bool = False
    tr_vmax_ge_32: bool = False


ECHO_FIELDS = tuple(f.name for f in fields(EchoFindings))


@dataclass(frozen=True)
class CohortTable:
    records: tuple[LabeledRecord, ...]
    echo_findings: Mapping[str, EchoFindings] | None = None
    imputed: Mapping[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def record_ids(self) -> list[str]:
        return [r.record_id for r in self.records]

    def split(self, name: str) -> list[LabeledRecord]:
        return [r for r in self.records if r.split == name]

    def splits(self) -> list[str]:
        seen = {r.split for r in self.records}
        return [s for s in SPLITS if s in seen]

    def labels(self, split: str | None = None) -> list[int]:
        rows = self.records if split is None else self.split(split)
        return [r.label for r in rows]

    def with_echo_findings(self, findings: Mapping[str, EchoFindings], imputed=None) -> "CohortTable":
        return CohortTable(self.records, dict(findings), dict(imputed or {}))


def _check_record(rec: LabeledRecord, line: int) -> None:
    if rec.label not in (0, 1):
        raise MalformedRow(line, f"label must be 0 or 1, got {rec.label}")
    if rec.age_years < 18:
        raise MalformedRow(line, f"age_years must be >= 18, got {rec.age_years}")
    if rec.sex not in SEXES:
        raise MalformedRow(line, f"sex must be one of {SEXES}, got {rec.sex!r}")
    if rec.split not in SPLITS:
        raise MalformedRow(line, f"unknown split {rec.split!r}")
    if rec.ef_percent is not None:
        if not 0.0 <= rec.ef_percent <= 100.0:
            raise MalformedRow(line, f"ef_percent out of [0, 100]: {rec.ef_percent}")
        if rec.label != int(is_low_ef(rec.ef_percent)):
            raise LabelEfMismatch(rec.record_id)


def _parse_row(row: list[str], line: int) -> LabeledRecord:
    if len(row) != len(COHORT_HEADER):
        raise MalformedRow(line, f"expected {len(COHORT_HEADER)} fields, got {len(row)}")
    d = dict(zip(COHORT_HEADER, row))
    try:
        rec = LabeledRecord(
            record_id=d["record_id"],
            patient_id=d["patient_id"],
            label=int(d["label"]),
            ef_percent=float(d["ef_percent"]) if d["ef_percent"] != "" else None,
            ecg_time=int(d["ecg_time"]),
            ref_time=int(d["ref_time"]) if d["ref_time"] != "" else None,
            age_years=int(d["age_years"]),
            sex=d["sex"],
            race_raw=d["race_raw"],
            context_raw=d["context_raw"],
            split=d["split"],
        )
    except ValueError as exc:
        raise MalformedRow(line, str(exc)) from None
    if not rec.record_id:
        raise MalformedRow(line, "empty record_id")
    return rec


def load_cohort(path: str | Path) -> CohortTable:
    """Read a cohort CSV, validating every row. Row order is preserved."""
    records: list[LabeledRecord] = []
    seen: set[str] = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != COHORT_HEADER:
            raise MalformedRow(1, f"bad header {header!r}")
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            rec = _parse_row(row, line)
            _check_record(rec, line)
            if rec.record_id in seen:
                raise DuplicateRecordId(rec.record_id)
            seen.add(rec.record_id)
            records.append(rec)
    return CohortTable(tuple(records))


def _fmt_opt(v) -> str:
    return "" if v is None else repr(v) if isinstance(v, float) else str(v)


def write_cohort(table: CohortTable, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COHORT_HEADER)
        for r in table.records:
            w.writerow(
                [
                    r.record_id,
                    r.patient_id,
                    r.label,
                    _fmt_opt(r.ef_percent),
                    r.ecg_time,
                    _fmt_opt(r.ref_time),
                    r.age_years,
                    r.sex,
                    r.race_raw,
                    r.context_raw,
                    r.split,
                ]
            )


def load_echo_findings(path: str | Path) -> tuple[dict[str, EchoFindings], dict[str, int]]:
    """Read the echo-findings CSV. Blank cells become False and are counted per field."""
    out: dict[str, EchoFindings] = {}
    imputed = Counter({name: 0 for name in ECHO_FIELDS})
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in ("record_id",) + ECHO_FIELDS if c not in (reader.fieldnames or [])]
        if missing:
            raise MalformedRow(1, f"missing columns {missing}")
        for line, row in enumerate(reader, start=2):
            vals = {}
            for name in ECHO_FIELDS:
                cell = (row[name] or "").strip()
                if cell == "":
                    imputed[name] += 1
                    vals[name] = False
                elif cell in ("0", "1"):
                    vals[name] = cell == "1"
                else:
                    raise MalformedRow(line, f"{name} must be 0/1, got {cell!r}")
            rid = row["record_id"]
            if rid in out:
                raise DuplicateRecordId(rid)
            out[rid] = EchoFindings(**vals)
    return out, dict(imputed)


def write_echo_findings(findings: Mapping[str, EchoFindings], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("record_id",) + ECHO_FIELDS)
        for rid, f in findings.items():
            w.writerow([rid] + [int(getattr(f, n)) for n in ECHO_FIELDS])


# ---------------------------------------------------------------- labeling


@dataclass(frozen=True)
class LabelAssignment:
    patient_id: str
    record_id: str
    ecg_time: int
    label: int
    ef_percent: float
    echo_time: int


@dataclass
class Labeling:
    labeled: list[LabelAssignment]
    unlabeled: list[tuple[str, str, int]]


def assign_labels(
    echo_events: Iterable[tuple[str, int, float]],
    ecg_events: Iterable[tuple[str, str, int]],
    window_days: int = 365,
) -> Labeling:
    """Pair ECGs with echo results.

    ``echo_events`` holds ``(patient_id, echo_time, ef_percent)`` and
    ``ecg_events`` holds ``(patient_id, record_id, ecg_time)``; times are
    UTC seconds. Both ends of the window are inclusive. Output is sorted by
    record_id so that the result does not depend on input order.
    """
    echo_events = list(echo_events)
    ecg_events = list(ecg_events)
    if not echo_events or not ecg_events:
        raise EmptyInput("assign_labels needs at least one echo and one ECG event")
    if window_days <= 0:
        raise NegativeWindow(f"window_days must be positive, got {window_days}")
    window = int(window_days) * DAY_SECONDS

    by_patient: dict[str, list[tuple[int, float]]] = defaultdict(list)
    for pid, t, ef in echo_events:
        by_patient[pid].append((int(t), float(ef)))
    for echoes in by_patient.values():
        echoes.sort()

    labeled: list[LabelAssignment] = []
    unlabeled: list[tuple[str, str, int]] = []
    for pid, rid, t_ecg in sorted(ecg_events, key=lambda e: (e[1], e[0], e[2])):
        t_ecg = int(t_ecg)
        echoes = by_patient.get(pid, [])
        hit = None
        for t_echo, ef in echoes:
            # nearest qualifying low-EF echo, ties on time broken by lowest EF
            if is_low_ef(ef) and 0 <= t_echo - t_ecg <= window:
                if hit is None or (t_echo, ef) < hit:
                    hit = (t_echo, ef)
        if hit is not None:
            labeled.append(LabelAssignment(pid, rid, t_ecg, 1, hit[1], hit[0]))
            continue
        if echoes and all(not is_low_ef(ef) for _, ef in echoes) and t_ecg <= echoes[-1][0]:
            t_echo, ef = min((e for e in echoes if e[0] >= t_ecg))
            labeled.append(LabelAssignment(pid, rid, t_ecg, 0, ef, t_echo))
            continue
        unlabeled.append((pid, rid, t_ecg))
    return Labeling(labeled, unlabeled)


# ---------------------------------------------------------------- summaries


@dataclass(frozen=True)
class SplitSummary:
    split: str
    n: int
    n_pos: int
    n_patients: int

    @property
    def prevalence(self) -> float:
        return self.n_pos / self.n if self.n else 0.0


def summarize_cohort(table: CohortTable) -> list[SplitSummary]:
    if not table.records:
        raise EmptyCohort("cohort has no records")
    out = []
    for s in table.splits():
        rows = table.split(s)
        out.append(
            SplitSummary(
                split=s,
                n=len(rows),
                n_pos=sum(r.label for r in rows),
                n_patients=len({r.patient_id for r in rows}),
            )
        )
    return out


def records_to_columns(records: Sequence[LabeledRecord]) -> dict[str, list]:
    return {name: [getattr(r, name) for r in records] for name in (f.name for f in fields(LabeledRecord))}
