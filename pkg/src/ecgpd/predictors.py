"""The 71-statement predictor catalog and probability-matrix ingestion.

Values are kept at full binary64 precision; some useful LEF cut points
sit around 1e-6, so nothing is rounded on the way in or out.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DuplicateRecordId, HeaderMismatch, OutOfRangeValue, UnknownCode

CATALOG_VERSION = "ptbxl71-v1"

# Fixed column order; model artifacts index features by position in this list.
DEFAULT_CODES = (
    "NORM", "ILBBB", "INJAL", "ISCLA", "ANEUR", "ISCAL", "ASMI", "SVARR", "INJIL", "CRBBB",
    "LAFB", "ALMI", "ABQRS", "CLBBB", "ILMI", "INJAS", "INVT", "PVC", "ISCIL", "1AVB",
    "ISC_", "IVCD", "LAO/LAE", "ISCAN", "ISCAS", "AFIB", "BIGU", "SVTAC", "AMI", "NST_",
    "3AVB", "IMI", "LPR", "2AVB", "DIG", "LMI", "LOWT", "SR", "STACH", "LPFB",
    "PACE", "WPW", "ISCIN", "PRC(S)", "AFLT", "INJIN", "PAC", "IPMI", "STD_", "LNGQT",
    "TRIGU", "NDT", "LVH", "PSVT", "INJLA", "PMI", "STE_", "SEHYP", "SBRAD", "RAO/RAE",
    "VCLVH", "IRBBB", "QWAVE", "NT_", "EL", "HVOLT", "RVH", "LVOLT", "SARRH", "IPLMI",
    "TAB_",
)

DEFAULT_INVERTED = frozenset({"NORM", "SR"})

DISPLAY_NAMES = {
    "NORM": "normal ECG",
    "ILBBB": "incomplete left bundle branch block",
    "INJAL": "subendocardial injury in anterolateral leads",
    "ISCLA": "ischemic in lateral leads",
    "ANEUR": "ST-T changes compatible with ventricular aneurysm",
    "ISCAL": "ischemic in anterolateral leads",
    "ASMI": "anteroseptal myocardial infarction",
    "SVARR": "supraventricular arrhythmia",
    "INJIL": "subendocardial injury in inferolateral leads",
    "CRBBB": "complete right bundle branch block",
    "LAFB": "left anterior fascicular block",
    "CLBBB": "complete left bundle branch block",
    "AFIB": "atrial fibrillation",
    "SR": "sinus rhythm",
    "LVH": "left ventricular hypertrophy",
    "IRBBB": "incomplete right bundle branch block",
    "1AVB": "first degree AV block",
    "PVC": "ventricular premature complex",
    "STACH": "sinus tachycardia",
    "SBRAD": "sinus bradycardia",
}

# Positivity cut points of the upstream diagnosis model (ingested, never fitted here).
DIAGNOSIS_THRESHOLDS = {
    "NORM": 0.370,
    "ILBBB": 0.163,
    "INJAL": 0.500,
    "ISCLA": 0.248,
    "ANEUR": 0.294,
    "ISCAL": 0.315,
    "ASMI": 0.300,
    "SVARR": 0.061,
    "INJIL": 0.012,
    "CRBBB": 0.144,
}

# Published F1-max LEF operating points on the raw probability scale.
REFERENCE_LEF_THRESHOLDS = {
    "NORM": 0.003641,
    "ILBBB": 0.000349,
    "INJAL": 0.000386,
    "ISCLA": 0.001918,
    "ANEUR": 0.001924,
    "ISCAL": 0.001148,
    "ASMI": 0.023987,
    "SVARR": 0.000218,
    "INJIL": 0.000035,
    "CRBBB": 0.000005,
}


@dataclass(frozen=True)
class PredictorCatalog:
    codes: tuple[str, ...] = DEFAULT_CODES
    inverted: frozenset[str] = DEFAULT_INVERTED
    names: Mapping[str, str] = field(default_factory=lambda: dict(DISPLAY_NAMES))
    diagnosis_thresholds: Mapping[str, float] = field(default_factory=lambda: dict(DIAGNOSIS_THRESHOLDS))
    reference_lef_thresholds: Mapping[str, float] = field(
        default_factory=lambda: dict(REFERENCE_LEF_THRESHOLDS)
    )
    version: str = CATALOG_VERSION

    def __post_init__(self):
        codes = tuple(self.codes)
        if len(set(codes)) != len(codes):
            raise ValueError("catalog codes must be unique")
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "inverted", frozenset(self.inverted))
        bad = self.inverted - set(codes)
        if bad:
            raise UnknownCode(sorted(bad)[0])
        object.__setattr__(self, "_index", {c: i for i, c in enumerate(codes)})

    def __len__(self) -> int:
        return len(self.codes)

    def __contains__(self, code) -> bool:
        return code in self._index

    def index(self, code: str) -> int:
        try:
            return self._index[code]
        except KeyError:
            raise UnknownCode(code) from None

    def is_inverted(self, code: str) -> bool:
        self.index(code)
        return code in self.inverted

    def inverted_mask(self) -> np.ndarray:
        return np.array([c in self.inverted for c in self.codes], dtype=bool)

    def to_json(self) -> dict:
        return {
            "version": self.version,
            "codes": list(self.codes),
            "names": {c: self.names.get(c, c) for c in self.codes},
            "inverted": [c for c in self.codes if c in self.inverted],
            "diagnosis_thresholds": dict(self.diagnosis_thresholds),
            "reference_lef_thresholds": dict(self.reference_lef_thresholds),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PredictorCatalog":
        return cls(
            codes=tuple(obj["codes"]),
            inverted=frozenset(obj.get("inverted", DEFAULT_INVERTED)),
            names=dict(obj.get("names", {})),
            diagnosis_thresholds={k: float(v) for k, v in obj.get("diagnosis_thresholds", {}).items()},
            reference_lef_thresholds={
                k: float(v) for k, v in obj.get("reference_lef_thresholds", {}).items()
            },
            version=obj.get("version", CATALOG_VERSION),
        )

    def subset(self, codes: Sequence[str]) -> "PredictorCatalog":
        for c in codes:
            self.index(c)
        return PredictorCatalog(
            codes=tuple(codes),
            inverted=self.inverted & set(codes),
            names=self.names,
            diagnosis_thresholds=self.diagnosis_thresholds,
            reference_lef_thresholds=self.reference_lef_thresholds,
            version=self.version,
        )


def default_catalog() -> PredictorCatalog:
    return PredictorCatalog()


def load_catalog(path: str | Path) -> PredictorCatalog:
    with open(path) as fh:
        return PredictorCatalog.from_json(json.load(fh))


def save_catalog(catalog: PredictorCatalog, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(catalog.to_json(), fh, indent=2)


def oriented_score(v, code: str, catalog: PredictorCatalog) -> float:
    """Probability oriented so that larger always means higher LEF risk."""
    pv = float(v[catalog.index(code)])
    return 1.0 - pv if code in catalog.inverted else pv


def orient_values(values, inverted: bool):
    values = np.asarray(values, dtype=np.float64)
    return 1.0 - values if inverted else values


class PredictorMatrix:
    """Immutable record_id -> 71-vector table, row order as read."""

    def __init__(self, catalog: PredictorCatalog, record_ids: Iterable[str], values):
        values = np.array(values, dtype=np.float64)
        record_ids = tuple(record_ids)
        if values.ndim != 2 or values.shape[1] != len(catalog):
            raise HeaderMismatch(catalog.codes, [f"col{i}" for i in range(values.shape[-1])])
        if values.shape[0] != len(record_ids):
            raise ValueError("record_ids and values disagree in length")
        values.setflags(write=False)
        self.catalog = catalog
        self.record_ids = record_ids
        self.values = values
        self._row = {}
        for i, rid in enumerate(record_ids):
            if rid in self._row:
                raise DuplicateRecordId(rid)
            self._row[rid] = i
        self._validate()

    def _validate(self):
        bad = ~((self.values >= 0.0) & (self.values <= 1.0))
        if bad.any():
            i, j = map(int, np.argwhere(bad)[0])
            raise OutOfRangeValue(self.record_ids[i], self.catalog.codes[j], float(self.values[i, j]))

    def __len__(self) -> int:
        return len(self.record_ids)

    def __contains__(self, rid) -> bool:
        return rid in self._row

    def row(self, record_id: str) -> np.ndarray:
        return self.values[self._row[record_id]]

    def rows(self, record_ids: Sequence[str]) -> np.ndarray:
        idx = [self._row[r] for r in record_ids]
        return self.values[idx]

    def column(self, code: str, record_ids: Sequence[str] | None = None) -> np.ndarray:
        j = self.catalog.index(code)
        vals = self.values[:, j] if record_ids is None else self.rows(record_ids)[:, j]
        return vals

    def oriented_column(self, code: str, record_ids: Sequence[str] | None = None) -> np.ndarray:
        return orient_values(self.column(code, record_ids), code in self.catalog.inverted)


def load_predictor_matrix(path: str | Path, catalog: PredictorCatalog | None = None) -> PredictorMatrix:
    catalog = catalog or default_catalog()
    expected = ["record_id", *catalog.codes]
    ids: list[str] = []
    rows: list[list[float]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, [])
        if header != expected:
            raise HeaderMismatch(expected, header)
        for row in reader:
            if not row:
                continue
            if len(row) != len(expected):
                raise HeaderMismatch(expected, row)
            rid = row[0]
            vals = []
            for code, cell in zip(catalog.codes, row[1:]):
                try:
                    v = float(cell)
                except ValueError:
                    raise OutOfRangeValue(rid, code, cell) from None
                if not (0.0 <= v <= 1.0) or math.isnan(v):
                    raise OutOfRangeValue(rid, code, v)
                vals.append(v)
            ids.append(rid)
            rows.append(vals)
    values = np.array(rows, dtype=np.float64).reshape(len(rows), len(catalog))
    return PredictorMatrix(catalog, ids, values)


def write_predictor_matrix(matrix: PredictorMatrix, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["record_id", *matrix.catalog.codes])
        for rid, vals in zip(matrix.record_ids, matrix.values):
            w.writerow([rid, *(repr(float(v)) for v in vals)])
