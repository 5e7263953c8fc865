"""Seeded synthetic cohorts with a known per-code signal.

Labels are drawn first. Each code then gets a Gaussian latent
``z = d * y + noise_scale * N(0, 1)`` and a probability
``sigmoid(a + b * z)`` (stored as ``1 - sigmoid`` for inverted codes, so
the oriented score is always increasing in ``z``). A monotone map keeps
ranks, so the single-code AUROC is ``Phi(d / (noise_scale * sqrt 2))``.
Given every latent, the label posterior is a logistic function of a
linear combination of the latents.

Every record owns a Philox stream keyed by (seed, record index): one
record's values never depend on how many others are generated or in what
order.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from statistics import NormalDist
from typing import Mapping

import numpy as np

from .cohort import ECHO_FIELDS, CohortTable, EchoFindings, LabeledRecord, write_cohort, write_echo_findings
from .errors import InvalidSpec
from .predictors import PredictorCatalog, PredictorMatrix, default_catalog, save_catalog, write_predictor_matrix
from .subgroups import INTERNAL_CONTEXTS, RACE_TABLE

SPLIT_ORDER = ("train", "validation", "internal_test", "external_test")
BASE_TIME = 1_600_000_000
DAY = 86400

DEFAULT_AGE_MIX = {"18–59": 0.40, "60–69": 0.25, "70–79": 0.21, "80+": 0.14}
_AGE_RANGES = {"18–59": (18, 59), "60–69": (60, 69), "70–79": (70, 79), "80+": (80, 95)}
DEFAULT_SEX_MIX = {"female": 0.46, "male": 0.54}
DEFAULT_RACE_MIX = {"Hispanic": 0.315, "White": 0.294, "Black": 0.159, "Asian": 0.036, "Other": 0.073, "Unknown": 0.123}
DEFAULT_CONTEXT_MIX = {"Emergency": 0.315, "Inpatient": 0.482, "Outpatient": 0.171, "Procedural": 0.032}


@dataclass(frozen=True)
class SyntheticSpec:
    split_sizes: Mapping[str, int] = field(
        default_factory=lambda: {"train": 20000, "validation": 4000, "internal_test": 4000}
    )
    prevalence: float = 0.234
    effects: Mapping[str, float] = field(
        default_factory=lambda: {"NORM": 1.5, "ILBBB": 0.5, "INJAL": 0.5, "ISCLA": 0.5, "ANEUR": 0.5, "ISCAL": 0.5}
    )
    noise_scale: float = 1.0
    intercept: float = -4.0
    slope: float = 1.5
    seed: int = 7
    age_mix: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_AGE_MIX))
    sex_mix: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_SEX_MIX))
    race_mix: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_RACE_MIX))
    context_mix: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_CONTEXT_MIX))
    finding_rate: float = 0.08

    @property
    def n_records(self) -> int:
        return sum(self.split_sizes.values())

    def validate(self, catalog: PredictorCatalog) -> None:
        if not 0.0 < self.prevalence < 1.0:
            raise InvalidSpec(f"prevalence must lie in (0, 1), got {self.prevalence}")
        if self.n_records <= 0 or any(v < 0 for v in self.split_sizes.values()):
            raise InvalidSpec("split sizes must be non-negative with a positive total")
        bad = set(self.split_sizes) - set(SPLIT_ORDER)
        if bad:
            raise InvalidSpec(f"unknown splits {sorted(bad)}")
        for code, d in self.effects.items():
            if code not in catalog:
                raise InvalidSpec(f"signal code {code!r} not in catalog")
            if not math.isfinite(d):
                raise InvalidSpec(f"effect for {code} is not finite")
        if not self.noise_scale > 0:
            raise InvalidSpec("noise_scale must be positive")
        if not 0.0 <= self.finding_rate <= 1.0:
            raise InvalidSpec("finding_rate must lie in [0, 1]")
        if not 0 <= self.seed < 2**63:
            raise InvalidSpec("seed must be a non-negative 63-bit integer")
        for name, mix, allowed in (
            ("age_mix", self.age_mix, _AGE_RANGES),
            ("sex_mix", self.sex_mix, ("female", "male")),
            ("race_mix", self.race_mix, RACE_TABLE),
            ("context_mix", self.context_mix, INTERNAL_CONTEXTS),
        ):
            if set(mix) - set(allowed):
                raise InvalidSpec(f"{name} has unknown categories {sorted(set(mix) - set(allowed))}")
            if any(p < 0 for p in mix.values()) or abs(sum(mix.values()) - 1.0) > 1e-9:
                raise InvalidSpec(f"{name} proportions must be non-negative and sum to 1")

    def to_dict(self) -> dict:
        return {k: (dict(v) if isinstance(v, Mapping) else v) for k, v in asdict(self).items()}


def analytic_auroc(d: float, noise_scale: float = 1.0) -> float:
    """AUROC of a unit-variance Gaussian shift ``d`` (scaled by ``noise_scale``)."""
    return NormalDist().cdf(d / (noise_scale * math.sqrt(2.0)))


def record_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) | int(index)))


def _pick(mix: Mapping[str, float], u: float) -> str:
    acc = 0.0
    keys = list(mix)
    for k in keys:
        acc += mix[k]
        if u < acc:
            return k
    return keys[-1]


@dataclass(frozen=True)
class SyntheticCohort:
    matrix: PredictorMatrix
    cohort: CohortTable
    analytic: dict[str, float]
    spec: SyntheticSpec

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "predictors": out / "predictors.csv",
            "cohort": out / "cohort.csv",
            "echo_findings": out / "echo_findings.csv",
            "catalog": out / "catalog.json",
            "truth": out / "truth.json",
        }
        write_predictor_matrix(self.matrix, paths["predictors"])
        write_cohort(self.cohort, paths["cohort"])
        write_echo_findings(self.cohort.echo_findings, paths["echo_findings"])
        save_catalog(self.matrix.catalog, paths["catalog"])
        paths["truth"].write_text(json.dumps({"spec": self.spec.to_dict(), "analytic_auroc": self.analytic}, indent=1))
        return paths


def generate_record(spec: SyntheticSpec, catalog: PredictorCatalog, index: int, split: str, d_vec, inv_mask):
    """Values, record and echo findings for record ``index`` from its own stream."""
    rng = record_rng(spec.seed, index)
    y = int(rng.random() < spec.prevalence)
    z = d_vec * y + spec.noise_scale * rng.standard_normal(len(catalog))
    s = 1.0 / (1.0 + np.exp(-(spec.intercept + spec.slope * z)))
    values = np.where(inv_mask, 1.0 - s, s)
    ef = float(rng.uniform(15.0, 45.0)) if y else float(rng.uniform(46.0, 75.0))
    ecg_time = BASE_TIME + int(rng.integers(0, 3 * 365 * DAY))
    ref_time = ecg_time + int(rng.integers(0, 365 * DAY + 1))
    lo, hi = _AGE_RANGES[_pick(spec.age_mix, rng.random())]
    age = int(rng.integers(lo, hi + 1))
    sex = _pick(spec.sex_mix, rng.random())
    raws = RACE_TABLE[_pick(spec.race_mix, rng.random())]
    race = raws[int(rng.integers(0, len(raws)))]
    context = _pick(spec.context_mix, rng.random())
    flags = rng.random(len(ECHO_FIELDS)) < spec.finding_rate
    rid = f"R{index:06d}"
    rec = LabeledRecord(
        record_id=rid,
        patient_id=f"P{index:06d}",
        label=y,
        ef_percent=ef,
        ecg_time=ecg_time,
        ref_time=ref_time,
        age_years=age,
        sex=sex,
        race_raw=race,
        context_raw=context,
        split=split,
    )
    return values, rec, EchoFindings(*(bool(f) for f in flags))


def generate(spec: SyntheticSpec | None = None, catalog: PredictorCatalog | None = None) -> SyntheticCohort:
    spec = spec or SyntheticSpec()
    catalog = catalog or default_catalog()
    spec.validate(catalog)
    d_vec = np.array([float(spec.effects.get(c, 0.0)) for c in catalog.codes])
    inv = catalog.inverted_mask()
    rows, records, findings = [], [], {}
    i = 0
    for split in SPLIT_ORDER:
        for _ in range(int(spec.split_sizes.get(split, 0))):
            v, rec, f = generate_record(spec, catalog, i, split, d_vec, inv)
            rows.append(v)
            records.append(rec)
            findings[rec.record_id] = f
            i += 1
    matrix = PredictorMatrix(catalog, [r.record_id for r in records], np.vstack(rows))
    cohort = CohortTable(tuple(records), findings, {name: 0 for name in ECHO_FIELDS})
    analytic = {c: analytic_auroc(d, spec.noise_scale) for c, d in spec.effects.items()}
    return SyntheticCohort(matrix, cohort, analytic, spec)
