import json

import numpy as np
import pytest

from ecgpd.cohort import load_cohort
from ecgpd.errors import InvalidSpec
from ecgpd.metrics import auroc
from ecgpd.predictors import load_predictor_matrix
from ecgpd.synth import SyntheticSpec, analytic_auroc, generate


def test_analytic_value():
    assert analytic_auroc(1.5) == pytest.approx(0.8556, abs=1e-4)
    assert analytic_auroc(0.0) == 0.5


def test_deterministic_and_prefix_stable():
    a = generate(SyntheticSpec(split_sizes={"train": 300, "validation": 50}, seed=3))
    b = generate(SyntheticSpec(split_sizes={"train": 300, "validation": 50}, seed=3))
    assert np.array_equal(a.matrix.values, b.matrix.values) and a.cohort == b.cohort
    c = generate(SyntheticSpec(split_sizes={"train": 100}, seed=3))
    assert np.array_equal(c.matrix.values, a.matrix.values[:100])


def test_null_design_is_uninformative():
    spec = SyntheticSpec(split_sizes={"train": 3000}, effects={}, seed=1)
    s = generate(spec)
    y = np.array(s.cohort.labels())
    for code in ("NORM", "ILBBB", "AFIB"):
        assert abs(auroc(s.matrix.oriented_column(code), y) - 0.5) < 3 / np.sqrt(len(y))


def test_dominant_code_near_analytic(small_synth):
    y = np.array(small_synth.cohort.labels())
    a = auroc(small_synth.matrix.oriented_column("NORM"), y)
    assert abs(a - small_synth.analytic["NORM"]) < 0.03


def test_invalid_specs():
    with pytest.raises(InvalidSpec):
        generate(SyntheticSpec(prevalence=1.5))
    with pytest.raises(InvalidSpec):
        generate(SyntheticSpec(effects={"NOPE": 1.0}))


def test_write_and_reload(tmp_path, small_synth):
    paths = small_synth.write(tmp_path)
    m = load_predictor_matrix(paths["predictors"], small_synth.matrix.catalog)
    assert np.array_equal(m.values, small_synth.matrix.values)
    c = load_cohort(paths["cohort"])
    assert c.records == small_synth.cohort.records
    truth = json.loads(paths["truth"].read_text())
    assert truth["analytic_auroc"]["NORM"] == small_synth.analytic["NORM"]
