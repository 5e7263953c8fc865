import math

import numpy as np
import pytest

from ecgpd.errors import EmptyTotal, NonPositiveValue
from ecgpd.explain import (
    BEESWARM_COLUMNS,
    ShapAttribution,
    ShapBatch,
    beeswarm_data,
    dependence_data,
    explain,
    gaussian_kde,
    global_importance,
    silverman_bandwidth,
    waterfall_local,
)
from ecgpd.explain.products import read_rows_csv, write_rows_csv
from ecgpd.predictors import PredictorMatrix, default_catalog
from ecgpd.single import evaluate_all_single, rank_predictors
from ecgpd.tabular import train_logistic


def batch(phi, codes=("a", "b", "c")):
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    n = phi.shape[0]
    return ShapBatch(tuple(f"r{i}" for i in range(n)), tuple(codes), phi, 0.0, phi.sum(1), np.ones_like(phi) * 0.5)


def test_global_importance_examples():
    rows = global_importance(batch([[2.0, -1.0, 1.0]]))
    assert [r.code for r in rows] == ["a", "b", "c"]
    assert [r.cumulative_pct for r in rows] == [50.0, 75.0, 100.0]
    rows = global_importance(batch([[0.3, -0.1, 0.0]]))
    assert [r.mean_abs_phi for r in rows] == [0.3, 0.1, 0.0]
    with pytest.raises(EmptyTotal):
        global_importance(batch([[0.0, 0.0, 0.0]]))


def test_cumulative_reaches_100(small_model, small_synth):
    b = explain(small_model, small_synth.matrix.values[:100])
    rows = global_importance(b)
    pct = [r.cumulative_pct for r in rows]
    assert len(rows) == 71 and pct[-1] == pytest.approx(100.0, abs=1e-12)
    assert all(x <= y for x, y in zip(pct, pct[1:]))


def test_beeswarm_shape_and_roundtrip(tmp_path, small_model, small_synth):
    m = small_synth.matrix
    ids = list(m.record_ids[:5])
    b = explain(small_model, m.rows(ids), ids)
    rows = beeswarm_data(b, m, top_n=10)
    assert len(rows) == 50
    write_rows_csv(rows, BEESWARM_COLUMNS, tmp_path / "b.csv")
    back = read_rows_csv(tmp_path / "b.csv")
    assert [float(r["phi"]) for r in back] == [r["phi"] for r in rows]


def test_beeswarm_f1_order_matches_ranking(small_model, small_synth):
    m, c = small_synth.matrix, small_synth.cohort
    reports = evaluate_all_single(m, c, n_resamples=20)
    ranking = rank_predictors(reports, m.catalog)
    ids = list(m.record_ids[:3])
    rows = beeswarm_data(explain(small_model, m.rows(ids), ids), m, top_n=10, order=ranking)
    seen = list(dict.fromkeys(r["code"] for r in rows))
    assert seen == ranking[:10]


def test_kde_properties():
    assert gaussian_kde([1.0, 1.0], [1.0], 0.5)[0] == gaussian_kde([1.0], [1.0], 0.5)[0]
    rng = np.random.default_rng(0)
    pts = rng.normal(-2, 0.7, 300)
    bw = silverman_bandwidth(pts)
    grid = np.linspace(-8, 4, 4001)
    dens = gaussian_kde(pts, grid, bw)
    assert abs(np.sum(dens) * (grid[1] - grid[0]) - 1.0) < 1e-2
    assert silverman_bandwidth(np.ones(5)) == 1.0


def test_dependence_reference_lines(small_model, small_synth):
    m = small_synth.matrix
    ids = list(m.record_ids[:50])
    d = dependence_data(explain(small_model, m.rows(ids), ids), m, "NORM")
    assert d.lef_threshold == 0.003641 and d.diagnosis_threshold == 0.370
    assert len(d.rows()) == 50
    # two records with the same value get the same density
    vals = d.log_values
    i, j = np.argsort(vals)[:2]
    if vals[i] == vals[j]:
        assert d.density[i] == d.density[j]


def test_dependence_clamps_or_raises():
    cat = default_catalog()
    vals = np.full((3, 71), 0.2)
    vals[0, 0] = 0.0
    m = PredictorMatrix(cat, ["a", "b", "c"], vals)
    b = ShapBatch(("a", "b", "c"), cat.codes, np.zeros((3, 71)), 0.0, np.zeros(3))
    d = dependence_data(b, m, "NORM")
    assert d.n_clamped == 1 and d.log_values[0] == -12.0
    with pytest.raises(NonPositiveValue):
        dependence_data(b, m, "NORM", on_nonpositive="error")


def test_waterfall_partition():
    rng = np.random.default_rng(1)
    codes = tuple(f"c{i}" for i in range(71))
    phi = rng.normal(size=71)
    a = ShapAttribution("r", phi, -1.2, -1.2 + float(phi.sum()), codes)
    wf = waterfall_local(a, 10)
    assert len(wf.rows) == 11 and wf.rows[-1]["code"] == "61 other features"
    assert abs(sum(r["phi"] for r in wf.rows) + wf.base_value - wf.margin) <= 1e-12
    top = sum(r["phi"] for r in wf.rows[:10])
    assert abs(wf.rows[-1]["phi"] - (phi.sum() - top)) <= 1e-12
    one = np.zeros(71)
    one[40] = 0.5
    wf = waterfall_local(ShapAttribution("r", one, 0.0, 0.5, codes), 3)
    assert wf.rows[0]["code"] == "c40"


def test_logistic_attributions(small_synth, xy):
    m, c = small_synth.matrix, small_synth.cohort
    X, y = xy(m, c, "train")
    model = train_logistic(X, y, 0.1, feature_codes=m.catalog.codes)
    mu = X.mean(axis=0)
    b = explain(model, X[:20], background_mean=mu)
    assert np.max(np.abs(b.base_value + b.phi.sum(1) - model.predict_margin(X[:20]))) <= 1e-9
    with pytest.raises(ValueError):
        explain(model, X[:2])
