"""Acceptance checks, one test per criterion.

Each test records a one-line verdict; the lines are printed in the pytest
terminal summary and also when this file is run directly:

    python tests/test_acceptance.py
"""
import csv
import json
import math
import os
import random
import sys
import time

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from ecgpd import notes as nt  # noqa: E402
from ecgpd.cohort import LabeledRecord, assign_labels  # noqa: E402
from ecgpd.errors import TooManyDegenerateResamples  # noqa: E402
from ecgpd.explain import shap_values  # noqa: E402
from ecgpd.features import MachineMeasurements, bazett_qtc, derive_baseline_features, ventricular_rate  # noqa: E402
from ecgpd.metrics import auprc, auroc, bootstrap_ci  # noqa: E402
from ecgpd.single import evaluate_all_single, select_threshold_f1, select_threshold_recall  # noqa: E402
from ecgpd.subgroups import subgroup_report  # noqa: E402
from ecgpd.synth import SyntheticSpec, generate  # noqa: E402
from ecgpd.tabular import (  # noqa: E402
    TrainConfig,
    TreeEnsemble,
    grid_search,
    grow_tree,
    predictor_count_sweep,
    train_logistic,
)
from ecgpd.tabular.logistic import gradient, objective  # noqa: E402
from ecgpd.tabular.model_io import dumps  # noqa: E402
from oracles import (  # noqa: E402
    auprc_cuts,
    auroc_pairs,
    brute_shapley_tree,
    f1_at_cut,
    golden_min,
    labels_bruteforce,
    min_pairs_bruteforce,
    random_tree,
)

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")
JOBS = os.cpu_count() or 1
VERDICTS: dict[int, str] = {}


def verdict(n: int, ok: bool, detail: str) -> None:
    line = f"acceptance {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS[n] = line
    print(line)
    assert ok, line


def _xy(matrix, cohort, split):
    rows = cohort.split(split)
    return matrix.rows([r.record_id for r in rows]), np.array([r.label for r in rows])


# ------------------------------------------------------------------ 1


def test_01_metric_oracles():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst_roc = worst_pr = 0.0
    done = 0
    while done < 1000:
        n = int(rng.integers(2, 201))
        levels = int(rng.integers(2, 25))  # few levels forces ties
        s = rng.integers(0, levels, n) / levels
        y = rng.integers(0, 2, n)
        if y.sum() in (0, n):
            continue
        worst_roc = max(worst_roc, abs(auroc(s, y) - auroc_pairs(s, y)))
        worst_pr = max(worst_pr, abs(auprc(s, y) - auprc_cuts(s, y)))
        done += 1
    dt = time.perf_counter() - t0
    ok = worst_roc <= 1e-12 and worst_pr <= 1e-12 and dt < 30
    verdict(1, ok, f"1000 datasets, max|dAUROC|={worst_roc:.1e} max|dAUPRC|={worst_pr:.1e}, {dt:.1f}s")


# ------------------------------------------------------------------ 5 (shared by 2)


@pytest.fixture(scope="module")
def pipeline():
    """Full synthetic pipeline at the stated scale."""
    t0 = time.perf_counter()
    syn = generate(SyntheticSpec(seed=7))
    m, c = syn.matrix, syn.cohort
    splits = {s: _xy(m, c, s) for s in ("train", "validation", "internal_test")}
    singles = evaluate_all_single(m, c, n_resamples=1000, seed=7, jobs=JOBS)
    config = TrainConfig(model_family="gbdt", seed=7)
    res = grid_search(config, splits["train"], splits["validation"], feature_codes=m.catalog.codes, jobs=JOBS)
    tX, ty = splits["internal_test"]
    model_auroc = bootstrap_ci(res.model.predict_proba(tX), ty, "auroc", 1000, 7)
    ranking = sorted(m.catalog.codes, key=lambda code: (-next(r.f1.point for r in singles if r.code == code), m.catalog.index(code)))
    sweep = predictor_count_sweep(ranking, [71], config.fixed(res.best_cell), splits, m.catalog.codes, n_resamples=1000, seed=7, jobs=JOBS)
    return {
        "synth": syn,
        "singles": singles,
        "grid": res,
        "model_auroc": model_auroc,
        "sweep": sweep,
        "seconds": time.perf_counter() - t0,
    }


# ------------------------------------------------------------------ 2


def test_02_tree_shap_exact(pipeline):
    rng = np.random.default_rng(77)
    codes = tuple(f"f{i}" for i in range(12))
    t0 = time.perf_counter()
    worst = 0.0
    used = []
    for _ in range(200):
        tree = random_tree(rng, max_depth=4, n_features=12)
        ens = TreeEnsemble((tree,), 0.0, 1.0, 4, codes)
        X = rng.integers(0, 5, (200, 12)).astype(float)
        phi, _ = shap_values(ens, X)
        worst = max(worst, float(np.max(np.abs(phi - brute_shapley_tree(tree, X)))))
        used.append(len({int(f) for f in tree.feature if f >= 0}))
    dt = time.perf_counter() - t0

    model = pipeline["grid"].model
    X = pipeline["synth"].matrix.values
    t1 = time.perf_counter()
    phi, base = shap_values(model, X)
    dt += time.perf_counter() - t1
    add = float(np.max(np.abs(base + phi.sum(1) - model.predict_margin(X))))
    ok = worst <= 1e-10 and add <= 1e-9 and dt < 120
    verdict(
        2,
        ok,
        f"200 trees x 200 rows (up to {max(used)} features) max|dphi|={worst:.1e}; "
        f"additivity on {len(X)} cohort rows {add:.1e}; {dt:.1f}s",
    )


# ------------------------------------------------------------------ 3


def test_03_threshold_optimality():
    rng = np.random.default_rng(3)
    bad_f1 = bad_recall = 0
    for _ in range(500):
        n = int(rng.integers(2, 120))
        s = rng.integers(0, int(rng.integers(2, 40)), n).astype(float)
        y = rng.integers(0, 2, n)
        if y.sum() in (0, n):
            y[0], y[-1] = 1, 0
        c = select_threshold_f1(s, y)
        cands = set(s.tolist()) | {math.inf}
        best = max(f1_at_cut(s, y, t) for t in cands)
        if abs(c.achieved_f1 - best) > 1e-12 or abs(f1_at_cut(s, y, c.threshold) - best) > 1e-12:
            bad_f1 += 1
        r = select_threshold_recall(s, y, 0.90)
        if np.sum((s >= r.threshold) & (y == 1)) / y.sum() < 0.90:
            bad_recall += 1
    verdict(3, bad_f1 == 0 and bad_recall == 0, f"500 datasets, F1 misses={bad_f1}, recall-floor violations={bad_recall}")


# ------------------------------------------------------------------ 4


def test_04_optimisation():
    fixtures = [
        ([0, 1, 0, 1, 1, 0], [0, 1, 0, 1, 1, 0], 1.0),
        ([0.1, 0.5, 0.9, 1.3, 2.0, -0.4, 0.2], [0, 0, 1, 1, 1, 0, 1], 0.1),
        ([3.0, -1.0, 2.0, 0.5, -2.0, 1.1], [1, 0, 0, 1, 0, 1], 0.01),
    ]
    worst_w = worst_g = 0.0
    for xs, ys, lam in fixtures:
        X = np.array(xs, dtype=float)[:, None]
        y = np.array(ys, dtype=float)
        m = train_logistic(X, y, lam)

        def profile(w):
            b = golden_min(lambda b: objective(np.array([w]), b, X, y, lam), -30, 30)
            return objective(np.array([w]), b, X, y, lam), b

        w = golden_min(lambda w: profile(w)[0], -30, 30)
        b = profile(w)[1]
        worst_w = max(worst_w, abs(m.weights[0] - w), abs(m.bias - b))
        gw, gb = gradient(m.weights, m.bias, X, y, lam)
        worst_g = max(worst_g, float(np.sqrt(gw @ gw + gb * gb)))
    p = np.full(4, 0.5)
    tree, _ = grow_tree(np.zeros((4, 1)), p - 1.0, p * (1 - p), 0, 1.0)
    leaf = float(tree.value[0])
    ok = worst_w <= 1e-6 and worst_g <= 1e-8 and leaf == 1.0
    verdict(4, ok, f"logistic vs golden-section {worst_w:.1e}, |grad|={worst_g:.1e}; hand leaf={leaf!r}")


# ------------------------------------------------------------------ 5


def test_05_pipeline(pipeline):
    syn = pipeline["synth"]
    norm = next(r for r in pipeline["singles"] if r.code == "NORM")
    analytic = syn.analytic["NORM"]
    a_ok = abs(norm.auroc.point - analytic) <= 0.02
    best_single = max(r.auroc.point for r in pipeline["singles"])
    gbdt = pipeline["model_auroc"].point
    b_ok = gbdt >= best_single + 0.01
    (pt,) = pipeline["sweep"]
    full = pipeline["grid"].model
    X = syn.matrix.values
    c_ok = dumps(pt.model) == dumps(full) and np.array_equal(pt.model.predict_margin(X), full.predict_margin(X))
    t_ok = pipeline["seconds"] < 600
    verdict(
        5,
        a_ok and b_ok and c_ok and t_ok,
        f"(a) NORM AUROC {norm.auroc.point:.4f} vs analytic {analytic:.4f}; "
        f"(b) GBDT {gbdt:.4f} vs best single {best_single:.4f} "
        f"[cell {pipeline['grid'].best_cell}, {full.n_trees_used} trees]; "
        f"(c) k=71 identical={c_ok}; {pipeline['seconds']:.0f}s",
    )


# ------------------------------------------------------------------ 6


def test_06_determinism(tmp_path):
    from ecgpd.cli import main

    files = ("model.json", "report.json", "train_summary.json", "single_reports.json")
    blobs = []
    for jobs in ("1", "8"):
        out = str(tmp_path / f"jobs{jobs}")
        common = ["--out", out, "--jobs", jobs]
        assert main(["synth", "--seed", "7", "--n", "3000", "--n-validation", "800", "--n-test", "800", *common]) == 0
        assert main(["single", *common, "--n-resamples", "1000"]) == 0
        assert main(["train", *common, "--family", "gbdt"]) == 0
        assert main(["evaluate", *common, "--n-resamples", "1000"]) == 0
        blobs.append({f: (tmp_path / f"jobs{jobs}" / f).read_bytes() for f in files})
    same = {f: blobs[0][f] == blobs[1][f] for f in files}
    ci = json.loads(blobs[0]["report.json"])["metrics"]["auroc"]
    verdict(
        6,
        all(same.values()),
        f"serial vs --jobs 8: " + ", ".join(f"{f} {'identical' if v else 'DIFFERS'}" for f, v in same.items())
        + f"; AUROC CI [{ci['ci_low']:.4f}, {ci['ci_high']:.4f}]",
    )


# ------------------------------------------------------------------ 7


def _reference_race():
    with open(os.path.join(FIXTURES, "race_groups.csv"), newline="") as fh:
        return {r["raw"]: r["group"] for r in csv.DictReader(fh)}


def test_07_subgroups():
    from ecgpd.subgroups import map_race

    table = _reference_race()
    race_bad = [raw for raw, g in table.items() if map_race(raw) != g]

    rng = np.random.default_rng(7)
    raws = list(table)
    mismatches = 0
    strata = 0
    for trial in range(50):
        n = int(rng.integers(60, 300))
        recs, want = [], {}
        for i in range(n):
            age = int(rng.integers(18, 96))
            sex = str(rng.choice(["female", "male"]))
            raw = str(rng.choice(raws))
            y = int(rng.random() < 0.3)
            recs.append(LabeledRecord(f"r{i}", f"p{i}", y, None, 0, None, age, sex, raw, "Inpatient", "internal_test"))
        scores = rng.random(n) + 0.4 * np.array([r.label for r in recs])
        ys = np.array([r.label for r in recs])
        dim = ("age", "sex", "race")[trial % 3]
        keyf = {
            "age": lambda r: "18–59" if r.age_years < 60 else "60–69" if r.age_years < 70 else "70–79" if r.age_years < 80 else "80+",
            "sex": lambda r: r.sex.capitalize(),
            "race": lambda r: table[r.race_raw],
        }[dim]
        res = subgroup_report(recs, scores, 0.7, [dim], n_resamples=100, seed=trial)
        for r in res:
            idx = [i for i, rec in enumerate(recs) if keyf(rec) == r.stratum]
            strata += 1
            if len(idx) != r.n:
                mismatches += 1
                continue
            sub_y = ys[idx]
            if sub_y.sum() in (0, len(idx)):
                mismatches += r.available
                continue
            try:
                ref = {
                    metric: bootstrap_ci(scores[idx], sub_y, metric, 100, trial, threshold=0.7 if metric == "f1" else None)
                    for metric in ("auroc", "auprc", "f1")
                }
            except TooManyDegenerateResamples:
                mismatches += r.available
                continue
            mismatches += r.metrics != ref
    ok = not race_bad and mismatches == 0
    verdict(7, ok, f"{strata} strata over 50 partitions, mismatches={mismatches}; race table rows {len(table) - len(race_bad)}/{len(table)}")


# ------------------------------------------------------------------ 8


def test_08_notes():
    with open(os.path.join(FIXTURES, "note_corpus.jsonl"), encoding="utf-8") as fh:
        cases = [json.loads(line) for line in fh if line.strip()]
    wrong = []
    for c in cases:
        gated = nt.gate_note(c["text"])
        got = (gated,)
        if gated:
            e = nt.extract_ef(c["text"])
            lab = nt.label_from_ef(e) if e.kind != nt.NONE else None
            got += (e.kind, e.value_percent, e.range_low, e.range_high, lab)
        want = (c["gated"],) + ((c["kind"], c["value"], c["low"], c["high"], c["label"]) if c["gated"] else ())
        if got != want:
            wrong.append(c["id"])

    rnd = random.Random(8)
    day = 86400
    pair_bad = 0
    for _ in range(1000):
        pairs = []
        for p in range(rnd.randint(1, 6)):
            for k in range(rnd.randint(1, 5)):
                t = rnd.randint(0, 30) * day
                pairs.append(nt.NotePair(f"p{p}", f"r{p}_{k}", f"n{p}_{k}", t, t + rnd.randint(0, 4) * day))
        got = {p.patient_id: p for p in nt.select_pairs(pairs)}
        want = min_pairs_bruteforce(
            [{"patient_id": p.patient_id, "record_id": p.record_id, "note_id": p.note_id, "ecg_time": p.ecg_time, "note_time": p.note_time} for p in pairs]
        )
        for pid, cands in want.items():
            ref = min(cands, key=lambda d: (d["ecg_time"], d["record_id"], d["note_id"]))
            if pid not in got or (got[pid].record_id, got[pid].note_id) != (ref["record_id"], ref["note_id"]):
                pair_bad += 1
    ok = not wrong and len(cases) >= 30 and pair_bad == 0
    verdict(8, ok, f"corpus {len(cases) - len(wrong)}/{len(cases)} agree; select_pairs mismatches over 1000 pairings={pair_bad}")


# ------------------------------------------------------------------ 9


def test_09_bazett():
    ex = (bazett_qtc(400, 1000) == 400.0, bazett_qtc(400, 640) == 500.0, ventricular_rate(800) == 75.0)
    f = derive_baseline_features(MachineMeasurements(0, 150, 240, 550, 800))
    ex += (f.atrial_rate_bpm == 75.0,)
    qt = np.linspace(250, 550, 40)
    rr = np.linspace(400, 1800, 25)
    grid = np.array([[bazett_qtc(a, b) for b in rr] for a in qt])  # 1000 points
    mono = bool(np.all(np.diff(grid, axis=0) > 0) and np.all(np.diff(grid, axis=1) < 0))
    verdict(9, all(ex) and mono, f"examples exact={all(ex)}; monotone over {grid.size}-point grid={mono}")


# ------------------------------------------------------------------ 10


def test_10_labels():
    rnd = random.Random(10)
    day = 86400
    bad = 0
    for _ in range(500):
        echoes, ecgs = [], []
        for p in range(rnd.randint(1, 6)):
            for _ in range(rnd.randint(0, 4)):
                echoes.append((f"p{p}", rnd.randint(0, 800) * day + rnd.randint(0, 2), rnd.choice([20.0, 40.0, 45.0, 45.1, 55.0, 65.0])))
            for k in range(rnd.randint(1, 4)):
                ecgs.append((f"p{p}", f"p{p}e{k}", rnd.randint(0, 800) * day))
        if not echoes:
            echoes.append(("p0", 0, 60.0))
        window = rnd.choice([30, 365])
        got = {a.record_id: a.label for a in assign_labels(echoes, ecgs, window).labeled}
        want = labels_bruteforce(
            [{"patient_id": p, "time": t, "ef": ef} for p, t, ef in echoes],
            [{"patient_id": p, "record_id": r, "time": t} for p, r, t in ecgs],
            window,
        )
        bad += got != want
    boundary = assign_labels([("p", 10 * day, 45.0)], [("p", "e", 0)]).labeled[0].label
    verdict(10, bad == 0 and boundary == 1, f"500 event sets, disagreements={bad}; EF 45.0 -> label {boundary}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
