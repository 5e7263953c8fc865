"""Command-line entry point: ``ecgpd <subcommand> [flags]``.

Inputs default to the conventional file names inside ``--out`` so that
subcommands chain (synth -> single -> train -> evaluate -> explain ...).
A ``--config`` file of ``key = value`` lines supplies defaults; explicit
flags win. Every run writes ``manifest.json`` next to its artifacts.

Exit codes: 0 success, 2 usage or validation error (JSON on stderr),
3 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from ._jit import backend
from .errors import EcgpdError, InvalidSpec

log = logging.getLogger("ecgpd")

DEFAULT_FILES = {
    "predictors": "predictors.csv",
    "cohort": "cohort.csv",
    "catalog": "catalog.json",
    "model": "model.json",
    "echo_findings": "echo_findings.csv",
    "ranking": "ranking.json",
}
# flag names for inputs whose attribute differs from the DEFAULT_FILES key
PATH_ATTRS = {"ranking": "ranking_path"}
# settings that never change results; kept out of the config hash
NON_SEMANTIC = {"out", "jobs", "config", "command"}


INPUT_ATTRS = {PATH_ATTRS.get(k, k) for k in DEFAULT_FILES}


class UsageError(EcgpdError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ------------------------------------------------------------------ helpers


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True, default=_json_default) + "\n")


def _int_list(s: str) -> list[int]:
    out = []
    for part in s.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return out


def _float_list(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.split(",") if x.strip())


def _str_list(s: str) -> list[str]:
    return [x.strip() for x in s.split(",") if x.strip()]


def read_config_file(path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment, quotes around values are dropped."""
    out = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith("["):
            continue
        if "=" not in line:
            raise UsageError(f"config line {n}: expected key = value")
        k, v = (x.strip() for x in line.split("=", 1))
        out[k.replace("-", "_")] = v.strip("'\"")
    return out


class Run:
    """Resolved arguments plus bookkeeping for the manifest."""

    def __init__(self, args):
        self.args = args
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.artifacts: list[Path] = []
        self.inputs: dict[str, str] = {}

    def path(self, key: str, required: bool = True) -> Path | None:
        v = getattr(self.args, PATH_ATTRS.get(key, key), None)
        p = Path(v) if v else self.out / DEFAULT_FILES[key]
        if not p.exists():
            if required:
                raise FileNotFoundError(f"{key} file not found: {p}")
            return None
        self.inputs[key] = sha256_file(p)
        return p

    def emit(self, name: str) -> Path:
        p = self.out / name
        self.artifacts.append(p)
        return p

    def config(self) -> dict:
        cfg = {}
        for k, v in sorted(vars(self.args).items()):
            if k in NON_SEMANTIC or k in INPUT_ATTRS or callable(v):
                continue
            cfg[k] = list(v) if isinstance(v, tuple) else v
        cfg["inputs"] = dict(sorted(self.inputs.items()))
        return cfg

    def config_hash(self) -> str:
        blob = json.dumps(self.config(), sort_keys=True, default=_json_default)
        return hashlib.sha256(blob.encode()).hexdigest()

    def write_manifest(self, catalog_version: str | None) -> None:
        entry = {
            "tool_version": __version__,
            "subcommand": self.args.command,
            "config": self.config(),
            "config_hash": self.config_hash(),
            "seed": getattr(self.args, "seed", None),
            "catalog_version": catalog_version,
            "backend": backend(),
            "artifacts": {p.name: sha256_file(p) for p in self.artifacts},
        }
        # one entry per subcommand so a chained pipeline in one directory keeps every record
        prior = read_manifest(self.out)
        runs = dict(prior.get("runs", {}))
        runs[self.args.command] = entry
        write_json(dict(entry, runs=runs), self.out / "manifest.json")


def read_manifest(out) -> dict:
    p = Path(out) / "manifest.json"
    if not p.exists():
        return {}
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError:
        return {}


SEEDED = ("synth", "train", "evaluate")


def resolve_seed(args) -> None:
    if args.seed is not None:
        return
    root = read_manifest(args.out).get("seed")
    if root is not None:
        args.seed = int(root)
    elif args.command in SEEDED:
        raise UsageError(f"{args.command} needs --seed (no root seed recorded in {args.out}/manifest.json)")
    else:
        args.seed = 0


def _catalog(run: Run):
    from .predictors import default_catalog, load_catalog

    p = run.path("catalog", required=False)
    return load_catalog(p) if p else default_catalog()


def _load_inputs(run: Run):
    from .cohort import load_cohort
    from .predictors import load_predictor_matrix

    catalog = _catalog(run)
    matrix = load_predictor_matrix(run.path("predictors"), catalog)
    cohort = load_cohort(run.path("cohort"))
    missing = [r.record_id for r in cohort.records if r.record_id not in matrix]
    if missing:
        raise InvalidSpec(f"{len(missing)} cohort records have no predictor row (first: {missing[0]})")
    return catalog, matrix, cohort


def _split_xy(matrix, cohort, split: str, codes=None):
    rows = cohort.split(split)
    if not rows:
        raise InvalidSpec(f"split {split!r} is empty")
    ids = [r.record_id for r in rows]
    X = matrix.rows(ids)
    if codes is not None:
        X = X[:, [matrix.catalog.index(c) for c in codes]]
    return ids, X, np.array([r.label for r in rows], dtype=np.int64)


def _load_model(run: Run):
    from .tabular.model_io import load_model, load_model_meta

    p = run.path("model")
    return load_model(p), load_model_meta(p)


def _threshold_from_meta(meta: dict) -> float | None:
    t = (meta.get("threshold") or {}).get("threshold")
    return None if t is None else float(t)


# ------------------------------------------------------------------ subcommands


def cmd_synth(run: Run) -> str:
    from .synth import SyntheticSpec, generate

    a = run.args
    sizes = {"train": a.n, "validation": a.n_validation, "internal_test": a.n_test}
    if a.n_external:
        sizes["external_test"] = a.n_external
    if sizes["validation"] is None:
        sizes["validation"] = a.n // 5
    if sizes["internal_test"] is None:
        sizes["internal_test"] = a.n // 5
    kw = {"split_sizes": sizes, "seed": a.seed, "prevalence": a.prevalence, "noise_scale": a.noise_scale}
    if a.effects:
        eff = {}
        for item in _str_list(a.effects):
            code, _, d = item.partition(":")
            eff[code] = float(d)
        kw["effects"] = eff
    syn = generate(SyntheticSpec(**kw))
    for p in syn.write(run.out).values():
        run.artifacts.append(p)
    return syn.matrix.catalog.version


def cmd_ingest(run: Run) -> str:
    from .cohort import summarize_cohort

    catalog, matrix, cohort = _load_inputs(run)
    summary = {
        "n_records": len(cohort),
        "n_predictor_rows": len(matrix),
        "catalog_size": len(catalog),
        "inverted": sorted(catalog.inverted),
        "splits": [dict(asdict(s), prevalence=s.prevalence) for s in summarize_cohort(cohort)],
    }
    p = run.path("echo_findings", required=False)
    if p:
        from .cohort import load_echo_findings

        _, imputed = load_echo_findings(p)
        summary["echo_findings_imputed"] = imputed
    write_json(summary, run.emit("summary.json"))
    return catalog.version


def cmd_label(run: Run) -> str | None:
    from .cohort import assign_labels

    a = run.args
    echoes, ecgs = [], []
    with open(a.echo, newline="") as fh:
        for row in csv.DictReader(fh):
            echoes.append((row["patient_id"], int(row["echo_time"]), float(row["ef_percent"])))
    with open(a.ecg, newline="") as fh:
        for row in csv.DictReader(fh):
            ecgs.append((row["patient_id"], row["record_id"], int(row["ecg_time"])))
    run.inputs["echo"] = sha256_file(a.echo)
    run.inputs["ecg"] = sha256_file(a.ecg)
    res = assign_labels(echoes, ecgs, a.window_days)
    with open(run.emit("labels.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["patient_id", "record_id", "ecg_time", "label", "ef_percent", "echo_time"])
        for r in res.labeled:
            w.writerow([r.patient_id, r.record_id, r.ecg_time, r.label, repr(r.ef_percent), r.echo_time])
    with open(run.emit("unlabeled.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["patient_id", "record_id", "ecg_time"])
        w.writerows(res.unlabeled)
    return None


def cmd_single(run: Run) -> str:
    from .single import evaluate_all_single, rank_predictors, thresholds_ledger

    a = run.args
    catalog, matrix, cohort = _load_inputs(run)
    codes = _str_list(a.codes) if a.codes else None
    reports = evaluate_all_single(
        matrix, cohort, a.selection_split, a.split, a.n_resamples, a.seed, a.jobs, codes, a.min_recall
    )
    write_json({r.code: r.to_dict() for r in reports}, run.emit("single_reports.json"))
    write_json(thresholds_ledger(reports, catalog), run.emit("thresholds.json"))
    if codes is None:
        write_json({"order": "f1_desc", "split": a.split, "codes": rank_predictors(reports, catalog)}, run.emit("ranking.json"))
    with open(run.emit("single_summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["code", "auroc", "auroc_lo", "auroc_hi", "auprc", "f1", "threshold", "raw_threshold", "raw_direction"])
        for r in sorted(reports, key=lambda r: (-r.f1.point, catalog.index(r.code))):
            t = r.threshold
            w.writerow([r.code, repr(r.auroc.point), repr(r.auroc.ci_low), repr(r.auroc.ci_high),
                        repr(r.auprc.point), repr(r.f1.point), repr(t.threshold), repr(t.raw_threshold), t.raw_direction])
    return catalog.version


def _train_config(a):
    from .tabular import TrainConfig

    kw = {"model_family": a.family, "selection_metric": a.selection_metric, "seed": a.seed}
    if a.lambdas:
        kw["l2_lambdas"] = _float_list(a.lambdas)
    if a.learning_rates:
        kw["learning_rates"] = _float_list(a.learning_rates)
    if a.depths:
        kw["max_depths"] = tuple(int(x) for x in _float_list(a.depths))
    if a.n_estimators is not None:
        kw["n_estimators"] = a.n_estimators
    if a.early_stopping_rounds is not None:
        kw["early_stopping_rounds"] = a.early_stopping_rounds
    if a.leaf_lambda is not None:
        kw["leaf_lambda"] = a.leaf_lambda
    return TrainConfig(**kw)


def cmd_train(run: Run) -> str:
    from .tabular import choose_decision_threshold, grid_search
    from .tabular.model_io import save_model

    a = run.args
    catalog, matrix, cohort = _load_inputs(run)
    config = _train_config(a)
    _, X, y = _split_xy(matrix, cohort, "train")
    _, vX, vy = _split_xy(matrix, cohort, a.selection_split)
    res = grid_search(config, (X, y), (vX, vy), feature_codes=catalog.codes, jobs=a.jobs)
    choice = choose_decision_threshold(res.model, vX, vy, a.selection_split)
    meta = res.selection_meta()
    meta.update({"seed": a.seed, "catalog_version": catalog.version, "threshold": choice.to_dict()})
    if a.family == "logistic":
        meta["train_feature_means"] = X.mean(axis=0).tolist()
    save_model(res.model, run.emit("model.json"), meta)
    write_json({"best_cell": res.best_cell, "grid": res.table, "threshold": choice.to_dict()}, run.emit("train_summary.json"))
    return catalog.version


def cmd_evaluate(run: Run) -> str:
    from .metrics import Resampler, bootstrap_ci, compute_curves

    a = run.args
    catalog, matrix, cohort = _load_inputs(run)
    model, meta = _load_model(run)
    _, X, y = _split_xy(matrix, cohort, a.split, model.feature_codes)
    p = np.atleast_1d(model.predict_proba(X))
    thr = _threshold_from_meta(meta)
    rs = Resampler(y, a.n_resamples, a.seed, a.jobs)
    metrics = {
        "auroc": bootstrap_ci(p, y, "auroc", resampler=rs).to_dict(),
        "auprc": bootstrap_ci(p, y, "auprc", resampler=rs).to_dict(),
    }
    if thr is not None:
        metrics["f1"] = bootstrap_ci(p, y, "f1", threshold=thr, resampler=rs).to_dict()
    report = {
        "split": a.split,
        "family": model.family,
        "n": int(len(y)),
        "n_pos": int(y.sum()),
        "prevalence": float(y.mean()),
        "threshold": thr,
        "threshold_selected_on": (meta.get("threshold") or {}).get("selected_on"),
        "metrics": metrics,
        "ci_method": "percentile",
        "n_resamples": a.n_resamples,
        "seed": a.seed,
        "n_redraws": rs.redraws,
        "config_hash": run.config_hash(),
    }
    write_json(report, run.emit("report.json"))
    c = compute_curves(p, y)
    with open(run.emit("roc.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fpr", "tpr"])
        w.writerows((repr(float(f)), repr(float(t))) for f, t in zip(c.fpr, c.tpr))
    with open(run.emit("pr.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["recall", "precision"])
        w.writerows((repr(float(r)), repr(float(q))) for r, q in zip(c.recall, c.precision))
    return catalog.version


def cmd_explain(run: Run) -> str:
    from .explain import BEESWARM_COLUMNS, DEPENDENCE_COLUMNS, beeswarm_data, dependence_data, explain, global_importance, waterfall_local
    from .explain.products import write_global_csv, write_rows_csv

    a = run.args
    catalog, matrix, cohort = _load_inputs(run)
    model, meta = _load_model(run)
    ids, X, _ = _split_xy(matrix, cohort, a.split, model.feature_codes)
    batch = explain(model, X, ids, background_mean=meta.get("train_feature_means"))
    worst = float(np.max(np.abs(batch.base_value + batch.phi.sum(axis=1) - batch.margin)))
    glob = global_importance(batch)
    write_global_csv(glob, run.emit("shap_global.csv"))
    order = None
    if a.ranking == "f1":
        rp = run.path("ranking")
        order = [c for c in json.loads(rp.read_text())["codes"] if c in model.feature_codes]
    bees = beeswarm_data(batch, matrix, a.top_n, order)
    write_rows_csv(bees, BEESWARM_COLUMNS, run.emit("shap_beeswarm.csv"))
    dep_codes = _str_list(a.dependence) if a.dependence else [r.code for r in glob[: a.n_dependence]]
    dep_meta = {}
    for code in dep_codes:
        d = dependence_data(batch, matrix, code, catalog=catalog)
        safe = code.replace("/", "_")
        write_rows_csv(d.rows(), DEPENDENCE_COLUMNS, run.emit(f"shap_dependence_{safe}.csv"))
        dep_meta[code] = d.meta()
    pos = {rid: i for i, rid in enumerate(ids)}
    for rid in a.record or ():
        if rid not in pos:
            raise InvalidSpec(f"record {rid!r} is not in split {a.split!r}")
        i = pos[rid]
        wf = waterfall_local(batch[i], a.top_n, X[i], catalog)
        doc = wf.to_dict()
        doc["phi"] = dict(zip(batch.feature_codes, batch.phi[i].tolist()))
        write_json(doc, run.emit(f"shap_local_{rid}.json"))
    write_json(
        {
            "family": model.family,
            "split": a.split,
            "n": len(ids),
            "base_value": batch.base_value,
            "max_additivity_error": worst,
            "ranking": a.ranking,
            "dependence": dep_meta,
        },
        run.emit("shap_summary.json"),
    )
    return catalog.version


def cmd_sweep(run: Run) -> str:
    from .single import evaluate_all_single, rank_predictors
    from .tabular import TrainConfig, predictor_count_sweep
    from .tabular.search import write_sweep_csv

    a = run.args
    catalog, matrix, cohort = _load_inputs(run)
    rp = run.path("ranking", required=False)
    if rp:
        ranking = json.loads(rp.read_text())["codes"]
    else:
        reports = evaluate_all_single(matrix, cohort, a.selection_split, a.split, a.n_resamples, a.seed, a.jobs)
        ranking = rank_predictors(reports, catalog)
    mp = run.path("model", required=False) if a.use_model else None
    if mp:
        from .tabular.model_io import load_model_meta

        meta = load_model_meta(mp)
        config = TrainConfig.from_dict(meta["config"]).fixed(meta["best_cell"])
    else:
        config = _train_config(a)
    ks = _int_list(a.ks) if a.ks else list(range(1, len(catalog) + 1))
    splits = {}
    for name in ("train", a.selection_split, a.split):
        _, X, y = _split_xy(matrix, cohort, name)
        splits[name] = (X, y)
    splits["validation"] = splits[a.selection_split]
    points = predictor_count_sweep(ranking, ks, config, splits, catalog.codes, a.split, a.n_resamples, a.seed, a.jobs)
    write_sweep_csv(points, run.emit("sweep.csv"))
    write_json(
        {"ranking": list(ranking), "config": config.to_dict(), "points": [dict(p.row(), best_cell=p.best_cell) for p in points]},
        run.emit("sweep.json"),
    )
    return catalog.version


def cmd_subgroup(run: Run) -> str:
    from .cohort import load_echo_findings
    from .subgroups import DIMENSIONS, subgroup_report, write_subgroups_csv

    a = run.args
    catalog, matrix, cohort = _load_inputs(run)
    model, meta = _load_model(run)
    ids, X, _ = _split_xy(matrix, cohort, a.split, model.feature_codes)
    p = np.atleast_1d(model.predict_proba(X))
    findings = None
    fp = run.path("echo_findings", required=False)
    if fp:
        findings, _ = load_echo_findings(fp)
    dims = _str_list(a.dimensions) if a.dimensions else (list(DIMENSIONS) if findings else ["age", "sex", "race", "context"])
    thr = _threshold_from_meta(meta)
    results = subgroup_report(
        cohort.split(a.split), p, thr, dims, findings, a.context_set, n_resamples=a.n_resamples, seed=a.seed, jobs=a.jobs, record_ids=ids
    )
    write_subgroups_csv(results, run.emit("subgroups.csv"))
    write_json(
        {
            "split": a.split,
            "threshold": thr,
            "threshold_policy": "global cut from the selection split, reused in every stratum",
            "context_set": a.context_set,
            "strata": [r.to_dict() for r in results],
        },
        run.emit("subgroups.json"),
    )
    return catalog.version


def cmd_notes(run: Run) -> None:
    from . import notes as nt

    a = run.args
    notes = nt.read_notes(a.notes)
    run.inputs["notes"] = sha256_file(a.notes)
    llm = nt.LlmEscalation(nt.HttpLlmClient(a.llm_url), max_in_flight=a.llm_in_flight) if a.llm_url else None
    extracted = nt.extract_notes(notes, llm=llm, jobs=a.jobs)
    nt.write_extractions(((nid, e) for nid, e in extracted if e is not None), run.emit("extractions.jsonl"))
    summary = {"n_notes": len(notes), "n_gated": sum(e is not None for _, e in extracted)}
    if a.ecgs:
        run.inputs["ecgs"] = sha256_file(a.ecgs)
        with open(a.ecgs, newline="") as fh:
            ecgs = [{"patient_id": r["patient_id"], "record_id": r["record_id"], "ecg_time": int(r["ecg_time"])} for r in csv.DictReader(fh)]
        label_of = {}
        for nid, e in extracted:
            if e is not None and e.kind != nt.NONE:
                y = nt.label_from_ef(e)
                if y is not None:
                    label_of[nid] = y
        note_index = {n.note_id: n for n in notes}
        pairs = nt.build_pairs(ecgs, (note_index[k] for k in label_of))
        chosen = nt.select_pairs(pairs)
        labels = {p.record_id: label_of[p.note_id] for p in chosen}
        if a.reference:
            run.inputs["reference"] = sha256_file(a.reference)
            with open(a.reference, newline="") as fh:
                ref = {r["record_id"]: int(r["label"]) for r in csv.DictReader(fh)}
            labels, counts = nt.consistency_join(labels, ref)
            summary["consistency"] = dict(counts)
        with open(run.emit("note_pairs.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["patient_id", "record_id", "note_id", "ecg_time", "note_time", "interval_seconds", "label"])
            for p in chosen:
                if p.record_id in labels:
                    w.writerow([p.patient_id, p.record_id, p.note_id, p.ecg_time, p.note_time, p.interval_seconds, labels[p.record_id]])
        summary.update({"n_pairs": len(pairs), "n_patients": len(chosen), "n_labeled": len(labels)})
    summary["ambiguous_notes"] = nt.ambiguity["notes"]
    write_json(summary, run.emit("notes_summary.json"))
    return None


def cmd_features(run: Run) -> None:
    from .features import derive_baseline_features, read_measurements, write_features

    a = run.args
    rows = read_measurements(a.measurements)
    run.inputs["measurements"] = sha256_file(a.measurements)
    feats = [(rid, derive_baseline_features(m, age, sex)) for rid, m, age, sex in rows]
    write_features(feats, run.emit("baseline_features.csv"))
    return None


COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "label": cmd_label,
    "single": cmd_single,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "explain": cmd_explain,
    "sweep": cmd_sweep,
    "subgroup": cmd_subgroup,
    "notes": cmd_notes,
    "features": cmd_features,
}


# ------------------------------------------------------------------ parser


def _add_train_flags(p):
    p.add_argument("--family", choices=("gbdt", "logistic"), default="gbdt")
    p.add_argument("--lambdas", help="comma list of L2 strengths (logistic)")
    p.add_argument("--learning-rates", help="comma list (gbdt)")
    p.add_argument("--depths", help="comma list of max depths (gbdt)")
    p.add_argument("--n-estimators", type=int)
    p.add_argument("--early-stopping-rounds", type=int)
    p.add_argument("--leaf-lambda", type=float)
    p.add_argument("--selection-metric", choices=("auroc", "auprc", "logloss"), default="auroc")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--predictors", help="predictor CSV (default: <out>/predictors.csv)")
    common.add_argument("--cohort", help="cohort CSV (default: <out>/cohort.csv)")
    common.add_argument("--catalog", help="catalog JSON (default: <out>/catalog.json or built-in)")
    common.add_argument("--split", default="internal_test", help="evaluation split")
    common.add_argument("--selection-split", default="validation")
    common.add_argument("--seed", type=int, help="root seed (default: the one recorded in <out>/manifest.json)")
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    common.add_argument("--out", default=".")
    common.add_argument("--config", help="key = value defaults file")
    common.add_argument("--n-resamples", type=int, default=1000)

    parser = _Parser(prog="ecgpd", description="LEF detection from ECG diagnostic probabilities.")
    parser.add_argument("--version", action="version", version=f"ecgpd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="write a seeded synthetic cohort")
    p.add_argument("--n", type=int, default=20000, help="training records")
    p.add_argument("--n-validation", type=int)
    p.add_argument("--n-test", type=int)
    p.add_argument("--n-external", type=int, default=0)
    p.add_argument("--prevalence", type=float, default=0.234)
    p.add_argument("--noise-scale", type=float, default=1.0)
    p.add_argument("--effects", help="CODE:d pairs, e.g. NORM:1.5,ILBBB:0.5")

    sub.add_parser("ingest", parents=[common], help="validate inputs and summarise the cohort").add_argument(
        "--echo-findings"
    )

    p = sub.add_parser("label", parents=[common], help="label ECGs from echo events")
    p.add_argument("--echo", required=True, help="CSV patient_id,echo_time,ef_percent")
    p.add_argument("--ecg", required=True, help="CSV patient_id,record_id,ecg_time")
    p.add_argument("--window-days", type=int, default=365)

    p = sub.add_parser("single", parents=[common], help="single-predictor evaluation of every code")
    p.add_argument("--min-recall", type=float, default=0.90)
    p.add_argument("--codes", help="restrict to these codes")

    p = sub.add_parser("train", parents=[common], help="grid-search a tabular model")
    _add_train_flags(p)

    p = sub.add_parser("evaluate", parents=[common], help="bootstrap metrics for a trained model")
    p.add_argument("--model")

    p = sub.add_parser("explain", parents=[common], help="SHAP tables for a trained model")
    p.add_argument("--model")
    p.add_argument("--record", action="append", help="write a local waterfall for this record (repeatable)")
    p.add_argument("--top-n", type=int, default=10)
    p.add_argument("--ranking", choices=("shap", "f1"), default="shap")
    p.add_argument("--ranking-file", dest="ranking_path")
    p.add_argument("--dependence", help="codes for dependence tables (default: top by mean |phi|)")
    p.add_argument("--n-dependence", type=int, default=4)

    p = sub.add_parser("sweep", parents=[common], help="performance versus number of predictors")
    _add_train_flags(p)
    p.add_argument("--ks", help="e.g. 1-71 or 1,5,10,71 (default: all)")
    p.add_argument("--ranking-file", dest="ranking_path")
    p.add_argument("--model")
    p.add_argument("--use-model", action="store_true", help="pin hyperparameters to the trained model's best cell")

    p = sub.add_parser("subgroup", parents=[common], help="per-stratum metrics")
    p.add_argument("--model")
    p.add_argument("--echo-findings")
    p.add_argument("--dimensions", help="comma list from shd,vhd,age,sex,race,context")
    p.add_argument("--context-set", choices=("internal", "external"), default="internal")

    p = sub.add_parser("notes", parents=[common], help="EF extraction from clinical notes")
    p.add_argument("--notes", required=True, help="note JSONL")
    p.add_argument("--ecgs", help="CSV patient_id,record_id,ecg_time for pairing")
    p.add_argument("--reference", help="CSV record_id,label for the consistency join")
    p.add_argument("--llm-url")
    p.add_argument("--llm-in-flight", type=int, default=4)

    p = sub.add_parser("features", parents=[common], help="baseline interval features")
    p.add_argument("--measurements", required=True)
    return parser


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = read_config_file(args.config)
        sp = parser._subparsers._group_actions[0].choices[args.command]
        actions = {a.dest: a for a in sp._actions}
        defaults = {}
        for k, v in cfg.items():
            if k not in actions or k in ("config", "help"):
                raise UsageError(f"unknown config key {k!r} for {args.command}")
            act = actions[k]
            if act.const is not None and act.nargs == 0:
                defaults[k] = v.lower() in ("1", "true", "yes", "on")
            else:
                defaults[k] = act.type(v) if act.type else v
        sp.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def _setup_logging():
    level = os.environ.get("ECGPD_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        resolve_seed(args)
        run = Run(args)
        version = COMMANDS[args.command](run)
        run.write_manifest(version)
        log.info("%s wrote %d artifacts to %s", args.command, len(run.artifacts), run.out)
        return 0
    except EcgpdError as exc:
        print(json.dumps(exc.payload()), file=sys.stderr)
        return 2
    except OSError as exc:
        print(json.dumps({"error": "IoError", "message": str(exc)}), file=sys.stderr)
        return 3



if __name__ == "__main__":
    sys.exit(main())
