"""Ranking and thresholded metrics with seeded percentile-bootstrap CIs.

All three metrics are evaluated from a single sort of the scores plus a
per-record multiplicity vector, so a bootstrap resample costs O(n) rather
than a re-sort. AUROC is computed in exact integer arithmetic.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from ._jit import USE_NUMBA, njit
from .errors import DegenerateLabels, NoPositives, TooManyDegenerateResamples

METRICS = ("auroc", "auprc", "f1")
SCORE_GE = "score_ge"
SCORE_LE = "score_le"


def _as_arrays(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError(f"scores and labels differ in length: {s.shape[0]} vs {y.shape[0]}")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    y = y.astype(np.int64)
    if np.any((y != 0) & (y != 1)):
        raise ValueError("labels must be 0/1")
    return s, y


class SortedSample:
    """Scores sorted ascending with tie-group boundaries."""

    def __init__(self, scores, labels):
        s, y = _as_arrays(scores, labels)
        order = np.argsort(s, kind="stable")
        self.order = order
        self.scores = s[order]
        self.labels = y[order]
        if len(s):
            brk = np.flatnonzero(np.diff(self.scores) != 0) + 1
            self.starts = np.concatenate(([0], brk)).astype(np.int64)
        else:
            self.starts = np.zeros(0, dtype=np.int64)
        self.n = len(s)
        self.n_pos = int(y.sum())


# ------------------------------------------------------------------ kernels
# Each kernel takes the ascending-sorted labels, tie-group starts, and a
# (B, n) int64 matrix of per-record multiplicities in sorted order.


@njit(cache=True, nogil=True)
def _auroc_nb(labels, starts, weights):
    B, n = weights.shape
    G = starts.shape[0]
    out = np.empty(B)
    for b in range(B):
        neg_before = 0
        num = 0
        P = 0
        N = 0
        for g in range(G):
            lo = starts[g]
            hi = starts[g + 1] if g + 1 < G else n
            pg = 0
            ng = 0
            for i in range(lo, hi):
                w = weights[b, i]
                if labels[i] == 1:
                    pg += w
                else:
                    ng += w
            num += 2 * neg_before * pg + pg * ng
            neg_before += ng
            P += pg
            N += ng
        out[b] = num / (2.0 * P * N) if P > 0 and N > 0 else np.nan
    return out


def _auroc_np(labels, starts, weights):
    pos = np.add.reduceat(weights * labels, starts, axis=1)
    neg = np.add.reduceat(weights * (1 - labels), starts, axis=1)
    neg_before = np.cumsum(neg, axis=1) - neg
    num = (2 * neg_before * pos + pos * neg).sum(axis=1)
    P = pos.sum(axis=1)
    N = neg.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where((P > 0) & (N > 0), num / (2.0 * P * N), np.nan)


@njit(cache=True, nogil=True)
def _auprc_nb(labels, starts, weights):
    B, n = weights.shape
    G = starts.shape[0]
    out = np.empty(B)
    for b in range(B):
        tp = 0
        fp = 0
        acc = 0.0
        # walk tie groups from the highest score down
        for g in range(G - 1, -1, -1):
            lo = starts[g]
            hi = starts[g + 1] if g + 1 < G else n
            pg = 0
            ng = 0
            for i in range(lo, hi):
                w = weights[b, i]
                if labels[i] == 1:
                    pg += w
                else:
                    ng += w
            tp += pg
            fp += ng
            if pg > 0:
                acc += pg * (tp / (tp + fp))
        out[b] = acc / tp if tp > 0 else np.nan
    return out


def _auprc_np(labels, starts, weights):
    pos = np.add.reduceat(weights * labels, starts, axis=1)[:, ::-1]
    neg = np.add.reduceat(weights * (1 - labels), starts, axis=1)[:, ::-1]
    tp = np.cumsum(pos, axis=1)
    fp = np.cumsum(neg, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        prec = np.where(tp + fp > 0, tp / np.maximum(tp + fp, 1), 0.0)
        terms = np.where(pos > 0, pos * prec, 0.0)
        acc = np.cumsum(terms, axis=1)[:, -1]
        P = tp[:, -1]
        return np.where(P > 0, acc / np.maximum(P, 1), np.nan)


@njit(cache=True, nogil=True)
def _f1_nb(labels, predicted, weights):
    B, n = weights.shape
    out = np.empty(B)
    for b in range(B):
        tp = 0
        fp = 0
        fn = 0
        for i in range(n):
            w = weights[b, i]
            if predicted[i]:
                if labels[i] == 1:
                    tp += w
                else:
                    fp += w
            elif labels[i] == 1:
                fn += w
        out[b] = 2.0 * tp / (2 * tp + fp + fn) if tp > 0 else 0.0
    return out


def _f1_np(labels, predicted, weights):
    pl = (predicted & (labels == 1)).astype(np.int64)
    tp = weights @ pl
    fp = weights @ (predicted & (labels == 0)).astype(np.int64)
    fn = weights @ ((~predicted) & (labels == 1)).astype(np.int64)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(tp > 0, 2.0 * tp / np.maximum(2 * tp + fp + fn, 1), 0.0)


if USE_NUMBA:
    _auroc_kernel, _auprc_kernel, _f1_kernel = _auroc_nb, _auprc_nb, _f1_nb
else:
    _auroc_kernel, _auprc_kernel, _f1_kernel = _auroc_np, _auprc_np, _f1_np


def _predicted(sorted_scores, threshold, direction):
    if direction == SCORE_GE:
        return sorted_scores >= threshold
    if direction == SCORE_LE:
        return sorted_scores <= threshold
    raise ValueError(f"unknown direction {direction!r}")


def _ones(n):
    return np.ones((1, n), dtype=np.int64)


# ------------------------------------------------------------------ metrics


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC; tied (pos, neg) pairs count one half."""
    ss = SortedSample(scores, labels)
    if ss.n_pos == 0 or ss.n_pos == ss.n:
        raise DegenerateLabels("AUROC needs both classes")
    return float(_auroc_kernel(ss.labels, ss.starts, _ones(ss.n))[0])


def auprc(scores, labels) -> float:
    """Average precision; tied scores enter the ranking as one block."""
    ss = SortedSample(scores, labels)
    if ss.n_pos == 0:
        raise NoPositives("AUPRC needs at least one positive")
    return float(_auprc_kernel(ss.labels, ss.starts, _ones(ss.n))[0])


def f1_at(scores, labels, threshold: float, direction: str = SCORE_GE) -> float:
    s, y = _as_arrays(scores, labels)
    pred = _predicted(s, threshold, direction)
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    return 2 * tp / (2 * tp + fp + fn) if tp else 0.0


def confusion(scores, labels, threshold: float, direction: str = SCORE_GE) -> dict:
    s, y = _as_arrays(scores, labels)
    pred = _predicted(s, threshold, direction)
    return {
        "tp": int(np.sum(pred & (y == 1))),
        "fp": int(np.sum(pred & (y == 0))),
        "fn": int(np.sum(~pred & (y == 1))),
        "tn": int(np.sum(~pred & (y == 0))),
    }


def metric_value(metric: str, scores, labels, threshold=None, direction=SCORE_GE) -> float:
    if metric == "auroc":
        return auroc(scores, labels)
    if metric == "auprc":
        return auprc(scores, labels)
    if metric == "f1":
        if threshold is None:
            raise ValueError("f1 needs a threshold")
        return f1_at(scores, labels, threshold, direction)
    raise ValueError(f"unknown metric {metric!r}")


# ------------------------------------------------------------------ bootstrap


@dataclass(frozen=True)
class MetricReport:
    metric: str
    point: float
    ci_low: float
    ci_high: float
    n_resamples: int
    seed: int
    n: int
    n_pos: int
    n_redraws: int = 0
    ci_method: str = "percentile"

    def to_dict(self) -> dict:
        return asdict(self)


class Resampler:
    """Seeded bootstrap multiplicities for one label vector.

    Resample ``i`` is drawn from ``PCG64(SeedSequence([seed, i]))``, so the
    streams are fixed per resample whatever the chunking; a draw missing either
    class is redrawn from the same stream. The matrix depends only on the
    labels and the seed, so every score vector evaluated on the same
    records sees identical resamples.
    """

    def __init__(self, labels, n_resamples: int = 1000, seed: int = 0, jobs: int = 1, chunk: int = 100):
        y = np.asarray(labels).ravel().astype(np.int64)
        n = len(y)
        n_pos = int(y.sum())
        if n_pos == 0 or n_pos == n:
            raise DegenerateLabels("bootstrap needs both classes in the full sample")
        self.n, self.n_resamples, self.seed = n, n_resamples, seed
        self.max_redraws = n_resamples // 2
        pos = np.flatnonzero(y == 1)
        seeds = list(range(n_resamples))
        chunks = [seeds[i : i + chunk] for i in range(0, n_resamples, chunk)]

        def run(part):
            return self._draw(part, pos)

        if jobs > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as ex:
                results = list(ex.map(run, chunks))
        else:
            results = [run(c) for c in chunks]
        self.redraws = sum(r for _, r in results)
        if self.redraws > self.max_redraws:
            raise TooManyDegenerateResamples(f"{self.redraws} of {n_resamples} resamples were redrawn")
        self.weights = (
            np.concatenate([w for w, _ in results]) if results else np.zeros((0, n), dtype=np.int64)
        )
        self._labels = y

    def _draw(self, seeds, pos):
        n = self.n
        W = np.empty((len(seeds), n), dtype=np.int64)
        redraws = 0
        for k, i in enumerate(seeds):
            rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, i])))
            while True:
                counts = np.bincount(rng.integers(0, n, size=n), minlength=n)
                npos = int(counts[pos].sum())
                if 0 < npos < n:
                    break
                redraws += 1
                if redraws > self.max_redraws:
                    raise TooManyDegenerateResamples(
                        f"more than {self.max_redraws} resamples lacked one of the classes"
                    )
            W[k] = counts
        return W, redraws

    def matches(self, labels) -> bool:
        y = np.asarray(labels).ravel()
        return len(y) == self.n and np.array_equal(y.astype(np.int64), self._labels)


def bootstrap_values(
    scores,
    labels,
    metric: str,
    n_resamples: int = 1000,
    seed: int = 0,
    threshold: float | None = None,
    direction: str = SCORE_GE,
    jobs: int = 1,
    resampler: Resampler | None = None,
) -> tuple[np.ndarray, int]:
    """Metric value on each bootstrap resample, plus the redraw count."""
    ss = SortedSample(scores, labels)
    if resampler is None:
        resampler = Resampler(labels, n_resamples, seed, jobs)
    elif not resampler.matches(np.asarray(labels)):
        raise ValueError("resampler was built for different labels")
    if metric == "f1" and threshold is None:
        raise ValueError("f1 needs a threshold")
    W = resampler.weights[:, ss.order]
    if metric == "auroc":
        vals = _auroc_kernel(ss.labels, ss.starts, W)
    elif metric == "auprc":
        vals = _auprc_kernel(ss.labels, ss.starts, W)
    elif metric == "f1":
        vals = _f1_kernel(ss.labels, _predicted(ss.scores, threshold, direction), W)
    else:
        raise ValueError(f"unknown metric {metric!r}")
    return vals, resampler.redraws


def bootstrap_ci(
    scores,
    labels,
    metric: str,
    n_resamples: int = 1000,
    seed: int = 0,
    threshold: float | None = None,
    direction: str = SCORE_GE,
    jobs: int = 1,
    alpha: float = 0.05,
    resampler: Resampler | None = None,
) -> MetricReport:
    """Point estimate plus a 2.5/97.5 percentile interval.

    Thresholded metrics keep ``threshold`` fixed in every resample.
    """
    s, y = _as_arrays(scores, labels)
    point = metric_value(metric, s, y, threshold, direction)
    if resampler is not None:
        n_resamples, seed = resampler.n_resamples, resampler.seed
    vals, redraws = bootstrap_values(
        s, y, metric, n_resamples, seed, threshold, direction, jobs, resampler
    )
    lo, hi = np.percentile(vals, [100 * alpha / 2, 100 * (1 - alpha / 2)])
    return MetricReport(
        metric=metric,
        point=float(point),
        ci_low=float(lo),
        ci_high=float(hi),
        n_resamples=n_resamples,
        seed=seed,
        n=int(len(y)),
        n_pos=int(y.sum()),
        n_redraws=int(redraws),
    )


def evaluate_scores(
    scores, labels, threshold=None, direction=SCORE_GE, n_resamples=1000, seed=0, jobs=1, resampler=None
) -> dict[str, MetricReport]:
    resampler = resampler or Resampler(labels, n_resamples, seed, jobs)
    out = {
        "auroc": bootstrap_ci(scores, labels, "auroc", resampler=resampler),
        "auprc": bootstrap_ci(scores, labels, "auprc", resampler=resampler),
    }
    if threshold is not None:
        out["f1"] = bootstrap_ci(
            scores, labels, "f1", threshold=threshold, direction=direction, resampler=resampler
        )
    return out


# ------------------------------------------------------------------ curves


@dataclass(frozen=True)
class Curves:
    fpr: np.ndarray
    tpr: np.ndarray
    recall: np.ndarray
    precision: np.ndarray
    thresholds: np.ndarray

    def roc_area(self) -> float:
        return float(np.sum(np.diff(self.fpr) * (self.tpr[1:] + self.tpr[:-1]) / 2.0))

    def pr_step_area(self) -> float:
        r = np.concatenate(([0.0], self.recall))
        return float(np.sum(np.diff(r) * self.precision))


def compute_curves(scores, labels) -> Curves:
    """ROC points from (0,0) to (1,1) and PR points at every tie-group cut."""
    ss = SortedSample(scores, labels)
    if ss.n_pos == 0 or ss.n_pos == ss.n:
        raise DegenerateLabels("curves need both classes")
    P, N = ss.n_pos, ss.n - ss.n_pos
    pos = np.add.reduceat(ss.labels, ss.starts)[::-1]
    cnt = np.diff(np.concatenate((ss.starts, [ss.n])))[::-1]
    tp = np.cumsum(pos)
    fp = np.cumsum(cnt - pos)
    thr = ss.scores[ss.starts][::-1]
    fpr = np.concatenate(([0.0], fp / N))
    tpr = np.concatenate(([0.0], tp / P))
    return Curves(fpr=fpr, tpr=tpr, recall=tp / P, precision=tp / (tp + fp), thresholds=thr)
