"""Independent reference implementations used only by the tests.

Each one is deliberately naive: pair counting, cut enumeration, subset
enumeration, grid minimisation. None of them shares code with the package.
"""
from __future__ import annotations

import math
from itertools import combinations

import numpy as np


def auroc_pairs(scores, labels) -> float:
    """Fraction of (pos, neg) pairs ranked correctly, ties counted half."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    pos, neg = s[y == 1], s[y == 0]
    wins = 0.0
    for p in pos:
        wins += np.sum(p > neg) + 0.5 * np.sum(p == neg)
    return wins / (len(pos) * len(neg))


def auprc_cuts(scores, labels) -> float:
    """Average precision: sum over distinct cuts of (delta recall) * precision."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    P = y.sum()
    total, prev_recall = 0.0, 0.0
    for t in sorted(set(s.tolist()), reverse=True):
        pred = s >= t
        tp = np.sum(pred & (y == 1))
        recall = tp / P
        total += (recall - prev_recall) * (tp / pred.sum())
        prev_recall = recall
    return total


def f1_at_cut(scores, labels, t) -> float:
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    pred = s >= t
    tp = np.sum(pred & (y == 1))
    fp = np.sum(pred & (y == 0))
    fn = np.sum(~pred & (y == 1))
    return 0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn)


def golden_min(f, lo, hi, tol=1e-12, iters=400):
    g = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if b - a < tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return (a + b) / 2


def tree_leaf_paths(tree):
    """(leaf id, [(feature, went_left, cover_ratio), ...]) for every leaf."""
    out = []
    stack = [(0, [])]
    while stack:
        k, path = stack.pop()
        f = int(tree.feature[k])
        if f < 0:
            out.append((k, path))
            continue
        lo, hi = int(tree.left[k]), int(tree.right[k])
        c = tree.cover[k]
        stack.append((lo, path + [(f, True, tree.cover[lo] / c, float(tree.threshold[k]))]))
        stack.append((hi, path + [(f, False, tree.cover[hi] / c, float(tree.threshold[k]))]))
    return out


def brute_shapley_tree(tree, X, scale=1.0):
    """Shapley values of the cover-conditioned expectation, by subset enumeration.

    v(S) for instance x averages leaf values with weight prod over path
    nodes of [x goes this way] when the node feature is in S and the
    cover ratio otherwise.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, F = X.shape
    phi = np.zeros((n, F))
    used = sorted({int(f) for f in tree.feature if f >= 0})
    k = len(used)
    if k == 0:
        return phi
    pos = {f: j for j, f in enumerate(used)}
    masks = np.arange(1 << k)
    member = ((masks[:, None] >> np.arange(k)[None, :]) & 1).astype(bool)  # (2^k, k)
    v = np.zeros((1 << k, n))
    for leaf, path in tree_leaf_paths(tree):
        w = np.ones((1 << k, n))
        for f, went_left, ratio, thr in path:
            ind = (X[:, f] < thr) if went_left else (X[:, f] >= thr)
            w *= np.where(member[:, pos[f]][:, None], ind[None, :].astype(float), ratio)
        v += w * tree.value[leaf] * scale
    size = member.sum(1)
    coef = np.array([math.factorial(s) * math.factorial(k - s - 1) / math.factorial(k) for s in range(k)])
    for j, f in enumerate(used):
        without = masks[~member[:, j]]
        phi[:, f] = np.sum(coef[size[without]][:, None] * (v[without | (1 << j)] - v[without]), axis=0)
    return phi


def brute_shapley_ensemble(ens, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    phi = np.zeros(X.shape)
    for t in ens.trees:
        phi += brute_shapley_tree(t, X, ens.learning_rate)
    return phi


def labels_bruteforce(echo_events, ecg_events, window_days=365, cutoff=45.0):
    """Label every ECG by direct scan over all of its patient's echoes."""
    day = 86400
    out = {}
    for ecg in ecg_events:
        mine = [e for e in echo_events if e["patient_id"] == ecg["patient_id"]]
        if not mine:
            continue
        low_in = [e for e in mine if e["ef"] <= cutoff and 0 <= e["time"] - ecg["time"] <= window_days * day]
        if low_in:
            out[ecg["record_id"]] = 1
            continue
        if all(e["ef"] > cutoff for e in mine) and ecg["time"] <= max(e["time"] for e in mine):
            out[ecg["record_id"]] = 0
    return out


def min_pairs_bruteforce(pairs):
    """Per patient, every pair attaining the minimal interval; caller applies tie rules."""
    best = {}
    for p in pairs:
        d = abs(p["note_time"] - p["ecg_time"])
        best.setdefault(p["patient_id"], []).append((d, p))
    out = {}
    for pid, items in best.items():
        m = min(d for d, _ in items)
        out[pid] = [p for d, p in items if d == m]
    return out


def all_subsets(items):
    for r in range(len(items) + 1):
        yield from combinations(items, r)


def random_tree(rng, max_depth=4, n_features=12, leaf_prob=0.25):
    """Random binary tree with integer covers that add up from the leaves."""
    from ecgpd.tabular import Tree

    feat, thr, left, right, val, cov = [], [], [], [], [], []

    def build(depth):
        k = len(feat)
        feat.append(-1)
        thr.append(0.0)
        left.append(-1)
        right.append(-1)
        val.append(0.0)
        cov.append(0.0)
        if depth == max_depth or (depth > 0 and rng.random() < leaf_prob):
            val[k] = float(rng.normal())
            cov[k] = float(rng.integers(1, 20))
            return k
        feat[k] = int(rng.integers(0, n_features))
        thr[k] = float(rng.integers(0, 4)) + 0.5
        lo = build(depth + 1)
        hi = build(depth + 1)
        left[k], right[k] = lo, hi
        cov[k] = cov[lo] + cov[hi]
        return k

    build(0)
    return Tree(
        np.array(feat, dtype=np.int64),
        np.array(thr),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(val),
        np.array(cov),
        np.zeros(len(feat)),
    )
