"""Path-dependent Tree SHAP for the boosted ensemble.

Each tree is walked once per instance while a record of the unique
features on the current path is kept together with the fraction of
"feature absent" (cover ratio) and "feature present" (0 or 1) flows.
Leaves distribute their value over that record in closed form, giving
exact Shapley values of the cover-weighted conditional expectation in
O(leaves * depth^2) per tree.

Both children are visited left first. The compiled kernel runs one
instance at a time on scalars; the numpy path runs the same recursion
with every path weight held as a vector over instances.
"""
from __future__ import annotations

import numpy as np

from .._jit import USE_NUMBA, njit
from ..errors import DimensionMismatch, MissingCover
from ..tabular.gbdt import LEAF, TreeEnsemble

# ------------------------------------------------------------------ compiled, one instance


@njit(cache=True, nogil=True)
def _extend(pf, pz, po, pw, row, ud, zf, of, fi):
    pf[row, ud] = fi
    pz[row, ud] = zf
    po[row, ud] = of
    pw[row, ud] = 1.0 if ud == 0 else 0.0
    for i in range(ud - 1, -1, -1):
        pw[row, i + 1] += of * pw[row, i] * (i + 1) / (ud + 1)
        pw[row, i] = zf * pw[row, i] * (ud - i) / (ud + 1)


@njit(cache=True, nogil=True)
def _unwind(pf, pz, po, pw, row, ud, pi):
    of = po[row, pi]
    zf = pz[row, pi]
    nxt = pw[row, ud]
    for i in range(ud - 1, -1, -1):
        if of != 0.0:
            tmp = pw[row, i]
            pw[row, i] = nxt * (ud + 1) / ((i + 1) * of)
            nxt = tmp - pw[row, i] * zf * (ud - i) / (ud + 1)
        else:
            pw[row, i] = pw[row, i] * (ud + 1) / (zf * (ud - i))
    for i in range(pi, ud):
        pf[row, i] = pf[row, i + 1]
        pz[row, i] = pz[row, i + 1]
        po[row, i] = po[row, i + 1]


@njit(cache=True, nogil=True)
def _unwound_sum(pz, po, pw, row, ud, pi):
    of = po[row, pi]
    zf = pz[row, pi]
    nxt = pw[row, ud]
    total = 0.0
    for i in range(ud - 1, -1, -1):
        if of != 0.0:
            tmp = nxt * (ud + 1) / ((i + 1) * of)
            total += tmp
            nxt = pw[row, i] - tmp * zf * (ud - i) / (ud + 1)
        elif zf != 0.0:
            total += pw[row, i] / zf / ((ud - i) / (ud + 1))
    return total


@njit(cache=True, nogil=True)
def _tree_nb(root, x, phi, feat, thr, left, right, val, cover, pf, pz, po, pw, node_s, ud_s, iz_s, io_s, stage):
    # Depth-first walk with an explicit stack; row ``level`` of the path
    # arrays belongs to the node currently open at that depth. (Numba's
    # on-disk cache cannot hold self-recursive functions.)
    level = 0
    node = root
    ud = 0
    zf = 1.0
    of = 1.0
    fi = -1
    entering = True
    while True:
        if entering:
            if level > 0:
                for i in range(ud):
                    pf[level, i] = pf[level - 1, i]
                    pz[level, i] = pz[level - 1, i]
                    po[level, i] = po[level - 1, i]
                    pw[level, i] = pw[level - 1, i]
            _extend(pf, pz, po, pw, level, ud, zf, of, fi)
            f = feat[node]
            if f < 0:
                for i in range(1, ud + 1):
                    w = _unwound_sum(pz, po, pw, level, ud, i)
                    phi[pf[level, i]] += w * (po[level, i] - pz[level, i]) * val[node]
                entering = False
                level -= 1
                if level < 0:
                    return
                continue
            iz = 1.0
            io = 1.0
            for pi in range(ud + 1):
                if pf[level, pi] == f:
                    iz = pz[level, pi]
                    io = po[level, pi]
                    _unwind(pf, pz, po, pw, level, ud, pi)
                    ud -= 1
                    break
            node_s[level] = node
            ud_s[level] = ud
            iz_s[level] = iz
            io_s[level] = io
            stage[level] = 0
        # node at ``level`` is a split node; descend into its next child
        parent = node_s[level]
        f = feat[parent]
        goes_left = x[f] < thr[parent]
        if stage[level] == 0:
            stage[level] = 1
            child = left[parent]
            of = io_s[level] if goes_left else 0.0
        elif stage[level] == 1:
            stage[level] = 2
            child = right[parent]
            of = 0.0 if goes_left else io_s[level]
        else:
            level -= 1
            if level < 0:
                return
            entering = False
            continue
        zf = cover[child] / cover[parent] * iz_s[level]
        fi = f
        ud = ud_s[level] + 1
        node = child
        level += 1
        entering = True


@njit(cache=True, nogil=True)
def _shap_nb(X, roots, feat, thr, left, right, val, cover, depth):
    n, F = X.shape
    phi = np.zeros((n, F))
    rows = depth + 2
    pf = np.zeros((rows, rows), dtype=np.int64)
    pz = np.zeros((rows, rows))
    po = np.zeros((rows, rows))
    pw = np.zeros((rows, rows))
    node_s = np.zeros(rows, dtype=np.int64)
    ud_s = np.zeros(rows, dtype=np.int64)
    iz_s = np.zeros(rows)
    io_s = np.zeros(rows)
    stage = np.zeros(rows, dtype=np.int64)
    for r in range(n):
        x = X[r]
        for t in range(len(roots)):
            _tree_nb(roots[t], x, phi[r], feat, thr, left, right, val, cover,
                     pf, pz, po, pw, node_s, ud_s, iz_s, io_s, stage)
    return phi


# ------------------------------------------------------------------ numpy, all instances at once
# Path state per level: pf (feature ids) and pz (cover ratios) are shared by
# all instances, po and pw carry one entry per instance.


def _extend_v(pf, pz, po, pw, row, ud, zf, of, fi):
    pf[row, ud] = fi
    pz[row, ud] = zf
    po[row, ud] = of
    pw[row, ud] = 1.0 if ud == 0 else 0.0
    for i in range(ud - 1, -1, -1):
        pw[row, i + 1] += of * pw[row, i] * (i + 1) / (ud + 1)
        pw[row, i] = zf * pw[row, i] * (ud - i) / (ud + 1)


def _unwind_v(pf, pz, po, pw, row, ud, pi):
    of = po[row, pi].copy()
    zf = pz[row, pi]
    on = of != 0.0
    nxt = pw[row, ud].copy()
    with np.errstate(divide="ignore", invalid="ignore"):
        for i in range(ud - 1, -1, -1):
            tmp = pw[row, i].copy()
            a = nxt * (ud + 1) / ((i + 1) * of)
            b = tmp * (ud + 1) / (zf * (ud - i))
            pw[row, i] = np.where(on, a, b)
            nxt = np.where(on, tmp - pw[row, i] * zf * (ud - i) / (ud + 1), nxt)
    for i in range(pi, ud):
        pf[row, i] = pf[row, i + 1]
        pz[row, i] = pz[row, i + 1]
        po[row, i] = po[row, i + 1]


def _unwound_sum_v(pz, po, pw, row, ud, pi):
    of = po[row, pi]
    zf = pz[row, pi]
    on = of != 0.0
    nxt = pw[row, ud].copy()
    total = np.zeros_like(nxt)
    with np.errstate(divide="ignore", invalid="ignore"):
        for i in range(ud - 1, -1, -1):
            tmp = nxt * (ud + 1) / ((i + 1) * of)
            if zf != 0.0:
                off = pw[row, i] / zf / ((ud - i) / (ud + 1))
            else:
                off = 0.0
            total = np.where(on, total + tmp, total + off)
            nxt = np.where(on, pw[row, i] - tmp * zf * (ud - i) / (ud + 1), nxt)
    return total


def _recurse_v(node, X, phi, feat, thr, left, right, val, cover, pf, pz, po, pw, level, ud, zf, of, fi):
    if level > 0:
        pf[level, :ud] = pf[level - 1, :ud]
        pz[level, :ud] = pz[level - 1, :ud]
        po[level, :ud] = po[level - 1, :ud]
        pw[level, :ud] = pw[level - 1, :ud]
    _extend_v(pf, pz, po, pw, level, ud, zf, of, fi)
    f = feat[node]
    if f < 0:
        for i in range(1, ud + 1):
            w = _unwound_sum_v(pz, po, pw, level, ud, i)
            phi[:, pf[level, i]] += w * (po[level, i] - pz[level, i]) * val[node]
        return
    iz = 1.0
    io = np.ones(X.shape[0])
    for pi in range(ud + 1):
        if pf[level, pi] == f:
            iz = pz[level, pi]
            io = po[level, pi].copy()
            _unwind_v(pf, pz, po, pw, level, ud, pi)
            ud -= 1
            break
    lo, hi = left[node], right[node]
    goes_left = X[:, f] < thr[node]
    _recurse_v(lo, X, phi, feat, thr, left, right, val, cover, pf, pz, po, pw,
               level + 1, ud + 1, cover[lo] / cover[node] * iz, np.where(goes_left, io, 0.0), f)
    _recurse_v(hi, X, phi, feat, thr, left, right, val, cover, pf, pz, po, pw,
               level + 1, ud + 1, cover[hi] / cover[node] * iz, np.where(goes_left, 0.0, io), f)


def _shap_np(X, roots, feat, thr, left, right, val, cover, depth):
    n, F = X.shape
    phi = np.zeros((n, F))
    rows = depth + 2
    pf = np.zeros((rows, rows), dtype=np.int64)
    pz = np.zeros((rows, rows))
    po = np.zeros((rows, rows, n))
    pw = np.zeros((rows, rows, n))
    for t in range(len(roots)):
        _recurse_v(roots[t], X, phi, feat, thr, left, right, val, cover,
                   pf, pz, po, pw, 0, 0, 1.0, np.ones(n), -1)
    return phi


_shap_kernel = _shap_nb if USE_NUMBA else _shap_np


# ------------------------------------------------------------------ public


def _check_covers(ens: TreeEnsemble):
    for k, t in enumerate(ens.trees):
        if len(t.cover) != t.n_nodes or not np.all(np.isfinite(t.cover)):
            raise MissingCover(f"tree {k} has no usable node covers")
        internal = t.feature != LEAF
        if np.any(t.cover[internal] <= 0) or np.any(t.cover < 0):
            raise MissingCover(f"tree {k} has non-positive cover on a split node")


def expected_value(ens: TreeEnsemble) -> float:
    """Cover-weighted mean margin: the attribution base value."""
    base = ens.base_score
    for t in ens.trees:
        leaves = t.feature == LEAF
        e = float(np.sum(t.value[leaves] * t.cover[leaves]) / t.cover[0])
        base += ens.learning_rate * e
    return float(base)


def shap_values(ens: TreeEnsemble, X) -> tuple[np.ndarray, float]:
    """Attributions ``(n, F)`` in margin units plus the shared base value."""
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
    F = len(ens.feature_codes)
    if X.shape[1] != F:
        raise DimensionMismatch(f"expected {F} features, got {X.shape[1]}")
    _check_covers(ens)
    if not ens.trees:
        return np.zeros((X.shape[0], F)), float(ens.base_score)
    offsets, feat, thr, left, right, val, cov = ens.packed()
    roots = offsets[:-1].copy()
    # learning rate folds into the leaf values; phi is linear in them
    val = ens.learning_rate * val
    depth = max(t.depth() for t in ens.trees)
    phi = _shap_kernel(X, roots, feat, thr, left, right, val, cov, depth)
    return phi, expected_value(ens)
