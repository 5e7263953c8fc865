"""Second-order gradient-boosted trees on the logistic loss.

Splits are found by exact greedy search over sorted feature values. A
sample goes left when ``x[feature] < threshold``. Leaf weights are stored
before learning-rate scaling, so

    margin(x) = base_score + sum_t learning_rate * leaf_t(x)

summed in tree order. Node cover is the number of training rows reaching
the node.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .._jit import USE_NUMBA, njit
from ..errors import DegenerateLabels, DimensionMismatch, EmptyFeatureSet
from .logistic import sigmoid

LEAF = -1


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray  # int64, LEAF for leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # leaf weight (unscaled); 0 on internal nodes
    cover: np.ndarray
    gain: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for k in range(self.n_nodes):
            if self.feature[k] != LEAF:
                depth[self.left[k]] = depth[k] + 1
                depth[self.right[k]] = depth[k] + 1
        return int(depth.max()) if self.n_nodes else 0

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _predict_tree(X, self.feature, self.threshold, self.left, self.right, self.value)

    def to_dict(self) -> dict:
        return {
            "feature_index": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "leaf_value": self.value.tolist(),
            "cover": self.cover.tolist(),
            "gain": self.gain.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            feature=np.array(d["feature_index"], dtype=np.int64),
            threshold=np.array(d["threshold"], dtype=np.float64),
            left=np.array(d["left"], dtype=np.int64),
            right=np.array(d["right"], dtype=np.int64),
            value=np.array(d["leaf_value"], dtype=np.float64),
            # artifacts without covers still predict; explanations will refuse them
            cover=np.array(d.get("cover") or [np.nan] * len(d["feature_index"]), dtype=np.float64),
            gain=np.array(d.get("gain", [0.0] * len(d["feature_index"])), dtype=np.float64),
        )


@dataclass(frozen=True)
class TreeEnsemble:
    trees: tuple[Tree, ...]
    base_score: float
    learning_rate: float
    max_depth: int
    feature_codes: tuple[str, ...]
    reg_lambda: float = 1.0
    min_child_weight: float = 1.0
    n_rounds_run: int = 0
    val_loss_history: tuple[float, ...] = field(default=(), repr=False)

    family = "gbdt"

    @property
    def n_trees_used(self) -> int:
        return len(self.trees)

    def _check(self, X):
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = np.ascontiguousarray(np.atleast_2d(X))
        if X.shape[1] != len(self.feature_codes):
            raise DimensionMismatch(f"expected {len(self.feature_codes)} features, got {X.shape[1]}")
        return X, single

    def predict_margin(self, X):
        X, single = self._check(X)
        m = np.full(X.shape[0], self.base_score)
        for t in self.trees:
            m += self.learning_rate * t.predict(X)
        return m[0] if single else m

    def predict_proba(self, X):
        m = self.predict_margin(X)
        return sigmoid(np.atleast_1d(m)) if np.ndim(m) else float(sigmoid(np.array([m]))[0])

    def packed(self):
        """Concatenated node arrays with per-tree offsets (child indices made global)."""
        offsets = np.zeros(len(self.trees) + 1, dtype=np.int64)
        for i, t in enumerate(self.trees):
            offsets[i + 1] = offsets[i] + t.n_nodes
        if not self.trees:
            e = np.zeros(0)
            return offsets, e.astype(np.int64), e, e.astype(np.int64), e.astype(np.int64), e, e
        feat = np.concatenate([t.feature for t in self.trees])
        thr = np.concatenate([t.threshold for t in self.trees])
        left = np.concatenate([np.where(t.feature == LEAF, -1, t.left + o) for t, o in zip(self.trees, offsets)])
        right = np.concatenate(
            [np.where(t.feature == LEAF, -1, t.right + o) for t, o in zip(self.trees, offsets)]
        )
        val = np.concatenate([t.value for t in self.trees])
        cov = np.concatenate([t.cover for t in self.trees])
        return offsets, feat, thr, left, right, val, cov


# ------------------------------------------------------------------ kernels


@njit(cache=True, nogil=True)
def _predict_tree_nb(X, feature, threshold, left, right, value):
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        k = 0
        while feature[k] != -1:
            if X[i, feature[k]] < threshold[k]:
                k = left[k]
            else:
                k = right[k]
        out[i] = value[k]
    return out


def _predict_tree_np(X, feature, threshold, left, right, value):
    node = np.zeros(X.shape[0], dtype=np.int64)
    rows = np.arange(X.shape[0])
    while True:
        internal = feature[node] != LEAF
        if not internal.any():
            break
        r = rows[internal]
        k = node[internal]
        go_left = X[r, feature[k]] < threshold[k]
        node[internal] = np.where(go_left, left[k], right[k])
    return value[node]


@njit(cache=True, nogil=True)
def _level_splits_nb(sorted_vals, sorted_idx, g, h, node_of, G, H, n_nodes, lam, mcw):
    """Best split per open node, scanning each feature's presorted order once."""
    F, n = sorted_vals.shape
    best_gain = np.zeros(n_nodes)
    best_feat = np.full(n_nodes, -1, dtype=np.int64)
    best_thr = np.zeros(n_nodes)
    GL = np.zeros(n_nodes)
    HL = np.zeros(n_nodes)
    CL = np.zeros(n_nodes, dtype=np.int64)
    last = np.zeros(n_nodes)
    for f in range(F):
        GL[:] = 0.0
        HL[:] = 0.0
        CL[:] = 0
        for j in range(n):
            i = sorted_idx[f, j]
            k = node_of[i]
            if k < 0:
                continue
            v = sorted_vals[f, j]
            if CL[k] > 0 and v != last[k]:
                hl = HL[k]
                hr = H[k] - hl
                if hl >= mcw and hr >= mcw:
                    gl = GL[k]
                    gr = G[k] - gl
                    gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - G[k] * G[k] / (H[k] + lam))
                    if gain > best_gain[k]:
                        best_gain[k] = gain
                        best_feat[k] = f
                        t = 0.5 * (last[k] + v)
                        if t <= last[k]:
                            t = v
                        best_thr[k] = t
            GL[k] += g[i]
            HL[k] += h[i]
            CL[k] += 1
            last[k] = v
    return best_gain, best_feat, best_thr


def _level_splits_np(X, sorted_idx, g, h, node_of, G, H, n_nodes, lam, mcw):
    # X is the raw (n, F) matrix here; the compiled path takes presorted values
    best_gain = np.zeros(n_nodes)
    best_feat = np.full(n_nodes, -1, dtype=np.int64)
    best_thr = np.zeros(n_nodes)
    for k in range(n_nodes):
        idx = np.flatnonzero(node_of == k)
        if len(idx) < 2:
            continue
        Xn = X[idx]
        order = np.argsort(Xn, axis=0, kind="stable")
        vs = np.take_along_axis(Xn, order, axis=0)
        gl = np.cumsum(g[idx][order], axis=0)[:-1]
        hl = np.cumsum(h[idx][order], axis=0)[:-1]
        hr = H[k] - hl
        gr = G[k] - gl
        valid = (vs[1:] != vs[:-1]) & (hl >= mcw) & (hr >= mcw)
        with np.errstate(invalid="ignore", divide="ignore"):
            gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - G[k] * G[k] / (H[k] + lam))
        gain = np.where(valid, gain, -np.inf).T  # feature-major, like the scan
        flat = int(np.argmax(gain))
        if not gain.flat[flat] > 0.0:
            continue
        f, pos = divmod(flat, gain.shape[1])
        lo, hi = vs[pos, f], vs[pos + 1, f]
        t = 0.5 * (lo + hi)
        if t <= lo:
            t = hi
        best_gain[k], best_feat[k], best_thr[k] = gain.flat[flat], f, t
    return best_gain, best_feat, best_thr


if USE_NUMBA:
    _predict_tree, _level_splits = _predict_tree_nb, _level_splits_nb
else:
    _predict_tree, _level_splits = _predict_tree_np, _level_splits_np


# ------------------------------------------------------------------ growing


def _presort(X):
    idx = np.argsort(X, axis=0, kind="stable")
    vals = np.take_along_axis(X, idx, axis=0)
    return np.ascontiguousarray(idx.T.astype(np.int64)), np.ascontiguousarray(vals.T)


def grow_tree(
    X,
    grad,
    hess,
    max_depth: int,
    reg_lambda: float = 1.0,
    min_child_weight: float = 1.0,
    sorted_idx=None,
) -> tuple[Tree, np.ndarray]:
    """Fit one regression tree to (grad, hess); returns the tree and each row's leaf."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    g = np.ascontiguousarray(grad, dtype=np.float64)
    h = np.ascontiguousarray(hess, dtype=np.float64)
    n = X.shape[0]
    if sorted_idx is None:
        sorted_idx = _presort(X)
    sorted_idx, sorted_vals = sorted_idx
    scan_input = sorted_vals if USE_NUMBA else X

    feature = [LEAF]
    threshold = [0.0]
    left = [-1]
    right = [-1]
    gain_l = [0.0]
    node_of = np.zeros(n, dtype=np.int64)  # open-node slot per row, -1 once settled
    leaf_of = np.zeros(n, dtype=np.int64)  # global node id per row
    open_nodes = [0]  # global ids indexed by slot

    for depth in range(max_depth):
        if not open_nodes:
            break
        n_open = len(open_nodes)
        mask = node_of >= 0
        G = np.bincount(node_of[mask], weights=g[mask], minlength=n_open)
        H = np.bincount(node_of[mask], weights=h[mask], minlength=n_open)
        bg, bf, bt = _level_splits(scan_input, sorted_idx, g, h, node_of, G, H, n_open, reg_lambda, min_child_weight)
        next_open = []
        slot_map = np.full(2 * n_open, -1, dtype=np.int64)
        for slot, nid in enumerate(open_nodes):
            if bf[slot] < 0:
                continue
            feature[nid] = int(bf[slot])
            threshold[nid] = float(bt[slot])
            gain_l[nid] = float(bg[slot])
            for side in (0, 1):
                cid = len(feature)
                feature.append(LEAF)
                threshold.append(0.0)
                left.append(-1)
                right.append(-1)
                gain_l.append(0.0)
                if side == 0:
                    left[nid] = cid
                else:
                    right[nid] = cid
                slot_map[2 * slot + side] = len(next_open)
                next_open.append(cid)
        # route rows of split nodes to their children
        new_node_of = np.full(n, -1, dtype=np.int64)
        rows = np.flatnonzero(mask)
        slots = node_of[rows]
        split = bf[slots] >= 0
        r = rows[split]
        s = slots[split]
        go_right = (X[r, bf[s]] >= bt[s]).astype(np.int64)
        new_node_of[r] = slot_map[2 * s + go_right]
        nxt = np.array(next_open, dtype=np.int64)
        if len(r):
            leaf_of[r] = nxt[new_node_of[r]]
        node_of = new_node_of
        open_nodes = next_open

    feature_a = np.array(feature, dtype=np.int64)
    is_leaf = feature_a == LEAF
    Gn = np.bincount(leaf_of, weights=g, minlength=len(feature))
    Hn = np.bincount(leaf_of, weights=h, minlength=len(feature))
    value = np.where(is_leaf, -Gn / (Hn + reg_lambda), 0.0)
    cover = np.bincount(leaf_of, minlength=len(feature)).astype(np.float64)
    left_a = np.array(left, dtype=np.int64)
    right_a = np.array(right, dtype=np.int64)
    # children always have larger ids, so a reverse sweep fills internal covers
    for k in range(len(feature) - 1, -1, -1):
        if not is_leaf[k]:
            cover[k] = cover[left_a[k]] + cover[right_a[k]]
    tree = Tree(
        feature=feature_a,
        threshold=np.array(threshold, dtype=np.float64),
        left=left_a,
        right=right_a,
        value=value,
        cover=cover,
        gain=np.array(gain_l, dtype=np.float64),
    )
    return tree, leaf_of


def logloss(y, margin) -> float:
    return float(np.mean(np.logaddexp(0.0, margin) - y * margin))


def train_gbdt(
    X,
    y,
    val_X,
    val_y,
    learning_rate: float = 0.1,
    max_depth: int = 3,
    n_estimators: int = 1000,
    early_stopping_rounds: int = 30,
    reg_lambda: float = 1.0,
    min_child_weight: float = 1.0,
    feature_codes=None,
    base_score: float | None = None,
) -> TreeEnsemble:
    """Boost until validation log-loss has not improved for ``early_stopping_rounds``.

    The returned ensemble keeps only the trees up to the best validation round.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    val_X = np.ascontiguousarray(val_X, dtype=np.float64)
    val_y = np.asarray(val_y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[1] == 0:
        raise EmptyFeatureSet("training matrix has no features")
    if X.shape[0] != len(y) or val_X.shape[0] != len(val_y) or val_X.shape[1] != X.shape[1]:
        raise DimensionMismatch("train/validation shapes disagree")
    for name, lab in (("train", y), ("validation", val_y)):
        if lab.sum() == 0 or lab.sum() == len(lab):
            raise DegenerateLabels(f"{name} labels contain a single class")
    if early_stopping_rounds < 1:
        raise ValueError("early_stopping_rounds must be >= 1")
    codes = tuple(feature_codes) if feature_codes is not None else tuple(f"x{i}" for i in range(X.shape[1]))

    if base_score is None:
        p0 = y.mean()
        base_score = float(np.log(p0 / (1 - p0)))
    sorted_idx = _presort(X)
    margin = np.full(len(y), base_score)
    val_margin = np.full(len(val_y), base_score)
    trees: list[Tree] = []
    history = [logloss(val_y, val_margin)]
    best_loss, best_round = history[0], 0
    rounds = 0
    for rnd in range(1, n_estimators + 1):
        p = sigmoid(margin)
        tree, leaf_of = grow_tree(
            X, p - y, p * (1 - p), max_depth, reg_lambda, min_child_weight, sorted_idx
        )
        trees.append(tree)
        margin += learning_rate * tree.value[leaf_of]
        val_margin += learning_rate * tree.predict(val_X)
        loss = logloss(val_y, val_margin)
        history.append(loss)
        rounds = rnd
        if loss < best_loss:
            best_loss, best_round = loss, rnd
        elif rnd - best_round >= early_stopping_rounds:
            break
    return TreeEnsemble(
        trees=tuple(trees[:best_round]),
        base_score=float(base_score),
        learning_rate=float(learning_rate),
        max_depth=int(max_depth),
        feature_codes=codes,
        reg_lambda=float(reg_lambda),
        min_child_weight=float(min_child_weight),
        n_rounds_run=rounds,
        val_loss_history=tuple(history),
    )
