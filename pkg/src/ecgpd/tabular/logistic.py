"""L2-penalised logistic regression fitted by damped Newton iterations.

Objective: mean log-loss + (lambda / 2) * ||w||^2, intercept unpenalised.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateLabels, DimensionMismatch, NonConvergence


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class LogisticModel:
    weights: np.ndarray
    bias: float
    l2_lambda: float
    feature_codes: tuple[str, ...]
    n_iter: int = 0
    grad_norm: float = 0.0
    history: tuple[float, ...] = field(default=(), repr=False)

    family = "logistic"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or len(w) != len(self.feature_codes):
            raise DimensionMismatch("weights and feature_codes differ in length")
        if not np.all(np.isfinite(w)) or not np.isfinite(self.bias):
            raise ValueError("logistic weights must be finite")
        object.__setattr__(self, "weights", w)

    def predict_margin(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != len(self.weights):
            raise DimensionMismatch(f"expected {len(self.weights)} features, got {X.shape[1]}")
        m = X @ self.weights + self.bias
        return m[0] if single else m

    def predict_proba(self, X) -> np.ndarray:
        m = self.predict_margin(X)
        return sigmoid(np.atleast_1d(m)) if np.ndim(m) else float(sigmoid(np.array([m]))[0])


def objective(w, b, X, y, lam) -> float:
    z = X @ w + b
    return float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * lam * (w @ w))


def gradient(w, b, X, y, lam) -> tuple[np.ndarray, float]:
    r = sigmoid(X @ w + b) - y
    n = len(y)
    return X.T @ r / n + lam * w, float(r.sum() / n)


def train_logistic(
    X,
    y,
    lam: float,
    feature_codes=None,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> LogisticModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != len(y):
        raise DimensionMismatch("X must be (n, d) with one label per row")
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    if y.sum() == 0 or y.sum() == len(y):
        raise DegenerateLabels("logistic regression needs both classes")
    n, d = X.shape
    codes = tuple(feature_codes) if feature_codes is not None else tuple(f"x{i}" for i in range(d))
    Xa = np.hstack([X, np.ones((n, 1))])
    reg = np.full(d + 1, lam)
    reg[-1] = 0.0

    theta = np.zeros(d + 1)
    f = objective(theta[:d], theta[d], X, y, lam)
    history = [f]
    gnorm = np.inf
    for it in range(max_iter + 1):
        gw, gb = gradient(theta[:d], theta[d], X, y, lam)
        g = np.append(gw, gb)
        gnorm = float(np.linalg.norm(g))
        if gnorm <= tol:
            return LogisticModel(theta[:d].copy(), float(theta[d]), lam, codes, it, gnorm, tuple(history))
        if it == max_iter:
            break
        p = sigmoid(Xa @ theta)
        H = (Xa * (p * (1 - p))[:, None]).T @ Xa / n + np.diag(reg)
        try:
            step = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(H, g, rcond=None)[0]
        slope = float(g @ step)
        t = 1.0
        for _ in range(60):
            cand = theta + t * step
            f_new = objective(cand[:d], cand[d], X, y, lam)
            if f_new <= f + 1e-4 * t * slope:
                break
            if f_new <= f:
                # rounding noise near the optimum; accept if the gradient shrinks
                gw2, gb2 = gradient(cand[:d], cand[d], X, y, lam)
                if np.linalg.norm(np.append(gw2, gb2)) < gnorm:
                    break
            t *= 0.5
        else:
            raise NonConvergence(it, gnorm)
        theta = cand
        f = f_new
        history.append(f)
    raise NonConvergence(max_iter, gnorm)
