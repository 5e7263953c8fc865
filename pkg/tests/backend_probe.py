"""Prints digests of kernel outputs for the backend chosen by ECGPD_NUMBA."""
import hashlib
import json

import numpy as np

from ecgpd._jit import backend
from ecgpd.explain import shap_values
from ecgpd.metrics import Resampler, auprc, auroc, bootstrap_values, f1_at
from ecgpd.tabular import train_gbdt
from ecgpd.tabular.model_io import dumps


def digest(*arrays):
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
    return h.hexdigest()


rng = np.random.default_rng(42)
X = np.round(rng.random((600, 8)), 2)
y = (X[:, 0] + 0.4 * X[:, 3] + 0.3 * rng.standard_normal(600) > 0.8).astype(int)
ens = train_gbdt(X[:400], y[:400], X[400:], y[400:], learning_rate=0.3, max_depth=4, n_estimators=25)
phi, base = shap_values(ens, X[400:])
s = ens.predict_margin(X[400:])
rs = Resampler(y[400:], 200, 3)
out = {
    "backend": backend(),
    "model": hashlib.sha256(dumps(ens).encode()).hexdigest(),
    "shap": digest(phi, [base]),
    "metrics": digest([auroc(s, y[400:]), auprc(s, y[400:]), f1_at(s, y[400:], 0.0)]),
    "bootstrap": digest(*(bootstrap_values(s, y[400:], m, threshold=0.0, resampler=rs)[0] for m in ("auroc", "auprc", "f1"))),
}
print(json.dumps(out))
