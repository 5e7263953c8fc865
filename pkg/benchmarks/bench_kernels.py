"""Time the hot kernels under the numba and pure-numpy backends.

Each backend runs in its own interpreter because ECGPD_NUMBA is read at
import time. The child prints timings plus a digest of every output so the
parent can confirm both backends agree bit for bit.

    python benchmarks/bench_kernels.py [--n 5000] [--repeat 3]
"""
import argparse
import hashlib
import json
import os
import subprocess
import sys
import time


def _digest(*arrays) -> str:
    import numpy as np

    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
    return h.hexdigest()[:16]


def child(n: int, repeat: int) -> dict:
    import numpy as np

    from ecgpd._jit import backend
    from ecgpd.explain import shap_values
    from ecgpd.metrics import Resampler, bootstrap_values
    from ecgpd.tabular import train_gbdt

    rng = np.random.default_rng(0)
    F = 71
    X = rng.random((n, F))
    y = (X[:, 0] + 0.5 * X[:, 1] + 0.3 * rng.standard_normal(n) > 0.9).astype(np.int64)
    vX = rng.random((n // 4, F))
    vy = (vX[:, 0] + 0.5 * vX[:, 1] + 0.3 * rng.standard_normal(n // 4) > 0.9).astype(np.int64)

    def best_of(fn):
        fn()  # warm-up, includes compilation or cache load
        times = []
        for _ in range(repeat):
            t = time.perf_counter()
            out = fn()
            times.append(time.perf_counter() - t)
        return min(times), out

    results = {"backend": backend(), "n": n}

    t, ens = best_of(lambda: train_gbdt(X, y, vX, vy, learning_rate=0.1, max_depth=5, n_estimators=40,
                                        early_stopping_rounds=1000))
    results["gbdt_fit"] = {"seconds": t, "digest": _digest(ens.predict_margin(vX))}

    Xs = X[:500]
    t, (phi, base) = best_of(lambda: shap_values(ens, Xs))
    results["tree_shap"] = {"seconds": t, "digest": _digest(phi, [base])}

    scores = ens.predict_margin(vX)
    rs = Resampler(vy, 1000, 0)
    t, (vals, _) = best_of(lambda: bootstrap_values(scores, vy, "auroc", resampler=rs))
    results["bootstrap_auroc"] = {"seconds": t, "digest": _digest(vals)}
    return results


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    a = ap.parse_args(argv)
    if a.child:
        print(json.dumps(child(a.n, a.repeat)))
        return 0

    runs = {}
    for flag in ("1", "0"):
        env = dict(os.environ, ECGPD_NUMBA=flag)
        out = subprocess.run(
            [sys.executable, __file__, "--child", "--n", str(a.n), "--repeat", str(a.repeat)],
            env=env, check=True, capture_output=True, text=True,
        )
        r = json.loads(out.stdout.strip().splitlines()[-1])
        runs[r["backend"]] = r

    nb, np_ = runs["numba"], runs["numpy"]
    print(f"n={a.n}, best of {a.repeat}")
    print(f"{'kernel':<18}{'numba s':>10}{'numpy s':>10}{'speedup':>9}  outputs")
    ok = True
    for k in ("gbdt_fit", "tree_shap", "bootstrap_auroc"):
        same = nb[k]["digest"] == np_[k]["digest"]
        ok &= same
        sp = np_[k]["seconds"] / nb[k]["seconds"] if nb[k]["seconds"] else float("inf")
        print(f"{k:<18}{nb[k]['seconds']:>10.3f}{np_[k]['seconds']:>10.3f}{sp:>8.1f}x  {'identical' if same else 'DIFFER'}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
