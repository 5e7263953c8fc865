import json
import os
import subprocess
import sys

HERE = os.path.dirname(__file__)


def probe(flag):
    env = dict(os.environ, ECGPD_NUMBA=flag)
    r = subprocess.run(
        [sys.executable, os.path.join(HERE, "backend_probe.py")], env=env, capture_output=True, text=True, check=True
    )
    return json.loads(r.stdout.strip().splitlines()[-1])


def test_numba_and_numpy_agree_bitwise():
    fast, slow = probe("1"), probe("0")
    assert fast.pop("backend") == "numba" and slow.pop("backend") == "numpy"
    assert fast == slow
